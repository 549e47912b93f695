#pragma once

// Pilot-based parameter estimation: batch and recursive channel estimation,
// direct receive-filter estimation, and reduced-rank filter training.

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mmimo/common.hpp"

namespace mmimo {

inline constexpr double kDefaultRlsDelta = 0.01;

// Batch exponentially weighted LS channel estimate G = Q R^-1 with
// Q = sum lambda^(n-l) r[l] s^H[l] and R = sum lambda^(n-l) s[l] s^H[l].
// pilots: streams x n, received: n_rx x n.
CMatrix ls_channel_estimate(const CMatrix& pilots, const CMatrix& received, double lambda);

// Recursive LS channel estimator (inverse pilot correlation via the matrix
// inversion lemma). P starts at delta^-1 I, so after i pilots the estimate
// solves the LS problem with an extra lambda^i delta ||G||^2 penalty.
class RlsChannelEstimator {
 public:
  RlsChannelEstimator(std::size_t n_rx, std::size_t streams, double lambda,
                      double delta = kDefaultRlsDelta);

  void update(const CVector& s, const CVector& r);

  const CMatrix& estimate() const noexcept { return G_; }
  const CMatrix& inverse_correlation() const noexcept { return P_; }
  const CMatrix& cross_correlation() const noexcept { return T_; }
  std::size_t samples() const noexcept { return count_; }

 private:
  double lambda_;
  CMatrix P_;
  CMatrix T_;
  CMatrix G_;
  std::size_t count_ = 0;
};

// LMS channel estimator G <- G + mu e s^H, e = r - G s. `input_power` is
// tr(E[s s^H]); a step size outside (0, 2 / input_power) is flagged, not rejected.
class LmsChannelEstimator {
 public:
  LmsChannelEstimator(std::size_t n_rx, std::size_t streams, double mu, double input_power);

  void update(const CVector& s, const CVector& r);

  const CMatrix& estimate() const noexcept { return G_; }
  bool step_size_warning() const noexcept { return warning_; }

 private:
  double mu_;
  CMatrix G_;
  bool warning_;
};

// Batch LS receive filters W = R_r^-1 P with R_r = sum lambda^(n-l) r r^H and
// P = sum lambda^(n-l) r s^H. received: n_rx x n, symbols: streams x n.
CMatrix ls_filter_estimate(const CMatrix& received, const CMatrix& symbols, double lambda);

// Trains one receive filter per stream from known symbols.
class FilterTrainer {
 public:
  virtual ~FilterTrainer() = default;
  // r: received vector, s: the known symbol of every stream at this instant.
  virtual void update(const CVector& r, const CVector& s) = 0;
  // Current filters, n_rx x streams; detection statistic W^H r.
  virtual CMatrix filters() const = 0;
};

// Exponentially weighted RLS on the received data. The inverse correlation
// matrix is shared by all streams.
class RlsFilterBank final : public FilterTrainer {
 public:
  RlsFilterBank(std::size_t n_rx, std::size_t streams, double lambda,
                double delta = kDefaultRlsDelta);

  void update(const CVector& r, const CVector& s) override;
  CMatrix filters() const override { return W_; }

  // A-priori errors e_a = s - W^H[i-1] r of the last update.
  const CVector& prior_errors() const noexcept { return errors_; }
  const CMatrix& inverse_correlation() const noexcept { return P_; }

 private:
  double lambda_;
  CMatrix P_;
  CMatrix W_;
  CVector errors_;
};

class LmsFilterBank final : public FilterTrainer {
 public:
  LmsFilterBank(std::size_t n_rx, std::size_t streams, double mu, double input_power);

  void update(const CVector& r, const CVector& s) override;
  CMatrix filters() const override { return W_; }
  const CVector& errors() const noexcept { return errors_; }
  bool step_size_warning() const noexcept { return warning_; }

 private:
  double mu_;
  CMatrix W_;
  CVector errors_;
  bool warning_;
};

enum class ProjectionMethod { Pc, Krylov, Jio };

std::string to_string(ProjectionMethod m);

struct ProjectionSpec {
  ProjectionMethod method = ProjectionMethod::Pc;
  std::size_t requested_rank = 0;
  CMatrix basis;  // n_rx x effective rank, orthonormal columns
  bool rank_deficient = false;

  std::size_t rank() const noexcept { return static_cast<std::size_t>(basis.cols()); }
};

// PC: eigenvectors of the D largest eigenvalues of R. Krylov: modified
// Gram-Schmidt on [t, R t, ..., R^(D-1) t], t = p / ||p||, stopping early if
// the sequence loses rank. JIO bases are adapted online (JioRlsFilter).
ProjectionSpec build_projection(ProjectionMethod method, const CMatrix& R, const CVector& p,
                                std::size_t rank);

// RLS on the reduced vector T^H r for a fixed basis T.
class ReducedRankRls {
 public:
  ReducedRankRls(CMatrix basis, double lambda, double delta = kDefaultRlsDelta);

  void update(const CVector& r, cdouble s);

  const CMatrix& basis() const noexcept { return T_; }
  const CVector& reduced_filter() const noexcept { return w_; }
  CVector full_filter() const { return T_ * w_; }
  cdouble output(const CVector& r) const { return w_.dot(T_.adjoint() * r); }
  cdouble prior_error() const noexcept { return error_; }

 private:
  CMatrix T_;
  double lambda_;
  CMatrix P_;
  CVector w_;
  cdouble error_{0.0, 0.0};
};

// Reduced-rank training with a data-dependent basis (PC or Krylov). The
// weighted statistics R = lambda^i delta I + sum lambda^(i-l) r r^H and
// p_k are updated per sample; filters() rebuilds each stream's basis from
// them and solves the D-dimensional normal equations, which is what RLS
// on T^H r computes for that basis.
class SubspaceFilterBank final : public FilterTrainer {
 public:
  SubspaceFilterBank(ProjectionMethod method, std::size_t n_rx, std::size_t streams,
                     std::size_t rank, double lambda, double delta = kDefaultRlsDelta);

  void update(const CVector& r, const CVector& s) override;
  CMatrix filters() const override;

  const CMatrix& correlation() const noexcept { return R_; }
  const CMatrix& cross_correlation() const noexcept { return p_; }

 private:
  ProjectionMethod method_;
  std::size_t rank_;
  double lambda_;
  CMatrix R_;
  CMatrix p_;
};

// Joint iterative optimisation of basis and reduced filter. Each sample
//   1. solves the reduced filter for the current basis T (RLS solution),
//   2. takes an exact line-search LS step on T with the reduced filter held
//      fixed (gradient -(p - R T w) w^H) and re-orthonormalises T,
//   3. re-solves the reduced filter in the updated span.
// Steps 2 and 3 never increase the weighted LS cost.
class JioRlsFilter {
 public:
  JioRlsFilter(std::size_t n_rx, std::size_t rank, double lambda, double delta = kDefaultRlsDelta);

  // R and p: the weighted statistics shared by every stream, already
  // including the sample (r, s).
  void update(const CMatrix& R, const CVector& p, const CVector& r, cdouble s);

  const CMatrix& basis() const noexcept { return T_; }
  const CVector& reduced_filter() const noexcept { return w_; }
  CVector full_filter() const { return T_ * w_; }
  cdouble prior_error() const noexcept { return error_; }

  // Only the basis step of the update, for a caller-supplied reduced filter.
  void basis_step(const CMatrix& R, const CVector& p);
  void set_reduced_filter(const CVector& w) { w_ = w; }

 private:
  void solve_reduced(const CMatrix& R, const CVector& p);

  CMatrix T_;
  CVector w_;
  cdouble error_{0.0, 0.0};
};

class JioFilterBank final : public FilterTrainer {
 public:
  JioFilterBank(std::size_t n_rx, std::size_t streams, std::size_t rank, double lambda,
                double delta = kDefaultRlsDelta);

  void update(const CVector& r, const CVector& s) override;
  CMatrix filters() const override;

  const JioRlsFilter& stream(std::size_t k) const { return filters_.at(k); }

 private:
  double lambda_;
  CMatrix R_;
  CMatrix p_;
  std::vector<JioRlsFilter> filters_;
};

}  // namespace mmimo

#include "mmimo/estimation.hpp"

#include <cmath>

namespace mmimo {

namespace {

constexpr double kRankRcond = 1e-12;
constexpr double kKrylovBreakdown = 1e-12;

void check_lambda(double lambda) {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ParameterError("forgetting factor must lie in (0, 1]");
}

void check_delta(double delta) {
  if (!(delta > 0.0)) throw ParameterError("RLS regularisation delta must be positive");
}

// Hermitian positive definite solve with a rank check.
CMatrix hpd_solve(const CMatrix& A, const CMatrix& B, const std::string& what) {
  Eigen::LLT<CMatrix> llt(A);
  if (llt.info() != Eigen::Success || !(llt.rcond() > kRankRcond)) throw RankError(what);
  return llt.solve(B);
}

CMatrix orthonormal_columns(const CMatrix& A, CMatrix* triangular = nullptr) {
  Eigen::HouseholderQR<CMatrix> qr(A);
  if (triangular) *triangular = qr.matrixQR().topRows(A.cols()).triangularView<Eigen::Upper>();
  return qr.householderQ() * CMatrix::Identity(A.rows(), A.cols());
}

}  // namespace

CMatrix ls_channel_estimate(const CMatrix& pilots, const CMatrix& received, double lambda) {
  check_lambda(lambda);
  if (pilots.cols() != received.cols())
    throw StructuralError("ls_channel_estimate: pilot and received histories differ in length");
  const Eigen::Index n = pilots.cols();
  CMatrix Q = CMatrix::Zero(received.rows(), pilots.rows());
  CMatrix R = CMatrix::Zero(pilots.rows(), pilots.rows());
  for (Eigen::Index l = 0; l < n; ++l) {
    const double w = std::pow(lambda, static_cast<double>(n - 1 - l));
    Q.noalias() += w * received.col(l) * pilots.col(l).adjoint();
    R.noalias() += w * pilots.col(l) * pilots.col(l).adjoint();
  }
  // G R = Q  <=>  R^H G^H = Q^H with R Hermitian.
  const CMatrix Gh = hpd_solve(R, Q.adjoint(),
                               "pilot autocorrelation is singular after " + std::to_string(n) +
                                   " pilots for " + std::to_string(pilots.rows()) + " streams");
  return Gh.adjoint();
}

RlsChannelEstimator::RlsChannelEstimator(std::size_t n_rx, std::size_t streams, double lambda,
                                         double delta)
    : lambda_(lambda) {
  check_lambda(lambda);
  check_delta(delta);
  const auto k = static_cast<Eigen::Index>(streams);
  P_ = CMatrix::Identity(k, k) / delta;
  T_ = CMatrix::Zero(static_cast<Eigen::Index>(n_rx), k);
  G_ = T_;
}

void RlsChannelEstimator::update(const CVector& s, const CVector& r) {
  if (s.size() != P_.rows() || r.size() != T_.rows())
    throw StructuralError("RLS channel update: dimensions do not conform");
  const CVector Ps = P_ * s;
  const double denom = 1.0 + s.dot(Ps).real() / lambda_;
  P_ = P_ / lambda_ - (Ps * Ps.adjoint()) / (lambda_ * lambda_ * denom);
  P_ = (P_ + P_.adjoint()).eval() / 2.0;
  T_ = lambda_ * T_ + r * s.adjoint();
  G_ = T_ * P_;
  ++count_;
}

LmsChannelEstimator::LmsChannelEstimator(std::size_t n_rx, std::size_t streams, double mu,
                                         double input_power)
    : mu_(mu),
      G_(CMatrix::Zero(static_cast<Eigen::Index>(n_rx), static_cast<Eigen::Index>(streams))),
      warning_(!(mu > 0.0 && mu < 2.0 / input_power)) {}

void LmsChannelEstimator::update(const CVector& s, const CVector& r) {
  if (s.size() != G_.cols() || r.size() != G_.rows())
    throw StructuralError("LMS channel update: dimensions do not conform");
  const CVector e = r - G_ * s;
  G_.noalias() += mu_ * e * s.adjoint();
}

CMatrix ls_filter_estimate(const CMatrix& received, const CMatrix& symbols, double lambda) {
  check_lambda(lambda);
  if (received.cols() != symbols.cols())
    throw StructuralError("ls_filter_estimate: histories differ in length");
  const Eigen::Index n = received.cols();
  CMatrix R = CMatrix::Zero(received.rows(), received.rows());
  CMatrix P = CMatrix::Zero(received.rows(), symbols.rows());
  for (Eigen::Index l = 0; l < n; ++l) {
    const double w = std::pow(lambda, static_cast<double>(n - 1 - l));
    R.noalias() += w * received.col(l) * received.col(l).adjoint();
    P.noalias() += w * received.col(l) * symbols.col(l).adjoint();
  }
  return hpd_solve(R, P,
                   "received-data autocorrelation is singular after " + std::to_string(n) +
                       " samples");
}

RlsFilterBank::RlsFilterBank(std::size_t n_rx, std::size_t streams, double lambda, double delta)
    : lambda_(lambda) {
  check_lambda(lambda);
  check_delta(delta);
  const auto n = static_cast<Eigen::Index>(n_rx);
  P_ = CMatrix::Identity(n, n) / delta;
  W_ = CMatrix::Zero(n, static_cast<Eigen::Index>(streams));
  errors_ = CVector::Zero(static_cast<Eigen::Index>(streams));
}

void RlsFilterBank::update(const CVector& r, const CVector& s) {
  if (r.size() != P_.rows() || s.size() != W_.cols())
    throw StructuralError("RLS filter update: dimensions do not conform");
  const CVector Pr = P_ * r;
  const double denom = 1.0 + r.dot(Pr).real() / lambda_;
  const CVector gain = Pr / (lambda_ * denom);
  P_ = P_ / lambda_ - gain * Pr.adjoint() / lambda_;
  P_ = (P_ + P_.adjoint()).eval() / 2.0;
  errors_ = s - W_.adjoint() * r;
  W_.noalias() += gain * errors_.adjoint();
}

LmsFilterBank::LmsFilterBank(std::size_t n_rx, std::size_t streams, double mu, double input_power)
    : mu_(mu),
      W_(CMatrix::Zero(static_cast<Eigen::Index>(n_rx), static_cast<Eigen::Index>(streams))),
      errors_(CVector::Zero(static_cast<Eigen::Index>(streams))),
      warning_(!(mu > 0.0 && mu < 2.0 / input_power)) {}

void LmsFilterBank::update(const CVector& r, const CVector& s) {
  if (r.size() != W_.rows() || s.size() != W_.cols())
    throw StructuralError("LMS filter update: dimensions do not conform");
  errors_ = s - W_.adjoint() * r;
  W_.noalias() += mu_ * r * errors_.adjoint();
}

std::string to_string(ProjectionMethod m) {
  switch (m) {
    case ProjectionMethod::Pc: return "pc";
    case ProjectionMethod::Krylov: return "krylov";
    case ProjectionMethod::Jio: return "jio";
  }
  return "?";
}

ProjectionSpec build_projection(ProjectionMethod method, const CMatrix& R, const CVector& p,
                                std::size_t rank) {
  const auto n = static_cast<std::size_t>(R.rows());
  if (R.rows() != R.cols()) throw StructuralError("projection: R must be square");
  if (rank < 1 || rank > n) throw ParameterError("projection rank must lie in [1, n_rx]");
  ProjectionSpec spec;
  spec.method = method;
  spec.requested_rank = rank;
  const auto D = static_cast<Eigen::Index>(rank);
  switch (method) {
    case ProjectionMethod::Pc: {
      Eigen::SelfAdjointEigenSolver<CMatrix> eig((R + R.adjoint()) / 2.0);
      if (eig.info() != Eigen::Success) throw NumericalError("PC projection: eigensolver failed");
      spec.basis = eig.eigenvectors().rightCols(D).rowwise().reverse();
      break;
    }
    case ProjectionMethod::Krylov: {
      if (p.size() != R.rows()) throw StructuralError("Krylov projection: p has wrong length");
      const double pn = p.norm();
      if (!(pn > 0.0)) throw ParameterError("Krylov projection needs a nonzero cross-correlation");
      CMatrix basis(R.rows(), D);
      Eigen::Index m = 0;
      CVector v = p / pn;
      basis.col(m++) = v;
      while (m < D) {
        v = R * basis.col(m - 1);
        const double before = v.norm();
        // Modified Gram-Schmidt, applied twice.
        for (int pass = 0; pass < 2; ++pass)
          for (Eigen::Index c = 0; c < m; ++c) v -= basis.col(c) * basis.col(c).dot(v);
        const double after = v.norm();
        if (!(after > kKrylovBreakdown * before)) {
          spec.rank_deficient = true;
          break;
        }
        basis.col(m++) = v / after;
      }
      spec.basis = basis.leftCols(m);
      break;
    }
    case ProjectionMethod::Jio:
      spec.basis = CMatrix::Identity(R.rows(), D);
      break;
  }
  return spec;
}

ReducedRankRls::ReducedRankRls(CMatrix basis, double lambda, double delta)
    : T_(std::move(basis)), lambda_(lambda) {
  check_lambda(lambda);
  check_delta(delta);
  const auto D = T_.cols();
  P_ = CMatrix::Identity(D, D) / delta;
  w_ = CVector::Zero(D);
}

void ReducedRankRls::update(const CVector& r, cdouble s) {
  if (r.size() != T_.rows()) throw StructuralError("reduced-rank RLS: r has wrong length");
  const CVector rb = T_.adjoint() * r;
  const CVector Pr = P_ * rb;
  const double denom = 1.0 + rb.dot(Pr).real() / lambda_;
  const CVector gain = Pr / (lambda_ * denom);
  P_ = P_ / lambda_ - gain * Pr.adjoint() / lambda_;
  P_ = (P_ + P_.adjoint()).eval() / 2.0;
  error_ = s - w_.dot(rb);
  w_ += gain * std::conj(error_);
}

SubspaceFilterBank::SubspaceFilterBank(ProjectionMethod method, std::size_t n_rx,
                                       std::size_t streams, std::size_t rank, double lambda,
                                       double delta)
    : method_(method), rank_(rank), lambda_(lambda) {
  check_lambda(lambda);
  check_delta(delta);
  if (method == ProjectionMethod::Jio)
    throw ParameterError("JIO bases are adapted by JioFilterBank");
  if (rank < 1 || rank > n_rx) throw ParameterError("projection rank must lie in [1, n_rx]");
  const auto n = static_cast<Eigen::Index>(n_rx);
  R_ = CMatrix::Identity(n, n) * delta;
  p_ = CMatrix::Zero(n, static_cast<Eigen::Index>(streams));
}

void SubspaceFilterBank::update(const CVector& r, const CVector& s) {
  if (r.size() != R_.rows() || s.size() != p_.cols())
    throw StructuralError("subspace filter update: dimensions do not conform");
  R_ *= lambda_;
  R_.noalias() += r * r.adjoint();
  p_ *= lambda_;
  p_.noalias() += r * s.adjoint();
}

CMatrix SubspaceFilterBank::filters() const {
  CMatrix W = CMatrix::Zero(R_.rows(), p_.cols());
  ProjectionSpec shared;
  if (method_ == ProjectionMethod::Pc) shared = build_projection(method_, R_, CVector(), rank_);
  for (Eigen::Index k = 0; k < p_.cols(); ++k) {
    if (p_.col(k).norm() == 0.0) continue;
    const ProjectionSpec spec =
        method_ == ProjectionMethod::Pc ? shared : build_projection(method_, R_, p_.col(k), rank_);
    const CMatrix& T = spec.basis;
    const CMatrix A = T.adjoint() * R_ * T;
    const CVector w = hpd_solve(A, T.adjoint() * p_.col(k), "reduced correlation is singular");
    W.col(k) = T * w;
  }
  return W;
}

JioRlsFilter::JioRlsFilter(std::size_t n_rx, std::size_t rank, double lambda, double delta) {
  check_lambda(lambda);
  check_delta(delta);
  if (rank < 1 || rank > n_rx) throw ParameterError("projection rank must lie in [1, n_rx]");
  T_ = CMatrix::Identity(static_cast<Eigen::Index>(n_rx), static_cast<Eigen::Index>(rank));
  w_ = CVector::Zero(static_cast<Eigen::Index>(rank));
}

void JioRlsFilter::solve_reduced(const CMatrix& R, const CVector& p) {
  const CMatrix A = T_.adjoint() * R * T_;
  w_ = hpd_solve(A, T_.adjoint() * p, "JIO reduced correlation is singular");
}

void JioRlsFilter::basis_step(const CMatrix& R, const CVector& p) {
  const double wn2 = w_.squaredNorm();
  if (!(wn2 > 0.0)) return;
  const CVector g = p - R * (T_ * w_);
  const double gg = g.squaredNorm();
  if (!(gg > 0.0)) return;
  const double gRg = g.dot(R * g).real();
  if (!(gRg > 0.0)) return;
  const double eta = gg / gRg;
  const CMatrix stepped = T_ + (eta / wn2) * g * w_.adjoint();
  T_ = orthonormal_columns(stepped);
}

void JioRlsFilter::update(const CMatrix& R, const CVector& p, const CVector& r, cdouble s) {
  if (r.size() != T_.rows() || R.rows() != T_.rows() || p.size() != T_.rows())
    throw StructuralError("JIO update: dimensions do not conform");
  error_ = s - w_.dot(T_.adjoint() * r);
  solve_reduced(R, p);
  basis_step(R, p);
  solve_reduced(R, p);
}

JioFilterBank::JioFilterBank(std::size_t n_rx, std::size_t streams, std::size_t rank,
                             double lambda, double delta)
    : lambda_(lambda) {
  check_lambda(lambda);
  check_delta(delta);
  const auto n = static_cast<Eigen::Index>(n_rx);
  R_ = CMatrix::Identity(n, n) * delta;
  p_ = CMatrix::Zero(n, static_cast<Eigen::Index>(streams));
  for (std::size_t k = 0; k < streams; ++k) filters_.emplace_back(n_rx, rank, lambda, delta);
}

void JioFilterBank::update(const CVector& r, const CVector& s) {
  if (r.size() != R_.rows() || s.size() != p_.cols())
    throw StructuralError("JIO filter update: dimensions do not conform");
  R_ *= lambda_;
  R_.noalias() += r * r.adjoint();
  p_ *= lambda_;
  p_.noalias() += r * s.adjoint();
  for (std::size_t k = 0; k < filters_.size(); ++k)
    filters_[k].update(R_, p_.col(static_cast<Eigen::Index>(k)), r, s(static_cast<Eigen::Index>(k)));
}

CMatrix JioFilterBank::filters() const {
  CMatrix W(R_.rows(), p_.cols());
  for (std::size_t k = 0; k < filters_.size(); ++k)
    W.col(static_cast<Eigen::Index>(k)) = filters_[k].full_filter();
  return W;
}

}  // namespace mmimo

#include "mmimo/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mmimo {

namespace {

constexpr double kSingularRcond = 1e-12;

// (G^H G + loading I)^-1 applied to `rhs`, with a singularity check.
CMatrix regularized_gram_solve(const CMatrix& G, double loading, const CMatrix& rhs,
                               const char* who) {
  CMatrix gram = G.adjoint() * G;
  gram.diagonal().array() += loading;
  Eigen::LLT<CMatrix> llt(gram);
  if (llt.info() != Eigen::Success || !(llt.rcond() > kSingularRcond))
    throw SingularityError(std::string(who) + ": Gram matrix is singular (rank-deficient channel)");
  return llt.solve(rhs);
}

double noise_to_signal(double sigma_s2, double sigma_n2) {
  if (!(sigma_s2 > 0.0)) throw ParameterError("symbol power must be positive");
  if (sigma_n2 < 0.0) throw ParameterError("noise variance must be non-negative");
  return sigma_n2 / sigma_s2;
}

CVector slice_all(const CVector& y, const QpskModem& modem) {
  CVector s(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) s(i) = modem.slice(y(i));
  return s;
}

// Filter detecting column 0 of `sub` in the presence of the other columns.
CVector first_column_filter(const CMatrix& sub, FilterDesign design, double loading) {
  if (design == FilterDesign::Rmf) return sub.col(0);
  const double l = design == FilterDesign::Mmse ? loading : 0.0;
  const CMatrix e0 = CMatrix::Identity(sub.cols(), 1);
  return sub * regularized_gram_solve(sub, l, e0,
                                      design == FilterDesign::Zf ? "ZF SIC stage" : "MMSE SIC stage");
}

}  // namespace

std::string to_string(FilterDesign d) {
  switch (d) {
    case FilterDesign::Rmf: return "rmf";
    case FilterDesign::Zf: return "zf";
    case FilterDesign::Mmse: return "mmse";
  }
  return "?";
}

std::string to_string(OrderingCriterion c) {
  switch (c) {
    case OrderingCriterion::ColumnNorm: return "norm";
    case OrderingCriterion::Snr: return "snr";
    case OrderingCriterion::Sinr: return "sinr";
    case OrderingCriterion::Exhaustive: return "exhaustive";
  }
  return "?";
}

ReceiveFilterSet compute_receive_filter(const CMatrix& G, double sigma_s2, double sigma_n2,
                                        FilterDesign design) {
  const double ratio = noise_to_signal(sigma_s2, sigma_n2);
  ReceiveFilterSet set;
  set.design = design;
  const CMatrix eye = CMatrix::Identity(G.cols(), G.cols());
  switch (design) {
    case FilterDesign::Rmf:
      set.W = G;
      break;
    case FilterDesign::Zf:
      set.W = G * regularized_gram_solve(G, 0.0, eye, "ZF design");
      break;
    case FilterDesign::Mmse:
      set.W = G * regularized_gram_solve(G, ratio, eye, "MMSE design");
      break;
  }
  return set;
}

DetectorOutput linear_detect(const CMatrix& W, const CVector& r, const QpskModem& modem) {
  if (W.rows() != r.size()) throw StructuralError("linear_detect: W and r do not conform");
  DetectorOutput out;
  out.symbols = slice_all(W.adjoint() * r, modem);
  return out;
}

OrderingPattern compute_ordering(const CMatrix& G, double sigma_s2, double sigma_n2,
                                 OrderingCriterion criterion) {
  const double ratio = noise_to_signal(sigma_s2, sigma_n2);
  const auto n = static_cast<std::size_t>(G.cols());
  RVector key(G.cols());
  switch (criterion) {
    case OrderingCriterion::ColumnNorm:
      key = G.colwise().norm().transpose();
      break;
    case OrderingCriterion::Snr:
      key = G.colwise().squaredNorm().transpose() * (sigma_n2 > 0.0 ? sigma_s2 / sigma_n2 : 1.0);
      break;
    case OrderingCriterion::Sinr: {
      const CMatrix inv = regularized_gram_solve(G, ratio, CMatrix::Identity(G.cols(), G.cols()),
                                                 "SINR ordering");
      for (Eigen::Index j = 0; j < key.size(); ++j) {
        const double d = inv(j, j).real();
        // MMSE output SINR; with no noise fall back to the ZF post-detection SNR.
        key(j) = ratio > 0.0 ? 1.0 / (ratio * d) - 1.0 : 1.0 / d;
      }
      break;
    }
    case OrderingCriterion::Exhaustive:
      throw ParameterError("exhaustive ordering needs the received vector; use exhaustive_ordering");
  }
  OrderingPattern p;
  p.criterion = criterion;
  p.order.resize(n);
  std::iota(p.order.begin(), p.order.end(), std::size_t{0});
  std::stable_sort(p.order.begin(), p.order.end(),
                   [&](std::size_t a, std::size_t b) { return key(a) > key(b); });
  return p;
}

OrderingPattern exhaustive_ordering(const CMatrix& G, const CVector& r, double sigma_s2,
                                    double sigma_n2, FilterDesign design, const QpskModem& modem) {
  if (G.cols() > 6)
    throw CapacityError("exhaustive ordering is limited to 6 streams (got " +
                        std::to_string(G.cols()) + ")");
  Permutation perm(static_cast<std::size_t>(G.cols()));
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  OrderingPattern best;
  best.criterion = OrderingCriterion::Exhaustive;
  double best_dist = std::numeric_limits<double>::infinity();
  do {
    const SicDetector sic(G, perm, design, sigma_s2, sigma_n2, modem);
    const double dist = (r - G * sic.detect(r).symbols).norm();
    if (dist < best_dist) {
      best_dist = dist;
      best.order = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

CVector cancel_detected(const CMatrix& G, const CVector& r, const Permutation& order,
                        std::size_t stage, const CVector& decisions) {
  CVector rk = r;
  for (std::size_t j = 0; j < stage; ++j) rk -= G.col(order[j]) * decisions(order[j]);
  return rk;
}

CMatrix Detector::detect_block(const CMatrix& received) const {
  CMatrix out;
  for (Eigen::Index c = 0; c < received.cols(); ++c) {
    const CVector s = detect(received.col(c)).symbols;
    if (c == 0) out.resize(s.size(), received.cols());
    out.col(c) = s;
  }
  return out;
}

SicDetector::SicDetector(const CMatrix& G, Permutation order, FilterDesign design,
                         double sigma_s2, double sigma_n2, QpskModem modem)
    : G_(G), order_(std::move(order)), modem_(modem) {
  if (!is_permutation_of(order_, static_cast<std::size_t>(G.cols())))
    throw ParameterError("SIC ordering is not a permutation of the streams");
  const double ratio = noise_to_signal(sigma_s2, sigma_n2);
  const auto n = order_.size();
  stage_filters_.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    CMatrix sub(G.rows(), static_cast<Eigen::Index>(n - k));
    for (std::size_t m = k; m < n; ++m) sub.col(static_cast<Eigen::Index>(m - k)) = G.col(order_[m]);
    stage_filters_.push_back(first_column_filter(sub, design, ratio));
  }
}

DetectorOutput SicDetector::detect(const CVector& r) const {
  if (r.size() != G_.rows()) throw StructuralError("SIC: received vector has wrong length");
  DetectorOutput out;
  out.symbols = CVector::Zero(G_.cols());
  CVector rk = r;
  for (std::size_t k = 0; k < order_.size(); ++k) {
    const auto j = order_[k];
    const cdouble s = modem_.slice(stage_filters_[k].dot(rk));
    out.symbols(j) = s;
    rk -= G_.col(j) * s;
  }
  return out;
}

DetectorOutput sic_detect(const CMatrix& G, const CVector& r, const OrderingPattern& ordering,
                          FilterDesign design, double sigma_s2, double sigma_n2,
                          const QpskModem& modem) {
  return SicDetector(G, ordering.order, design, sigma_s2, sigma_n2, modem).detect(r);
}

std::vector<Permutation> shifted_orderings(const Permutation& base, std::size_t branches) {
  if (branches < 1 || branches > base.size())
    throw ParameterError("MB-SIC branch count must lie in [1, streams]");
  std::vector<Permutation> out;
  for (std::size_t l = 0; l < branches; ++l) {
    Permutation p(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) p[i] = base[(i + l) % base.size()];
    out.push_back(std::move(p));
  }
  return out;
}

MbSicDetector::MbSicDetector(const CMatrix& G, const std::vector<Permutation>& orderings,
                             FilterDesign design, double sigma_s2, double sigma_n2,
                             QpskModem modem)
    : G_(G) {
  if (orderings.empty()) throw ParameterError("MB-SIC needs at least one branch");
  branches_.reserve(orderings.size());
  for (const auto& o : orderings) branches_.emplace_back(G, o, design, sigma_s2, sigma_n2, modem);
}

DetectorOutput MbSicDetector::detect(const CVector& r) const {
  DetectorOutput out;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < branches_.size(); ++l) {
    CVector cand = branches_[l].detect(r).symbols;
    const double dist = (r - G_ * cand).norm();
    out.branch_distances.push_back(dist);
    if (dist < best) {
      best = dist;
      out.selected_branch = l;
      out.symbols = std::move(cand);
    }
  }
  return out;
}

DetectorOutput mb_sic_detect(const CMatrix& G, const CVector& r, std::size_t branches,
                             const OrderingPattern& base, FilterDesign design, double sigma_s2,
                             double sigma_n2, const QpskModem& modem) {
  return MbSicDetector(G, shifted_orderings(base.order, branches), design, sigma_s2, sigma_n2,
                       modem)
      .detect(r);
}

DfDetector::DfDetector(const CMatrix& G, DfMode mode, FilterDesign design, double sigma_s2,
                       double sigma_n2, QpskModem modem)
    : modem_(modem) {
  W_ = compute_receive_filter(G, sigma_s2, sigma_n2, design).W;
  const CMatrix A = W_.adjoint() * G;
  if (mode == DfMode::Parallel) {
    Fh_ = A;
    Fh_.diagonal().setZero();
  } else {
    Fh_ = A.triangularView<Eigen::StrictlyUpper>();
  }
}

DfDetector::DfDetector(CMatrix W, CMatrix feedback_h, QpskModem modem)
    : W_(std::move(W)), Fh_(std::move(feedback_h)), modem_(modem) {
  if (Fh_.rows() != W_.cols() || Fh_.cols() != W_.cols())
    throw StructuralError("DF feedback matrix must be streams x streams");
}

DetectorOutput DfDetector::detect(const CVector& r) const {
  if (r.size() != W_.rows()) throw StructuralError("DF: received vector has wrong length");
  const CVector y = W_.adjoint() * r;
  const CVector initial = slice_all(y, modem_);
  DetectorOutput out;
  out.symbols = slice_all(y - Fh_ * initial, modem_);
  return out;
}

DetectorOutput df_detect(const CMatrix& G, const CVector& r, DfMode mode, FilterDesign design,
                         double sigma_s2, double sigma_n2, const QpskModem& modem) {
  return DfDetector(G, mode, design, sigma_s2, sigma_n2, modem).detect(r);
}

namespace {
void check_ml_capacity(Eigen::Index streams) {
  // 4^streams candidates must stay within 10^6.
  if (streams > 9)
    throw CapacityError("ML search space 4^" + std::to_string(streams) + " exceeds 10^6 candidates");
}
}  // namespace

DetectorOutput ml_detect_oracle(const CMatrix& G, const CVector& r, const QpskModem& modem) {
  const auto n = G.cols();
  check_ml_capacity(n);
  if (r.size() != G.rows()) throw StructuralError("ML: received vector has wrong length");
  const std::size_t total = std::size_t{1} << (2 * n);
  const auto& pts = modem.points();
  CVector cand(n);
  CVector best;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < total; ++m) {
    // Stream 0 is the most significant digit.
    for (Eigen::Index j = 0; j < n; ++j) cand(j) = pts[(m >> (2 * (n - 1 - j))) & 3u];
    const double d = (r - G * cand).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = cand;
    }
  }
  DetectorOutput out;
  out.symbols = best;
  return out;
}

MlDetector::MlDetector(CMatrix G, QpskModem modem) : G_(std::move(G)), modem_(modem) {
  check_ml_capacity(G_.cols());
}

std::string to_string(DetectorKind k) {
  switch (k) {
    case DetectorKind::Rmf: return "rmf";
    case DetectorKind::Zf: return "zf";
    case DetectorKind::Mmse: return "mmse";
    case DetectorKind::Sic: return "sic";
    case DetectorKind::MbSic: return "mb-sic";
    case DetectorKind::DfSuccessive: return "df-s";
    case DetectorKind::DfParallel: return "df-p";
    case DetectorKind::Ml: return "ml";
  }
  return "?";
}

DetectorKind parse_detector_kind(const std::string& name) {
  for (auto k : {DetectorKind::Rmf, DetectorKind::Zf, DetectorKind::Mmse, DetectorKind::Sic,
                 DetectorKind::MbSic, DetectorKind::DfSuccessive, DetectorKind::DfParallel,
                 DetectorKind::Ml})
    if (to_string(k) == name) return k;
  throw ParameterError("unknown detector '" + name + "'");
}

std::unique_ptr<Detector> make_detector(const DetectorConfig& cfg, const CMatrix& G,
                                        double sigma_s2, double sigma_n2, const QpskModem& modem) {
  switch (cfg.kind) {
    case DetectorKind::Rmf:
    case DetectorKind::Zf:
    case DetectorKind::Mmse: {
      const FilterDesign d = cfg.kind == DetectorKind::Rmf  ? FilterDesign::Rmf
                             : cfg.kind == DetectorKind::Zf ? FilterDesign::Zf
                                                            : FilterDesign::Mmse;
      return std::make_unique<LinearDetector>(compute_receive_filter(G, sigma_s2, sigma_n2, d).W,
                                              modem);
    }
    case DetectorKind::Sic:
      return std::make_unique<SicDetector>(
          G, compute_ordering(G, sigma_s2, sigma_n2, cfg.ordering).order, cfg.design, sigma_s2,
          sigma_n2, modem);
    case DetectorKind::MbSic: {
      const auto base = compute_ordering(G, sigma_s2, sigma_n2, cfg.ordering);
      return std::make_unique<MbSicDetector>(
          G, shifted_orderings(base.order, std::min<std::size_t>(cfg.branches, base.order.size())),
          cfg.design, sigma_s2, sigma_n2, modem);
    }
    case DetectorKind::DfSuccessive:
      return std::make_unique<DfDetector>(G, DfMode::Successive, cfg.design, sigma_s2, sigma_n2,
                                          modem);
    case DetectorKind::DfParallel:
      return std::make_unique<DfDetector>(G, DfMode::Parallel, cfg.design, sigma_s2, sigma_n2,
                                          modem);
    case DetectorKind::Ml:
      return std::make_unique<MlDetector>(G, modem);
  }
  throw ParameterError("unsupported detector");
}

}  // namespace mmimo

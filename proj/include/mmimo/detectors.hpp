#pragma once

// Hard-decision multiuser detectors: linear receive filters (RMF, ZF, MMSE),
// successive interference cancellation with ordering, multi-branch SIC,
// decision feedback and an exhaustive maximum-likelihood oracle.

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "mmimo/common.hpp"
#include "mmimo/txchain.hpp"

namespace mmimo {

enum class FilterDesign { Rmf, Zf, Mmse };

std::string to_string(FilterDesign d);

struct ReceiveFilterSet {
  FilterDesign design = FilterDesign::Mmse;
  CMatrix W;  // n_rx x streams; detection statistic W^H r
};

// RMF: W = G. ZF: W = G (G^H G)^-1. MMSE: W = G (G^H G + sigma_n^2/sigma_s^2 I)^-1.
ReceiveFilterSet compute_receive_filter(const CMatrix& G, double sigma_s2, double sigma_n2,
                                        FilterDesign design);

struct DetectorOutput {
  CVector symbols;                      // natural stream order
  std::vector<double> branch_distances; // ||r - G s_l|| per branch (MB-SIC)
  std::size_t selected_branch = 0;
};

DetectorOutput linear_detect(const CMatrix& W, const CVector& r, const QpskModem& modem);

enum class OrderingCriterion { ColumnNorm, Snr, Sinr, Exhaustive };

std::string to_string(OrderingCriterion c);

struct OrderingPattern {
  Permutation order;  // order[k] is the stream detected at stage k
  OrderingCriterion criterion = OrderingCriterion::ColumnNorm;
};

// Orders streams by descending column norm, per-stream SNR or per-stream
// MMSE output SINR; ties go to the lower stream index. Exhaustive ordering
// needs the received vector and is provided by exhaustive_ordering.
OrderingPattern compute_ordering(const CMatrix& G, double sigma_s2, double sigma_n2,
                                 OrderingCriterion criterion);

// Every permutation of the streams is run through SIC and the one whose
// decision minimises ||r - G s|| wins. Limited to 6 streams.
OrderingPattern exhaustive_ordering(const CMatrix& G, const CVector& r, double sigma_s2,
                                    double sigma_n2, FilterDesign design, const QpskModem& modem);

// r_k = r - sum_{j<stage} g_{order[j]} s_{order[j]}.
CVector cancel_detected(const CMatrix& G, const CVector& r, const Permutation& order,
                        std::size_t stage, const CVector& decisions);

// Common interface for detectors prepared once per channel realization.
class Detector {
 public:
  virtual ~Detector() = default;
  virtual DetectorOutput detect(const CVector& r) const = 0;

  // Hard decisions for every column of `received`.
  CMatrix detect_block(const CMatrix& received) const;
};

class LinearDetector final : public Detector {
 public:
  LinearDetector(CMatrix W, QpskModem modem) : W_(std::move(W)), modem_(modem) {}
  DetectorOutput detect(const CVector& r) const override { return linear_detect(W_, r, modem_); }
  const CMatrix& filters() const noexcept { return W_; }

 private:
  CMatrix W_;
  QpskModem modem_;
};

// SIC with filters recomputed for the deflated channel at every stage. The
// stage filters depend only on G and the ordering, so they are built once.
class SicDetector final : public Detector {
 public:
  SicDetector(const CMatrix& G, Permutation order, FilterDesign design, double sigma_s2,
              double sigma_n2, QpskModem modem);

  DetectorOutput detect(const CVector& r) const override;
  const Permutation& order() const noexcept { return order_; }

 private:
  CMatrix G_;
  Permutation order_;
  std::vector<CVector> stage_filters_;
  QpskModem modem_;
};

DetectorOutput sic_detect(const CMatrix& G, const CVector& r, const OrderingPattern& ordering,
                          FilterDesign design, double sigma_s2, double sigma_n2,
                          const QpskModem& modem);

// Branch l (0-based) is the base ordering circularly shifted left by l.
std::vector<Permutation> shifted_orderings(const Permutation& base, std::size_t branches);

class MbSicDetector final : public Detector {
 public:
  MbSicDetector(const CMatrix& G, const std::vector<Permutation>& orderings, FilterDesign design,
                double sigma_s2, double sigma_n2, QpskModem modem);

  DetectorOutput detect(const CVector& r) const override;
  std::size_t branches() const noexcept { return branches_.size(); }

 private:
  CMatrix G_;
  std::vector<SicDetector> branches_;
};

DetectorOutput mb_sic_detect(const CMatrix& G, const CVector& r, std::size_t branches,
                             const OrderingPattern& base, FilterDesign design, double sigma_s2,
                             double sigma_n2, const QpskModem& modem);

enum class DfMode { Successive, Parallel };

// s = Q(W^H r - F^H s_o) with s_o = Q(W^H r). F^H is W^H G with its diagonal
// removed (parallel) or restricted to the strictly upper triangle (successive).
class DfDetector final : public Detector {
 public:
  DfDetector(const CMatrix& G, DfMode mode, FilterDesign design, double sigma_s2, double sigma_n2,
             QpskModem modem);
  DfDetector(CMatrix W, CMatrix feedback_h, QpskModem modem);

  DetectorOutput detect(const CVector& r) const override;
  const CMatrix& feedforward() const noexcept { return W_; }
  // The matrix F^H applied to the initial decisions.
  const CMatrix& feedback() const noexcept { return Fh_; }

 private:
  CMatrix W_;
  CMatrix Fh_;
  QpskModem modem_;
};

DetectorOutput df_detect(const CMatrix& G, const CVector& r, DfMode mode, FilterDesign design,
                         double sigma_s2, double sigma_n2, const QpskModem& modem);

// Exhaustive argmin ||r - G s||^2 over the 4^streams candidates; the first
// candidate in lexicographic bit order wins ties.
DetectorOutput ml_detect_oracle(const CMatrix& G, const CVector& r, const QpskModem& modem);

class MlDetector final : public Detector {
 public:
  MlDetector(CMatrix G, QpskModem modem);
  DetectorOutput detect(const CVector& r) const override { return ml_detect_oracle(G_, r, modem_); }

 private:
  CMatrix G_;
  QpskModem modem_;
};

enum class DetectorKind { Rmf, Zf, Mmse, Sic, MbSic, DfSuccessive, DfParallel, Ml };

std::string to_string(DetectorKind k);
DetectorKind parse_detector_kind(const std::string& name);

struct DetectorConfig {
  DetectorKind kind = DetectorKind::Mmse;
  OrderingCriterion ordering = OrderingCriterion::Sinr;
  std::size_t branches = 4;
  FilterDesign design = FilterDesign::Mmse;  // filters inside SIC and DF
};

std::unique_ptr<Detector> make_detector(const DetectorConfig& cfg, const CMatrix& G,
                                        double sigma_s2, double sigma_n2, const QpskModem& modem);

}  // namespace mmimo

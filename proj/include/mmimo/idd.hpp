#pragma once

// Iterative detection and decoding: a soft-input soft-output MMSE detector
// with soft interference cancellation exchanges extrinsic LLRs with a BCJR
// decoder for the convolutional code.
//
// LLR convention: lambda = log P(b = 0) / P(b = 1), i.e. positive values
// favour bit 0, which QPSK maps to the positive half-plane.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "mmimo/common.hpp"
#include "mmimo/txchain.hpp"

namespace mmimo {

inline constexpr double kLlrClip = 50.0;

inline double clip_llr(double v) noexcept {
  return v > kLlrClip ? kLlrClip : (v < -kLlrClip ? -kLlrClip : v);
}

struct SoftSymbol {
  cdouble mean{0.0, 0.0};
  double variance = 1.0;
};

// Mean and variance of a Gray QPSK symbol under independent bit priors.
SoftSymbol soft_symbol_stats(double llr_b0, double llr_b1, const QpskModem& modem);

// Per-stream outputs z_j = w_j^H (r - sum_{m != j} g_m mean_m) where w_j is
// the MMSE filter for stream j against the residual covariance
// sum_{m != j} var_m g_m g_m^H + sigma_n^2 I. With all priors zero z equals
// the linear MMSE output.
CVector soft_mmse_sic_detect(const CVector& r, const CMatrix& G, std::span<const SoftSymbol> priors,
                             double sigma_s2, double sigma_n2);

// Block form: received is n_rx x P, means/variances are streams x P.
CMatrix soft_mmse_sic_block(const CMatrix& received, const CMatrix& G, const CMatrix& means,
                            const RMatrix& variances, double sigma_s2, double sigma_n2);

// Gaussian model z = V s + xi of one stream's detector output.
struct EffectiveChannel {
  double gain = 1.0;        // V
  double noise_var = 1.0;   // E|xi|^2
  bool few_samples = false; // fewer than 32 samples were averaged
};

// Sample averages V = Re(mean(conj(s) z)) / sigma_s^2, sigma^2 = mean |z - V s|^2.
EffectiveChannel estimate_effective_channel(std::span<const cdouble> z,
                                            std::span<const cdouble> reference, double sigma_s2);

// Extrinsic bit LLRs of one symbol from
//   log sum_{S: b_c = 0} exp(-|z - V S|^2 / (2 sigma^2) + other-bit prior)
//     - log sum_{S: b_c = 1} (...)
// The bit's own prior is never used. maxlog replaces log-sum-exp with max.
std::array<double, 2> extrinsic_llr(cdouble z, const EffectiveChannel& eff, const QpskModem& modem,
                                    std::array<double, 2> priors = {0.0, 0.0}, bool maxlog = false);

struct BcjrOutput {
  std::vector<double> coded_app;        // a-posteriori LLR of every coded bit
  std::vector<double> coded_extrinsic;  // coded_app minus the channel LLR
  std::vector<double> info_llr;         // a-posteriori LLR of every information bit
  Bits info_bits;
};

// Forward-backward MAP decoding of a zero-tail terminated frame. The input
// holds 2 * (K + memory) channel LLRs in encoder output order.
BcjrOutput bcjr_decode(std::span<const double> coded_llr, const TrellisSpec& trellis = {},
                       bool maxlog = false);

struct IddConfig {
  std::size_t iterations = 4;
  bool maxlog = false;
};

struct IddResult {
  // decisions[q][j]: information bits of stream j after outer iteration q.
  std::vector<std::vector<Bits>> decisions;
};

// Runs the detector/decoder loop over one packet. `received` holds the data
// part (n_rx x P); interleavers[j] is the permutation used by stream j.
IddResult idd_receive(const CMatrix& received, const CMatrix& G, double sigma_n2,
                      const std::vector<Permutation>& interleavers, const FrameLayout& layout,
                      const QpskModem& modem, const IddConfig& cfg);

// Non-iterative soft decoding for a fixed linear filter bank W: the outputs
// W^H r feed the Gaussian LLR computation and one BCJR pass per stream.
std::vector<Bits> linear_soft_decode(const CMatrix& received, const CMatrix& W,
                                     const std::vector<Permutation>& interleavers,
                                     const FrameLayout& layout, const QpskModem& modem,
                                     bool maxlog = false);

}  // namespace mmimo

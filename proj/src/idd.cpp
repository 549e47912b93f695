#include "mmimo/idd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mmimo {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(exp(a) + exp(b)), or max(a, b) in max-log mode.
inline double max_star(double a, double b, bool maxlog) noexcept {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  if (maxlog) return m;
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

// Sign used in branch metrics: bit 0 -> +1, bit 1 -> -1.
inline double bit_sign(std::uint8_t b) noexcept { return b ? -1.0 : 1.0; }

}  // namespace

SoftSymbol soft_symbol_stats(double llr_b0, double llr_b1, const QpskModem& modem) {
  const double a = modem.amplitude();
  SoftSymbol s;
  s.mean = {a * std::tanh(clip_llr(llr_b0) / 2.0), a * std::tanh(clip_llr(llr_b1) / 2.0)};
  s.variance = std::max(0.0, modem.symbol_power() - std::norm(s.mean));
  return s;
}

namespace {

// Shared part of the per-symbol computation given a factorised covariance.
void soft_outputs(const Eigen::LLT<CMatrix>& llt, const CVector& r, const CMatrix& G,
                  const CVector& means, const RVector& vars, double sigma_s2,
                  Eigen::Ref<CVector> z) {
  const CMatrix U = llt.solve(G);  // C^-1 G
  const CVector residual = r - G * means;
  for (Eigen::Index j = 0; j < G.cols(); ++j) {
    const double q = G.col(j).dot(U.col(j)).real();
    const double denom = 1.0 - vars(j) * q + sigma_s2 * q;
    // w_j = sigma_s^2 C_j^-1 g_j with C_j the full MMSE covariance for stream j
    const cdouble wr = U.col(j).dot(residual) + U.col(j).dot(G.col(j)) * means(j);
    z(j) = sigma_s2 * wr / denom;
  }
}

Eigen::LLT<CMatrix> factor_covariance(const CMatrix& G, const RVector& vars, double sigma_n2) {
  CMatrix C = G * vars.asDiagonal() * G.adjoint();
  C.diagonal().array() += sigma_n2;
  Eigen::LLT<CMatrix> llt(C);
  if (llt.info() != Eigen::Success)
    throw NumericalError("soft MMSE detector: interference-plus-noise covariance is singular");
  return llt;
}

}  // namespace

CVector soft_mmse_sic_detect(const CVector& r, const CMatrix& G, std::span<const SoftSymbol> priors,
                             double sigma_s2, double sigma_n2) {
  if (static_cast<Eigen::Index>(priors.size()) != G.cols() || r.size() != G.rows())
    throw StructuralError("soft_mmse_sic_detect: dimensions do not conform");
  if (!(sigma_n2 > 0.0)) throw NumericalError("soft MMSE detector needs a positive noise variance");
  CVector means(G.cols());
  RVector vars(G.cols());
  for (Eigen::Index j = 0; j < G.cols(); ++j) {
    means(j) = priors[j].mean;
    vars(j) = priors[j].variance;
  }
  CVector z(G.cols());
  soft_outputs(factor_covariance(G, vars, sigma_n2), r, G, means, vars, sigma_s2, z);
  return z;
}

CMatrix soft_mmse_sic_block(const CMatrix& received, const CMatrix& G, const CMatrix& means,
                            const RMatrix& variances, double sigma_s2, double sigma_n2) {
  if (received.rows() != G.rows() || means.rows() != G.cols() || variances.rows() != G.cols() ||
      means.cols() != received.cols() || variances.cols() != received.cols())
    throw StructuralError("soft_mmse_sic_block: dimensions do not conform");
  if (!(sigma_n2 > 0.0)) throw NumericalError("soft MMSE detector needs a positive noise variance");
  CMatrix z(G.cols(), received.cols());
  Eigen::LLT<CMatrix> llt;
  RVector cached;
  for (Eigen::Index i = 0; i < received.cols(); ++i) {
    const RVector vars = variances.col(i);
    // Columns with identical variances (e.g. the first iteration) share one factorisation.
    if (cached.size() == 0 || vars != cached) {
      llt = factor_covariance(G, vars, sigma_n2);
      cached = vars;
    }
    soft_outputs(llt, received.col(i), G, means.col(i), vars, sigma_s2, z.col(i));
  }
  return z;
}

EffectiveChannel estimate_effective_channel(std::span<const cdouble> z,
                                            std::span<const cdouble> reference, double sigma_s2) {
  if (z.size() != reference.size()) throw StructuralError("effective channel: length mismatch");
  if (z.empty()) throw ParameterError("effective channel: no samples");
  const double n = static_cast<double>(z.size());
  cdouble corr{0.0, 0.0};
  for (std::size_t i = 0; i < z.size(); ++i) corr += std::conj(reference[i]) * z[i];
  EffectiveChannel eff;
  eff.gain = corr.real() / (n * sigma_s2);
  double err = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) err += std::norm(z[i] - eff.gain * reference[i]);
  eff.noise_var = err / n;
  eff.few_samples = z.size() < 32;
  return eff;
}

std::array<double, 2> extrinsic_llr(cdouble z, const EffectiveChannel& eff, const QpskModem& modem,
                                    std::array<double, 2> priors, bool maxlog) {
  const auto& pts = modem.points();
  std::array<double, 4> dist{};
  for (unsigned p = 0; p < 4; ++p) dist[p] = std::norm(z - eff.gain * pts[p]);
  std::array<double, 2> out{};
  for (unsigned c = 0; c < 2; ++c) {
    const unsigned other = 1 - c;
    if (!(eff.noise_var > 0.0)) {
      // Degenerate noise estimate: saturate toward the closer hypothesis.
      double d0 = std::numeric_limits<double>::infinity();
      double d1 = d0;
      for (unsigned p = 0; p < 4; ++p) {
        const unsigned bit = c == 0 ? (p >> 1) : (p & 1u);
        (bit ? d1 : d0) = std::min(bit ? d1 : d0, dist[p]);
      }
      out[c] = d0 < d1 ? kLlrClip : (d1 < d0 ? -kLlrClip : 0.0);
      continue;
    }
    double num = kNegInf;
    double den = kNegInf;
    for (unsigned p = 0; p < 4; ++p) {
      const std::uint8_t bits[2] = {static_cast<std::uint8_t>(p >> 1),
                                    static_cast<std::uint8_t>(p & 1u)};
      const double metric =
          -dist[p] / (2.0 * eff.noise_var) + bit_sign(bits[other]) * priors[other] / 2.0;
      if (bits[c] == 0)
        num = max_star(num, metric, maxlog);
      else
        den = max_star(den, metric, maxlog);
    }
    out[c] = clip_llr(num - den);
  }
  return out;
}

BcjrOutput bcjr_decode(std::span<const double> coded_llr, const TrellisSpec& trellis, bool maxlog) {
  const std::size_t mem = trellis.memory();
  if (coded_llr.size() % 2 != 0 || coded_llr.size() < 2 * mem)
    throw StructuralError("bcjr_decode: LLR block length must be 2 * (K + memory)");
  const std::size_t steps = coded_llr.size() / 2;
  const std::size_t info_len = steps - mem;
  const unsigned S = trellis.states();

  // Precomputed trellis tables.
  std::vector<unsigned> next(S * 2);
  std::vector<std::array<std::uint8_t, 2>> outbits(S * 2);
  for (unsigned s = 0; s < S; ++s)
    for (std::uint8_t u = 0; u < 2; ++u) {
      next[2 * s + u] = trellis.next_state(s, u);
      outbits[2 * s + u] = trellis.output(s, u);
    }

  auto gamma = [&](std::size_t t, unsigned s, std::uint8_t u) {
    const auto& o = outbits[2 * s + u];
    return 0.5 * (bit_sign(o[0]) * coded_llr[2 * t] + bit_sign(o[1]) * coded_llr[2 * t + 1]);
  };
  auto allowed = [&](std::size_t t, std::uint8_t u) { return t < info_len || u == 0; };

  std::vector<double> alpha((steps + 1) * S, kNegInf);
  std::vector<double> beta((steps + 1) * S, kNegInf);
  alpha[0] = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    for (unsigned s = 0; s < S; ++s) {
      const double a = alpha[t * S + s];
      if (a == kNegInf) continue;
      for (std::uint8_t u = 0; u < 2; ++u) {
        if (!allowed(t, u)) continue;
        double& dst = alpha[(t + 1) * S + next[2 * s + u]];
        dst = max_star(dst, a + gamma(t, s, u), maxlog);
      }
    }
  }
  beta[steps * S + 0] = 0.0;
  for (std::size_t t = steps; t-- > 0;) {
    for (unsigned s = 0; s < S; ++s) {
      double acc = kNegInf;
      for (std::uint8_t u = 0; u < 2; ++u) {
        if (!allowed(t, u)) continue;
        const double b = beta[(t + 1) * S + next[2 * s + u]];
        if (b == kNegInf) continue;
        acc = max_star(acc, gamma(t, s, u) + b, maxlog);
      }
      beta[t * S + s] = acc;
    }
  }

  BcjrOutput out;
  out.coded_app.resize(coded_llr.size());
  out.coded_extrinsic.resize(coded_llr.size());
  out.info_llr.resize(info_len);
  out.info_bits.resize(info_len);
  for (std::size_t t = 0; t < steps; ++t) {
    double c0[2] = {kNegInf, kNegInf};  // per output bit position, bit value 0
    double c1[2] = {kNegInf, kNegInf};
    double u0 = kNegInf;
    double u1 = kNegInf;
    for (unsigned s = 0; s < S; ++s) {
      const double a = alpha[t * S + s];
      if (a == kNegInf) continue;
      for (std::uint8_t u = 0; u < 2; ++u) {
        if (!allowed(t, u)) continue;
        const double b = beta[(t + 1) * S + next[2 * s + u]];
        if (b == kNegInf) continue;
        const double m = a + gamma(t, s, u) + b;
        const auto& o = outbits[2 * s + u];
        for (int i = 0; i < 2; ++i) {
          if (o[i] == 0)
            c0[i] = max_star(c0[i], m, maxlog);
          else
            c1[i] = max_star(c1[i], m, maxlog);
        }
        (u == 0 ? u0 : u1) = max_star(u == 0 ? u0 : u1, m, maxlog);
      }
    }
    for (int i = 0; i < 2; ++i) {
      const std::size_t k = 2 * t + i;
      double app;
      if (c1[i] == kNegInf)
        app = kLlrClip;
      else if (c0[i] == kNegInf)
        app = -kLlrClip;
      else
        app = c0[i] - c1[i];
      out.coded_app[k] = clip_llr(app);
      out.coded_extrinsic[k] = clip_llr(app - coded_llr[k]);
    }
    if (t < info_len) {
      const double l = u1 == kNegInf ? kLlrClip : (u0 == kNegInf ? -kLlrClip : u0 - u1);
      out.info_llr[t] = clip_llr(l);
      out.info_bits[t] = l < 0.0 ? 1 : 0;
    }
  }
  return out;
}

IddResult idd_receive(const CMatrix& received, const CMatrix& G, double sigma_n2,
                      const std::vector<Permutation>& interleavers, const FrameLayout& layout,
                      const QpskModem& modem, const IddConfig& cfg) {
  if (cfg.iterations < 1) throw ParameterError("IDD needs at least one outer iteration");
  if (!layout.coded) throw ParameterError("IDD requires a coded frame layout");
  const auto streams = static_cast<std::size_t>(G.cols());
  const auto P = static_cast<std::size_t>(received.cols());
  if (P != layout.data_symbols || interleavers.size() != streams)
    throw StructuralError("idd_receive: packet does not match the frame layout");
  const double sigma_s2 = modem.symbol_power();
  const std::size_t nbits = 2 * P;

  // A-priori LLRs from the decoder, interleaved order, one row per stream.
  std::vector<std::vector<double>> priors(streams, std::vector<double>(nbits, 0.0));
  CMatrix means(streams, P);
  RMatrix vars(streams, P);
  IddResult result;
  std::vector<cdouble> zrow(P);
  std::vector<cdouble> ref(P);
  std::vector<double> llr(nbits);

  for (std::size_t q = 0; q < cfg.iterations; ++q) {
    for (std::size_t j = 0; j < streams; ++j)
      for (std::size_t i = 0; i < P; ++i) {
        const auto s = soft_symbol_stats(priors[j][2 * i], priors[j][2 * i + 1], modem);
        means(j, i) = s.mean;
        vars(j, i) = s.variance;
      }
    const CMatrix z = soft_mmse_sic_block(received, G, means, vars, sigma_s2, sigma_n2);

    std::vector<Bits> decisions(streams);
    for (std::size_t j = 0; j < streams; ++j) {
      for (std::size_t i = 0; i < P; ++i) {
        zrow[i] = z(j, i);
        ref[i] = modem.slice(zrow[i]);
      }
      const auto eff = estimate_effective_channel(zrow, ref, sigma_s2);
      for (std::size_t i = 0; i < P; ++i) {
        const auto l = extrinsic_llr(zrow[i], eff, modem, {priors[j][2 * i], priors[j][2 * i + 1]},
                                     cfg.maxlog);
        llr[2 * i] = l[0];
        llr[2 * i + 1] = l[1];
      }
      const auto dec = bcjr_decode(deinterleave<double>(llr, interleavers[j]), layout.trellis,
                                   cfg.maxlog);
      priors[j] = interleave<double>(dec.coded_extrinsic, interleavers[j]);
      decisions[j] = dec.info_bits;
    }
    result.decisions.push_back(std::move(decisions));
  }
  return result;
}

std::vector<Bits> linear_soft_decode(const CMatrix& received, const CMatrix& W,
                                     const std::vector<Permutation>& interleavers,
                                     const FrameLayout& layout, const QpskModem& modem,
                                     bool maxlog) {
  const auto streams = static_cast<std::size_t>(W.cols());
  const auto P = static_cast<std::size_t>(received.cols());
  if (P != layout.data_symbols || interleavers.size() != streams || W.rows() != received.rows())
    throw StructuralError("linear_soft_decode: packet does not match the frame layout");
  const CMatrix z = W.adjoint() * received;
  std::vector<Bits> out(streams);
  std::vector<cdouble> zrow(P);
  std::vector<cdouble> ref(P);
  std::vector<double> llr(2 * P);
  for (std::size_t j = 0; j < streams; ++j) {
    for (std::size_t i = 0; i < P; ++i) {
      zrow[i] = z(j, i);
      ref[i] = modem.slice(zrow[i]);
    }
    const auto eff = estimate_effective_channel(zrow, ref, modem.symbol_power());
    for (std::size_t i = 0; i < P; ++i) {
      const auto l = extrinsic_llr(zrow[i], eff, modem, {0.0, 0.0}, maxlog);
      llr[2 * i] = l[0];
      llr[2 * i + 1] = l[1];
    }
    out[j] = bcjr_decode(deinterleave<double>(llr, interleavers[j]), layout.trellis, maxlog).info_bits;
  }
  return out;
}

}  // namespace mmimo

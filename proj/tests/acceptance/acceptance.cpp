// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. `--only N` runs a single criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "mmimo/harness.hpp"

using namespace mmimo;

namespace {

// Pinned tolerances and scales.
constexpr double kZfTol = 1e-8;
constexpr double kRlsTol = 1e-6;
constexpr double kRlsDelta = 1e-7;
constexpr double kLlrTol = 1e-10;
constexpr double kBcjrTol = 1e-8;
constexpr double kMargin = 1.1;
constexpr std::uint64_t kSeed = 2024;

constexpr std::size_t kOrderingPackets = 2000;  // x 1500 symbol vectors
constexpr double kOrderingSnr = 12.0;
constexpr std::size_t kSingleUserPackets = 100;
constexpr std::size_t kMlPackets = 10;
constexpr std::size_t kMlDataLen = 100;

constexpr double kIddSnr = 24.0;
constexpr std::size_t kIddPackets = 400;
constexpr std::size_t kIddDataLen = 500;

constexpr double kCsiGapLimitDb = 2.5;
constexpr double kCsiTarget = 1e-2;
constexpr std::size_t kCsiPilots = 250;
constexpr std::size_t kCsiPackets = 100;

constexpr std::size_t kTrainingSeeds = 50;
constexpr double kTrainingFactor = 2.0;
constexpr double kTrainingFraction = 0.5;

constexpr std::size_t kDasPackets = 200;

std::size_t g_threads = 1;

struct Outcome {
  bool pass = false;
  std::string detail;
};

char buf[512];

template <typename... A>
std::string fmt(const char* f, A... a) {
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

SweepPoint single_point(ScenarioSpec s) {
  const auto r = run_sweep(s, {g_threads});
  if (r.points.at(0).failed) throw Error(r.points[0].failure);
  return r.points[0];
}

SweepResult sweep(const ScenarioSpec& s) {
  auto r = run_sweep(s, {g_threads});
  for (const auto& p : r.points)
    if (p.failed) throw Error(p.failure);
  return r;
}

// a < b with disjoint intervals or a margin.
bool better(const SweepPoint& a, const SweepPoint& b) {
  return a.ber <= b.ber && (a.ci.high < b.ci.low || a.ber * kMargin <= b.ber);
}

ScenarioSpec fig3_scenario(std::size_t users, DetectorKind det) {
  ScenarioSpec s;
  s.system = SystemConfig::centralized(16, users, 1);
  s.detector.kind = det;
  s.detector.branches = 4;
  s.data_len = 1500;
  s.snr_db = {kOrderingSnr};
  s.packets = kOrderingPackets;
  s.seed = kSeed;
  return s;
}

CMatrix gaussian(Eigen::Index r, Eigen::Index c, Rng& rng) {
  CMatrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.complex_normal();
  return m;
}

CMatrix qpsk_block(Eigen::Index r, Eigen::Index c, Rng& rng, const QpskModem& m) {
  CMatrix s(r, c);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const auto b0 = rng.bit();
    s(i) = m.map(b0, rng.bit());
  }
  return s;
}

double lse(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalences() {
  Rng rng(kSeed);
  const QpskModem modem;
  std::vector<std::string> bad;

  double zf_err = 0.0;
  for (int t = 0; t < 20; ++t) {
    const CMatrix G = gaussian(16, 8, rng);
    const CMatrix W = compute_receive_filter(G, 1.0, 0.1, FilterDesign::Zf).W;
    zf_err = std::max(zf_err, (W.adjoint() * G - CMatrix::Identity(8, 8)).cwiseAbs().maxCoeff());
  }
  if (zf_err > kZfTol) bad.push_back("zf");

  double rls_err = 0.0;
  for (int t = 0; t < 10; ++t) {
    const CMatrix G = gaussian(16, 8, rng);
    const CMatrix P = qpsk_block(8, 100, rng, modem);
    CMatrix R = G * P;
    for (Eigen::Index i = 0; i < R.size(); ++i) R(i) += rng.complex_normal(0.1);
    RlsChannelEstimator est(16, 8, 1.0, kRlsDelta);
    for (Eigen::Index i = 0; i < P.cols(); ++i) est.update(P.col(i), R.col(i));
    rls_err = std::max(rls_err, (est.estimate() - ls_channel_estimate(P, R, 1.0)).cwiseAbs().maxCoeff());
  }
  if (rls_err > kRlsTol) bad.push_back("rls");

  // Four-point enumeration with explicit probabilities.
  double llr_err = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const cdouble z(rng.uniform(-3, 3), rng.uniform(-3, 3));
    EffectiveChannel eff;
    eff.gain = rng.uniform(0.2, 1.5);
    eff.noise_var = rng.uniform(0.2, 2.0);
    const std::array<double, 2> pri{rng.uniform(-5, 5), rng.uniform(-5, 5)};
    const auto got = extrinsic_llr(z, eff, modem, pri);
    for (int c = 0; c < 2; ++c) {
      double num = 0.0, den = 0.0;
      for (int b0 = 0; b0 < 2; ++b0)
        for (int b1 = 0; b1 < 2; ++b1) {
          const int bits[2] = {b0, b1};
          const int o = 1 - c;
          const double p_other = 1.0 / (1.0 + std::exp(bits[o] ? pri[o] : -pri[o]));
          const double like =
              std::exp(-std::norm(z - eff.gain * modem.map(uint8_t(b0), uint8_t(b1))) /
                       (2.0 * eff.noise_var)) * p_other;
          (bits[c] ? den : num) += like;
        }
      llr_err = std::max(llr_err, std::abs(got[c] - std::log(num / den)));
    }
  }
  if (llr_err > kLlrTol) bad.push_back("llr");

  double bcjr_err = 0.0;
  for (std::size_t K : {2u, 5u, 10u}) {
    for (int t = 0; t < 5; ++t) {
      std::vector<double> llr(2 * (K + 2));
      for (auto& l : llr) l = rng.uniform(-4, 4);
      const auto dec = bcjr_decode(llr);
      const double neg_inf = -std::numeric_limits<double>::infinity();
      std::vector<double> u0(K, neg_inf), u1(K, neg_inf), c0(llr.size(), neg_inf),
          c1(llr.size(), neg_inf);
      for (std::size_t w = 0; w < (std::size_t{1} << K); ++w) {
        Bits info(K);
        for (std::size_t i = 0; i < K; ++i) info[i] = (w >> i) & 1u;
        const Bits cw = conv_encode(info);
        double metric = 0.0;
        for (std::size_t i = 0; i < cw.size(); ++i) metric += (cw[i] ? -0.5 : 0.5) * llr[i];
        for (std::size_t i = 0; i < K; ++i) {
          auto& slot = info[i] ? u1[i] : u0[i];
          slot = lse(slot, metric);
        }
        for (std::size_t i = 0; i < cw.size(); ++i) {
          auto& slot = cw[i] ? c1[i] : c0[i];
          slot = lse(slot, metric);
        }
      }
      for (std::size_t i = 0; i < K; ++i)
        bcjr_err = std::max(bcjr_err, std::abs(dec.info_llr[i] - (u0[i] - u1[i])));
      for (std::size_t i = 0; i < llr.size(); ++i) {
        if (std::isinf(c0[i]) || std::isinf(c1[i])) continue;  // tail positions fixed by the code
        bcjr_err = std::max(bcjr_err, std::abs(dec.coded_app[i] - (c0[i] - c1[i])));
      }
    }
  }
  if (bcjr_err > kBcjrTol) bad.push_back("bcjr");

  std::size_t ml_mismatch = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + t % 4;
    const CMatrix G = gaussian(6, static_cast<Eigen::Index>(n), rng);
    CVector r = G * qpsk_block(static_cast<Eigen::Index>(n), 1, rng, modem).col(0);
    for (Eigen::Index i = 0; i < r.size(); ++i) r(i) += rng.complex_normal(0.5);
    const auto got = ml_detect_oracle(G, r, modem).symbols;
    // Independent enumeration over symbol indices in base 4.
    double best = std::numeric_limits<double>::infinity();
    CVector want;
    std::size_t total = 1;
    for (std::size_t k = 0; k < n; ++k) total *= 4;
    for (std::size_t idx = 0; idx < total; ++idx) {
      CVector s(static_cast<Eigen::Index>(n));
      std::size_t rem = idx;
      for (std::size_t k = n; k-- > 0;) {
        s(static_cast<Eigen::Index>(k)) = modem.points()[rem % 4];
        rem /= 4;
      }
      const double d = (r - G * s).squaredNorm();
      if (d < best) {
        best = d;
        want = s;
      }
    }
    if (got != want) ++ml_mismatch;
  }
  if (ml_mismatch) bad.push_back("ml");

  Outcome o;
  o.pass = bad.empty();
  o.detail = fmt("zf %.1e, rls %.1e, llr %.1e, bcjr %.1e, ml mismatches %zu", zf_err, rls_err,
                 llr_err, bcjr_err, ml_mismatch);
  return o;
}

Outcome detector_ordering() {
  std::map<DetectorKind, SweepPoint> p;
  for (auto d : {DetectorKind::MbSic, DetectorKind::Sic, DetectorKind::Mmse, DetectorKind::Rmf})
    p[d] = single_point(fig3_scenario(8, d));
  Outcome o;
  o.pass = better(p[DetectorKind::MbSic], p[DetectorKind::Sic]) &&
           better(p[DetectorKind::Sic], p[DetectorKind::Mmse]) &&
           better(p[DetectorKind::Mmse], p[DetectorKind::Rmf]);
  o.detail = fmt("mb-sic %.4e [%.4e, %.4e], sic %.4e [%.4e, %.4e], mmse %.4e, rmf %.4e",
                 p[DetectorKind::MbSic].ber, p[DetectorKind::MbSic].ci.low,
                 p[DetectorKind::MbSic].ci.high, p[DetectorKind::Sic].ber,
                 p[DetectorKind::Sic].ci.low, p[DetectorKind::Sic].ci.high,
                 p[DetectorKind::Mmse].ber, p[DetectorKind::Rmf].ber);
  return o;
}

Outcome single_user_bound() {
  const std::vector<double> snrs{0, 4, 8, 12, 16};
  ScenarioSpec single = fig3_scenario(1, DetectorKind::Rmf);
  single.snr_db = snrs;
  single.packets = kSingleUserPackets;
  const auto bound = sweep(single);

  std::size_t violations = 0;
  std::string worst;
  for (auto d : {DetectorKind::Rmf, DetectorKind::Zf, DetectorKind::Mmse, DetectorKind::Sic,
                 DetectorKind::MbSic, DetectorKind::DfSuccessive, DetectorKind::DfParallel,
                 DetectorKind::Ml}) {
    ScenarioSpec s = fig3_scenario(8, d);
    s.snr_db = snrs;
    s.packets = kSingleUserPackets;
    if (d == DetectorKind::Ml) {
      s.packets = kMlPackets;
      s.data_len = kMlDataLen;
    }
    const auto r = sweep(s);
    for (std::size_t i = 0; i < snrs.size(); ++i)
      if (!(bound.points[i].ci.high < r.points[i].ci.low)) {
        ++violations;
        worst = fmt("%s at %g dB", to_string(d).c_str(), snrs[i]);
      }
  }
  Outcome o;
  o.pass = violations == 0;
  o.detail = fmt("single-user rmf ber %.3e..%.3e, %zu overlapping points%s%s", bound.points.front().ber,
                 bound.points.back().ber, violations, violations ? ", e.g. " : "", worst.c_str());
  return o;
}

Outcome idd_gain() {
  ScenarioSpec coded = fig3_scenario(8, DetectorKind::Mmse);
  coded.coded = true;
  coded.idd.iterations = 4;
  coded.data_len = kIddDataLen;
  coded.packets = kIddPackets;
  coded.snr_db = {kIddSnr};
  const auto c = single_point(coded);

  ScenarioSpec uncoded = coded;
  uncoded.coded = false;
  const auto u = single_point(uncoded);

  SweepPoint first = c;
  first.errors = c.iteration_errors.front();
  first.ber = static_cast<double>(first.errors) / static_cast<double>(c.bits);
  first.ci = binomial_ci(first.errors, c.bits);

  Outcome o;
  o.pass = c.iteration_errors.back() <= c.iteration_errors.front() && c.ci.high < first.ci.low &&
           c.ci.high < u.ci.low;
  o.detail = fmt("%g dB: iteration 1 %.3e, iteration 4 %.3e [%.3e, %.3e], uncoded mmse %.3e [%.3e, %.3e]",
                 kIddSnr, first.ber, c.ber, c.ci.low, c.ci.high, u.ber, u.ci.low, u.ci.high);
  return o;
}

// SNR at which a BER curve crosses `target`, interpolating log10(BER)
// linearly; NaN if the sweep never gets there.
double crossing_snr(const SweepResult& r, double target) {
  for (std::size_t i = 0; i + 1 < r.points.size(); ++i) {
    const auto& a = r.points[i];
    const auto& b = r.points[i + 1];
    if (a.ber >= target && b.ber < target && b.ber > 0.0) {
      const double la = std::log10(a.ber), lb = std::log10(b.ber), lt = std::log10(target);
      return a.snr_db + (b.snr_db - a.snr_db) * (la - lt) / (la - lb);
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

Outcome channel_estimation_loss() {
  auto curve = [](EstimatorKind e) {
    ScenarioSpec s = fig3_scenario(8, DetectorKind::Mmse);
    s.estimator = e;
    s.pilot_len = e == EstimatorKind::Perfect ? 0 : kCsiPilots;
    s.lambda = 0.999;
    s.mu = 0.05;
    s.packets = kCsiPackets;
    s.snr_db = parse_snr_list("14:30:2");
    return crossing_snr(sweep(s), kCsiTarget);
  };
  const double perfect = curve(EstimatorKind::Perfect);
  const double rls = curve(EstimatorKind::Rls) - perfect;
  const double lms = curve(EstimatorKind::Lms) - perfect;
  Outcome o;
  o.pass = std::isfinite(rls) && std::isfinite(lms) && rls <= kCsiGapLimitDb && rls <= lms;
  o.detail = fmt("perfect CSI reaches %.0e at %.2f dB; gap rls %.2f dB, lms %.2f dB", kCsiTarget,
                 perfect, rls, lms);
  return o;
}

Outcome reduced_rank_training() {
  TrainingCurveSpec spec;
  spec.system = SystemConfig::distributed(32, 32, 1, 32, 2);
  spec.snr_db = 15.0;
  spec.rank = 5;
  spec.lambda = 0.999;
  spec.checkpoints = {25, 50, 75, 100, 150, 200, 300, 400, 500, 600, 800, 1000, 1250, 1500};
  spec.seeds = kTrainingSeeds;
  spec.seed = kSeed;
  const auto res = run_training_curves(
      spec, {TrainingMethod::FullRls, TrainingMethod::Krylov, TrainingMethod::Jio}, g_threads);
  const auto& full = res.curves[0];
  const double threshold = kTrainingFactor * full.ber(full.checkpoints.size() - 1);
  auto symbols_to = [&](const TrainingCurve& c) -> std::size_t {
    for (std::size_t i = 0; i < c.checkpoints.size(); ++i)
      if (c.ber(i) <= threshold) return c.checkpoints[i];
    return 0;  // never
  };
  const std::size_t n_full = symbols_to(full);
  const std::size_t n_krylov = symbols_to(res.curves[1]);
  const std::size_t n_jio = symbols_to(res.curves[2]);
  const double budget = kTrainingFraction * static_cast<double>(n_full);
  const bool krylov_ok = n_krylov > 0 && n_krylov <= budget;
  const bool jio_ok = n_jio > 0 && n_jio <= budget;
  Outcome o;
  o.pass = n_full > 0 && krylov_ok && jio_ok && n_jio <= n_krylov;
  auto show = [](std::size_t n) { return n ? std::to_string(n) : std::string("never"); };
  o.detail = fmt("threshold %.3e; symbols to threshold: rls %s, krylov %s, jio %s; 1500-symbol ber rls "
                 "%.3e, krylov %.3e, jio %.3e",
                 threshold, show(n_full).c_str(), show(n_krylov).c_str(), show(n_jio).c_str(),
                 full.ber(full.checkpoints.size() - 1),
                 res.curves[1].ber(full.checkpoints.size() - 1),
                 res.curves[2].ber(full.checkpoints.size() - 1));
  return o;
}

Outcome das_versus_cas() {
  const std::vector<double> snrs{0, 4, 8, 12, 16};
  ScenarioSpec cas = fig3_scenario(8, DetectorKind::Mmse);
  cas.packets = kDasPackets;
  cas.snr_db = snrs;
  ScenarioSpec das = cas;
  das.system = SystemConfig::distributed(8, 8, 1, 8, 1);
  const auto c = sweep(cas);
  const auto d = sweep(das);
  std::size_t not_worse = 0, separated = 0;
  for (std::size_t i = 0; i < snrs.size(); ++i) {
    not_worse += d.points[i].ber <= c.points[i].ber;
    separated += d.points[i].ber <= c.points[i].ber && d.points[i].ci.high < c.points[i].ci.low;
  }
  Outcome o;
  o.pass = not_worse == snrs.size() && 2 * separated >= snrs.size();
  o.detail = fmt("das <= cas at %zu/%zu points, disjoint CIs at %zu; at %g dB das %.3e vs cas %.3e",
                 not_worse, snrs.size(), separated, snrs[3], d.points[3].ber, c.points[3].ber);
  return o;
}

Outcome determinism() {
  ScenarioSpec s = fig3_scenario(8, DetectorKind::MbSic);
  s.packets = 20;
  s.data_len = 200;
  s.snr_db = {4, 8, 12};
  s.estimator = EstimatorKind::Rls;
  s.pilot_len = 50;
  ScenarioSpec coded = fig3_scenario(8, DetectorKind::Mmse);
  coded.coded = true;
  coded.packets = 10;
  coded.data_len = 300;
  coded.snr_db = {20};
  bool same = true;
  for (const auto& spec : {s, coded}) {
    const std::string a = format_csv(run_sweep(spec, {1}));
    const std::string b = format_csv(run_sweep(spec, {g_threads}));
    const std::string c = format_csv(run_sweep(parse_config(serialize_config(spec)), {1}));
    same = same && a == b && a == c;
  }
  Outcome o;
  o.pass = same;
  o.detail = same ? "CSV identical across reruns, thread counts and config round trip"
                  : "CSV differs between reruns";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  int only = 0;
  g_threads = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("--only", only, "run a single criterion");
  app.add_option("--threads", g_threads, "worker threads");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::function<Outcome()>> criteria{
      oracle_equivalences,     detector_ordering,     single_user_bound,     idd_gain,
      channel_estimation_loss, reduced_rank_training, das_versus_cas, determinism};

  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only && static_cast<std::size_t>(only) != i + 1) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("error: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %zu: %s (%.0f s) %s\n", i + 1, o.pass ? "PASS" : "FAIL", secs,
                o.detail.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}

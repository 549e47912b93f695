#include "mmimo/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace mmimo {

namespace {

constexpr std::uint64_t kReferenceSeed = 0x9a3c51e7d2b40f68ULL;
constexpr std::size_t kReferenceLinks = 200000;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& v) {
  double x = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || ptr != end || !std::isfinite(x))
    throw ParameterError("'" + v + "' is not a number");
  return x;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t x = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, x);
  if (ec != std::errc() || ptr != end)
    throw ParameterError("'" + v + "' is not a non-negative integer");
  return x;
}

std::size_t to_count(const std::string& v) { return static_cast<std::size_t>(to_u64(v)); }

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ParameterError("'" + v + "' is not a boolean");
}

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

OrderingCriterion parse_ordering(const std::string& v) {
  for (auto c : {OrderingCriterion::ColumnNorm, OrderingCriterion::Snr, OrderingCriterion::Sinr,
                 OrderingCriterion::Exhaustive})
    if (to_string(c) == v) return c;
  throw ParameterError("unknown ordering '" + v + "'");
}

FilterDesign parse_design(const std::string& v) {
  for (auto d : {FilterDesign::Rmf, FilterDesign::Zf, FilterDesign::Mmse})
    if (to_string(d) == v) return d;
  throw ParameterError("unknown filter design '" + v + "'");
}

std::string format_snr_list(const std::vector<double>& snr) {
  std::string out;
  for (std::size_t i = 0; i < snr.size(); ++i) {
    if (i) out += ",";
    out += fmt_double(snr[i]);
  }
  return out;
}

using Setter = std::function<void(ScenarioSpec&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"n_bs", [](ScenarioSpec& s, const std::string& v) { s.system.n_bs = to_count(v); }},
      {"n_heads", [](ScenarioSpec& s, const std::string& v) { s.system.n_heads = to_count(v); }},
      {"antennas_per_head",
       [](ScenarioSpec& s, const std::string& v) { s.system.antennas_per_head = to_count(v); }},
      {"n_users", [](ScenarioSpec& s, const std::string& v) { s.system.n_users = to_count(v); }},
      {"antennas_per_user",
       [](ScenarioSpec& s, const std::string& v) { s.system.antennas_per_user = to_count(v); }},
      {"rho", [](ScenarioSpec& s, const std::string& v) { s.system.rho = to_double(v); }},
      {"path_loss_exp",
       [](ScenarioSpec& s, const std::string& v) { s.system.path_loss_exp = to_double(v); }},
      {"shadow_spread_db",
       [](ScenarioSpec& s, const std::string& v) { s.system.shadow_spread_db = to_double(v); }},
      {"path_gain_min",
       [](ScenarioSpec& s, const std::string& v) { s.system.path_gain.lo = to_double(v); }},
      {"path_gain_max",
       [](ScenarioSpec& s, const std::string& v) { s.system.path_gain.hi = to_double(v); }},
      {"distance_min",
       [](ScenarioSpec& s, const std::string& v) { s.system.distance.lo = to_double(v); }},
      {"distance_max",
       [](ScenarioSpec& s, const std::string& v) { s.system.distance.hi = to_double(v); }},
      {"distance_step",
       [](ScenarioSpec& s, const std::string& v) { s.system.distance_step = to_double(v); }},
      {"symbol_power",
       [](ScenarioSpec& s, const std::string& v) { s.system.symbol_power = to_double(v); }},
      {"detector",
       [](ScenarioSpec& s, const std::string& v) { s.detector.kind = parse_detector_kind(v); }},
      {"ordering",
       [](ScenarioSpec& s, const std::string& v) { s.detector.ordering = parse_ordering(v); }},
      {"branches", [](ScenarioSpec& s, const std::string& v) { s.detector.branches = to_count(v); }},
      {"design", [](ScenarioSpec& s, const std::string& v) { s.detector.design = parse_design(v); }},
      {"coded", [](ScenarioSpec& s, const std::string& v) { s.coded = to_bool(v); }},
      {"idd.iterations",
       [](ScenarioSpec& s, const std::string& v) { s.idd.iterations = to_count(v); }},
      {"idd.maxlog", [](ScenarioSpec& s, const std::string& v) { s.idd.maxlog = to_bool(v); }},
      {"estimator",
       [](ScenarioSpec& s, const std::string& v) { s.estimator = parse_estimator_kind(v); }},
      {"lambda", [](ScenarioSpec& s, const std::string& v) { s.lambda = to_double(v); }},
      {"mu", [](ScenarioSpec& s, const std::string& v) { s.mu = to_double(v); }},
      {"rank", [](ScenarioSpec& s, const std::string& v) { s.rank = to_count(v); }},
      {"delta", [](ScenarioSpec& s, const std::string& v) { s.delta = to_double(v); }},
      {"pilot_len", [](ScenarioSpec& s, const std::string& v) { s.pilot_len = to_count(v); }},
      {"data_len", [](ScenarioSpec& s, const std::string& v) { s.data_len = to_count(v); }},
      {"snr", [](ScenarioSpec& s, const std::string& v) { s.snr_db = parse_snr_list(v); }},
      {"packets", [](ScenarioSpec& s, const std::string& v) { s.packets = to_count(v); }},
      {"seed", [](ScenarioSpec& s, const std::string& v) { s.seed = to_u64(v); }},
      {"output", [](ScenarioSpec& s, const std::string& v) { s.output = v; }},
  };
  return table;
}

[[noreturn]] void rethrow_with_context(const std::string& ctx) {
  try {
    throw;
  } catch (const SingularityError& e) {
    throw SingularityError(ctx + e.what());
  } catch (const RankError& e) {
    throw RankError(ctx + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(ctx + e.what());
  } catch (const CapacityError& e) {
    throw CapacityError(ctx + e.what());
  } catch (const ParameterError& e) {
    throw ParameterError(ctx + e.what());
  } catch (const std::exception& e) {
    throw Error(ctx + e.what());
  }
}

std::uint64_t count_bit_errors(const CMatrix& decisions, const std::vector<Bits>& info,
                               const QpskModem& modem) {
  std::uint64_t errors = 0;
  for (Eigen::Index j = 0; j < decisions.rows(); ++j) {
    const Bits& ref = info[static_cast<std::size_t>(j)];
    for (Eigen::Index t = 0; t < decisions.cols(); ++t) {
      const auto b = modem.slice_bits(decisions(j, t));
      const auto i = static_cast<std::size_t>(2 * t);
      errors += (b[0] != ref[i]) + (b[1] != ref[i + 1]);
    }
  }
  return errors;
}

std::uint64_t count_bit_errors(const std::vector<Bits>& decided, const std::vector<Bits>& info) {
  std::uint64_t errors = 0;
  for (std::size_t j = 0; j < info.size(); ++j)
    for (std::size_t i = 0; i < info[j].size(); ++i) errors += decided[j][i] != info[j][i];
  return errors;
}

ChannelRealization draw_channel(const SystemConfig& cfg, const KroneckerSampler& sampler,
                                std::uint64_t seed, std::uint64_t trial) {
  Rng large_rng(derive_seed(seed, trial, Stream::LargeScale));
  Rng small_rng(derive_seed(seed, trial, Stream::SmallScale));
  LargeScaleDraw large = draw_large_scale(cfg, large_rng);
  std::vector<CMatrix> small;
  small.reserve(cfg.n_users);
  for (std::size_t k = 0; k < cfg.n_users; ++k) small.push_back(sampler.draw(small_rng));
  return compose_channel(cfg, std::move(small), std::move(large));
}

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) fn(i);
  };
  if (threads == 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

ScenarioSpec validated(ScenarioSpec spec) {
  spec.validate();
  return spec;
}

}  // namespace

std::string to_string(EstimatorKind e) {
  switch (e) {
    case EstimatorKind::Perfect: return "perfect";
    case EstimatorKind::Ls: return "ls";
    case EstimatorKind::Rls: return "rls";
    case EstimatorKind::Lms: return "lms";
    case EstimatorKind::RrPc: return "rr-pc";
    case EstimatorKind::RrKrylov: return "rr-krylov";
    case EstimatorKind::RrJio: return "rr-jio";
  }
  return "?";
}

EstimatorKind parse_estimator_kind(const std::string& name) {
  for (auto e : {EstimatorKind::Perfect, EstimatorKind::Ls, EstimatorKind::Rls, EstimatorKind::Lms,
                 EstimatorKind::RrPc, EstimatorKind::RrKrylov, EstimatorKind::RrJio})
    if (to_string(e) == name) return e;
  throw ParameterError("unknown estimator '" + name + "'");
}

FrameLayout ScenarioSpec::layout() const {
  FrameLayout l;
  l.data_symbols = data_len;
  l.pilot_symbols = pilot_len;
  l.coded = coded;
  return l;
}

void ScenarioSpec::validate() const {
  try {
    system.validate();
  } catch (const ParameterError& e) {
    throw ConfigError("system", 0, e.what());
  }
  const std::size_t streams = system.n_streams();
  if (packets < 1) throw ConfigError("packets", 0, "must be at least 1");
  if (data_len < 1) throw ConfigError("data_len", 0, "must be at least 1");
  if (snr_db.empty()) throw ConfigError("snr", 0, "no SNR points");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("lambda", 0, "must lie in (0, 1]");
  if (!(mu > 0.0)) throw ConfigError("mu", 0, "must be positive");
  if (!(delta > 0.0)) throw ConfigError("delta", 0, "must be positive");
  if (detector.ordering == OrderingCriterion::Exhaustive)
    throw ConfigError("ordering", 0, "exhaustive ordering is an oracle, not a sweep option");
  if (detector.kind == DetectorKind::MbSic &&
      (detector.branches < 1 || detector.branches > streams))
    throw ConfigError("branches", 0, "must lie in [1, streams]");
  if (detector.kind == DetectorKind::Ml && streams > 9)
    throw ConfigError("detector", 0, "ml search exceeds 10^6 candidates");
  if ((detector.kind == DetectorKind::Sic || detector.kind == DetectorKind::MbSic) &&
      detector.design == FilterDesign::Rmf)
    throw ConfigError("design", 0, "SIC needs a zf or mmse filter design");
  const bool reduced_rank = estimator == EstimatorKind::RrPc ||
                            estimator == EstimatorKind::RrKrylov ||
                            estimator == EstimatorKind::RrJio;
  if (estimator != EstimatorKind::Perfect && pilot_len < streams)
    throw ConfigError("pilot_len", 0,
                      "needs at least " + std::to_string(streams) + " pilots for estimation");
  if (reduced_rank) {
    if (detector.kind != DetectorKind::Mmse)
      throw ConfigError("detector", 0, "trained receive filters are used with detector = mmse");
    if (coded) throw ConfigError("coded", 0, "reduced-rank filter training runs uncoded");
    if (rank < 1 || rank > system.n_rx_total())
      throw ConfigError("rank", 0, "must lie in [1, n_rx_total]");
  }
  if (coded) {
    if (detector.kind != DetectorKind::Mmse && detector.kind != DetectorKind::Rmf &&
        detector.kind != DetectorKind::Zf)
      throw ConfigError("detector", 0, "coded runs support mmse (IDD), rmf and zf");
    if (layout().info_bits_per_stream() == 0)
      throw ConfigError("data_len", 0, "too short for the code tail");
    if (idd.iterations < 1) throw ConfigError("idd.iterations", 0, "must be at least 1");
  }
}

std::vector<double> parse_snr_list(std::string_view text) {
  const std::string s = trim(text);
  std::vector<double> out;
  if (s.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(trim(p));
    if (parts.size() != 3) throw ParameterError("SNR range must be a:b:step");
    const double a = to_double(parts[0]);
    const double b = to_double(parts[1]);
    const double step = to_double(parts[2]);
    if (!(step > 0.0) || b < a) throw ParameterError("SNR range needs a <= b and step > 0");
    const auto n = static_cast<std::size_t>(std::floor((b - a) / step + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) out.push_back(a + step * static_cast<double>(i));
  } else {
    std::stringstream ss(s);
    for (std::string p; std::getline(ss, p, ',');) out.push_back(to_double(trim(p)));
  }
  if (out.empty()) throw ParameterError("empty SNR list");
  return out;
}

ScenarioSpec parse_config(std::string_view text) {
  ScenarioSpec spec;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(line, line_no, "expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(key, line_no, "unknown key");
    if (!seen.insert(key).second) throw ConfigError(key, line_no, "duplicate key");
    if (value.empty()) throw ConfigError(key, line_no, "missing value");
    try {
      it->second(spec, value);
    } catch (const Error& e) {
      throw ConfigError(key, line_no, e.what());
    }
  }
  spec.validate();
  return spec;
}

ScenarioSpec load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ScenarioSpec& s) {
  std::ostringstream o;
  const auto& y = s.system;
  o << "n_bs = " << y.n_bs << "\n"
    << "n_heads = " << y.n_heads << "\n"
    << "antennas_per_head = " << y.antennas_per_head << "\n"
    << "n_users = " << y.n_users << "\n"
    << "antennas_per_user = " << y.antennas_per_user << "\n"
    << "rho = " << fmt_double(y.rho) << "\n"
    << "path_loss_exp = " << fmt_double(y.path_loss_exp) << "\n"
    << "shadow_spread_db = " << fmt_double(y.shadow_spread_db) << "\n"
    << "path_gain_min = " << fmt_double(y.path_gain.lo) << "\n"
    << "path_gain_max = " << fmt_double(y.path_gain.hi) << "\n"
    << "distance_min = " << fmt_double(y.distance.lo) << "\n"
    << "distance_max = " << fmt_double(y.distance.hi) << "\n"
    << "distance_step = " << fmt_double(y.distance_step) << "\n"
    << "symbol_power = " << fmt_double(y.symbol_power) << "\n"
    << "detector = " << to_string(s.detector.kind) << "\n"
    << "ordering = " << to_string(s.detector.ordering) << "\n"
    << "branches = " << s.detector.branches << "\n"
    << "design = " << to_string(s.detector.design) << "\n"
    << "coded = " << (s.coded ? "true" : "false") << "\n"
    << "idd.iterations = " << s.idd.iterations << "\n"
    << "idd.maxlog = " << (s.idd.maxlog ? "true" : "false") << "\n"
    << "estimator = " << to_string(s.estimator) << "\n"
    << "lambda = " << fmt_double(s.lambda) << "\n"
    << "mu = " << fmt_double(s.mu) << "\n"
    << "rank = " << s.rank << "\n"
    << "delta = " << fmt_double(s.delta) << "\n"
    << "pilot_len = " << s.pilot_len << "\n"
    << "data_len = " << s.data_len << "\n"
    << "snr = " << format_snr_list(s.snr_db) << "\n"
    << "packets = " << s.packets << "\n"
    << "seed = " << s.seed << "\n";
  if (!s.output.empty()) o << "output = " << s.output << "\n";
  return o.str();
}

void TrialCounts::merge(const TrialCounts& other) {
  bits += other.bits;
  errors += other.errors;
  if (iteration_errors.size() < other.iteration_errors.size())
    iteration_errors.resize(other.iteration_errors.size(), 0);
  for (std::size_t q = 0; q < other.iteration_errors.size(); ++q)
    iteration_errors[q] += other.iteration_errors[q];
}

double reference_mean_gamma_sq(const SystemConfig& cfg) {
  const std::size_t links = cfg.n_users * cfg.n_sites();
  const std::size_t draws = std::max<std::size_t>(1000, kReferenceLinks / std::max<std::size_t>(links, 1));
  Rng rng(derive_seed(kReferenceSeed, {static_cast<std::uint64_t>(Stream::MeanGamma)}));
  return estimate_mean_gamma_sq(cfg, draws, rng).mean;
}

Simulation::Simulation(ScenarioSpec spec)
    : spec_(validated(std::move(spec))),
      layout_(spec_.layout()),
      modem_(spec_.system.symbol_power),
      sampler_(spec_.system) {
  mean_gamma_sq_ = reference_mean_gamma_sq(spec_.system);
  const double rate = spec_.coded ? 0.5 : 1.0;
  for (double snr : spec_.snr_db)
    noise_var_.push_back(snr_to_noise_variance(snr, spec_.system, mean_gamma_sq_, rate,
                                               QpskModem::kBitsPerSymbol));
}

TrialCounts Simulation::run_trial(std::size_t snr_index, std::size_t trial,
                                  std::optional<double> noise_var) const {
  const double n2 = noise_var ? *noise_var : noise_variance(snr_index);
  try {
    const SystemConfig& sys = spec_.system;
    const std::size_t streams = sys.n_streams();
    const double s2 = sys.symbol_power;
    const ChannelRealization ch = draw_channel(sys, sampler_, spec_.seed, trial);
    const CMatrix& G = ch.stacked;

    Rng bit_rng(derive_seed(spec_.seed, trial, Stream::InfoBits));
    std::vector<Bits> payload;
    for (std::size_t j = 0; j < streams; ++j)
      payload.push_back(random_bits(layout_.info_bits_per_stream(), bit_rng));
    const SymbolFrame frame =
        assemble_frame(layout_, payload, modem_, derive_seed(spec_.seed, trial, Stream::Frame));

    Rng noise_rng(derive_seed(spec_.seed, trial, Stream::Noise));
    const CMatrix received = transmit_block(G, frame.symbols(), n2, noise_rng);
    const auto np = static_cast<Eigen::Index>(layout_.pilot_symbols);
    const CMatrix pilots_rx = received.leftCols(np);
    const CMatrix data_rx = received.rightCols(static_cast<Eigen::Index>(layout_.data_symbols));

    CMatrix Ghat;
    std::optional<CMatrix> trained;
    switch (spec_.estimator) {
      case EstimatorKind::Perfect:
        Ghat = G;
        break;
      case EstimatorKind::Ls:
        Ghat = ls_channel_estimate(frame.pilots, pilots_rx, spec_.lambda);
        break;
      case EstimatorKind::Rls: {
        RlsChannelEstimator est(sys.n_rx_total(), streams, spec_.lambda, spec_.delta);
        for (Eigen::Index i = 0; i < np; ++i) est.update(frame.pilots.col(i), pilots_rx.col(i));
        Ghat = est.estimate();
        break;
      }
      case EstimatorKind::Lms: {
        LmsChannelEstimator est(sys.n_rx_total(), streams, spec_.mu,
                                static_cast<double>(streams) * s2);
        for (Eigen::Index i = 0; i < np; ++i) est.update(frame.pilots.col(i), pilots_rx.col(i));
        Ghat = est.estimate();
        break;
      }
      case EstimatorKind::RrPc:
      case EstimatorKind::RrKrylov:
      case EstimatorKind::RrJio: {
        std::unique_ptr<FilterTrainer> trainer;
        if (spec_.estimator == EstimatorKind::RrJio)
          trainer = std::make_unique<JioFilterBank>(sys.n_rx_total(), streams, spec_.rank,
                                                    spec_.lambda, spec_.delta);
        else
          trainer = std::make_unique<SubspaceFilterBank>(
              spec_.estimator == EstimatorKind::RrPc ? ProjectionMethod::Pc
                                                     : ProjectionMethod::Krylov,
              sys.n_rx_total(), streams, spec_.rank, spec_.lambda, spec_.delta);
        for (Eigen::Index i = 0; i < np; ++i) trainer->update(pilots_rx.col(i), frame.pilots.col(i));
        trained = trainer->filters();
        break;
      }
    }

    TrialCounts counts;
    counts.bits = static_cast<std::uint64_t>(streams * layout_.info_bits_per_stream());
    if (spec_.coded) {
      if (spec_.detector.kind == DetectorKind::Mmse) {
        const IddResult res =
            idd_receive(data_rx, Ghat, n2, frame.interleavers, layout_, modem_, spec_.idd);
        for (const auto& decided : res.decisions)
          counts.iteration_errors.push_back(count_bit_errors(decided, frame.info));
        counts.errors = counts.iteration_errors.back();
      } else {
        const FilterDesign design =
            spec_.detector.kind == DetectorKind::Rmf ? FilterDesign::Rmf : FilterDesign::Zf;
        const CMatrix W = compute_receive_filter(Ghat, s2, n2, design).W;
        const auto decided =
            linear_soft_decode(data_rx, W, frame.interleavers, layout_, modem_, spec_.idd.maxlog);
        counts.errors = count_bit_errors(decided, frame.info);
      }
    } else {
      std::unique_ptr<Detector> det;
      if (trained)
        det = std::make_unique<LinearDetector>(*trained, modem_);
      else
        det = make_detector(spec_.detector, Ghat, s2, n2, modem_);
      counts.errors = count_bit_errors(det->detect_block(data_rx), frame.info, modem_);
    }
    return counts;
  } catch (...) {
    char ctx[96];
    std::snprintf(ctx, sizeof ctx, "trial %zu at %g dB: ", trial, spec_.snr_db.at(snr_index));
    rethrow_with_context(ctx);
  }
}

ConfidenceInterval binomial_ci(std::uint64_t errors, std::uint64_t bits) {
  if (bits == 0) return {0.0, 1.0};
  const double n = static_cast<double>(bits);
  if (errors == 0) return {0.0, std::min(1.0, -std::log(0.05) / n)};
  const double p = static_cast<double>(errors) / n;
  const double half = 1.959963984540054 * std::sqrt(p * (1.0 - p) / n);
  return {std::max(0.0, p - half), std::min(1.0, p + half)};
}

SweepResult run_sweep(const ScenarioSpec& spec, const SweepOptions& opts) {
  const Simulation sim(spec);
  const std::size_t points = spec.snr_db.size();
  const std::size_t n = points * spec.packets;
  std::vector<TrialCounts> results(n);
  std::vector<std::string> failures(n);
  std::vector<char> failed(n, 0);
  std::vector<double> seconds(n, 0.0);

  parallel_for(n, opts.threads, [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    try {
      results[i] = sim.run_trial(i / spec.packets, i % spec.packets);
    } catch (const std::exception& e) {
      failed[i] = 1;
      failures[i] = e.what();
    }
    seconds[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  });

  SweepResult out;
  out.detector = to_string(spec.detector.kind);
  out.estimator = to_string(spec.estimator);
  out.seed = spec.seed;
  for (std::size_t p = 0; p < points; ++p) {
    SweepPoint pt;
    pt.snr_db = spec.snr_db[p];
    TrialCounts total;
    for (std::size_t t = 0; t < spec.packets; ++t) {
      const std::size_t i = p * spec.packets + t;
      pt.wall_seconds += seconds[i];
      if (failed[i] && !pt.failed) {
        pt.failed = true;
        pt.failure = failures[i];
      }
      total.merge(results[i]);
    }
    if (pt.failed) {
      pt.ber = std::nan("");
      pt.ci = {std::nan(""), std::nan("")};
    } else {
      pt.bits = total.bits;
      pt.errors = total.errors;
      pt.iteration_errors = total.iteration_errors;
      pt.ber = pt.bits ? static_cast<double>(pt.errors) / static_cast<double>(pt.bits) : 0.0;
      pt.ci = binomial_ci(pt.errors, pt.bits);
    }
    out.points.push_back(std::move(pt));
  }
  std::stable_sort(out.points.begin(), out.points.end(),
                   [](const SweepPoint& a, const SweepPoint& b) { return a.snr_db < b.snr_db; });
  return out;
}

std::string format_csv(const SweepResult& result) {
  std::ostringstream o;
  o << "snr_db,bits,errors,ber,ci_low,ci_high,detector,estimator,seed\n";
  char buf[160];
  for (const auto& p : result.points) {
    std::snprintf(buf, sizeof buf, "%.10g,%llu,%llu,%.10e,%.10e,%.10e,", p.snr_db,
                  static_cast<unsigned long long>(p.bits),
                  static_cast<unsigned long long>(p.errors), p.ber, p.ci.low, p.ci.high);
    o << buf << result.detector << "," << result.estimator << "," << result.seed << "\n";
  }
  return o.str();
}

void write_csv(const SweepResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << format_csv(result);
  out.flush();
  if (!out) throw IoError("write to '" + path + "' failed");
}

std::string to_string(TrainingMethod m) {
  switch (m) {
    case TrainingMethod::FullRls: return "rls";
    case TrainingMethod::Lms: return "lms";
    case TrainingMethod::Pc: return "pc-rls";
    case TrainingMethod::Krylov: return "krylov-rls";
    case TrainingMethod::Jio: return "jio-rls";
  }
  return "?";
}

double TrainingCurve::ber(std::size_t i) const {
  return bits_per_checkpoint
             ? static_cast<double>(errors.at(i)) / static_cast<double>(bits_per_checkpoint)
             : 0.0;
}

TrainingCurves run_training_curves(const TrainingCurveSpec& spec,
                                   const std::vector<TrainingMethod>& methods,
                                   std::size_t threads) {
  spec.system.validate();
  if (spec.checkpoints.empty() || !std::is_sorted(spec.checkpoints.begin(), spec.checkpoints.end()) ||
      spec.checkpoints.front() < 1)
    throw ParameterError("training checkpoints must be ascending and positive");
  if (spec.seeds < 1 || spec.eval_len < 1) throw ParameterError("need seeds and an evaluation block");

  const SystemConfig& sys = spec.system;
  const std::size_t streams = sys.n_streams();
  const std::size_t n_rx = sys.n_rx_total();
  const double s2 = sys.symbol_power;
  const QpskModem modem(s2);
  const KroneckerSampler sampler(sys);
  const double n2 = snr_to_noise_variance(spec.snr_db, sys, reference_mean_gamma_sq(sys), 1.0,
                                          QpskModem::kBitsPerSymbol);
  const std::size_t train_len = spec.checkpoints.back();
  const std::size_t n_cp = spec.checkpoints.size();

  struct SeedResult {
    std::vector<std::vector<std::uint64_t>> errors;
    std::uint64_t mmse = 0;
  };
  std::vector<SeedResult> per_seed(spec.seeds);

  auto random_symbols = [&](std::size_t len, Rng& rng) {
    CMatrix s(streams, len);
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t j = 0; j < streams; ++j) {
        const auto b0 = rng.bit();
        const auto b1 = rng.bit();
        s(j, t) = modem.map(b0, b1);
      }
    return s;
  };
  auto eval_errors = [&](const CMatrix& W, const CMatrix& rx, const CMatrix& ref) {
    const CMatrix y = W.adjoint() * rx;
    std::uint64_t e = 0;
    for (Eigen::Index j = 0; j < y.rows(); ++j)
      for (Eigen::Index t = 0; t < y.cols(); ++t) {
        const auto a = modem.slice_bits(y(j, t));
        const auto b = modem.slice_bits(ref(j, t));
        e += (a[0] != b[0]) + (a[1] != b[1]);
      }
    return e;
  };

  parallel_for(spec.seeds, threads, [&](std::size_t s) {
    const ChannelRealization ch = draw_channel(sys, sampler, spec.seed, s);
    const CMatrix& G = ch.stacked;
    Rng sym_rng(derive_seed(spec.seed, s, Stream::InfoBits));
    Rng eval_rng(derive_seed(spec.seed, s, Stream::Evaluation));
    Rng noise_rng(derive_seed(spec.seed, s, Stream::Noise));
    const CMatrix train_sym = random_symbols(train_len, sym_rng);
    const CMatrix eval_sym = random_symbols(spec.eval_len, eval_rng);
    const CMatrix train_rx = transmit_block(G, train_sym, n2, noise_rng);
    const CMatrix eval_rx = transmit_block(G, eval_sym, n2, noise_rng);

    SeedResult& out = per_seed[s];
    out.mmse = eval_errors(compute_receive_filter(G, s2, n2, FilterDesign::Mmse).W, eval_rx, eval_sym);
    const double input_power = s2 * G.squaredNorm() + static_cast<double>(n_rx) * n2;
    for (TrainingMethod m : methods) {
      std::unique_ptr<FilterTrainer> trainer;
      switch (m) {
        case TrainingMethod::FullRls:
          trainer = std::make_unique<RlsFilterBank>(n_rx, streams, spec.lambda, spec.delta);
          break;
        case TrainingMethod::Lms:
          trainer = std::make_unique<LmsFilterBank>(n_rx, streams, spec.mu, input_power);
          break;
        case TrainingMethod::Pc:
        case TrainingMethod::Krylov:
          trainer = std::make_unique<SubspaceFilterBank>(
              m == TrainingMethod::Pc ? ProjectionMethod::Pc : ProjectionMethod::Krylov, n_rx,
              streams, spec.rank, spec.lambda, spec.delta);
          break;
        case TrainingMethod::Jio:
          trainer = std::make_unique<JioFilterBank>(n_rx, streams, spec.rank, spec.lambda, spec.delta);
          break;
      }
      std::vector<std::uint64_t> errs(n_cp, 0);
      std::size_t cp = 0;
      for (std::size_t i = 0; i < train_len; ++i) {
        const auto c = static_cast<Eigen::Index>(i);
        trainer->update(train_rx.col(c), train_sym.col(c));
        while (cp < n_cp && spec.checkpoints[cp] == i + 1)
          errs[cp++] = eval_errors(trainer->filters(), eval_rx, eval_sym);
      }
      out.errors.push_back(std::move(errs));
    }
  });

  TrainingCurves res;
  res.bits = static_cast<std::uint64_t>(spec.seeds * spec.eval_len * streams * 2);
  for (std::size_t k = 0; k < methods.size(); ++k) {
    TrainingCurve c;
    c.method = methods[k];
    c.checkpoints = spec.checkpoints;
    c.errors.assign(n_cp, 0);
    c.bits_per_checkpoint = res.bits;
    for (const auto& sr : per_seed)
      for (std::size_t i = 0; i < n_cp; ++i) c.errors[i] += sr.errors[k][i];
    res.curves.push_back(std::move(c));
  }
  for (const auto& sr : per_seed) res.mmse_errors += sr.mmse;
  return res;
}

}  // namespace mmimo

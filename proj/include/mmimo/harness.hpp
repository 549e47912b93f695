#pragma once

// Monte Carlo engine: scenario files, per-trial simulation of the full
// uplink chain, parallel SNR sweeps with deterministic reduction, and CSV
// output with binomial confidence intervals.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mmimo/common.hpp"
#include "mmimo/detectors.hpp"
#include "mmimo/estimation.hpp"
#include "mmimo/idd.hpp"
#include "mmimo/sysmodel.hpp"
#include "mmimo/txchain.hpp"

namespace mmimo {

enum class EstimatorKind { Perfect, Ls, Rls, Lms, RrPc, RrKrylov, RrJio };

std::string to_string(EstimatorKind e);
EstimatorKind parse_estimator_kind(const std::string& name);

struct ScenarioSpec {
  SystemConfig system;
  DetectorConfig detector;
  bool coded = false;
  IddConfig idd;
  EstimatorKind estimator = EstimatorKind::Perfect;
  double lambda = 0.999;
  double mu = 0.05;
  std::size_t rank = 5;
  double delta = kDefaultRlsDelta;
  std::size_t pilot_len = 0;
  std::size_t data_len = 1500;
  std::vector<double> snr_db{10.0};
  std::size_t packets = 100;
  std::uint64_t seed = 1;
  std::string output;

  FrameLayout layout() const;
  // Throws ConfigError (key, line 0) for inconsistent settings.
  void validate() const;
};

// "a:b:step" (inclusive) or a comma-separated list.
std::vector<double> parse_snr_list(std::string_view text);

// Flat `key = value` text; '#' starts a comment. Unknown keys and bad values
// raise ConfigError carrying the key and line number.
ScenarioSpec parse_config(std::string_view text);
ScenarioSpec load_config(const std::string& path);
std::string serialize_config(const ScenarioSpec& spec);

struct TrialCounts {
  std::uint64_t bits = 0;
  std::uint64_t errors = 0;
  // Coded runs: info-bit errors after each IDD iteration.
  std::vector<std::uint64_t> iteration_errors;

  void merge(const TrialCounts& other);
};

// Mean |gamma|^2 used by the SNR definition. Drawn from a fixed stream so the
// SNR-to-noise mapping depends on the configuration only, not the seed.
double reference_mean_gamma_sq(const SystemConfig& cfg);

// One scenario with its precomputed noise variances. A trial is one packet
// on one block-fading channel realization; every random substream is keyed
// by (seed, trial) only, so all SNR points see the same channels and bits.
class Simulation {
 public:
  explicit Simulation(ScenarioSpec spec);

  const ScenarioSpec& spec() const noexcept { return spec_; }
  double mean_gamma_sq() const noexcept { return mean_gamma_sq_; }
  double noise_variance(std::size_t snr_index) const { return noise_var_.at(snr_index); }

  // noise_var overrides the SNR-derived value (e.g. 0 for a noiseless check).
  TrialCounts run_trial(std::size_t snr_index, std::size_t trial,
                        std::optional<double> noise_var = std::nullopt) const;

 private:
  ScenarioSpec spec_;
  FrameLayout layout_;
  QpskModem modem_;
  double mean_gamma_sq_ = 1.0;
  std::vector<double> noise_var_;
  KroneckerSampler sampler_;
};

struct ConfidenceInterval {
  double low = 0.0;
  double high = 1.0;
};

// 95% normal-approximation interval; with zero errors the one-sided bound
// [0, -ln(0.05) / n].
ConfidenceInterval binomial_ci(std::uint64_t errors, std::uint64_t bits);

struct SweepPoint {
  double snr_db = 0.0;
  std::uint64_t bits = 0;
  std::uint64_t errors = 0;
  double ber = 0.0;
  ConfidenceInterval ci;
  std::vector<std::uint64_t> iteration_errors;
  double wall_seconds = 0.0;
  bool failed = false;
  std::string failure;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  std::string detector;
  std::string estimator;
  std::uint64_t seed = 0;
};

struct SweepOptions {
  std::size_t threads = 1;
};

SweepResult run_sweep(const ScenarioSpec& spec, const SweepOptions& opts = {});

std::string format_csv(const SweepResult& result);
void write_csv(const SweepResult& result, const std::string& path);

// Receive-filter training curves: BER on a held-out block against the
// number of training symbols, for several trainers fed identical data.
enum class TrainingMethod { FullRls, Lms, Pc, Krylov, Jio };

std::string to_string(TrainingMethod m);

struct TrainingCurveSpec {
  SystemConfig system;
  double snr_db = 15.0;
  std::size_t rank = 5;
  double lambda = 0.999;
  double mu = 0.05;
  double delta = kDefaultRlsDelta;
  std::size_t eval_len = 500;
  std::vector<std::size_t> checkpoints;  // ascending training lengths
  std::size_t seeds = 50;
  std::uint64_t seed = 1;
};

struct TrainingCurve {
  TrainingMethod method = TrainingMethod::FullRls;
  std::vector<std::size_t> checkpoints;
  std::vector<std::uint64_t> errors;
  std::uint64_t bits_per_checkpoint = 0;

  double ber(std::size_t i) const;
};

struct TrainingCurves {
  std::vector<TrainingCurve> curves;
  // BER of the exact MMSE filter on the same evaluation blocks.
  std::uint64_t mmse_errors = 0;
  std::uint64_t bits = 0;
};

TrainingCurves run_training_curves(const TrainingCurveSpec& spec,
                                   const std::vector<TrainingMethod>& methods,
                                   std::size_t threads = 1);

}  // namespace mmimo

// simulate: run an SNR sweep described by a scenario file and write CSV.

#include <cstdio>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "mmimo/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multiuser massive MIMO uplink BER simulator"};
  std::string config_path;
  std::string snr;
  std::string detector;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t packets = 0;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  app.add_option("--config", config_path, "Scenario file")->required();
  app.add_option("--snr", snr, "SNR points, a:b:step or a,b,c (dB)");
  app.add_option("--detector", detector, "rmf|zf|mmse|sic|mb-sic|df-s|df-p|ml");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed");
  app.add_option("--packets", packets, "Packets per SNR point");
  app.add_option("--out", out, "Output CSV (default: config 'output' or stdout)");
  app.add_option("--threads", threads, "Worker threads");
  CLI11_PARSE(app, argc, argv);

  mmimo::SweepResult result;
  mmimo::ScenarioSpec spec;
  try {
    spec = mmimo::load_config(config_path);
    if (!snr.empty()) spec.snr_db = mmimo::parse_snr_list(snr);
    if (!detector.empty()) spec.detector.kind = mmimo::parse_detector_kind(detector);
    if (*seed_opt) spec.seed = seed;
    if (packets) spec.packets = packets;
    if (!out.empty()) spec.output = out;
    spec.validate();
  } catch (const mmimo::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  try {
    result = mmimo::run_sweep(spec, {threads});
    for (const auto& p : result.points) {
      if (p.failed) std::cerr << "point " << p.snr_db << " dB failed: " << p.failure << "\n";
      std::fprintf(stderr, "%6.2f dB  ber %.3e  (%llu/%llu)  %.1fs\n", p.snr_db, p.ber,
                   static_cast<unsigned long long>(p.errors),
                   static_cast<unsigned long long>(p.bits), p.wall_seconds);
    }
    if (spec.output.empty())
      std::cout << mmimo::format_csv(result);
    else
      mmimo::write_csv(result, spec.output);
  } catch (const mmimo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const mmimo::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  for (const auto& p : result.points)
    if (p.failed) return 3;
  return 0;
}

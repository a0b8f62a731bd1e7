// sfsep: incident-field estimation experiments from a config file.
//
//   sfsep run-single --config configs/reference.cfg --out out/single --heatmap
//   sfsep run-sweep  --config configs/reference.cfg --out out/sweep --threads 4
//   sfsep validate   --config configs/reference.cfg
//
// Exit status: 0 success, 1 configuration or I/O error, 2 numeric failure.

#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "sfsep/experiment.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitNumeric = 2;

struct Options {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<double> frequency;
  bool heatmap = false;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "Experiment config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "Output directory (overrides [output] directory)");
  cmd->add_option("--seed", o.seed, "Noise seed (overrides [scenario] noise_seed)");
  cmd->add_option("--threads", o.threads, "Worker threads for sweep cells")->check(CLI::PositiveNumber);
}

sfsep::ExperimentConfig load(const Options& o) {
  auto c = sfsep::load_config(o.config);
  if (o.seed) c.noise_seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  if (o.heatmap) c.heatmap = true;
  if (o.frequency) c.frequency = *o.frequency;
  if (o.out) c.directory = *o.out;
  return c;
}

void report_violations(const std::vector<std::string>& v) {
  for (const auto& s : v) std::cerr << "violation: " << s << "\n";
}

int run_single(const Options& o) {
  const auto c = load(o);
  const auto res = sfsep::run_single(c, c.frequency, c.directory);
  std::cout << sfsep::summary_csv(res.summary);
  return res.all_ok() ? 0 : kExitNumeric;
}

int run_sweep(const Options& o) {
  const auto c = load(o);
  const auto res = sfsep::run_sweep(c, c.directory);
  int failed = 0;
  for (const auto& r : res.records)
    if (r.status != "ok") {
      ++failed;
      std::cerr << r.frequency_hz << " Hz " << r.method.label() << ": " << r.status << "\n";
    }
  std::cout << "wrote " << (std::filesystem::path(c.directory) / "sweep.csv").string() << " (" << res.records.size()
            << " rows, " << failed << " failed)\n";
  return failed == 0 ? 0 : kExitNumeric;
}

int validate(const Options& o) {
  const auto v = sfsep::validate(load(o));
  if (v.empty()) {
    std::cout << "configuration is valid\n";
    return 0;
  }
  report_violations(v);
  return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Incident sound field estimation around a scatterer"};
  app.require_subcommand(1);
  Options o;

  auto* single = app.add_subcommand("run-single", "Estimate at one frequency and write field slices");
  add_common(single, o);
  single->add_option("--frequency", o.frequency, "Frequency in Hz (overrides [scenario] frequency)")
      ->check(CLI::PositiveNumber);
  single->add_flag("--heatmap", o.heatmap, "Also render PPM heatmaps");

  auto* sweep = app.add_subcommand("run-sweep", "Grid-searched NMSE over the configured frequency range");
  add_common(sweep, o);

  auto* check = app.add_subcommand("validate", "Report every configuration violation");
  add_common(check, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*single) return run_single(o);
    if (*sweep) return run_sweep(o);
    return validate(o);
  } catch (const sfsep::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  }
}

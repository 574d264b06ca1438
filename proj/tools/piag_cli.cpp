// piag run <config> [--out DIR] [--jobs N] [--seed S]
// piag summarize <dir>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "config_file.hpp"
#include "piag/experiment.hpp"

namespace {

constexpr int kExitInvalid = 2;

int do_run(const std::string& config_path, const std::string& out_dir,
           std::optional<unsigned> jobs, std::optional<std::uint64_t> seed) {
  piag::ExperimentConfig config;
  try {
    nlohmann::json j = piag::cli::load_config_file(config_path);
    if (seed && j.is_object() && j.contains("problem")) j["problem"]["seed"] = *seed;
    config = piag::ExperimentConfig::from_json(j);
    if (jobs) config.jobs = std::max(1u, *jobs);
  } catch (const piag::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\nusage: piag run <config> [--out DIR] [--jobs N] [--seed S]\n";
    return kExitInvalid;
  }

  piag::ExperimentResult result;
  try {
    result = piag::run_experiment(config, out_dir);
  } catch (const piag::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  for (const auto& cell : result.cells) {
    if (!cell.error.empty()) {
      std::cerr << "cell " << cell.id << ": " << cell.error << '\n';
      continue;
    }
    const std::string diag = cell.report.value("diagnostic", std::string());
    if (!diag.empty()) std::cerr << "cell " << cell.id << ": " << diag << '\n';
  }
  std::cout << result.summary.text;
  return result.exit_code;
}

int do_summarize(const std::string& dir) {
  try {
    const auto summary = piag::report_summary(piag::find_reports(dir));
    std::cout << summary.text;
    return summary.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proximal incremental aggregated gradient experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::optional<unsigned> jobs;
  std::optional<std::uint64_t> seed;
  auto* run = app.add_subcommand("run", "Run an experiment config and certify every cell");
  run->add_option("config", config_path, "YAML or JSON experiment config")->required();
  run->add_option("--out", out_dir, "Output directory")->capture_default_str();
  run->add_option("--jobs", jobs, "Cells to run in parallel");
  run->add_option("--seed", seed, "Override the problem seed");

  std::string summary_dir;
  auto* summarize = app.add_subcommand("summarize", "Tabulate report_*.json files in a directory");
  summarize->add_option("dir", summary_dir, "Directory with reports")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalid;
  }

  if (*run) return do_run(config_path, out_dir, jobs, seed);
  return do_summarize(summary_dir);
}

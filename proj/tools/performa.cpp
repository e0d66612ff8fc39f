// performa: run a seeded experiment suite and write its CSV files.
//
//   performa <experiment> --config <path> --out <dir> [--seed N] [--runs N]
//   performa summarize <run.csv> [--out <dir>]
//   performa housing-standin <file.csv> [--rows N] [--seed N]
//
// Exit status: 0 success, 2 configuration error, 3 data error.

#include "performa/experiment.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

int run_experiment(performa::Experiment exp, const std::string& config_path, const std::string& out_dir,
                   std::optional<std::uint64_t> seed, std::optional<std::size_t> runs) {
  auto cfg = config_path.empty() ? performa::default_config(exp) : performa::parse_config(config_path, exp);
  if (seed) cfg.master_seed = *seed;
  if (runs) cfg.n_runs = *runs;
  performa::validate(cfg);
  for (const auto& path : performa::run_suite(cfg, out_dir)) std::cout << path << '\n';
  return 0;
}

int run_summarize(const std::string& csv, const std::string& out_dir) {
  const auto text = performa::format_summary_csv(performa::summarize(csv));
  if (out_dir.empty()) {
    std::cout << text;
    return 0;
  }
  std::filesystem::create_directories(out_dir);
  const auto path = std::filesystem::path(out_dir) / (std::filesystem::path(csv).stem().string() + "_summary.csv");
  performa::write_text(path, text);
  std::cout << path.string() << '\n';
  return 0;
}

int run_standin(const std::string& path, std::size_t rows, std::uint64_t seed) {
  if (rows < 2) throw performa::ConfigError("--rows must be >= 2");
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  performa::write_housing_csv(performa::synthetic_housing(rows, seed), path);
  std::cout << path << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Performative risk experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> runs;
  std::optional<performa::Experiment> chosen;

  for (auto e : {performa::Experiment::log2d, performa::Experiment::quad7d, performa::Experiment::pricing,
                 performa::Experiment::housing, performa::Experiment::estimator_variance,
                 performa::Experiment::convexity_profile}) {
    auto* sub = app.add_subcommand(std::string(performa::to_string(e)));
    sub->add_option("--config", config_path, "configuration file (key = value with [sections])");
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--runs", runs, "runs per (algorithm, sweep value) (overrides the config)");
    sub->callback([&chosen, e] { chosen = e; });
  }

  std::string summary_csv;
  std::string summary_out;
  auto* summarize = app.add_subcommand("summarize", "mean/std over runs of a run CSV");
  summarize->add_option("csv", summary_csv, "run CSV written by an experiment")->required();
  summarize->add_option("--out", summary_out, "directory for <name>_summary.csv (default: stdout)");

  // Synthetic table with the Housing schema, for machines without the real file.
  std::string standin_path;
  std::size_t standin_rows = 4000;
  std::uint64_t standin_seed = 20640;
  auto* standin = app.add_subcommand("housing-standin", "write a synthetic table with the Housing schema");
  standin->add_option("file", standin_path, "CSV file to write")->required();
  standin->add_option("--rows", standin_rows, "number of rows")->capture_default_str();
  standin->add_option("--seed", standin_seed, "generator seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (summarize->parsed()) return run_summarize(summary_csv, summary_out);
    if (standin->parsed()) return run_standin(standin_path, standin_rows, standin_seed);
    return run_experiment(*chosen, config_path, out_dir, seed, runs);
  } catch (const performa::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const performa::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

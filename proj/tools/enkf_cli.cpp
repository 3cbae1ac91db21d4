// Command-line driver for the synthetic assimilation studies.
//
//   enkf_cli accuracy    --config cfg.json --out results/
//   enkf_cli ordering    --config cfg.json --seed 7
//   enkf_cli noise-sweep --config cfg.json --threads 4
//   enkf_cli benchmark   --config cfg.json
//   enkf_cli validate-config --config cfg.json
//
// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 resource failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <new>
#include <optional>

#include "enkf/errors.hpp"
#include "enkf/experiments.hpp"
#include "enkf/parallel.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitResource = 4;

struct Options {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string validate_for = "accuracy";
};

enkf::ExperimentKind parse_kind(const std::string& name) {
  for (auto k : {enkf::ExperimentKind::accuracy, enkf::ExperimentKind::ordering,
                 enkf::ExperimentKind::noise_sweep, enkf::ExperimentKind::benchmark})
    if (enkf::experiment_name(k) == name) return k;
  throw enkf::ConfigError("unknown experiment '" + name + "'");
}

enkf::ExperimentConfig resolve_config(const Options& opt) {
  enkf::ExperimentConfig config =
      opt.config_path.empty() ? enkf::ExperimentConfig{} : enkf::load_config(opt.config_path);
  if (opt.seed) config.seed = *opt.seed;
  if (!opt.out_dir.empty()) config.output_dir = opt.out_dir;
  return config;
}

int run(enkf::ExperimentKind kind, const Options& opt) {
  const enkf::ExperimentConfig config = resolve_config(opt);
  config.validate(kind);
  if (opt.threads > 0) enkf::set_num_threads(opt.threads);

  const enkf::ScoreReport report = enkf::run_experiment(kind, config);

  const std::filesystem::path dir(config.output_dir);
  std::filesystem::create_directories(dir);
  {
    std::ofstream csv(dir / "scores.csv", std::ios::binary);
    enkf::write_scores_csv(report, csv);
  }
  {
    std::ofstream summary(dir / "summary.json", std::ios::binary);
    summary << enkf::summary_json(kind, report) << '\n';
  }
  std::cout << "wrote " << report.size() << " rows to " << (dir / "scores.csv").string() << '\n';

  for (const auto& row : report)
    if (enkf::is_failure_row(row)) {
      std::cerr << "error: out of memory at state dimension " << row.state_dim << '\n';
      return kExitResource;
    }
  return 0;
}

int validate(const Options& opt) {
  const enkf::ExperimentConfig config = resolve_config(opt);
  config.validate(parse_kind(opt.validate_for));
  std::cout << enkf::config_to_json(config) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble square-root Kalman filter experiments"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON experiment configuration");
    sub->add_option("--out", opt.out_dir, "Output directory (overrides output_dir)");
    sub->add_option("--seed", opt.seed, "Master seed (overrides config)");
    sub->add_option("--threads", opt.threads, "Worker threads")->check(CLI::PositiveNumber);
  };

  std::optional<enkf::ExperimentKind> kind;
  bool validate_only = false;
  for (auto k : {enkf::ExperimentKind::accuracy, enkf::ExperimentKind::ordering,
                 enkf::ExperimentKind::noise_sweep, enkf::ExperimentKind::benchmark}) {
    auto* sub = app.add_subcommand(std::string(enkf::experiment_name(k)), "Run the experiment");
    add_common(sub);
    sub->callback([&kind, k] { kind = k; });
  }
  auto* check = app.add_subcommand("validate-config", "Validate a configuration and print it resolved");
  add_common(check);
  check->add_option("--for", opt.validate_for, "Experiment whose rules to apply");
  check->callback([&validate_only] { validate_only = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    return validate_only ? validate(opt) : run(*kind, opt);
  } catch (const enkf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const enkf::InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const enkf::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::bad_alloc&) {
    std::cerr << "resource failure: out of memory\n";
    return kExitResource;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "resource failure: " << e.what() << '\n';
    return kExitResource;
  }
}

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "enkf/filters.hpp"
#include "enkf/kernels_gp.hpp"
#include "enkf/metrics.hpp"

namespace enkf {

enum class Scheme { kf_oracle, enkf, seq, aao, aao_true_cov };

std::string_view scheme_name(Scheme scheme);
Scheme parse_scheme(std::string_view name);

enum class ExperimentKind { accuracy, ordering, noise_sweep, benchmark };

std::string_view experiment_name(ExperimentKind kind);

/// Declarative description of a synthetic assimilation study. Defaults are
/// the 80 x 80 / 30-member / 1000-observation setup.
struct ExperimentConfig {
  Index grid_side = 80;
  Index ensemble_size = 30;
  Index n_obs = 1000;
  double sigma_eps = 0.01;
  KernelSpec gp_kernel{KernelFamily::matern32, 1.0, 0.1};
  /// Unset means no localization.
  std::optional<KernelSpec> localization = KernelSpec{KernelFamily::matern32, 1.0, 0.2};
  std::vector<Scheme> schemes{Scheme::seq, Scheme::aao};
  Index repetitions = 20;
  Index permutations = 50;
  std::vector<double> noise_sweep{0.01, 0.05, 0.2, 1.0};
  SolverConfig solver;
  /// When unset the SVD rank defaults to min(state_dim, 2000).
  std::optional<Index> solver_rank;
  std::uint64_t seed = 0;
  Index tile_size = kDefaultTileSize;
  std::string output_dir = "out";
  std::vector<Index> benchmark_dims{1600, 6400};
  /// Fill wall_time_s / peak_mem_bytes for non-benchmark experiments. Off by
  /// default so that scores.csv is byte-reproducible.
  bool record_resources = false;

  Index state_dim() const { return grid_side * grid_side; }
  /// Solver with the rank default resolved for `state_dim`.
  SolverConfig resolved_solver(Index state_dim) const;

  /// Throws ConfigError on any invariant violation relevant to `kind`.
  void validate(ExperimentKind kind) const;
};

/// Parses a JSON document; unknown keys are rejected with ConfigError.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& config);

/// Deterministic sub-seed for (master seed, repetition, label).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t repetition, std::string_view label);

ScoreReport run_accuracy_experiment(const ExperimentConfig& config);
ScoreReport run_ordering_experiment(const ExperimentConfig& config);
ScoreReport run_noise_sweep(const ExperimentConfig& config);
ScoreReport run_scaling_benchmark(const ExperimentConfig& config);
ScoreReport run_experiment(ExperimentKind kind, const ExperimentConfig& config);

/// Benchmark rows that failed for lack of memory carry NaN scores.
bool is_failure_row(const ScoreRecord& record);

inline constexpr std::string_view kScoresHeader =
    "experiment,scheme,repetition,permutation,sigma_eps,state_dim,rmse,rmse_skill,energy_score,"
    "wall_time_s,peak_mem_bytes,input_hash";

/// Floats use 17 significant digits.
void write_scores_csv(const ScoreReport& report, std::ostream& out);
/// Per-scheme medians, grouped by sigma_eps for sweeps and by state_dim for benchmarks.
std::string summary_json(ExperimentKind kind, const ScoreReport& report);

double median(std::vector<double> values);

}  // namespace enkf

#include "enkf/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <new>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "enkf/errors.hpp"
#include "enkf/resource_monitor.hpp"

namespace enkf {

using json = nlohmann::json;

// -----------------------------------------------------------------------------
// Names

std::string_view scheme_name(Scheme scheme) {
  switch (scheme) {
    case Scheme::kf_oracle: return "kf-oracle";
    case Scheme::enkf: return "enkf";
    case Scheme::seq: return "seq";
    case Scheme::aao: return "aao";
    case Scheme::aao_true_cov: return "aao-true-cov";
  }
  return "unknown";
}

Scheme parse_scheme(std::string_view name) {
  for (const Scheme s : {Scheme::kf_oracle, Scheme::enkf, Scheme::seq, Scheme::aao, Scheme::aao_true_cov})
    if (scheme_name(s) == name) return s;
  throw ConfigError("unknown scheme '" + std::string(name) + "'");
}

std::string_view experiment_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::accuracy: return "accuracy";
    case ExperimentKind::ordering: return "ordering";
    case ExperimentKind::noise_sweep: return "noise-sweep";
    case ExperimentKind::benchmark: return "benchmark";
  }
  return "unknown";
}

// -----------------------------------------------------------------------------
// Configuration

SolverConfig ExperimentConfig::resolved_solver(Index dim) const {
  SolverConfig out = solver;
  out.rank = solver_rank.value_or(std::min<Index>(dim, 2000));
  return out;
}

namespace {

bool is_perfect_square(Index v, Index& side) {
  side = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(v))));
  return side >= 1 && side * side == v;
}

void check_kernel(const KernelSpec& spec, std::string_view what, bool unit_variance) {
  if (!(spec.length > 0.0) || !std::isfinite(spec.length))
    throw ConfigError(std::string(what) + ": correlation length must be positive");
  if (!(spec.variance > 0.0) || !std::isfinite(spec.variance))
    throw ConfigError(std::string(what) + ": variance must be positive");
  if (unit_variance && spec.variance != 1.0)
    throw ConfigError(std::string(what) + ": localization kernel must have unit variance");
}

}  // namespace

void ExperimentConfig::validate(ExperimentKind kind) const {
  if (grid_side < 1) throw ConfigError("grid_side must be positive");
  if (ensemble_size < 2) throw ConfigError("ensemble_size must be at least 2");
  if (n_obs < 1) throw ConfigError("n_obs must be positive");
  if (!(sigma_eps > 0.0) || !std::isfinite(sigma_eps))
    throw ConfigError("sigma_eps must be positive (observation noise must be positive definite)");
  if (schemes.empty()) throw ConfigError("schemes must not be empty");
  if (std::set<Scheme>(schemes.begin(), schemes.end()).size() != schemes.size())
    throw ConfigError("schemes must not repeat");
  if (repetitions < 1) throw ConfigError("repetitions must be positive");
  if (tile_size < 1) throw ConfigError("tile_size must be positive");
  check_kernel(gp_kernel, "gp_kernel", false);
  if (localization) check_kernel(*localization, "localization", true);
  if (solver.oversample < 0 || solver.power_iters < 0)
    throw ConfigError("solver oversample and power_iters must be non-negative");
  if (solver.exact_threshold < 0) throw ConfigError("solver exact_threshold must be non-negative");
  if (solver_rank && *solver_rank < 1) throw ConfigError("solver rank must be at least 1");

  const auto has = [&](Scheme s) { return std::find(schemes.begin(), schemes.end(), s) != schemes.end(); };
  if (kind == ExperimentKind::benchmark) {
    if (benchmark_dims.empty()) throw ConfigError("benchmark_dims must not be empty");
    for (const Index d : benchmark_dims) {
      Index side = 0;
      if (!is_perfect_square(d, side))
        throw ConfigError("benchmark dimension " + std::to_string(d) + " is not a square grid size");
    }
    return;
  }
  const Index m = state_dim();
  if (n_obs > m) throw ConfigError("n_obs exceeds the number of grid points");
  if (has(Scheme::kf_oracle) && m > 5000)
    throw ConfigError("kf-oracle needs dense algebra; state dimension must be <= 5000");
  if (kind == ExperimentKind::ordering) {
    if (!has(Scheme::seq)) throw ConfigError("ordering experiment needs the seq scheme");
    if (permutations < 2) throw ConfigError("permutations must be at least 2");
  }
  if (kind == ExperimentKind::noise_sweep) {
    if (noise_sweep.size() < 2) throw ConfigError("noise_sweep needs at least two values");
    for (const double s : noise_sweep)
      if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("noise_sweep values must be positive");
  }
}

namespace {

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed,
                    std::string_view where) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError("unknown key '" + key + "' in " + std::string(where));
  }
}

template <class T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid value for '") + key + "': " + e.what());
  }
}

KernelSpec parse_kernel(const json& obj, KernelSpec defaults, std::string_view where) {
  reject_unknown(obj, {"family", "variance", "length"}, where);
  std::string family = "matern32";
  read(obj, "family", family);
  if (family != "matern32") throw ConfigError("unsupported kernel family '" + family + "'");
  read(obj, "variance", defaults.variance);
  read(obj, "length", defaults.length);
  return defaults;
}

json kernel_to_json(const KernelSpec& spec) {
  return json{{"family", "matern32"}, {"variance", spec.variance}, {"length", spec.length}};
}

}  // namespace

ExperimentConfig parse_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(doc,
                 {"grid_side", "ensemble_size", "n_obs", "sigma_eps", "gp_kernel", "localization",
                  "schemes", "repetitions", "permutations", "noise_sweep", "solver", "seed",
                  "tile_size", "output_dir", "benchmark_dims", "record_resources"},
                 "config");
  ExperimentConfig c;
  read(doc, "grid_side", c.grid_side);
  read(doc, "ensemble_size", c.ensemble_size);
  read(doc, "n_obs", c.n_obs);
  read(doc, "sigma_eps", c.sigma_eps);
  if (doc.contains("gp_kernel")) c.gp_kernel = parse_kernel(doc["gp_kernel"], c.gp_kernel, "gp_kernel");
  if (doc.contains("localization")) {
    if (doc["localization"].is_null())
      c.localization.reset();
    else
      c.localization = parse_kernel(doc["localization"], KernelSpec{KernelFamily::matern32, 1.0, 0.2},
                                    "localization");
  }
  if (doc.contains("schemes")) {
    std::vector<std::string> names;
    read(doc, "schemes", names);
    c.schemes.clear();
    for (const auto& n : names) c.schemes.push_back(parse_scheme(n));
  }
  read(doc, "repetitions", c.repetitions);
  read(doc, "permutations", c.permutations);
  read(doc, "noise_sweep", c.noise_sweep);
  if (doc.contains("solver")) {
    const json& s = doc["solver"];
    reject_unknown(s, {"mode", "rank", "oversample", "power_iters", "exact_threshold"}, "solver");
    std::string mode = "exact";
    read(s, "mode", mode);
    if (mode == "exact")
      c.solver.mode = SolverMode::exact;
    else if (mode == "randomized")
      c.solver.mode = SolverMode::randomized;
    else
      throw ConfigError("solver mode must be 'exact' or 'randomized'");
    if (s.contains("rank")) {
      Index rank = 0;
      read(s, "rank", rank);
      c.solver_rank = rank;
    }
    read(s, "oversample", c.solver.oversample);
    read(s, "power_iters", c.solver.power_iters);
    read(s, "exact_threshold", c.solver.exact_threshold);
  }
  read(doc, "seed", c.seed);
  read(doc, "tile_size", c.tile_size);
  read(doc, "output_dir", c.output_dir);
  read(doc, "benchmark_dims", c.benchmark_dims);
  read(doc, "record_resources", c.record_resources);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  json doc = json::object();
  doc["grid_side"] = c.grid_side;
  doc["ensemble_size"] = c.ensemble_size;
  doc["n_obs"] = c.n_obs;
  doc["sigma_eps"] = c.sigma_eps;
  doc["gp_kernel"] = kernel_to_json(c.gp_kernel);
  doc["localization"] = c.localization ? kernel_to_json(*c.localization) : json(nullptr);
  json schemes = json::array();
  for (const Scheme s : c.schemes) schemes.push_back(std::string(scheme_name(s)));
  doc["schemes"] = schemes;
  doc["repetitions"] = c.repetitions;
  doc["permutations"] = c.permutations;
  doc["noise_sweep"] = c.noise_sweep;
  json solver{{"mode", c.solver.mode == SolverMode::exact ? "exact" : "randomized"},
              {"oversample", c.solver.oversample},
              {"power_iters", c.solver.power_iters},
              {"exact_threshold", c.solver.exact_threshold}};
  if (c.solver_rank) solver["rank"] = *c.solver_rank;
  doc["solver"] = solver;
  doc["seed"] = c.seed;
  doc["tile_size"] = c.tile_size;
  doc["output_dir"] = c.output_dir;
  doc["benchmark_dims"] = c.benchmark_dims;
  doc["record_resources"] = c.record_resources;
  return doc.dump(2);
}

// -----------------------------------------------------------------------------
// Seeds and hashing

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Fnv1a {
 public:
  void bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  template <class Derived>
  void values(const Eigen::DenseBase<Derived>& x) {
    for (Index j = 0; j < x.cols(); ++j)
      for (Index i = 0; i < x.rows(); ++i) {
        const double v = x(i, j);
        bytes(&v, sizeof v);
      }
  }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

std::string hex(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t repetition, std::string_view label) {
  Fnv1a h;
  h.bytes(label.data(), label.size());
  return splitmix64(splitmix64(splitmix64(master) ^ repetition) ^ h.digest());
}

// -----------------------------------------------------------------------------
// Experiment machinery

namespace {

bool uses(const ExperimentConfig& c, Scheme s) {
  return std::find(c.schemes.begin(), c.schemes.end(), s) != c.schemes.end();
}

/// Everything shared by the repetitions of one experiment on one grid.
struct Context {
  const ExperimentConfig& config;
  GridGeometry grid;
  std::unique_ptr<GpSampler> sampler;
  std::optional<TiledMatrix> localization;
  std::optional<LocalizationKernel> localization_kernel;
  std::optional<TiledMatrix> true_covariance;
  std::optional<Eigen::MatrixXd> dense_true_covariance;

  Context(const ExperimentConfig& c, Index side, bool build_matrices = true)
      : config(c), grid(side), sampler(std::make_unique<GpSampler>(grid, c.gp_kernel)) {
    if (!build_matrices) return;
    if (c.localization) {
      localization_kernel.emplace(grid, *c.localization);
      if (uses(c, Scheme::aao) || uses(c, Scheme::enkf))
        localization = build_localization(grid, *c.localization, c.tile_size);
    }
    if (uses(c, Scheme::aao_true_cov)) true_covariance = build_covariance(grid, c.gp_kernel, c.tile_size);
    if (uses(c, Scheme::kf_oracle))
      dense_true_covariance = build_covariance(grid, c.gp_kernel, c.tile_size).to_dense();
  }
};

/// Ground truth, prior ensemble, observation locations and the standard
/// normal draws that become observation noise once scaled by sigma.
struct Inputs {
  StateVector truth;
  Ensemble prior;
  std::vector<Index> locations;
  Eigen::VectorXd unit_noise;
};

std::vector<Index> sample_locations(Index m, Index n, std::uint64_t seed) {
  std::vector<Index> all(static_cast<std::size_t>(m));
  std::iota(all.begin(), all.end(), Index{0});
  std::mt19937_64 rng(seed);
  for (Index i = 0; i < n; ++i) {
    std::uniform_int_distribution<Index> pick(i, m - 1);
    std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(pick(rng))]);
  }
  all.resize(static_cast<std::size_t>(n));
  return all;
}

Inputs make_inputs(const Context& ctx, std::uint64_t repetition, Index n_obs) {
  const auto& c = ctx.config;
  Inputs in{ctx.sampler->sample_one(derive_seed(c.seed, repetition, "truth")),
            ctx.sampler->sample(c.ensemble_size, derive_seed(c.seed, repetition, "ensemble")),
            sample_locations(ctx.grid.dim(), n_obs, derive_seed(c.seed, repetition, "locations")),
            Eigen::VectorXd(n_obs)};
  std::mt19937_64 rng(derive_seed(c.seed, repetition, "noise"));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index i = 0; i < n_obs; ++i) in.unit_noise[i] = normal(rng);
  return in;
}

ObservationSet observe(const Inputs& in, double sigma) {
  ObservationSet obs;
  obs.indices = in.locations;
  const Index n = static_cast<Index>(in.locations.size());
  obs.values.resize(n);
  obs.noise_vars = Eigen::VectorXd::Constant(n, sigma * sigma);
  for (Index i = 0; i < n; ++i)
    obs.values[i] = in.truth[in.locations[static_cast<std::size_t>(i)]] + sigma * in.unit_noise[i];
  return obs;
}

ObservationSet permuted(const ObservationSet& obs, const std::vector<Index>& order) {
  ObservationSet out;
  const Index n = obs.size();
  out.indices.resize(static_cast<std::size_t>(n));
  out.values.resize(n);
  out.noise_vars.resize(n);
  for (Index i = 0; i < n; ++i) {
    const Index src = order[static_cast<std::size_t>(i)];
    out.indices[static_cast<std::size_t>(i)] = obs.indices[static_cast<std::size_t>(src)];
    out.values[i] = obs.values[src];
    out.noise_vars[i] = obs.noise_vars[src];
  }
  return out;
}

std::string input_hash(const Ensemble& prior, const ObservationSet& obs) {
  Fnv1a h;
  h.values(prior.members());
  for (const Index j : obs.indices) {
    const auto v = static_cast<std::int64_t>(j);
    h.bytes(&v, sizeof v);
  }
  h.values(obs.values);
  h.values(obs.noise_vars);
  return hex(h.digest());
}

struct Analysis {
  StateVector mean;
  Ensemble ensemble;
};

Ensemble sample_posterior(const GaussianBelief& belief, Index count, std::uint64_t seed) {
  const Index m = belief.dim();
  Eigen::MatrixXd cov = belief.covariance;
  const double scale = std::max(cov.diagonal().maxCoeff(), 1e-300);
  for (double jitter = 1e-10 * scale; jitter <= 1e-6 * scale * (1 + 1e-12); jitter *= 2.0) {
    Eigen::MatrixXd shifted = cov;
    shifted.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(shifted);
    if (llt.info() != Eigen::Success) continue;
    Eigen::MatrixXd z(m, count);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index j = 0; j < count; ++j)
      for (Index i = 0; i < m; ++i) z(i, j) = normal(rng);
    Eigen::MatrixXd members = llt.matrixL() * z;
    members.colwise() += belief.mean;
    return Ensemble(std::move(members));
  }
  throw NumericalError("kf-oracle: posterior covariance factorization failed");
}

Analysis run_scheme(const Context& ctx, Scheme scheme, const Ensemble& prior,
                    const ObservationSet& obs, std::uint64_t repetition) {
  const auto& c = ctx.config;
  const SolverConfig solver = [&] {
    SolverConfig s = c.resolved_solver(ctx.grid.dim());
    s.seed = derive_seed(c.seed, repetition, "svd");
    return s;
  }();
  const TiledMatrix* loc = ctx.localization ? &*ctx.localization : nullptr;
  switch (scheme) {
    case Scheme::seq: {
      const LocalizationKernel* kernel = ctx.localization_kernel ? &*ctx.localization_kernel : nullptr;
      Ensemble out = ensrf_sequential_update(prior, obs, kernel);
      return {out.mean(), std::move(out)};
    }
    case Scheme::aao: {
      Ensemble out = ensrf_aao_update(prior, obs, loc, solver, c.tile_size);
      return {out.mean(), std::move(out)};
    }
    case Scheme::aao_true_cov: {
      Ensemble out = ensrf_aao_update_with_covariance(prior, obs, *ctx.true_covariance, solver);
      return {out.mean(), std::move(out)};
    }
    case Scheme::enkf: {
      Ensemble out = enkf_perturbed_update(prior, obs, loc, derive_seed(c.seed, repetition, "enkf"),
                                           c.tile_size);
      return {out.mean(), std::move(out)};
    }
    case Scheme::kf_oracle: {
      const GaussianBelief prior_belief{Eigen::VectorXd::Zero(ctx.grid.dim()), *ctx.dense_true_covariance};
      const GaussianBelief post = kf_update(prior_belief, obs);
      return {post.mean, sample_posterior(post, c.ensemble_size,
                                          derive_seed(c.seed, repetition, "kf-oracle"))};
    }
  }
  throw InvalidArgument("unknown scheme");
}

ScoreRecord score(ExperimentKind kind, Scheme scheme, const Analysis& analysis, const Inputs& in,
                  const ObservationSet& obs, double sigma) {
  ScoreRecord r;
  r.experiment = std::string(experiment_name(kind));
  r.scheme = std::string(scheme_name(scheme));
  r.sigma_eps = sigma;
  r.state_dim = in.truth.size();
  r.rmse = rmse(analysis.mean, in.truth);
  const StateVector forecast[] = {analysis.mean};
  const StateVector reference[] = {in.truth};
  const StateVector background[] = {in.prior.mean()};
  r.rmse_skill = rmse_skill_score(forecast, reference, background);
  r.energy_score = energy_score(analysis.ensemble, in.truth);
  r.input_hash = input_hash(in.prior, obs);
  return r;
}

ScoreRecord run_and_score(const Context& ctx, ExperimentKind kind, Scheme scheme, const Inputs& in,
                          const ObservationSet& obs, double sigma, std::uint64_t repetition) {
  const bool timed = ctx.config.record_resources;
  std::optional<PeakMemorySampler> memory;
  if (timed) memory.emplace();
  const auto start = std::chrono::steady_clock::now();
  const Analysis analysis = run_scheme(ctx, scheme, in.prior, obs, repetition);
  const auto stop = std::chrono::steady_clock::now();
  ScoreRecord r = score(kind, scheme, analysis, in, obs, sigma);
  if (timed) {
    r.wall_time_s = std::chrono::duration<double>(stop - start).count();
    r.peak_mem_bytes = memory->stop();
  }
  return r;
}

/// Runs `body(i)` for i in [0, count) on the worker pool; the first exception
/// is rethrown after all iterations finish.
template <class Body>
void parallel_tasks(Index count, Body&& body) {
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (Index i = 0; i < count; ++i) {
    try {
      body(i);
    } catch (...) {
#pragma omp critical(enkf_task_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

/// Repetitions x sigma values x schemes; rows are ordered sigma-major, then
/// repetition, then scheme. The same truth, ensemble and locations are used
/// for every sigma of a repetition.
ScoreReport run_repetitions(const ExperimentConfig& config, ExperimentKind kind,
                            const std::vector<double>& sigmas) {
  const Context ctx(config, config.grid_side);
  const Index reps = config.repetitions;
  const auto n_sigma = static_cast<Index>(sigmas.size());
  std::vector<std::vector<ScoreRecord>> rows(static_cast<std::size_t>(reps * n_sigma));
  parallel_tasks(reps, [&](Index rep) {
    const auto r = static_cast<std::uint64_t>(rep);
    const Inputs in = make_inputs(ctx, r, config.n_obs);
    for (Index k = 0; k < n_sigma; ++k) {
      const ObservationSet obs = observe(in, sigmas[static_cast<std::size_t>(k)]);
      auto& out = rows[static_cast<std::size_t>(k * reps + rep)];
      for (const Scheme s : config.schemes) {
        out.push_back(run_and_score(ctx, kind, s, in, obs, sigmas[static_cast<std::size_t>(k)], r));
        out.back().repetition = rep;
      }
    }
  });
  ScoreReport report;
  for (auto& group : rows) std::move(group.begin(), group.end(), std::back_inserter(report));
  return report;
}

std::vector<Index> random_permutation(Index n, std::uint64_t seed) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  for (Index i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<Index> pick(0, i);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
  }
  return order;
}

}  // namespace

ScoreReport run_accuracy_experiment(const ExperimentConfig& config) {
  config.validate(ExperimentKind::accuracy);
  return run_repetitions(config, ExperimentKind::accuracy, {config.sigma_eps});
}

ScoreReport run_noise_sweep(const ExperimentConfig& config) {
  config.validate(ExperimentKind::noise_sweep);
  return run_repetitions(config, ExperimentKind::noise_sweep, config.noise_sweep);
}

ScoreReport run_ordering_experiment(const ExperimentConfig& config) {
  config.validate(ExperimentKind::ordering);
  const Context ctx(config, config.grid_side);
  const Inputs in = make_inputs(ctx, 0, config.n_obs);
  const ObservationSet obs = observe(in, config.sigma_eps);
  const std::uint64_t order_seed = derive_seed(config.seed, 0, "permutation");
  const Index perms = config.permutations;
  std::vector<std::vector<ScoreRecord>> rows(static_cast<std::size_t>(perms));
  parallel_tasks(perms, [&](Index p) {
    const ObservationSet shuffled =
        permuted(obs, random_permutation(obs.size(), derive_seed(order_seed, static_cast<std::uint64_t>(p), "order")));
    for (const Scheme s : config.schemes) {
      ScoreRecord r = run_and_score(ctx, ExperimentKind::ordering, s, in, shuffled, config.sigma_eps, 0);
      r.repetition = 0;
      r.permutation = p;
      rows[static_cast<std::size_t>(p)].push_back(std::move(r));
    }
  });
  ScoreReport report;
  for (auto& group : rows) std::move(group.begin(), group.end(), std::back_inserter(report));
  return report;
}

ScoreReport run_scaling_benchmark(const ExperimentConfig& config) {
  config.validate(ExperimentKind::benchmark);
  ScoreReport report;
  for (const Index dim : config.benchmark_dims) {
    Index side = 0;
    is_perfect_square(dim, side);
    ScoreRecord row;
    row.experiment = std::string(experiment_name(ExperimentKind::benchmark));
    row.scheme = std::string(scheme_name(Scheme::aao));
    row.sigma_eps = config.sigma_eps;
    row.state_dim = dim;
    const Index n = std::min(config.n_obs, dim);
    try {
      std::optional<Inputs> in;
      {
        Context ctx(config, side, false);
        in.emplace(make_inputs(ctx, 0, n));
      }
      const ObservationSet obs = observe(*in, config.sigma_eps);
      SolverConfig solver = config.resolved_solver(dim);
      solver.seed = derive_seed(config.seed, 0, "svd");
      const GridGeometry grid(side);

      PeakMemorySampler memory;
      const auto start = std::chrono::steady_clock::now();
      std::optional<Ensemble> analysis;
      {
        std::optional<TiledMatrix> loc;
        if (config.localization) loc = build_localization(grid, *config.localization, config.tile_size);
        analysis = ensrf_aao_update(in->prior, obs, loc ? &*loc : nullptr, solver, config.tile_size);
      }
      const auto stop = std::chrono::steady_clock::now();
      row.peak_mem_bytes = memory.stop();
      row.wall_time_s = std::chrono::duration<double>(stop - start).count();

      const Analysis a{analysis->mean(), *analysis};
      const ScoreRecord scored = score(ExperimentKind::benchmark, Scheme::aao, a, *in, obs, config.sigma_eps);
      row.rmse = scored.rmse;
      row.rmse_skill = scored.rmse_skill;
      row.energy_score = scored.energy_score;
      row.input_hash = scored.input_hash;
    } catch (const std::bad_alloc&) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      row.rmse = row.rmse_skill = row.energy_score = row.wall_time_s = nan;
      row.peak_mem_bytes = current_rss_bytes();
      row.input_hash = "out-of-memory";
    }
    report.push_back(std::move(row));
  }
  return report;
}

ScoreReport run_experiment(ExperimentKind kind, const ExperimentConfig& config) {
  switch (kind) {
    case ExperimentKind::accuracy: return run_accuracy_experiment(config);
    case ExperimentKind::ordering: return run_ordering_experiment(config);
    case ExperimentKind::noise_sweep: return run_noise_sweep(config);
    case ExperimentKind::benchmark: return run_scaling_benchmark(config);
  }
  throw InvalidArgument("unknown experiment");
}

bool is_failure_row(const ScoreRecord& record) { return record.input_hash == "out-of-memory"; }

// -----------------------------------------------------------------------------
// Output

namespace {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_scores_csv(const ScoreReport& report, std::ostream& out) {
  out << kScoresHeader << '\n';
  for (const auto& r : report) {
    out << r.experiment << ',' << r.scheme << ',' << r.repetition << ',' << r.permutation << ','
        << format_double(r.sigma_eps) << ',' << r.state_dim << ',' << format_double(r.rmse) << ','
        << format_double(r.rmse_skill) << ',' << format_double(r.energy_score) << ','
        << format_double(r.wall_time_s) << ',' << r.peak_mem_bytes << ',' << r.input_hash << '\n';
  }
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

std::string summary_json(ExperimentKind kind, const ScoreReport& report) {
  using ojson = nlohmann::ordered_json;
  // Group key: sigma for sweeps, state dimension for benchmarks, a single group otherwise.
  std::map<std::pair<double, std::int64_t>, std::vector<const ScoreRecord*>> groups;
  for (const auto& r : report) {
    const double sigma = kind == ExperimentKind::noise_sweep ? r.sigma_eps : 0.0;
    const std::int64_t dim = kind == ExperimentKind::benchmark ? r.state_dim : 0;
    groups[{sigma, dim}].push_back(&r);
  }
  ojson doc;
  doc["experiment"] = std::string(experiment_name(kind));
  doc["rows"] = report.size();
  ojson out_groups = ojson::array();
  for (const auto& [key, rows] : groups) {
    ojson g;
    if (kind == ExperimentKind::noise_sweep) g["sigma_eps"] = key.first;
    if (kind == ExperimentKind::benchmark) g["state_dim"] = key.second;
    std::vector<std::string> order;
    for (const auto* r : rows)
      if (std::find(order.begin(), order.end(), r->scheme) == order.end()) order.push_back(r->scheme);
    ojson schemes;
    for (const auto& name : order) {
      std::vector<double> rm, sk, es, wt, pm;
      for (const auto* r : rows) {
        if (r->scheme != name) continue;
        rm.push_back(r->rmse);
        sk.push_back(r->rmse_skill);
        es.push_back(r->energy_score);
        wt.push_back(r->wall_time_s);
        pm.push_back(static_cast<double>(r->peak_mem_bytes));
      }
      schemes[name] = ojson{{"count", rm.size()},
                            {"median_rmse", median(rm)},
                            {"median_rmse_skill", median(sk)},
                            {"median_energy_score", median(es)},
                            {"median_wall_time_s", median(wt)},
                            {"median_peak_mem_bytes", median(pm)}};
    }
    g["schemes"] = schemes;
    out_groups.push_back(g);
  }
  doc["groups"] = out_groups;
  return doc.dump(2);
}

}  // namespace enkf

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "enkf/ensemble.hpp"
#include "enkf/kernels_gp.hpp"
#include "enkf/randsvd.hpp"
#include "enkf/tiled_matrix.hpp"

namespace enkf {

/// Pointwise observations y_i = psi[indices[i]] + eps_i, eps_i ~ N(0, noise_vars[i]).
struct ObservationSet {
  std::vector<Index> indices;
  Eigen::VectorXd values;
  Eigen::VectorXd noise_vars;

  Index size() const { return static_cast<Index>(indices.size()); }
  /// Checks shapes, index range [0, state_dim) and non-negative finite noise.
  void validate(Index state_dim) const;
};

struct GaussianBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;

  Index dim() const { return mean.size(); }
};

/// psi_{t+1} = F psi_t + delta, delta ~ N(0, noise). Dense, small state only.
class DynamicsOperator {
 public:
  static DynamicsOperator identity(Index dim);
  static DynamicsOperator linear(Eigen::MatrixXd transition, Eigen::MatrixXd noise);

  Index dim() const { return dim_; }
  bool is_identity() const { return identity_; }
  /// F, materialized (identity included).
  Eigen::MatrixXd transition() const;
  /// Delta (zero for the identity operator).
  Eigen::MatrixXd noise() const;

 private:
  Index dim_ = 0;
  bool identity_ = true;
  Eigen::MatrixXd transition_;
  Eigen::MatrixXd noise_;
};

enum class SolverMode { exact, randomized };

/// How the n x n innovation matrix is inverted and square-rooted.
///
/// In exact mode a dense symmetric eigendecomposition is used while
/// n <= exact_threshold; above it (or in randomized mode) the randomized
/// truncated SVD of rank min(rank, n) is used instead.
struct SolverConfig {
  SolverMode mode = SolverMode::exact;
  Index rank = 2000;
  Index oversample = 10;
  Index power_iters = 2;
  Index exact_threshold = 8000;
  std::uint64_t seed = 0;
};

/// Gains for a batch of pointwise observations, kept in factored form:
/// K = C B^-1 and K~ = C (sqrt B)^-1 (sqrt B + sqrt E)^-1 with C = S G^T
/// (m x n) and B = G S G^T + E (n x n).
class ObservationGains {
 public:
  ObservationGains(TallMatrix cross_covariance, SpectralOperator inverse,
                   SpectralOperator inverse_sqrt, Eigen::MatrixXd sqrt_plus_noise_root);

  Index state_dim() const { return cross_covariance_.rows(); }
  Index obs_count() const { return cross_covariance_.cols(); }
  const TallMatrix& cross_covariance() const { return cross_covariance_; }

  /// K v for an innovation vector v (length n).
  Eigen::VectorXd apply_gain(const Eigen::VectorXd& innovation) const;
  /// K x for n x k x.
  Eigen::MatrixXd apply_gain(const Eigen::MatrixXd& x) const;
  /// K~ x for n x k x.
  Eigen::MatrixXd apply_sqrt_gain(const Eigen::MatrixXd& x) const;

  /// Dense m x n gains; for tests and small problems.
  Eigen::MatrixXd gain() const;
  Eigen::MatrixXd sqrt_gain() const;

 private:
  TallMatrix cross_covariance_;
  SpectralOperator inverse_;
  SpectralOperator inverse_sqrt_;
  Eigen::LLT<Eigen::MatrixXd> sqrt_plus_noise_;
};

/// Builds the gains from a (possibly localized) covariance held in tiles.
ObservationGains assemble_gains(const TiledMatrix& cov, const ObservationSet& obs,
                                const SolverConfig& solver);

/// Exact Kalman update with pointwise observations. Dense; dim <= 5000.
GaussianBelief kf_update(const GaussianBelief& belief, const ObservationSet& obs);

/// mu^f = F mu, Sigma^f = F Sigma F^T + Delta.
GaussianBelief kf_forecast(const GaussianBelief& belief, const DynamicsOperator& dynamics);

/// Deterministic member forecast psi_i <- F psi_i.
Ensemble forecast_ensemble(const Ensemble& ensemble, const DynamicsOperator& dynamics);
/// Stochastic member forecast psi_i <- F psi_i + delta_i, delta_i ~ N(0, Delta).
Ensemble forecast_ensemble(const Ensemble& ensemble, const DynamicsOperator& dynamics,
                           std::uint64_t seed);

/// Stochastic EnKF with perturbed observations y_i ~ N(y, E). `localization`
/// may be null; member i's perturbation depends only on (seed, i).
Ensemble enkf_perturbed_update(const Ensemble& ensemble, const ObservationSet& obs,
                               const TiledMatrix* localization, std::uint64_t seed,
                               Index tile_size = kDefaultTileSize);

/// All-at-once square-root update: every observation is assimilated in one
/// batch against the (optionally localized) empirical covariance.
Ensemble ensrf_aao_update(const Ensemble& ensemble, const ObservationSet& obs,
                          const TiledMatrix* localization, const SolverConfig& solver,
                          Index tile_size = kDefaultTileSize);

/// All-at-once square-root update against a supplied covariance (for example
/// the exact prior covariance) in place of the ensemble estimate.
Ensemble ensrf_aao_update_with_covariance(const Ensemble& ensemble, const ObservationSet& obs,
                                          const TiledMatrix& covariance,
                                          const SolverConfig& solver);

/// Serial square-root update. Each observation uses the localized column of
/// the current ensemble's covariance, and the result is the background for
/// the next one. `order` lists observation positions; empty means natural order.
Ensemble ensrf_sequential_update(const Ensemble& ensemble, const ObservationSet& obs,
                                 const LocalizationKernel* localization,
                                 std::span<const Index> order = {});

}  // namespace enkf

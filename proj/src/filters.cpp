#include "enkf/filters.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <random>
#include <string>

#include "enkf/errors.hpp"

namespace enkf {

namespace {

constexpr Index kMaxDenseDim = 5000;

std::mt19937_64 member_rng(std::uint64_t seed, Index member) {
  const auto idx = static_cast<std::uint64_t>(member);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(idx), static_cast<std::uint32_t>(idx >> 32)};
  return std::mt19937_64(seq);
}

void require_ensemble(const Ensemble& ensemble) {
  if (ensemble.size() < 2) throw InvalidArgument("degenerate ensemble: need at least 2 members");
}

/// Rows `indices` of a matrix with m rows.
Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& x, std::span<const Index> indices) {
  Eigen::MatrixXd out(static_cast<Index>(indices.size()), x.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) out.row(static_cast<Index>(i)) = x.row(indices[i]);
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& x, std::span<const Index> indices) {
  Eigen::VectorXd out(static_cast<Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) out[static_cast<Index>(i)] = x[indices[i]];
  return out;
}

void warn_rank_clamped(Index requested, Index n) {
  static std::atomic<bool> warned{false};
  if (!warned.exchange(true))
    std::clog << "warning: SVD rank " << requested << " exceeds observation count " << n
              << "; clamped to " << n << '\n';
}

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& a) { return 0.5 * (a + a.transpose()); }

}  // namespace

// -----------------------------------------------------------------------------

void ObservationSet::validate(Index state_dim) const {
  const Index n = size();
  if (values.size() != n || noise_vars.size() != n)
    throw InvalidArgument("observation set: indices, values and noise variances differ in length");
  for (const Index j : indices)
    if (j < 0 || j >= state_dim)
      throw InvalidArgument("observation index " + std::to_string(j) + " out of range [0, " +
                            std::to_string(state_dim) + ")");
  if (!values.allFinite()) throw InvalidArgument("observation values must be finite");
  for (Index i = 0; i < n; ++i)
    if (!(noise_vars[i] >= 0.0) || !std::isfinite(noise_vars[i]))
      throw InvalidArgument("observation noise variances must be finite and non-negative");
}

DynamicsOperator DynamicsOperator::identity(Index dim) {
  if (dim < 1) throw InvalidArgument("dynamics dimension must be positive");
  DynamicsOperator out;
  out.dim_ = dim;
  return out;
}

DynamicsOperator DynamicsOperator::linear(Eigen::MatrixXd transition, Eigen::MatrixXd noise) {
  if (transition.rows() != transition.cols() || noise.rows() != transition.rows() ||
      noise.cols() != transition.cols())
    throw InvalidArgument("dynamics: transition and noise must be square of equal size");
  DynamicsOperator out;
  out.dim_ = transition.rows();
  out.identity_ = false;
  out.transition_ = std::move(transition);
  out.noise_ = std::move(noise);
  return out;
}

Eigen::MatrixXd DynamicsOperator::transition() const {
  return identity_ ? Eigen::MatrixXd::Identity(dim_, dim_) : transition_;
}

Eigen::MatrixXd DynamicsOperator::noise() const {
  return identity_ ? Eigen::MatrixXd::Zero(dim_, dim_) : noise_;
}

// -----------------------------------------------------------------------------

ObservationGains::ObservationGains(TallMatrix cross_covariance, SpectralOperator inverse,
                                   SpectralOperator inverse_sqrt, Eigen::MatrixXd sqrt_plus_noise)
    : cross_covariance_(std::move(cross_covariance)),
      inverse_(std::move(inverse)),
      inverse_sqrt_(std::move(inverse_sqrt)),
      sqrt_plus_noise_(sqrt_plus_noise) {
  if (sqrt_plus_noise_.info() != Eigen::Success)
    throw NumericalError("sqrt(B) + sqrt(E) is not positive definite");
}

Eigen::VectorXd ObservationGains::apply_gain(const Eigen::VectorXd& innovation) const {
  return cross_covariance_.matrix() * inverse_.apply(innovation);
}

Eigen::MatrixXd ObservationGains::apply_gain(const Eigen::MatrixXd& x) const {
  return cross_covariance_.matrix() * inverse_.apply(x);
}

Eigen::MatrixXd ObservationGains::apply_sqrt_gain(const Eigen::MatrixXd& x) const {
  const Eigen::MatrixXd inner = sqrt_plus_noise_.solve(x);
  return cross_covariance_.matrix() * inverse_sqrt_.apply(inner);
}

Eigen::MatrixXd ObservationGains::gain() const {
  return apply_gain(Eigen::MatrixXd(Eigen::MatrixXd::Identity(obs_count(), obs_count())));
}

Eigen::MatrixXd ObservationGains::sqrt_gain() const {
  return apply_sqrt_gain(Eigen::MatrixXd::Identity(obs_count(), obs_count()));
}

ObservationGains assemble_gains(const TiledMatrix& cov, const ObservationSet& obs,
                                const SolverConfig& solver) {
  obs.validate(cov.dim());
  const Index n = obs.size();
  if (n < 1) throw InvalidArgument("assemble_gains: no observations");

  TallMatrix cross = extract_columns(cov, obs.indices);
  Eigen::MatrixXd innovation = gather_rows(cross.matrix(), obs.indices);
  innovation.diagonal() += obs.noise_vars;
  innovation = symmetrized(innovation);

  std::shared_ptr<const TruncatedSVD> svd;
  const bool exact = solver.mode == SolverMode::exact && n <= solver.exact_threshold;
  if (exact) {
    svd = std::make_shared<const TruncatedSVD>(dense_eigenpairs(innovation, cov.tile_size()));
  } else {
    if (solver.rank < 1) throw InvalidArgument("randomized solver needs rank >= 1");
    Index rank = solver.rank;
    if (rank > n) {
      warn_rank_clamped(rank, n);
      rank = n;
    }
    svd = std::make_shared<const TruncatedSVD>(
        randomized_svd(TiledMatrix::from_dense(innovation, cov.tile_size()), rank,
                       solver.oversample, solver.power_iters, solver.seed));
  }
  const double top = svd->rank() > 0 ? svd->values[0] : 0.0;
  if (svd->raw_min_value < -1e-8 * std::abs(top))
    throw NumericalError("covariance not PSD: innovation eigenvalue " +
                         std::to_string(svd->raw_min_value));

  SpectralOperator inverse = approximate_inverse(svd);
  SpectralOperator inverse_sqrt = approximate_inverse_sqrt(svd);
  Eigen::MatrixXd sqrt_plus_noise =
      approximate_sqrt(svd).apply(Eigen::MatrixXd(Eigen::MatrixXd::Identity(n, n)));
  sqrt_plus_noise = symmetrized(sqrt_plus_noise);
  sqrt_plus_noise.diagonal() += obs.noise_vars.cwiseSqrt();

  return ObservationGains(std::move(cross), std::move(inverse), std::move(inverse_sqrt),
                          std::move(sqrt_plus_noise));
}

// -----------------------------------------------------------------------------

GaussianBelief kf_update(const GaussianBelief& belief, const ObservationSet& obs) {
  const Index m = belief.dim();
  if (m > kMaxDenseDim) throw InvalidArgument("kf_update: state too large for dense algebra");
  if (belief.covariance.rows() != m || belief.covariance.cols() != m)
    throw InvalidArgument("kf_update: covariance shape does not match mean");
  obs.validate(m);
  const Index n = obs.size();
  if (n == 0) return belief;

  // Sigma G^T picks columns; G Sigma G^T picks the corresponding rows of those.
  Eigen::MatrixXd cross(m, n);
  for (Index i = 0; i < n; ++i) cross.col(i) = belief.covariance.col(obs.indices[i]);
  Eigen::MatrixXd innovation = gather_rows(cross, obs.indices);
  innovation.diagonal() += obs.noise_vars;
  innovation = symmetrized(innovation);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(innovation);
  if (eig.info() != Eigen::Success) throw NumericalError("kf_update: eigendecomposition failed");
  const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (!(eig.eigenvalues().minCoeff() > 1e-14 * top))
    throw NumericalError("kf_update: singular innovation matrix");

  const Eigen::MatrixXd inverse = eig.eigenvectors() *
                                  eig.eigenvalues().cwiseInverse().asDiagonal() *
                                  eig.eigenvectors().transpose();
  const Eigen::MatrixXd gain = cross * inverse;

  GaussianBelief out;
  out.mean = belief.mean + gain * (obs.values - gather(belief.mean, obs.indices));
  out.covariance = symmetrized(belief.covariance - gain * cross.transpose());
  return out;
}

GaussianBelief kf_forecast(const GaussianBelief& belief, const DynamicsOperator& dynamics) {
  if (dynamics.dim() != belief.dim() || belief.covariance.rows() != belief.dim())
    throw InvalidArgument("kf_forecast: dimension mismatch");
  if (dynamics.is_identity()) return belief;
  const Eigen::MatrixXd f = dynamics.transition();
  GaussianBelief out;
  out.mean = f * belief.mean;
  out.covariance = symmetrized(f * belief.covariance * f.transpose() + dynamics.noise());
  return out;
}

Ensemble forecast_ensemble(const Ensemble& ensemble, const DynamicsOperator& dynamics) {
  if (dynamics.dim() != ensemble.dim()) throw InvalidArgument("forecast: dimension mismatch");
  if (dynamics.is_identity()) return ensemble;
  return Ensemble(dynamics.transition() * ensemble.members());
}

Ensemble forecast_ensemble(const Ensemble& ensemble, const DynamicsOperator& dynamics,
                           std::uint64_t seed) {
  if (dynamics.dim() != ensemble.dim()) throw InvalidArgument("forecast: dimension mismatch");
  if (dynamics.is_identity()) return ensemble;
  Eigen::MatrixXd members = dynamics.transition() * ensemble.members();
  const Eigen::MatrixXd noise = dynamics.noise();
  if (!noise.isZero(0.0)) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetrized(noise));
    if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() < -1e-10 * eig.eigenvalues().maxCoeff())
      throw NumericalError("forecast: dynamics noise covariance is not PSD");
    const Eigen::MatrixXd root =
        eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    for (Index i = 0; i < members.cols(); ++i) {
      auto rng = member_rng(seed, i);
      std::normal_distribution<double> normal(0.0, 1.0);
      Eigen::VectorXd z(members.rows());
      for (Index r = 0; r < z.size(); ++r) z[r] = normal(rng);
      members.col(i) += root * z;
    }
  }
  return Ensemble(std::move(members));
}

// -----------------------------------------------------------------------------

Ensemble enkf_perturbed_update(const Ensemble& ensemble, const ObservationSet& obs,
                               const TiledMatrix* localization, std::uint64_t seed,
                               Index tile_size) {
  require_ensemble(ensemble);
  obs.validate(ensemble.dim());
  const Index n = obs.size();
  if (n == 0) return ensemble;

  TallMatrix cross;
  {
    TiledMatrix cov = empirical_covariance(
        ensemble, localization != nullptr ? localization->tile_size() : tile_size);
    if (localization != nullptr) cov = schur_product(std::move(cov), *localization);
    cross = extract_columns(cov, obs.indices);
  }
  Eigen::MatrixXd innovation = gather_rows(cross.matrix(), obs.indices);
  innovation.diagonal() += obs.noise_vars;
  innovation = symmetrized(innovation);
  Eigen::LLT<Eigen::MatrixXd> llt(innovation);
  if (llt.info() != Eigen::Success) throw NumericalError("enkf: singular innovation matrix");

  const Index p = ensemble.size();
  const Eigen::VectorXd noise_sd = obs.noise_vars.cwiseSqrt();
  Eigen::MatrixXd residuals(n, p);
  for (Index i = 0; i < p; ++i) {
    auto rng = member_rng(seed, i);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index k = 0; k < n; ++k) {
      const double perturbed = obs.values[k] + noise_sd[k] * normal(rng);
      residuals(k, i) = perturbed - ensemble.members()(obs.indices[static_cast<std::size_t>(k)], i);
    }
  }
  Eigen::MatrixXd members = ensemble.members() + cross.matrix() * llt.solve(residuals);
  return Ensemble(std::move(members));
}

namespace {

Ensemble apply_batch_update(const Ensemble& ensemble, const ObservationSet& obs,
                            const ObservationGains& gains) {
  const Eigen::VectorXd innovation = obs.values - gather(ensemble.mean(), obs.indices);
  Eigen::VectorXd mean = ensemble.mean() + gains.apply_gain(innovation);
  const Eigen::MatrixXd observed_dev = gather_rows(ensemble.deviations(), obs.indices);
  Eigen::MatrixXd deviations = ensemble.deviations() - gains.apply_sqrt_gain(observed_dev);
  return Ensemble::from_mean_and_deviations(std::move(mean), std::move(deviations));
}

void require_batch(const Ensemble& ensemble, const ObservationSet& obs) {
  require_ensemble(ensemble);
  obs.validate(ensemble.dim());
  if (obs.size() < 1) throw InvalidArgument("all-at-once update needs at least one observation");
}

}  // namespace

Ensemble ensrf_aao_update(const Ensemble& ensemble, const ObservationSet& obs,
                          const TiledMatrix* localization, const SolverConfig& solver,
                          Index tile_size) {
  require_batch(ensemble, obs);
  if (localization != nullptr && localization->dim() != ensemble.dim())
    throw InvalidArgument("localization matrix does not match the state dimension");
  // The covariance goes out of scope once the gains hold their m x n columns.
  const ObservationGains gains = [&] {
    TiledMatrix cov = empirical_covariance(
        ensemble, localization != nullptr ? localization->tile_size() : tile_size);
    if (localization != nullptr) cov = schur_product(std::move(cov), *localization);
    return assemble_gains(cov, obs, solver);
  }();
  return apply_batch_update(ensemble, obs, gains);
}

Ensemble ensrf_aao_update_with_covariance(const Ensemble& ensemble, const ObservationSet& obs,
                                          const TiledMatrix& covariance,
                                          const SolverConfig& solver) {
  require_batch(ensemble, obs);
  if (covariance.dim() != ensemble.dim())
    throw InvalidArgument("covariance does not match the state dimension");
  return apply_batch_update(ensemble, obs, assemble_gains(covariance, obs, solver));
}

Ensemble ensrf_sequential_update(const Ensemble& ensemble, const ObservationSet& obs,
                                 const LocalizationKernel* localization,
                                 std::span<const Index> order) {
  require_ensemble(ensemble);
  obs.validate(ensemble.dim());
  if (localization != nullptr && localization->grid().dim() != ensemble.dim())
    throw InvalidArgument("localization grid does not match the state dimension");
  const Index n = obs.size();
  if (n == 0) return ensemble;

  std::vector<Index> sequence(order.begin(), order.end());
  if (sequence.empty()) {
    sequence.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) sequence[static_cast<std::size_t>(i)] = i;
  } else {
    if (static_cast<Index>(sequence.size()) != n)
      throw InvalidArgument("observation order must be a permutation of all observations");
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    for (const Index k : sequence) {
      if (k < 0 || k >= n || seen[static_cast<std::size_t>(k)])
        throw InvalidArgument("observation order must be a permutation of all observations");
      seen[static_cast<std::size_t>(k)] = true;
    }
  }

  const double scale = 1.0 / static_cast<double>(ensemble.size() - 1);
  Eigen::VectorXd mean = ensemble.mean();
  Eigen::MatrixXd dev = ensemble.deviations();
  for (const Index k : sequence) {
    const Index j = obs.indices[static_cast<std::size_t>(k)];
    const double noise = obs.noise_vars[k];
    const Eigen::RowVectorXd observed = dev.row(j);

    // Column j of the current ensemble covariance, then localized.
    Eigen::VectorXd column = (dev * observed.transpose()) * scale;
    if (localization != nullptr) column.array() *= localization->column(j).array();

    const double variance = column[j] + noise;
    if (!(variance > 0.0)) throw NumericalError("zero innovation variance at observation " + std::to_string(k));
    const double root = std::sqrt(variance);

    mean += column * ((obs.values[k] - mean[j]) / variance);
    dev.noalias() -= (column / (root * (root + std::sqrt(noise)))) * observed;
  }
  return Ensemble::from_mean_and_deviations(std::move(mean), std::move(dev));
}

}  // namespace enkf

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>

#include "enkf/tiled_matrix.hpp"

namespace enkf {

/// Rank-r eigen-pair list (lambda_i, u_i) of a symmetric PSD matrix.
///
/// Values are sorted non-increasing and clamped at zero; `raw_min_value`
/// keeps the smallest eigenvalue seen before clamping so callers can detect
/// inputs that were not PSD.
struct TruncatedSVD {
  Eigen::VectorXd values;
  TallMatrix vectors;
  double raw_min_value = 0.0;

  Index rank() const { return values.size(); }
  Index dim() const { return vectors.rows(); }

  /// Sorts the pairs by decreasing value, clamps negatives and keeps the top `rank`.
  static TruncatedSVD from_eigenpairs(const Eigen::VectorXd& values, const Eigen::MatrixXd& vectors,
                                      Index rank, Index panel_rows);
};

/// Randomized range finder + Rayleigh-Ritz for the top `rank` eigenpairs of a
/// symmetric matrix: Gaussian test matrix of width rank + oversample, then
/// `power_iters` passes of subspace iteration with re-orthonormalization.
/// Deterministic for a given seed.
TruncatedSVD randomized_svd(const TiledMatrix& a, Index rank, Index oversample = 10,
                            Index power_iters = 2, std::uint64_t seed = 0);

/// All eigenpairs of a small dense symmetric matrix, via a direct eigensolver.
TruncatedSVD dense_eigenpairs(const Eigen::MatrixXd& symmetric, Index panel_rows = kDefaultTileSize);

enum class SpectralTransform { inverse, sqrt, inverse_sqrt };

/// Lazy U f(Lambda) U^T. Never forms the product; immutable and shareable.
class SpectralOperator {
 public:
  SpectralOperator(std::shared_ptr<const TruncatedSVD> svd, SpectralTransform transform, double floor);

  SpectralTransform transform() const { return transform_; }
  Index dim() const { return svd_->dim(); }
  /// f(lambda_i) for each retained pair.
  const Eigen::VectorXd& weights() const { return weights_; }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  TallMatrix apply(const TallMatrix& x) const;

 private:
  std::shared_ptr<const TruncatedSVD> svd_;
  SpectralTransform transform_;
  Eigen::VectorXd weights_;
};

/// Default regularization floor for inverses: 1e-12 * lambda_1.
double default_inverse_floor(const TruncatedSVD& svd);

/// U diag(1 / max(lambda_i, floor)) U^T.
SpectralOperator approximate_inverse(std::shared_ptr<const TruncatedSVD> svd, double floor);
SpectralOperator approximate_inverse(std::shared_ptr<const TruncatedSVD> svd);

/// Symmetric PSD root U diag(sqrt(lambda_i)) U^T.
SpectralOperator approximate_sqrt(std::shared_ptr<const TruncatedSVD> svd);

/// U diag(1 / sqrt(max(lambda_i, floor))) U^T.
SpectralOperator approximate_inverse_sqrt(std::shared_ptr<const TruncatedSVD> svd, double floor);
SpectralOperator approximate_inverse_sqrt(std::shared_ptr<const TruncatedSVD> svd);

// Convenience overloads that take a copy of the decomposition.
SpectralOperator approximate_inverse(const TruncatedSVD& svd, double floor);
SpectralOperator approximate_inverse(const TruncatedSVD& svd);
SpectralOperator approximate_sqrt(const TruncatedSVD& svd);

}  // namespace enkf

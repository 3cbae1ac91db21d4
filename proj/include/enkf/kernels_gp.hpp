#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "enkf/ensemble.hpp"
#include "enkf/tiled_matrix.hpp"

namespace enkf {

/// N x N regular grid on the unit square. Point k = iy * N + ix sits at
/// (ix / (N - 1), iy / (N - 1)), i.e. row-major with x varying fastest.
class GridGeometry {
 public:
  explicit GridGeometry(Index side);

  Index side() const { return side_; }
  Index dim() const { return side_ * side_; }
  double x(Index k) const;
  double y(Index k) const;
  double distance(Index a, Index b) const;

 private:
  double coordinate(Index i) const;

  Index side_;
};

enum class KernelFamily { matern32 };

struct KernelSpec {
  KernelFamily family = KernelFamily::matern32;
  double variance = 1.0;
  double length = 0.1;

  /// Throws unless length > 0 and variance >= 0.
  void validate() const;
};

/// sigma^2 (1 + sqrt(3) d / l) exp(-sqrt(3) d / l).
double matern32(double distance, const KernelSpec& spec);

/// Gram matrix k(|x_i - x_j|) over the grid, built tile-parallel.
TiledMatrix build_covariance(const GridGeometry& grid, const KernelSpec& spec,
                             Index tile_size = kDefaultTileSize);

/// Localization matrix rho_jk = k(|x_j - x_k|) for a unit-variance kernel.
TiledMatrix build_localization(const GridGeometry& grid, const KernelSpec& spec,
                               Index tile_size = kDefaultTileSize);

/// Column-on-demand view of a localization matrix. Produces the same entries
/// as build_localization without storing the matrix.
class LocalizationKernel {
 public:
  LocalizationKernel(GridGeometry grid, KernelSpec spec);

  const GridGeometry& grid() const { return grid_; }
  const KernelSpec& spec() const { return spec_; }
  Eigen::VectorXd column(Index j) const;

 private:
  GridGeometry grid_;
  KernelSpec spec_;
};

/// Draws zero-mean Gaussian-process samples on a grid. The Gram matrix is
/// factorized once (Cholesky with diagonal jitter 1e-10 sigma^2 doubling up to
/// 1e-6 sigma^2) and reused for every draw.
class GpSampler {
 public:
  GpSampler(const GridGeometry& grid, const KernelSpec& spec);

  Index dim() const { return dim_; }
  double jitter() const { return jitter_; }

  /// `count` members; member i depends only on (seed, i).
  Ensemble sample(Index count, std::uint64_t seed) const;
  /// Single draw, equal to member 0 of sample(1, seed).
  StateVector sample_one(std::uint64_t seed) const;

 private:
  StateVector draw(std::uint64_t seed, Index member) const;

  Index dim_;
  double jitter_ = 0.0;
  bool degenerate_ = false;
  Eigen::MatrixXd factor_;
};

Ensemble sample_gp(const GridGeometry& grid, const KernelSpec& spec, Index count, std::uint64_t seed);

}  // namespace enkf

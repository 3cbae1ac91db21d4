#include "enkf/kernels_gp.hpp"

#include <cmath>
#include <random>
#include <string>

#include "enkf/errors.hpp"

namespace enkf {

GridGeometry::GridGeometry(Index side) : side_(side) {
  if (side < 1) throw InvalidArgument("grid side must be positive");
}

double GridGeometry::coordinate(Index i) const {
  if (side_ == 1) return 0.5;
  return static_cast<double>(i) / static_cast<double>(side_ - 1);
}

double GridGeometry::x(Index k) const { return coordinate(k % side_); }
double GridGeometry::y(Index k) const { return coordinate(k / side_); }

double GridGeometry::distance(Index a, Index b) const {
  return std::hypot(x(a) - x(b), y(a) - y(b));
}

// -----------------------------------------------------------------------------

void KernelSpec::validate() const {
  if (!(length > 0.0) || !std::isfinite(length))
    throw InvalidArgument("kernel correlation length must be positive");
  if (!(variance >= 0.0) || !std::isfinite(variance))
    throw InvalidArgument("kernel variance must be non-negative");
}

double matern32(double distance, const KernelSpec& spec) {
  if (!(distance >= 0.0)) throw InvalidArgument("matern32: distance must be non-negative");
  const double scaled = std::sqrt(3.0) * distance / spec.length;
  return spec.variance * (1.0 + scaled) * std::exp(-scaled);
}

namespace {

TiledMatrix build_kernel_matrix(const GridGeometry& grid, const KernelSpec& spec, Index tile_size) {
  spec.validate();
  return TiledMatrix::generate(grid.dim(), tile_size, [&](Index r0, Index c0, Eigen::MatrixXd& out) {
    for (Index c = 0; c < out.cols(); ++c)
      for (Index r = 0; r < out.rows(); ++r)
        out(r, c) = matern32(grid.distance(r0 + r, c0 + c), spec);
  });
}

}  // namespace

TiledMatrix build_covariance(const GridGeometry& grid, const KernelSpec& spec, Index tile_size) {
  return build_kernel_matrix(grid, spec, tile_size);
}

TiledMatrix build_localization(const GridGeometry& grid, const KernelSpec& spec, Index tile_size) {
  if (spec.variance != 1.0) throw InvalidArgument("localization kernel must have unit variance");
  return build_kernel_matrix(grid, spec, tile_size);
}

LocalizationKernel::LocalizationKernel(GridGeometry grid, KernelSpec spec)
    : grid_(grid), spec_(spec) {
  spec_.validate();
  if (spec_.variance != 1.0) throw InvalidArgument("localization kernel must have unit variance");
}

Eigen::VectorXd LocalizationKernel::column(Index j) const {
  if (j < 0 || j >= grid_.dim()) throw InvalidArgument("localization column out of range");
  Eigen::VectorXd out(grid_.dim());
  for (Index i = 0; i < grid_.dim(); ++i) out[i] = matern32(grid_.distance(i, j), spec_);
  return out;
}

// -----------------------------------------------------------------------------

GpSampler::GpSampler(const GridGeometry& grid, const KernelSpec& spec) : dim_(grid.dim()) {
  spec.validate();
  if (spec.variance == 0.0) {
    degenerate_ = true;
    return;
  }
  const Index m = dim_;
  auto fill_gram = [&] {
    factor_.resize(m, m);
#pragma omp parallel for schedule(static)
    for (Index j = 0; j < m; ++j)
      for (Index i = j; i < m; ++i) factor_(i, j) = matern32(grid.distance(i, j), spec);
  };
  for (double jitter = 1e-10 * spec.variance; jitter <= 1e-6 * spec.variance * (1 + 1e-12);
       jitter *= 2.0) {
    fill_gram();
    factor_.diagonal().array() += jitter;
    Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>, Eigen::Lower> llt(factor_);
    if (llt.info() == Eigen::Success) {
      jitter_ = jitter;
      return;
    }
  }
  throw NumericalError("GP Gram matrix factorization failed at maximum jitter");
}

StateVector GpSampler::draw(std::uint64_t seed, Index member) const {
  if (degenerate_) return StateVector::Zero(dim_);
  const auto idx = static_cast<std::uint64_t>(member);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(idx), static_cast<std::uint32_t>(idx >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(dim_);
  for (Index i = 0; i < dim_; ++i) z[i] = normal(rng);
  return factor_.triangularView<Eigen::Lower>() * z;
}

Ensemble GpSampler::sample(Index count, std::uint64_t seed) const {
  if (count < 1) throw InvalidArgument("sample_gp: member count must be positive");
  Eigen::MatrixXd members(dim_, count);
#pragma omp parallel for schedule(dynamic)
  for (Index i = 0; i < count; ++i) members.col(i) = draw(seed, i);
  return Ensemble(std::move(members));
}

StateVector GpSampler::sample_one(std::uint64_t seed) const { return draw(seed, 0); }

Ensemble sample_gp(const GridGeometry& grid, const KernelSpec& spec, Index count, std::uint64_t seed) {
  if (count < 1) throw InvalidArgument("sample_gp: member count must be positive");
  return GpSampler(grid, spec).sample(count, seed);
}

}  // namespace enkf

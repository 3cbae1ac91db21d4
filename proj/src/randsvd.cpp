#include "enkf/randsvd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "enkf/errors.hpp"

namespace enkf {

namespace {

Eigen::MatrixXd orthonormal_basis(const Eigen::MatrixXd& y) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(y);
  return qr.householderQ() * Eigen::MatrixXd::Identity(y.rows(), y.cols());
}

Eigen::MatrixXd apply_tiled(const TiledMatrix& a, Eigen::MatrixXd x) {
  return multiply_tall(a, TallMatrix(std::move(x), a.tile_size())).matrix();
}

}  // namespace

TruncatedSVD TruncatedSVD::from_eigenpairs(const Eigen::VectorXd& values,
                                           const Eigen::MatrixXd& vectors, Index rank,
                                           Index panel_rows) {
  if (values.size() != vectors.cols()) throw InvalidArgument("eigenpair count mismatch");
  if (rank < 0 || rank > values.size()) throw InvalidArgument("requested rank exceeds eigenpairs");
  std::vector<Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return values[a] > values[b]; });

  TruncatedSVD out;
  out.values.resize(rank);
  Eigen::MatrixXd u(vectors.rows(), rank);
  for (Index k = 0; k < rank; ++k) {
    const Index src = order[static_cast<std::size_t>(k)];
    out.values[k] = std::max(values[src], 0.0);
    u.col(k) = vectors.col(src);
  }
  out.raw_min_value = values.size() > 0 ? values.minCoeff() : 0.0;
  out.vectors = TallMatrix(std::move(u), panel_rows);
  return out;
}

TruncatedSVD randomized_svd(const TiledMatrix& a, Index rank, Index oversample, Index power_iters,
                            std::uint64_t seed) {
  const Index m = a.dim();
  if (rank < 1 || rank > m)
    throw InvalidArgument("randomized_svd: rank " + std::to_string(rank) + " outside [1, " +
                          std::to_string(m) + "]");
  if (oversample < 0 || power_iters < 0)
    throw InvalidArgument("randomized_svd: oversample and power iterations must be non-negative");
  if (!a.all_finite()) throw NumericalError("randomized_svd: matrix has non-finite entries");

  const Index width = std::min(rank + oversample, m);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd omega(m, width);
  for (Index c = 0; c < width; ++c)
    for (Index r = 0; r < m; ++r) omega(r, c) = normal(rng);

  Eigen::MatrixXd q = orthonormal_basis(apply_tiled(a, std::move(omega)));
  for (Index it = 0; it < power_iters; ++it) {
    // a is symmetric, so a^T q == a q.
    q = orthonormal_basis(apply_tiled(a, q));
    q = orthonormal_basis(apply_tiled(a, q));
  }

  const Eigen::MatrixXd aq = apply_tiled(a, q);
  Eigen::MatrixXd projected = q.transpose() * aq;
  projected = 0.5 * (projected + projected.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(projected);
  if (eig.info() != Eigen::Success) throw NumericalError("randomized_svd: Rayleigh-Ritz step failed");

  const Eigen::MatrixXd ritz_vectors = q * eig.eigenvectors();
  return TruncatedSVD::from_eigenpairs(eig.eigenvalues(), ritz_vectors, rank, a.tile_size());
}

TruncatedSVD dense_eigenpairs(const Eigen::MatrixXd& symmetric, Index panel_rows) {
  if (symmetric.rows() != symmetric.cols()) throw InvalidArgument("dense_eigenpairs: not square");
  if (!symmetric.allFinite()) throw NumericalError("dense_eigenpairs: non-finite entries");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(symmetric);
  if (eig.info() != Eigen::Success) throw NumericalError("symmetric eigendecomposition failed");
  return TruncatedSVD::from_eigenpairs(eig.eigenvalues(), eig.eigenvectors(), symmetric.rows(),
                                       panel_rows);
}

// -----------------------------------------------------------------------------

SpectralOperator::SpectralOperator(std::shared_ptr<const TruncatedSVD> svd,
                                   SpectralTransform transform, double floor)
    : svd_(std::move(svd)), transform_(transform) {
  if (!svd_) throw InvalidArgument("spectral operator needs a decomposition");
  if (transform != SpectralTransform::sqrt && !(floor > 0.0))
    throw InvalidArgument("inverse floor must be positive");
  const auto& lambda = svd_->values;
  weights_.resize(lambda.size());
  for (Index i = 0; i < lambda.size(); ++i) {
    switch (transform) {
      case SpectralTransform::inverse:
        weights_[i] = 1.0 / std::max(lambda[i], floor);
        break;
      case SpectralTransform::sqrt:
        weights_[i] = std::sqrt(std::max(lambda[i], 0.0));
        break;
      case SpectralTransform::inverse_sqrt:
        weights_[i] = 1.0 / std::sqrt(std::max(lambda[i], floor));
        break;
    }
  }
}

Eigen::MatrixXd SpectralOperator::apply(const Eigen::MatrixXd& x) const {
  const Eigen::MatrixXd& u = svd_->vectors.matrix();
  if (x.rows() != u.rows()) throw InvalidArgument("spectral operator: dimension mismatch");
  Eigen::MatrixXd coeffs = u.transpose() * x;
  coeffs = weights_.asDiagonal() * coeffs;
  return u * coeffs;
}

Eigen::VectorXd SpectralOperator::apply(const Eigen::VectorXd& x) const {
  return apply(Eigen::MatrixXd(x)).col(0);
}

TallMatrix SpectralOperator::apply(const TallMatrix& x) const {
  return TallMatrix(apply(x.matrix()), x.panel_rows());
}

double default_inverse_floor(const TruncatedSVD& svd) {
  const double top = svd.rank() > 0 ? svd.values[0] : 0.0;
  return top > 0.0 ? 1e-12 * top : std::numeric_limits<double>::min();
}

SpectralOperator approximate_inverse(std::shared_ptr<const TruncatedSVD> svd, double floor) {
  return SpectralOperator(std::move(svd), SpectralTransform::inverse, floor);
}

SpectralOperator approximate_inverse(std::shared_ptr<const TruncatedSVD> svd) {
  const double floor = default_inverse_floor(*svd);
  return approximate_inverse(std::move(svd), floor);
}

SpectralOperator approximate_sqrt(std::shared_ptr<const TruncatedSVD> svd) {
  return SpectralOperator(std::move(svd), SpectralTransform::sqrt, 0.0);
}

SpectralOperator approximate_inverse_sqrt(std::shared_ptr<const TruncatedSVD> svd, double floor) {
  return SpectralOperator(std::move(svd), SpectralTransform::inverse_sqrt, floor);
}

SpectralOperator approximate_inverse_sqrt(std::shared_ptr<const TruncatedSVD> svd) {
  const double floor = default_inverse_floor(*svd);
  return approximate_inverse_sqrt(std::move(svd), floor);
}

SpectralOperator approximate_inverse(const TruncatedSVD& svd, double floor) {
  return approximate_inverse(std::make_shared<const TruncatedSVD>(svd), floor);
}

SpectralOperator approximate_inverse(const TruncatedSVD& svd) {
  return approximate_inverse(std::make_shared<const TruncatedSVD>(svd));
}

SpectralOperator approximate_sqrt(const TruncatedSVD& svd) {
  return approximate_sqrt(std::make_shared<const TruncatedSVD>(svd));
}

}  // namespace enkf

#include <doctest.h>

#include <cstring>
#include <memory>
#include <random>

#include "enkf/errors.hpp"
#include "enkf/randsvd.hpp"
#include "oracles.hpp"

using namespace enkf;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd reconstruct(const TruncatedSVD& svd) {
  const MatrixXd& u = svd.vectors.matrix();
  return u * svd.values.asDiagonal() * u.transpose();
}

void check_invariants(const TruncatedSVD& svd) {
  for (Index i = 0; i < svd.rank(); ++i) {
    CHECK(svd.values[i] >= 0.0);
    if (i > 0) CHECK(svd.values[i] <= svd.values[i - 1]);
  }
  const MatrixXd& u = svd.vectors.matrix();
  const MatrixXd gram = u.transpose() * u - MatrixXd::Identity(svd.rank(), svd.rank());
  CHECK(gram.cwiseAbs().maxCoeff() <= 1e-10);
}

/// Q diag(values) Q^T with a random orthogonal Q.
MatrixXd with_spectrum(const VectorXd& values, std::mt19937_64& rng) {
  const Index n = values.size();
  const MatrixXd q = oracle::gaussian(n, n, rng).householderQr().householderQ();
  MatrixXd a = q * values.asDiagonal() * q.transpose();
  return 0.5 * (a + a.transpose());
}

}  // namespace

TEST_CASE("randomized_svd of the identity") {
  const TiledMatrix eye = TiledMatrix::from_dense(MatrixXd::Identity(12, 12), 5);
  const TruncatedSVD svd = randomized_svd(eye, 3);
  REQUIRE(svd.rank() == 3);
  CHECK((svd.values.array() - 1.0).abs().maxCoeff() <= 1e-12);
  check_invariants(svd);
}

TEST_CASE("randomized_svd of a rank-one matrix") {
  VectorXd v(6);
  v << 1, 1, 1, 1, 0, 0;
  const TiledMatrix a = TiledMatrix::from_dense(v * v.transpose(), 4);
  const TruncatedSVD svd = randomized_svd(a, 2);
  CHECK(svd.values[0] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(svd.values[1] <= 1e-10);
  check_invariants(svd);
}

TEST_CASE("full-rank randomized_svd matches a dense eigensolver") {
  std::mt19937_64 rng(21);
  const MatrixXd dense = oracle::random_psd(30, rng, 30, 0.1);
  const TruncatedSVD svd = randomized_svd(TiledMatrix::from_dense(dense, 8), 30);
  VectorXd expected = Eigen::SelfAdjointEigenSolver<MatrixXd>(dense).eigenvalues().reverse();
  CHECK(((svd.values - expected).array() / expected.array()).abs().maxCoeff() <= 1e-8);
  check_invariants(svd);
}

TEST_CASE("randomized_svd error bound with spectral decay") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 5; ++trial) {
    VectorXd values(80);
    for (Index i = 0; i < 80; ++i) values[i] = std::pow(0.8, static_cast<double>(i));
    const MatrixXd dense = with_spectrum(values, rng);
    const TruncatedSVD svd = randomized_svd(TiledMatrix::from_dense(dense, 32), 10, 10, 2, trial);
    const MatrixXd residual = dense - reconstruct(svd);
    const double norm2 = Eigen::SelfAdjointEigenSolver<MatrixXd>(residual).eigenvalues().cwiseAbs().maxCoeff();
    CHECK(norm2 <= 10.0 * values[10]);
    check_invariants(svd);
  }
}

TEST_CASE("randomized_svd is deterministic per seed") {
  std::mt19937_64 rng(23);
  const TiledMatrix a = TiledMatrix::from_dense(oracle::random_psd(40, rng, 10), 16);
  const TruncatedSVD first = randomized_svd(a, 6, 4, 1, 99);
  const TruncatedSVD second = randomized_svd(a, 6, 4, 1, 99);
  CHECK(std::memcmp(first.values.data(), second.values.data(), sizeof(double) * 6) == 0);
  const MatrixXd& u1 = first.vectors.matrix();
  const MatrixXd& u2 = second.vectors.matrix();
  CHECK(std::memcmp(u1.data(), u2.data(), sizeof(double) * static_cast<std::size_t>(u1.size())) == 0);
  const TruncatedSVD other = randomized_svd(a, 6, 0, 0, 100);
  CHECK(other.vectors.matrix() != u1);
}

TEST_CASE("increasing the rank never increases the Frobenius residual") {
  std::mt19937_64 rng(24);
  int violations = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXd dense = oracle::random_psd(25, rng, 25);
    const TiledMatrix a = TiledMatrix::from_dense(dense, 8);
    double previous = dense.norm();
    for (Index r : {2, 5, 10, 15, 25}) {
      const double err = (dense - reconstruct(randomized_svd(a, r, 10, 2, 7))).norm();
      if (err > previous * (1.0 + 1e-9) + 1e-12) ++violations;
      previous = err;
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("randomized_svd errors") {
  const TiledMatrix a = TiledMatrix::from_dense(MatrixXd::Identity(4, 4), 2);
  CHECK_THROWS_AS(randomized_svd(a, 5), InvalidArgument);
  CHECK_THROWS_AS(randomized_svd(a, 0), InvalidArgument);
  CHECK_THROWS_AS(randomized_svd(a, 2, -1), InvalidArgument);
  MatrixXd bad = MatrixXd::Identity(4, 4);
  bad(0, 1) = bad(1, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(randomized_svd(TiledMatrix::from_dense(bad, 2), 2), NumericalError);
}

TEST_CASE("negative Ritz values are clamped") {
  VectorXd values(3);
  values << 2.0, -0.5, 1.0;
  const TruncatedSVD svd = TruncatedSVD::from_eigenpairs(values, MatrixXd::Identity(3, 3), 3, 4);
  CHECK(svd.values == VectorXd((VectorXd(3) << 2.0, 1.0, 0.0).finished()));
  CHECK(svd.raw_min_value == -0.5);
}

TEST_CASE("approximate_inverse examples") {
  const TruncatedSVD eye = dense_eigenpairs(MatrixXd::Identity(5, 5));
  const VectorXd x = VectorXd::LinSpaced(5, -2.0, 2.0);
  CHECK((approximate_inverse(eye).apply(x) - x).cwiseAbs().maxCoeff() <= 1e-15);

  const TruncatedSVD two = dense_eigenpairs(2.0 * MatrixXd::Identity(2, 2));
  const VectorXd got = approximate_inverse(two).apply(VectorXd(VectorXd::Unit(2, 0)));
  CHECK(got[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::abs(got[1]) <= 1e-15);

  std::mt19937_64 rng(25);
  const MatrixXd dense = oracle::random_psd(10, rng, 10, 0.05);
  const TruncatedSVD svd = randomized_svd(TiledMatrix::from_dense(dense, 4), 10);
  const MatrixXd product = approximate_inverse(svd).apply(dense);
  CHECK((product - MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff() <= 1e-7);
  CHECK(oracle::rel_frobenius(product, MatrixXd::Identity(10, 10)) <= 1e-6);

  CHECK_THROWS_AS(approximate_inverse(svd, 0.0), InvalidArgument);
  CHECK_THROWS_AS(approximate_inverse(svd, -1.0), InvalidArgument);
}

TEST_CASE("approximate_inverse floors small eigenvalues") {
  VectorXd values(2);
  values << 1.0, 0.0;
  const auto svd = std::make_shared<const TruncatedSVD>(
      TruncatedSVD::from_eigenpairs(values, MatrixXd::Identity(2, 2), 2, 2));
  CHECK(default_inverse_floor(*svd) == 1e-12);
  const SpectralOperator inv = approximate_inverse(svd);
  CHECK(inv.weights()[1] == doctest::Approx(1e12));
  for (Index j = 0; j < 2; ++j) CHECK(inv.apply(VectorXd(VectorXd::Unit(2, j))).allFinite());
}

TEST_CASE("approximate_sqrt examples") {
  const TruncatedSVD eye = dense_eigenpairs(MatrixXd::Identity(4, 4));
  const VectorXd x = VectorXd::LinSpaced(4, 1.0, 4.0);
  CHECK((approximate_sqrt(eye).apply(x) - x).cwiseAbs().maxCoeff() <= 1e-15);

  MatrixXd d = MatrixXd::Zero(2, 2);
  d(0, 0) = 4.0;
  d(1, 1) = 9.0;
  const SpectralOperator root = approximate_sqrt(dense_eigenpairs(d));
  CHECK((root.apply(VectorXd(VectorXd::Unit(2, 0))) - 2.0 * VectorXd::Unit(2, 0)).norm() <= 1e-14);
  CHECK((root.apply(VectorXd(VectorXd::Unit(2, 1))) - 3.0 * VectorXd::Unit(2, 1)).norm() <= 1e-14);

  std::mt19937_64 rng(26);
  const MatrixXd dense = oracle::random_psd(10, rng, 10);
  const TruncatedSVD svd = randomized_svd(TiledMatrix::from_dense(dense, 4), 10);
  const SpectralOperator s = approximate_sqrt(svd);
  const MatrixXd twice = s.apply(s.apply(MatrixXd(MatrixXd::Identity(10, 10))));
  CHECK((twice - dense).cwiseAbs().maxCoeff() <= 1e-7);
  CHECK(oracle::rel_frobenius(twice, dense) <= 1e-6);
  CHECK(oracle::rel_frobenius(s.apply(MatrixXd(MatrixXd::Identity(10, 10))), oracle::sym_sqrt(dense)) <= 1e-7);
}

TEST_CASE("inverse square root composes to the inverse") {
  std::mt19937_64 rng(27);
  const MatrixXd dense = oracle::random_psd(12, rng, 12, 0.1);
  const auto svd = std::make_shared<const TruncatedSVD>(dense_eigenpairs(dense, 5));
  const SpectralOperator half = approximate_inverse_sqrt(svd);
  const MatrixXd eye = MatrixXd::Identity(12, 12);
  const MatrixXd product = half.apply(half.apply(dense));
  CHECK(oracle::rel_frobenius(product, eye) <= 1e-10);
}

TEST_CASE("spectral operators act on tall matrices panel-consistently") {
  std::mt19937_64 rng(28);
  const MatrixXd dense = oracle::random_psd(9, rng, 9, 0.1);
  const SpectralOperator inv = approximate_inverse(dense_eigenpairs(dense, 4));
  const MatrixXd x = oracle::gaussian(9, 3, rng);
  const TallMatrix got = inv.apply(TallMatrix(x, 4));
  CHECK(got.panel_rows() == 4);
  CHECK((got.matrix() - inv.apply(x)).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK_THROWS_AS(inv.apply(MatrixXd(MatrixXd::Zero(8, 2))), InvalidArgument);
}

#include <doctest.h>

#include <cstring>
#include <limits>
#include <random>
#include <vector>

#include "enkf/errors.hpp"
#include "enkf/parallel.hpp"
#include "enkf/tiled_matrix.hpp"
#include "oracles.hpp"

using namespace enkf;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_symmetric(Index n, std::mt19937_64& rng) {
  const MatrixXd a = oracle::gaussian(n, n, rng);
  return 0.5 * (a + a.transpose());
}

bool exactly_symmetric(const TiledMatrix& a) {
  for (Index i = 0; i < a.dim(); ++i)
    for (Index j = 0; j < a.dim(); ++j)
      if (a(i, j) != a(j, i)) return false;
  return true;
}

}  // namespace

TEST_CASE("tile grid covers the matrix with truncated edge tiles") {
  const TiledMatrix a(10, 4);
  CHECK(a.block_count() == 3);
  CHECK(a.stored_tile_count() == 6);
  CHECK(a.block_extent(0) == 4);
  CHECK(a.block_extent(2) == 2);
  CHECK(a.tile(0, 2).rows() == 4);
  CHECK(a.tile(0, 2).cols() == 2);
  CHECK(a.tile(2, 2).rows() == 2);
  for (const auto& [bi, bj] : a.stored_blocks()) CHECK(bi <= bj);
}

TEST_CASE("from_dense round trip reads lower entries from the stored transpose") {
  std::mt19937_64 rng(1);
  const MatrixXd dense = random_symmetric(9, rng);
  for (Index tile : {1, 2, 4, 9, 20}) {
    const TiledMatrix a = TiledMatrix::from_dense(dense, tile);
    CHECK(a.to_dense() == dense);
    CHECK(exactly_symmetric(a));
  }
}

TEST_CASE("empirical_covariance of two opposite members") {
  MatrixXd members(2, 2);
  members << 1, -1, 0, 0;
  const MatrixXd cov = empirical_covariance(Ensemble(members), 1).to_dense();
  MatrixXd expected(2, 2);
  expected << 2, 0, 0, 0;
  CHECK(cov == expected);
}

TEST_CASE("empirical_covariance of identical members is zero") {
  const VectorXd v = VectorXd::LinSpaced(5, -1.0, 3.0);
  const MatrixXd members = v.replicate(1, 6);
  CHECK(empirical_covariance(Ensemble(members), 2).to_dense().isZero(0.0));
}

TEST_CASE("empirical_covariance matches the two-loop oracle") {
  std::mt19937_64 rng(7);
  const MatrixXd members = oracle::gaussian(4, 5, rng);
  const MatrixXd expected = oracle::covariance(members);
  for (Index tile : {1, 3, 4}) {
    const TiledMatrix cov = empirical_covariance(Ensemble(members), tile);
    CHECK((cov.to_dense() - expected).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(exactly_symmetric(cov));
  }
}

TEST_CASE("empirical_covariance times ones matches the deviation sum") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Index m = 3 + trial, p = 2 + trial % 5;
    const MatrixXd members = oracle::gaussian(m, p, rng);
    const Ensemble ens(members);
    const VectorXd ones = VectorXd::Ones(m);
    VectorXd expected = VectorXd::Zero(m);
    for (Index i = 0; i < p; ++i)
      expected += ens.deviations().col(i) * ens.deviations().col(i).dot(ones);
    expected /= static_cast<double>(p - 1);
    const VectorXd got = empirical_covariance(ens, 4).to_dense() * ones;
    CHECK((got - expected).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("empirical_covariance errors") {
  CHECK_THROWS_WITH_AS(empirical_covariance(Ensemble(MatrixXd::Ones(3, 1))),
                       doctest::Contains("degenerate ensemble"), InvalidArgument);
  MatrixXd bad = MatrixXd::Ones(3, 2);
  bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(Ensemble{bad}, NumericalError);
}

TEST_CASE("schur_product identities") {
  std::mt19937_64 rng(3);
  const MatrixXd dense = random_symmetric(7, rng);
  const TiledMatrix a = TiledMatrix::from_dense(dense, 3);

  const TiledMatrix ones = TiledMatrix::from_dense(MatrixXd::Ones(7, 7), 3);
  CHECK(schur_product(a, ones).to_dense() == dense);

  const TiledMatrix eye = TiledMatrix::from_dense(MatrixXd::Identity(7, 7), 3);
  const MatrixXd diag = schur_product(a, eye).to_dense();
  CHECK(diag == MatrixXd(dense.diagonal().asDiagonal()));
}

TEST_CASE("schur_product re-tiles when tile sizes differ") {
  std::mt19937_64 rng(4);
  const MatrixXd x = random_symmetric(11, rng), y = random_symmetric(11, rng);
  const TiledMatrix product =
      schur_product(TiledMatrix::from_dense(x, 4), TiledMatrix::from_dense(y, 3));
  CHECK(product.tile_size() == 4);
  CHECK(product.to_dense() == x.cwiseProduct(y));
  CHECK(exactly_symmetric(product));
}

TEST_CASE("schur_product of PSD matrices stays PSD") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXd x = oracle::random_psd(6, rng, 3), y = oracle::random_psd(6, rng, 2);
    const MatrixXd product =
        schur_product(TiledMatrix::from_dense(x, 4), TiledMatrix::from_dense(y, 4)).to_dense();
    CHECK(oracle::min_eigenvalue(product) >= -1e-10);
  }
}

TEST_CASE("schur_product rejects mismatched dimensions") {
  CHECK_THROWS_AS(schur_product(TiledMatrix(4, 2), TiledMatrix(5, 2)), InvalidArgument);
}

TEST_CASE("extract_columns") {
  const TiledMatrix eye = TiledMatrix::from_dense(MatrixXd::Identity(5, 5), 2);
  const std::vector<Index> two{2};
  CHECK(extract_columns(eye, two).matrix() == VectorXd::Unit(5, 2));

  const TallMatrix none = extract_columns(eye, {});
  CHECK(none.rows() == 5);
  CHECK(none.cols() == 0);

  std::mt19937_64 rng(8);
  const MatrixXd dense = random_symmetric(8, rng);
  const TiledMatrix a = TiledMatrix::from_dense(dense, 3);
  const std::vector<Index> idx{1, 5, 1};
  const MatrixXd cols = extract_columns(a, idx).matrix();
  for (std::size_t k = 0; k < idx.size(); ++k) CHECK(cols.col(static_cast<Index>(k)) == dense.col(idx[k]));

  const std::vector<Index> bad{8};
  CHECK_THROWS_AS(extract_columns(a, bad), InvalidArgument);
}

TEST_CASE("multiply_tall examples") {
  std::mt19937_64 rng(9);
  const MatrixXd x = oracle::gaussian(7, 3, rng);
  const TiledMatrix eye = TiledMatrix::from_dense(MatrixXd::Identity(7, 7), 3);
  CHECK(multiply_tall(eye, TallMatrix(x, 3)).matrix() == x);

  const MatrixXd dense = random_symmetric(7, rng);
  const TiledMatrix a = TiledMatrix::from_dense(dense, 3);
  CHECK(multiply_tall(a, TallMatrix(MatrixXd::Zero(7, 3), 3)).matrix().isZero(0.0));

  const MatrixXd expected = oracle::matmul(dense, x);
  for (Index tile : {1, 2, 3, 7, 16}) {
    const MatrixXd got =
        multiply_tall(TiledMatrix::from_dense(dense, tile), TallMatrix(x, tile)).matrix();
    CHECK((got - expected).cwiseAbs().maxCoeff() <= 1e-13);
  }

  CHECK_THROWS_AS(multiply_tall(a, TallMatrix(MatrixXd::Zero(6, 2), 3)), InvalidArgument);
}

TEST_CASE("multiply_tall is bitwise identical across thread counts") {
  std::mt19937_64 rng(10);
  const MatrixXd dense = random_symmetric(150, rng);
  const TiledMatrix a = TiledMatrix::from_dense(dense, 16);
  const TallMatrix x(oracle::gaussian(150, 5, rng), 16);
  const int saved = num_threads();
  set_num_threads(1);
  const MatrixXd one = multiply_tall(a, x).matrix();
  set_num_threads(4);
  const MatrixXd four = multiply_tall(a, x).matrix();
  set_num_threads(saved);
  CHECK(std::memcmp(one.data(), four.data(), sizeof(double) * static_cast<std::size_t>(one.size())) == 0);
}

TEST_CASE("covariance and localization keep live tiles bounded") {
  std::mt19937_64 rng(12);
  const Index m = 200, tile = 16;
  const Ensemble ens(oracle::gaussian(m, 10, rng));
  const TiledMatrix rho = TiledMatrix::from_dense(MatrixXd::Ones(m, m), tile);
  const std::int64_t baseline = tile_stats::live();
  tile_stats::reset_peak();

  TiledMatrix localized = schur_product(empirical_covariance(ens, tile), rho);
  const std::int64_t blocks = localized.stored_tile_count();
  CHECK(tile_stats::peak() - baseline <= blocks + 4);
  CHECK(tile_stats::live() - baseline == blocks);
}

TEST_CASE("TallMatrix panels partition the rows") {
  TallMatrix t(MatrixXd::Zero(10, 2), 4);
  CHECK(t.panel_count() == 3);
  CHECK(t.panel_extent(0) == 4);
  CHECK(t.panel_extent(2) == 2);
  t.panel(2).setOnes();
  CHECK(t.matrix().bottomRows(2).isOnes(0.0));
  CHECK(t.matrix().topRows(8).isZero(0.0));
}

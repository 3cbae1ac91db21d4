#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "enkf/errors.hpp"
#include "enkf/metrics.hpp"
#include "oracles.hpp"

using namespace enkf;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd vec(std::initializer_list<double> values) {
  VectorXd out(static_cast<Index>(values.size()));
  Index i = 0;
  for (double v : values) out[i++] = v;
  return out;
}

double skill(const VectorXd& f, const VectorXd& r, const VectorXd& b) {
  const std::vector<StateVector> fs{f}, rs{r}, bs{b};
  return rmse_skill_score(fs, rs, bs);
}

}  // namespace

TEST_CASE("rmse examples") {
  const VectorXd r = vec({1.0, -2.0, 0.5});
  CHECK(rmse(r, r) == 0.0);
  CHECK(rmse(r.array() + 0.25, r) == 0.25);
  CHECK(rmse(r.array() - 3.0, r) == 3.0);
  CHECK(rmse(vec({0, 0}), vec({3, 4})) == std::sqrt(12.5));
  CHECK_THROWS_AS(rmse(vec({1}), vec({1, 2})), InvalidArgument);
}

TEST_CASE("rmse is a scaled metric") {
  std::mt19937_64 rng(71);
  for (int i = 0; i < 200; ++i) {
    const VectorXd a = oracle::gaussian(9, 1, rng), b = oracle::gaussian(9, 1, rng),
                   c = oracle::gaussian(9, 1, rng);
    CHECK(rmse(a, b) >= 0.0);
    CHECK(rmse(a, b) == rmse(b, a));
    CHECK(rmse(a, c) <= rmse(a, b) + rmse(b, c) + 1e-15);
    CHECK(rmse(a, b) == doctest::Approx((a - b).norm() / 3.0).epsilon(1e-14));
  }
}

TEST_CASE("rmse skill score examples") {
  const VectorXd r = vec({1.0, 2.0}), b = vec({3.0, -1.0});
  CHECK(skill(r, r, b) == 1.0);
  CHECK(skill(b, r, b) == 0.0);
  CHECK(skill(vec({1.0, 0.0}), vec({0.0, 0.0}), vec({2.0, 0.0})) == 0.75);
  CHECK_THROWS_AS(skill(b, r, r), InvalidArgument);
}

TEST_CASE("rmse skill score sums errors over time before dividing") {
  const std::vector<StateVector> f{vec({1.0}), vec({0.0})};
  const std::vector<StateVector> r{vec({0.0}), vec({0.0})};
  const std::vector<StateVector> b{vec({1.0}), vec({3.0})};
  CHECK(rmse_skill_score(f, r, b) == doctest::Approx(1.0 - 1.0 / 10.0).epsilon(1e-15));
  const std::vector<StateVector> short_b{vec({1.0})};
  CHECK_THROWS_AS(rmse_skill_score(f, r, short_b), InvalidArgument);
}

TEST_CASE("rmse skill score is monotone in the forecast error") {
  std::mt19937_64 rng(72);
  for (int i = 0; i < 200; ++i) {
    const VectorXd r = oracle::gaussian(5, 1, rng), b = oracle::gaussian(5, 1, rng);
    const VectorXd f1 = oracle::gaussian(5, 1, rng), f2 = oracle::gaussian(5, 1, rng);
    const double e1 = (f1 - r).squaredNorm(), e2 = (f2 - r).squaredNorm();
    const double s1 = skill(f1, r, b), s2 = skill(f2, r, b);
    CHECK(s1 <= 1.0);
    CHECK((s1 > s2) == (e1 < e2));
  }
}

TEST_CASE("energy score examples") {
  const VectorXd r = vec({0.5, -1.0});
  CHECK(energy_score(Ensemble(MatrixXd(r)), r) == 0.0);
  const VectorXd x = vec({3.5, 3.0});
  CHECK(energy_score(Ensemble(MatrixXd(x)), r) == 5.0);

  MatrixXd pair(1, 2);
  pair << 0.0, 2.0;
  CHECK(energy_score(Ensemble(pair), vec({1.0})) == 0.5);
  CHECK_THROWS_AS(energy_score(Ensemble(pair), vec({1.0, 2.0})), InvalidArgument);
}

TEST_CASE("energy score is non-negative and invariant to permutation and translation") {
  std::mt19937_64 rng(73);
  for (int i = 0; i < 50; ++i) {
    MatrixXd members = oracle::gaussian(6, 1 + i % 9, rng);
    const VectorXd r = oracle::gaussian(6, 1, rng);
    const double score = energy_score(Ensemble(members), r);
    CHECK(score >= 0.0);

    std::vector<Index> perm(static_cast<std::size_t>(members.cols()));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    MatrixXd permuted(members.rows(), members.cols());
    for (Index k = 0; k < members.cols(); ++k) permuted.col(k) = members.col(perm[static_cast<std::size_t>(k)]);
    CHECK(energy_score(Ensemble(permuted), r) == doctest::Approx(score).epsilon(1e-12));

    const VectorXd shift = oracle::gaussian(6, 1, rng) * 10.0;
    MatrixXd moved = members.colwise() + shift;
    CHECK(energy_score(Ensemble(moved), r + shift) == doctest::Approx(score).epsilon(1e-10));
  }
}

TEST_CASE("energy score matches the pairwise definition") {
  std::mt19937_64 rng(74);
  const MatrixXd members = oracle::gaussian(4, 7, rng);
  const VectorXd r = oracle::gaussian(4, 1, rng);
  double first = 0.0, second = 0.0;
  for (Index i = 0; i < 7; ++i) {
    first += (members.col(i) - r).norm();
    for (Index j = 0; j < 7; ++j) second += (members.col(i) - members.col(j)).norm();
  }
  CHECK(energy_score(Ensemble(members), r) == doctest::Approx(first / 7.0 - second / 98.0).epsilon(1e-14));
}

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "enkf/ensemble.hpp"

namespace enkf {

/// sqrt(mean((prediction - reference)^2)).
double rmse(const StateVector& prediction, const StateVector& reference);

/// 1 - sum_t |f_t - r_t|^2 / sum_t |b_t - r_t|^2, squared errors summed over
/// all time steps before dividing.
double rmse_skill_score(std::span<const StateVector> forecasts,
                        std::span<const StateVector> references,
                        std::span<const StateVector> backgrounds);

/// Energy score with the Euclidean norm:
/// (1/p) sum_i |x_i - r| - (1/(2 p^2)) sum_i sum_j |x_i - x_j|. Lower is better.
double energy_score(const Ensemble& ensemble, const StateVector& reference);

struct ScoreRecord {
  std::string experiment;
  std::string scheme;
  std::int64_t repetition = 0;
  std::int64_t permutation = -1;
  double sigma_eps = 0.0;
  std::int64_t state_dim = 0;
  double rmse = 0.0;
  double rmse_skill = 0.0;
  double energy_score = 0.0;
  double wall_time_s = 0.0;
  std::int64_t peak_mem_bytes = 0;
  std::string input_hash;
};

using ScoreReport = std::vector<ScoreRecord>;

}  // namespace enkf

#include "enkf/metrics.hpp"

#include <cmath>

#include "enkf/errors.hpp"

namespace enkf {

double rmse(const StateVector& prediction, const StateVector& reference) {
  if (prediction.size() != reference.size())
    throw InvalidArgument("rmse: prediction and reference differ in length");
  if (prediction.size() == 0) throw InvalidArgument("rmse: empty state");
  return std::sqrt((prediction - reference).squaredNorm() / static_cast<double>(prediction.size()));
}

double rmse_skill_score(std::span<const StateVector> forecasts,
                        std::span<const StateVector> references,
                        std::span<const StateVector> backgrounds) {
  if (forecasts.size() != references.size() || backgrounds.size() != references.size())
    throw InvalidArgument("rmse_skill_score: time series differ in length");
  double forecast_err = 0.0;
  double background_err = 0.0;
  for (std::size_t t = 0; t < references.size(); ++t) {
    if (forecasts[t].size() != references[t].size() || backgrounds[t].size() != references[t].size())
      throw InvalidArgument("rmse_skill_score: state lengths differ");
    forecast_err += (forecasts[t] - references[t]).squaredNorm();
    background_err += (backgrounds[t] - references[t]).squaredNorm();
  }
  if (!(background_err > 0.0))
    throw InvalidArgument("rmse_skill_score: background equals reference (zero denominator)");
  return 1.0 - forecast_err / background_err;
}

double energy_score(const Ensemble& ensemble, const StateVector& reference) {
  if (ensemble.dim() != reference.size())
    throw InvalidArgument("energy_score: ensemble and reference differ in length");
  const auto& x = ensemble.members();
  const Index p = ensemble.size();
  double to_reference = 0.0;
  for (Index i = 0; i < p; ++i) to_reference += (x.col(i) - reference).norm();
  // Each unordered pair appears twice in the double sum.
  double pairwise = 0.0;
  for (Index i = 0; i < p; ++i)
    for (Index j = i + 1; j < p; ++j) pairwise += (x.col(i) - x.col(j)).norm();
  const double pd = static_cast<double>(p);
  return to_reference / pd - (2.0 * pairwise) / (2.0 * pd * pd);
}

}  // namespace enkf

#include "enkf/ensemble.hpp"

#include <utility>

#include "enkf/errors.hpp"

namespace enkf {

namespace {

void recenter(Eigen::MatrixXd& deviations) {
  const Eigen::VectorXd drift = deviations.rowwise().mean();
  deviations.colwise() -= drift;
}

}  // namespace

Ensemble::Ensemble(Eigen::MatrixXd members) : members_(std::move(members)) {
  if (members_.rows() < 1 || members_.cols() < 1)
    throw InvalidArgument("ensemble needs at least one member of positive dimension");
  if (!members_.allFinite()) throw NumericalError("ensemble member has non-finite entries");
  mean_ = members_.rowwise().mean();
  deviations_ = members_.colwise() - mean_;
  recenter(deviations_);
}

Ensemble Ensemble::from_mean_and_deviations(Eigen::VectorXd mean, Eigen::MatrixXd deviations) {
  if (mean.size() != deviations.rows() || deviations.cols() < 1)
    throw InvalidArgument("mean and deviations have inconsistent shapes");
  if (!mean.allFinite() || !deviations.allFinite())
    throw NumericalError("ensemble update produced non-finite values");
  Ensemble out;
  recenter(deviations);
  out.members_ = deviations.colwise() + mean;
  out.mean_ = std::move(mean);
  out.deviations_ = std::move(deviations);
  return out;
}

}  // namespace enkf

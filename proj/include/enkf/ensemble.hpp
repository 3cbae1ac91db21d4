#pragma once

#include <Eigen/Dense>

namespace enkf {

using Index = Eigen::Index;

/// Field values on the grid; one entry per state component.
using StateVector = Eigen::VectorXd;

/// A p-member Monte-Carlo representation of the state distribution.
///
/// Members are stored column-wise (m x p). The mean and the deviations
/// psi'_i = psi_i - mean are cached at construction, and the deviations are
/// re-centered so that they sum to zero up to rounding.
class Ensemble {
 public:
  explicit Ensemble(Eigen::MatrixXd members);

  /// Rebuilds members as mean + deviations after re-centering the deviations.
  static Ensemble from_mean_and_deviations(Eigen::VectorXd mean, Eigen::MatrixXd deviations);

  Index dim() const { return members_.rows(); }
  Index size() const { return members_.cols(); }

  const Eigen::MatrixXd& members() const { return members_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& deviations() const { return deviations_; }

  StateVector member(Index i) const { return members_.col(i); }

 private:
  Ensemble() = default;

  Eigen::MatrixXd members_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd deviations_;
};

}  // namespace enkf

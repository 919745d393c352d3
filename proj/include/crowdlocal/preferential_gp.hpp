#pragma once

#include <Eigen/Core>
#include <Eigen/LU>

#include <cstddef>
#include <vector>

namespace crowdlocal {

struct PreferenceModelParams {
  double signal_variance = 2.0;
  double length_scale = 0.4;
  /// Temperature of the pairwise logistic preference likelihood.
  double preference_scale = 0.003;
  double jitter = 1e-6;
  int newton_iterations = 100;
};

struct Preference {
  std::size_t winner;
  std::size_t loser;
};

/// Gaussian-process goodness model fitted to pairwise preferences: goodness
/// values are the MAP estimate under a logistic (Bradley-Terry) likelihood,
/// and the predictive variance uses the Laplace approximation.
class PreferentialGp {
 public:
  /// points: n x D, one row per distinct observed point.
  PreferentialGp(Eigen::MatrixXd points, std::vector<Preference> preferences, PreferenceModelParams params = {});

  double mean(const Eigen::VectorXd& x) const;
  double variance(const Eigen::VectorXd& x) const;
  double expected_improvement(const Eigen::VectorXd& x, double best) const;

  /// MAP goodness at the observed points.
  const Eigen::VectorXd& goodness() const { return goodness_; }
  double best_observed_mean() const;
  const Eigen::MatrixXd& points() const { return points_; }

 private:
  double kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
  Eigen::VectorXd kernel_vector(const Eigen::VectorXd& x) const;
  double log_posterior(const Eigen::VectorXd& f, const Eigen::VectorXd& a) const;
  void fit();

  Eigen::MatrixXd points_;
  std::vector<Preference> prefs_;
  PreferenceModelParams params_;
  Eigen::MatrixXd gram_;
  Eigen::VectorXd goodness_;
  Eigen::VectorXd weights_;          // K^{-1} f at the MAP
  Eigen::MatrixXd variance_factor_;  // (I + H K)^{-1} H
};

}  // namespace crowdlocal

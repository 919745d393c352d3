#include "crowdlocal/preferential_gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace crowdlocal {
namespace {

double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }
double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

PreferentialGp::PreferentialGp(Eigen::MatrixXd points, std::vector<Preference> preferences,
                               PreferenceModelParams params)
    : points_(std::move(points)), prefs_(std::move(preferences)), params_(params) {
  if (points_.rows() == 0) throw std::invalid_argument("PreferentialGp: no points");
  for (const auto& p : prefs_) {
    if (p.winner >= std::size_t(points_.rows()) || p.loser >= std::size_t(points_.rows()) || p.winner == p.loser) {
      throw std::invalid_argument("PreferentialGp: invalid preference");
    }
  }
  fit();
}

double PreferentialGp::kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
  return params_.signal_variance *
         std::exp(-(a - b).squaredNorm() / (2.0 * params_.length_scale * params_.length_scale));
}

Eigen::VectorXd PreferentialGp::kernel_vector(const Eigen::VectorXd& x) const {
  Eigen::VectorXd k(points_.rows());
  for (Eigen::Index i = 0; i < points_.rows(); ++i) k[i] = kernel(points_.row(i).transpose(), x);
  return k;
}

double PreferentialGp::log_posterior(const Eigen::VectorXd& f, const Eigen::VectorXd& a) const {
  double ll = 0.0;
  for (const auto& p : prefs_) ll += log_sigmoid((f[Eigen::Index(p.winner)] - f[Eigen::Index(p.loser)]) / params_.preference_scale);
  return ll - 0.5 * a.dot(f);
}

void PreferentialGp::fit() {
  const Eigen::Index n = points_.rows();
  gram_.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) gram_(i, j) = kernel(points_.row(i).transpose(), points_.row(j).transpose());
  }
  gram_.diagonal().array() += params_.jitter;

  const double beta = params_.preference_scale;
  Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd hess(n, n);
  Eigen::VectorXd grad(n);
  auto derivatives = [&](const Eigen::VectorXd& ff) {
    hess.setZero();
    grad.setZero();
    for (const auto& p : prefs_) {
      const auto w = Eigen::Index(p.winner), l = Eigen::Index(p.loser);
      const double s = sigmoid((ff[w] - ff[l]) / beta);
      grad[w] += (1.0 - s) / beta;
      grad[l] -= (1.0 - s) / beta;
      const double h = s * (1.0 - s) / (beta * beta);
      hess(w, w) += h;
      hess(l, l) += h;
      hess(w, l) -= h;
      hess(l, w) -= h;
    }
  };

  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n, n);
  double objective = log_posterior(f, a);
  for (int it = 0; it < params_.newton_iterations; ++it) {
    derivatives(f);
    const Eigen::VectorXd b = hess * f + grad;
    const Eigen::VectorXd a_newton = (identity + hess * gram_).partialPivLu().solve(b);
    // Damped step in the K^{-1} f parameterization.
    double step = 1.0;
    Eigen::VectorXd a_next, f_next;
    double next_objective = objective;
    for (int halving = 0; halving < 30; ++halving) {
      a_next = a + step * (a_newton - a);
      f_next = gram_ * a_next;
      next_objective = log_posterior(f_next, a_next);
      if (next_objective >= objective - 1e-12) break;
      step *= 0.5;
    }
    const double change = (f_next - f).cwiseAbs().maxCoeff();
    a = a_next;
    f = f_next;
    objective = next_objective;
    if (change < 1e-10) break;
  }

  derivatives(f);
  goodness_ = f;
  weights_ = a;
  variance_factor_ = (identity + hess * gram_).partialPivLu().solve(hess);
}

double PreferentialGp::mean(const Eigen::VectorXd& x) const { return kernel_vector(x).dot(weights_); }

double PreferentialGp::variance(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd k = kernel_vector(x);
  return std::max(params_.signal_variance - k.dot(variance_factor_ * k), 1e-12);
}

double PreferentialGp::expected_improvement(const Eigen::VectorXd& x, double best) const {
  const Eigen::VectorXd k = kernel_vector(x);
  const double mu = k.dot(weights_);
  const double sigma = std::sqrt(std::max(params_.signal_variance - k.dot(variance_factor_ * k), 1e-12));
  const double z = (mu - best) / sigma;
  return (mu - best) * normal_cdf(z) + sigma * normal_pdf(z);
}

double PreferentialGp::best_observed_mean() const {
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < points_.rows(); ++i) best = std::max(best, mean(points_.row(i).transpose()));
  return best;
}

}  // namespace crowdlocal

#pragma once

// Label-free key-pixel selection. Nothing in this header accepts edit
// parameters: every score is a function of pixel features alone.

#include "crowdlocal/gpr.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace crowdlocal {

enum class Strategy { emoc, variance, greedy_distance, random };

struct SelectionStrategy {
  Strategy kind = Strategy::emoc;
  std::uint64_t seed = 0;
};

std::string to_string(Strategy s);
/// Throws ConfigError for unknown names.
Strategy parse_strategy(std::string_view name);

/// Cost limits for large images.
struct SelectionLimits {
  Eigen::Index candidate_pool = 16384;
  Eigen::Index evaluation_grid = 4096;
};

/// All pixels when N <= limit, otherwise a regular lattice of at most `limit` pixels.
std::vector<Eigen::Index> evaluation_grid(int width, int height, Eigen::Index limit);

/// All pixels when N <= limit, otherwise one seeded pick per equal-size stratum of the index range.
std::vector<Eigen::Index> candidate_pool(Eigen::Index n_pixels, Eigen::Index limit, std::uint64_t seed);

namespace detail {

/// GP posterior over the currently selected points (labels never needed).
template <typename Scalar>
class SelectedSet {
 public:
  SelectedSet(const MatrixX<Scalar>& scaled_points, const KeyPixels& selected, const KernelConfig<Scalar>& cfg)
      : cfg_(cfg), points_(gather_rows(scaled_points, selected)) {
    if (points_.rows() > 0) {
      MatrixX<Scalar> gram = cross_kernel(points_, points_, cfg.length_scale);
      gram.diagonal().array() += cfg.regularizer;
      llt_ = factorize_gram(gram);
    }
  }

  Eigen::Index size() const { return points_.rows(); }
  const MatrixX<Scalar>& points() const { return points_; }

  /// K^{-1} k_q for a scaled query point (empty when nothing is selected).
  template <typename Derived>
  VectorX<Scalar> solve_k(const Eigen::MatrixBase<Derived>& q, VectorX<Scalar>& kq) const {
    kq = kernel_column(points_, q);
    if (size() == 0) return VectorX<Scalar>();
    return llt_->solve(kq);
  }

  /// kappa(q,q) + r - k_q^T K^{-1} k_q.
  template <typename Derived>
  Scalar variance(const Eigen::MatrixBase<Derived>& q) const {
    VectorX<Scalar> kq;
    const VectorX<Scalar> a = solve_k(q, kq);
    const Scalar prior = Scalar(1) + cfg_.regularizer;
    return size() == 0 ? prior : prior - kq.dot(a);
  }

  /// Kernel vector between the rows of `pts` and one scaled point.
  template <typename Derived>
  VectorX<Scalar> kernel_column(const MatrixX<Scalar>& pts, const Eigen::MatrixBase<Derived>& q) const {
    Eigen::Array<Scalar, Eigen::Dynamic, 1> d2 = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(pts.rows());
    for (Eigen::Index c = 0; c < pts.cols(); ++c) d2 += (pts.col(c).array() - q(c)).square();
    return (d2.sqrt() * (Scalar(-1) / cfg_.length_scale)).exp().matrix();
  }

  const KernelConfig<Scalar>& config() const { return cfg_; }

 private:
  KernelConfig<Scalar> cfg_;
  MatrixX<Scalar> points_;
  std::optional<Eigen::LLT<MatrixX<Scalar>>> llt_;
};

/// Closed-form EMOC of one scaled candidate against precomputed evaluation data.
///   delta mu(x_n) = (kappa(x_n, q) - k_n^T K^{-1} k_q) / sigma^2(q) * (y - mu(q)),
///   E|y - mu(q)| = sqrt(2/pi) sigma(q),
/// so EMOC(q) = sqrt(2/pi) * mean_n |kappa(x_n,q) - k_n^T K^{-1} k_q| / sigma(q).
template <typename Scalar, typename Derived>
Scalar emoc_closed_form(const SelectedSet<Scalar>& set, const MatrixX<Scalar>& eval_points,
                        const MatrixX<Scalar>& eval_cross, const Eigen::MatrixBase<Derived>& q) {
  VectorX<Scalar> kq;
  const VectorX<Scalar> a = set.solve_k(q, kq);
  const Scalar prior = Scalar(1) + set.config().regularizer;
  const Scalar var = set.size() == 0 ? prior : prior - kq.dot(a);
  if (!(var > Scalar(1e-12))) return Scalar(0);
  VectorX<Scalar> change = set.kernel_column(eval_points, q);
  if (set.size() > 0) change.noalias() -= eval_cross * a;
  const Scalar mean_abs = change.cwiseAbs().mean();
  return std::sqrt(Scalar(2) / std::numbers::pi_v<Scalar>) * mean_abs / std::sqrt(var);
}

}  // namespace detail

/// sigma^2(x) = kappa(x,x) + r - k_x^T K^{-1} k_x for a raw feature point; 1 + r when nothing is selected.
template <typename Scalar, typename Derived>
Scalar predictive_variance(const Eigen::MatrixBase<Derived>& x, const KeyPixels& selected,
                           const PixelFeatures<Scalar>& features, const KernelConfig<Scalar>& cfg) {
  validate(selected, features.size());
  const detail::SelectedSet<Scalar> set(features.scaled(), selected, cfg);
  const VectorX<Scalar> q = x.cwiseProduct(features.scales);
  return set.variance(q);
}

/// Expected mean absolute change of the GP prediction over the evaluation
/// grid if `candidate` were added with a label drawn from the predictive distribution.
template <typename Scalar>
Scalar emoc_score(Eigen::Index candidate, const KeyPixels& selected, const PixelFeatures<Scalar>& features,
                  const KernelConfig<Scalar>& cfg, const SelectionLimits& limits = {}) {
  validate(selected, features.size());
  if (candidate < 0 || candidate >= features.size()) throw std::out_of_range("emoc_score: candidate out of range");
  if (selected.contains(candidate)) throw std::invalid_argument("emoc_score: candidate already selected");
  const MatrixX<Scalar> pts = features.scaled();
  const detail::SelectedSet<Scalar> set(pts, selected, cfg);
  KeyPixels grid{evaluation_grid(features.width, features.height, limits.evaluation_grid)};
  const MatrixX<Scalar> eval = gather_rows(pts, grid);
  const MatrixX<Scalar> cross = set.size() > 0 ? cross_kernel(eval, set.points(), cfg.length_scale) : MatrixX<Scalar>();
  return detail::emoc_closed_form(set, eval, cross, pts.row(candidate).transpose());
}

namespace detail {

template <typename Scalar>
Eigen::Index argmax_lowest(const std::vector<Eigen::Index>& candidates, const KeyPixels& selected,
                           const std::function<Scalar(Eigen::Index)>& score) {
  Eigen::Index best = -1;
  Scalar best_score = -std::numeric_limits<Scalar>::infinity();
  for (auto n : candidates) {
    if (selected.contains(n)) continue;
    const Scalar s = score(n);
    if (s > best_score || best < 0) {
      best = n;
      best_score = s;
    }
  }
  return best;
}

}  // namespace detail

/// Greedy sequential selection of L key pixels; ties go to the lowest pixel index.
template <typename Scalar>
KeyPixels select_key_pixels(const PixelFeatures<Scalar>& features, std::size_t count, const SelectionStrategy& strategy,
                            const KernelConfig<Scalar>& cfg, const SelectionLimits& limits = {}) {
  cfg.validate();
  const Eigen::Index n_pixels = features.size();
  if (count < 1 || Eigen::Index(count) > n_pixels) {
    throw std::invalid_argument("select_key_pixels: L must be in [1, N]");
  }
  KeyPixels keys;
  if (strategy.kind == Strategy::random) {
    std::mt19937_64 rng(strategy.seed);
    std::vector<Eigen::Index> all(static_cast<std::size_t>(n_pixels));
    for (Eigen::Index i = 0; i < n_pixels; ++i) all[std::size_t(i)] = i;
    for (std::size_t i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
      std::swap(all[i], all[pick(rng)]);
      keys.indices.push_back(all[i]);
    }
    return keys;
  }

  const MatrixX<Scalar> pts = features.scaled();
  std::vector<Eigen::Index> pool = candidate_pool(n_pixels, limits.candidate_pool, strategy.seed);
  if (pool.size() < count) {
    pool.resize(std::size_t(n_pixels));
    for (Eigen::Index i = 0; i < n_pixels; ++i) pool[std::size_t(i)] = i;
  }

  if (strategy.kind == Strategy::greedy_distance) {
    VectorX<Scalar> centroid = VectorX<Scalar>::Zero(pts.cols());
    for (auto n : pool) centroid += pts.row(n).transpose();
    centroid /= Scalar(pool.size());
    keys.indices.push_back(detail::argmax_lowest<Scalar>(
        pool, keys, [&](Eigen::Index n) { return -(pts.row(n).transpose() - centroid).squaredNorm(); }));
    VectorX<Scalar> min_d2 = VectorX<Scalar>::Constant(n_pixels, std::numeric_limits<Scalar>::infinity());
    while (keys.size() < count) {
      const auto last = pts.row(keys.indices.back());
      for (auto n : pool) min_d2[n] = std::min(min_d2[n], (pts.row(n) - last).squaredNorm());
      keys.indices.push_back(detail::argmax_lowest<Scalar>(pool, keys, [&](Eigen::Index n) { return min_d2[n]; }));
    }
    return keys;
  }

  KeyPixels grid{evaluation_grid(features.width, features.height, limits.evaluation_grid)};
  const MatrixX<Scalar> eval = gather_rows(pts, grid);
  while (keys.size() < count) {
    const detail::SelectedSet<Scalar> set(pts, keys, cfg);
    std::function<Scalar(Eigen::Index)> score;
    MatrixX<Scalar> cross;
    if (strategy.kind == Strategy::variance) {
      score = [&](Eigen::Index n) { return set.variance(pts.row(n).transpose()); };
    } else {
      if (set.size() > 0) cross = cross_kernel(eval, set.points(), cfg.length_scale);
      score = [&](Eigen::Index n) { return detail::emoc_closed_form(set, eval, cross, pts.row(n).transpose()); };
    }
    keys.indices.push_back(detail::argmax_lowest<Scalar>(pool, keys, score));
  }
  return keys;
}

}  // namespace crowdlocal

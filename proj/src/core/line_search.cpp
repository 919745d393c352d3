#include "crowdlocal/line_search.hpp"

#include "crowdlocal/seeding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace crowdlocal {
namespace {

Eigen::VectorXd uniform_box(std::mt19937_64& rng, Eigen::Index dims) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd v(dims);
  for (Eigen::Index i = 0; i < dims; ++i) v[i] = u(rng);
  return v;
}

/// Uniform point in the box at L-inf distance >= separation from `from`.
Eigen::VectorXd separated_point(std::mt19937_64& rng, const Eigen::VectorXd& from, double separation) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Eigen::VectorXd v = uniform_box(rng, from.size());
    if ((v - from).cwiseAbs().maxCoeff() >= separation) return v;
  }
  // Always reachable: push the first coordinate to the far side of the box.
  Eigen::VectorXd v = from;
  v[0] = from[0] >= 0.0 ? -1.0 : 1.0;
  return v;
}

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in [0,1]");
}

std::size_t find_or_add(std::vector<Eigen::VectorXd>& points, const Eigen::VectorXd& p) {
  for (std::size_t i = 0; i < points.size(); ++i) {
    if ((points[i] - p).cwiseAbs().maxCoeff() <= 1e-12) return i;
  }
  points.push_back(p);
  return points.size() - 1;
}

}  // namespace

const Eigen::VectorXd& LineSearchState::anchor() const {
  if (history.empty()) throw std::logic_error("line search has no history");
  return has_open_segment() ? history[history.size() - 2] : history.back();
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> LineSearchState::open_segment() const {
  if (!has_open_segment()) throw std::logic_error("line search has no open segment");
  return {history[history.size() - 2], history.back()};
}

bool LineSearchState::operator==(const LineSearchState& other) const {
  if (rng_seed != other.rng_seed || observations != other.observations || history.size() != other.history.size()) {
    return false;
  }
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (history[i] != other.history[i]) return false;
  }
  return true;
}

Eigen::VectorXd blend(const Eigen::VectorXd& p, const Eigen::VectorXd& p_bar, double alpha) {
  check_alpha(alpha);
  if (p.size() != p_bar.size()) throw std::invalid_argument("blend: dimension mismatch");
  return (1.0 - alpha) * p + alpha * p_bar;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> init_endpoints(std::uint64_t seed, int dims, const LineSearchParams& params) {
  std::mt19937_64 rng(mix_seed(seed));
  Eigen::VectorXd p = uniform_box(rng, dims);
  Eigen::VectorXd p_bar = separated_point(rng, p, params.min_initial_separation);
  return {p, p_bar};
}

LineSearchState start_line_search(std::uint64_t seed, int dims, const LineSearchParams& params) {
  auto [p, p_bar] = init_endpoints(seed, dims, params);
  LineSearchState state;
  state.rng_seed = seed;
  state.history = {std::move(p), std::move(p_bar)};
  return state;
}

LineSearchState record_choice(const LineSearchState& state, double alpha_star) {
  check_alpha(alpha_star);
  const auto [p, p_bar] = state.open_segment();
  LineSearchState next = state;
  next.history.push_back(blend(p, p_bar, alpha_star));
  next.observations.push_back({state.history.size() / 2 - 1, alpha_star});
  return next;
}

LineSearchState with_endpoint(const LineSearchState& state, const Eigen::VectorXd& endpoint) {
  if (state.history.empty() || state.has_open_segment()) throw std::logic_error("with_endpoint: no pending anchor");
  LineSearchState next = state;
  next.history.push_back(endpoint);
  return next;
}

std::pair<Eigen::MatrixXd, std::vector<Preference>> preference_data(const LineSearchState& state, int segment_samples) {
  std::vector<Eigen::VectorXd> points;
  std::vector<Preference> prefs;
  for (const auto& obs : state.observations) {
    const std::size_t base = obs.segment * 2;
    if (base + 2 >= state.history.size()) throw std::logic_error("observation refers to a missing segment");
    const std::size_t start = find_or_add(points, state.history[base]);
    const std::size_t end = find_or_add(points, state.history[base + 1]);
    const std::size_t chosen = find_or_add(points, state.history[base + 2]);
    if (chosen != start) prefs.push_back({chosen, start});
    if (chosen != end) prefs.push_back({chosen, end});
    for (int k = 1; k <= segment_samples; ++k) {
      const double a = double(k) / (segment_samples + 1);
      if (std::abs(a - obs.alpha) < 0.5 / (segment_samples + 1)) continue;
      const std::size_t other = find_or_add(points, blend(state.history[base], state.history[base + 1], a));
      if (other != chosen) prefs.push_back({chosen, other});
    }
  }
  Eigen::MatrixXd mat(Eigen::Index(points.size()), points.empty() ? 0 : points.front().size());
  for (std::size_t i = 0; i < points.size(); ++i) mat.row(Eigen::Index(i)) = points[i].transpose();
  return {mat, prefs};
}

Eigen::VectorXd next_endpoint(const LineSearchState& state, const LineSearchParams& params) {
  if (state.completed() == 0 || state.has_open_segment()) {
    throw std::logic_error("next_endpoint requires a completed segment and a pending anchor");
  }
  const Eigen::VectorXd& anchor = state.history.back();
  const Eigen::Index dims = anchor.size();
  std::mt19937_64 rng(mix_seed(state.rng_seed ^ mix_seed(state.completed())));

  auto [points, prefs] = preference_data(state, params.segment_samples);
  if (prefs.empty()) return separated_point(rng, anchor, params.fallback_separation);
  const PreferentialGp model(points, prefs, params.model);
  const Eigen::VectorXd& f = model.goodness();
  if (f.maxCoeff() - f.minCoeff() < 1e-9) return separated_point(rng, anchor, params.fallback_separation);

  const double best = model.best_observed_mean();
  auto acquisition = [&](const Eigen::VectorXd& x) { return model.expected_improvement(x, best); };

  Eigen::VectorXd best_x = anchor;
  double best_value = -std::numeric_limits<double>::infinity();
  for (int start = 0; start < params.acquisition_starts; ++start) {
    // The first starts sit on observed points; the rest are uniform.
    Eigen::VectorXd x = uniform_box(rng, dims);
    if (start < points.rows()) x = points.row(start).transpose();
    double value = acquisition(x);
    double step = 0.25;
    for (int it = 0; it < params.acquisition_iterations && step > 1e-6; ++it) {
      bool improved = false;
      for (Eigen::Index d = 0; d < dims; ++d) {
        for (double dir : {1.0, -1.0}) {
          Eigen::VectorXd trial = x;
          trial[d] = std::clamp(x[d] + dir * step, -1.0, 1.0);
          if (trial[d] == x[d]) continue;
          const double v = acquisition(trial);
          if (v > value) {
            x = std::move(trial);
            value = v;
            improved = true;
            break;
          }
        }
      }
      if (!improved) step *= 0.5;
    }
    if (value > best_value) {
      best_value = value;
      best_x = x;
    }
  }
  if (!std::isfinite(best_value) || (best_x - anchor).cwiseAbs().maxCoeff() < 1e-3) {
    return separated_point(rng, anchor, params.fallback_separation);
  }
  return best_x;
}

}  // namespace crowdlocal

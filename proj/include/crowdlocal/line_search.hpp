#pragma once

// Single-slider decomposition for one key pixel. The history alternates
// anchors and endpoints, {p^1, pbar^1, p^2, pbar^2, ...}; an even-length
// history has an open segment (p^s, pbar^s), an odd-length one is waiting
// for next_endpoint.

#include "crowdlocal/preferential_gp.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <utility>
#include <vector>

namespace crowdlocal {

struct LineSearchObservation {
  std::size_t segment;  // 0-based s - 1
  double alpha;
  bool operator==(const LineSearchObservation&) const = default;
};

struct LineSearchState {
  std::vector<Eigen::VectorXd> history;
  std::vector<LineSearchObservation> observations;
  std::uint64_t rng_seed = 0;

  bool has_open_segment() const { return !history.empty() && history.size() % 2 == 0; }
  std::size_t completed() const { return observations.size(); }
  /// Current best point p^s (the latest anchor).
  const Eigen::VectorXd& anchor() const;
  /// (p^s, pbar^s) of the open segment.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> open_segment() const;

  bool operator==(const LineSearchState& other) const;
};

struct LineSearchParams {
  PreferenceModelParams model{};
  int acquisition_starts = 64;
  int acquisition_iterations = 100;
  /// Interior segment points (evenly spaced, away from the choice) also counted as beaten.
  int segment_samples = 1;
  double min_initial_separation = 0.1;
  double fallback_separation = 0.5;
};

/// (1 - alpha) p + alpha pbar; alpha must be in [0,1].
Eigen::VectorXd blend(const Eigen::VectorXd& p, const Eigen::VectorXd& p_bar, double alpha);

/// Two i.i.d. uniform points in [-1,1]^dims with L-inf separation >= 0.1.
std::pair<Eigen::VectorXd, Eigen::VectorXd> init_endpoints(std::uint64_t seed, int dims = 3,
                                                           const LineSearchParams& params = {});

/// Fresh state whose history is (p^1, pbar^1).
LineSearchState start_line_search(std::uint64_t seed, int dims = 3, const LineSearchParams& params = {});

/// Closes the open segment at alpha_star, appending p^{s+1}.
LineSearchState record_choice(const LineSearchState& state, double alpha_star);

/// Proposes pbar^{s+1} by maximizing expected improvement of a preference GP fitted to the history.
Eigen::VectorXd next_endpoint(const LineSearchState& state, const LineSearchParams& params = {});

/// Appends a proposed endpoint, opening the next segment.
LineSearchState with_endpoint(const LineSearchState& state, const Eigen::VectorXd& endpoint);

/// Distinct points and chosen-beats-others preferences derived from a history.
std::pair<Eigen::MatrixXd, std::vector<Preference>> preference_data(const LineSearchState& state, int segment_samples = 1);

}  // namespace crowdlocal

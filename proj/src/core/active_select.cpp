#include "crowdlocal/active_select.hpp"

#include <algorithm>
#include <cmath>

namespace crowdlocal {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::emoc: return "emoc";
    case Strategy::variance: return "variance";
    case Strategy::greedy_distance: return "greedy_distance";
    case Strategy::random: return "random";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "emoc") return Strategy::emoc;
  if (name == "variance") return Strategy::variance;
  if (name == "greedy_distance") return Strategy::greedy_distance;
  if (name == "random") return Strategy::random;
  throw ConfigError("unknown selection strategy '" + std::string(name) + "'");
}

namespace {

std::vector<int> spread(int extent, int count) {
  std::vector<int> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    out[std::size_t(i)] = count > 1 ? int(std::lround(double(i) * (extent - 1) / (count - 1))) : 0;
  }
  return out;
}

}  // namespace

std::vector<Eigen::Index> evaluation_grid(int width, int height, Eigen::Index limit) {
  const Eigen::Index n = Eigen::Index(width) * height;
  std::vector<Eigen::Index> out;
  if (n <= limit) {
    out.resize(std::size_t(n));
    for (Eigen::Index i = 0; i < n; ++i) out[std::size_t(i)] = i;
    return out;
  }
  // Lattice proportional to the aspect ratio, at most `limit` points.
  int rows = std::clamp(int(std::floor(std::sqrt(double(limit) * height / width))), 1, height);
  int cols = std::clamp(int(limit / rows), 1, width);
  rows = std::min(rows, int(limit / cols));
  for (int y : spread(height, rows)) {
    for (int x : spread(width, cols)) out.push_back(Eigen::Index(y) * width + x);
  }
  return out;
}

std::vector<Eigen::Index> candidate_pool(Eigen::Index n_pixels, Eigen::Index limit, std::uint64_t seed) {
  std::vector<Eigen::Index> out;
  if (n_pixels <= limit) {
    out.resize(std::size_t(n_pixels));
    for (Eigen::Index i = 0; i < n_pixels; ++i) out[std::size_t(i)] = i;
    return out;
  }
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  out.reserve(std::size_t(limit));
  for (Eigen::Index s = 0; s < limit; ++s) {
    const Eigen::Index lo = s * n_pixels / limit;
    const Eigen::Index hi = (s + 1) * n_pixels / limit;
    std::uniform_int_distribution<Eigen::Index> pick(lo, hi - 1);
    out.push_back(pick(rng));
  }
  return out;
}

}  // namespace crowdlocal

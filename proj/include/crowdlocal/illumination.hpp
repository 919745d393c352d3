#pragma once

#include "crowdlocal/image.hpp"

#include <Eigen/Core>

namespace crowdlocal {

/// Per-pixel estimate of scene brightness, values in [0,1].
struct IlluminationMap {
  int width = 0;
  int height = 0;
  Eigen::VectorXd t;
};

struct RefineParams {
  double lambda = 0.15;
  double edge_epsilon = 1e-3;
  int iterations = 50;
};

/// Max-RGB initialization.
IlluminationMap initial_illumination(const Image& image);

/// Edge-aware smoothing of t0: minimizes
///   sum_n (t_n - t0_n)^2 + lambda * sum_{n~m} a_nm (t_n - t_m)^2,
///   a_nm = 1 / (|t0_n - t0_m| + edge_epsilon)
/// over 4-neighbour pairs by Gauss-Seidel sweeps. The image argument only
/// fixes the expected dimensions.
IlluminationMap refine_illumination(const IlluminationMap& t0, const Image& image,
                                    const RefineParams& params = {});

inline IlluminationMap estimate_illumination(const Image& image, const RefineParams& params = {}) {
  return refine_illumination(initial_illumination(image), image, params);
}

struct PreprocessParams {
  double gamma = 0.8;
  double floor = 1e-3;
  RefineParams refine{};
};

/// Retinex-style brightening: out = in / max(t^gamma, floor), clamped.
Image lime_preprocess(const Image& image, const PreprocessParams& params = {});

/// Bilateral smoothing with spatial radius = strength (0..3); strength 0 is a no-op.
Image denoise(const Image& image, int strength);

/// Downsample an illumination map to the given size with the same box filter as previews.
IlluminationMap resize_illumination(const IlluminationMap& t, int width, int height);

}  // namespace crowdlocal

#include "crowdlocal/illumination.hpp"

#include "crowdlocal/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crowdlocal {

IlluminationMap initial_illumination(const Image& image) {
  return {image.width, image.height, image.data.rowwise().maxCoeff()};
}

IlluminationMap refine_illumination(const IlluminationMap& t0, const Image& image, const RefineParams& params) {
  if (t0.width != image.width || t0.height != image.height || t0.t.size() != image.pixel_count()) {
    throw DimensionMismatch("refine_illumination: map and image dimensions differ");
  }
  if (params.lambda < 0.0) throw std::invalid_argument("refine_illumination: lambda must be >= 0");
  if (params.lambda == 0.0 || params.iterations <= 0) return t0;

  const int w = t0.width, h = t0.height;
  const auto& base = t0.t;
  // Edge weights to the right and downward neighbour, precomputed from t0.
  Eigen::VectorXd right = Eigen::VectorXd::Zero(base.size());
  Eigen::VectorXd down = Eigen::VectorXd::Zero(base.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Index n = Eigen::Index(y) * w + x;
      if (x + 1 < w) right[n] = params.lambda / (std::abs(base[n] - base[n + 1]) + params.edge_epsilon);
      if (y + 1 < h) down[n] = params.lambda / (std::abs(base[n] - base[n + w]) + params.edge_epsilon);
    }
  }

  Eigen::VectorXd t = base;
  for (int it = 0; it < params.iterations; ++it) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const Eigen::Index n = Eigen::Index(y) * w + x;
        double num = base[n];
        double den = 1.0;
        if (x + 1 < w) { num += right[n] * t[n + 1]; den += right[n]; }
        if (x > 0) { num += right[n - 1] * t[n - 1]; den += right[n - 1]; }
        if (y + 1 < h) { num += down[n] * t[n + w]; den += down[n]; }
        if (y > 0) { num += down[n - w] * t[n - w]; den += down[n - w]; }
        t[n] = num / den;
      }
    }
  }
  return {w, h, t.cwiseMax(0.0).cwiseMin(1.0)};
}

Image lime_preprocess(const Image& image, const PreprocessParams& params) {
  if (!(params.gamma > 0.0 && params.gamma <= 1.0)) throw std::invalid_argument("lime_preprocess: gamma must be in (0,1]");
  const auto illum = estimate_illumination(image, params.refine);
  Image out(image.width, image.height);
  for (Eigen::Index n = 0; n < image.pixel_count(); ++n) {
    const double denom = std::max(std::pow(illum.t[n], params.gamma), params.floor);
    // t <= 1 keeps denom <= 1, so no channel is ever darkened.
    out.data.row(n) = (image.data.row(n) / denom).cwiseMin(1.0);
  }
  return out;
}

Image denoise(const Image& image, int strength) {
  if (strength < 0 || strength > 3) throw std::invalid_argument("denoise: strength must be in 0..3");
  if (strength == 0) return image;
  const int w = image.width, h = image.height, radius = strength;
  const double inv_spatial = 1.0 / (2.0 * radius * radius);
  constexpr double range_sigma = 0.1;
  constexpr double inv_range = 1.0 / (2.0 * range_sigma * range_sigma);
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Index n = image.index(y, x);
      const Rgb center = image.data.row(n).transpose();
      Rgb acc = Rgb::Zero();
      double wsum = 0.0;
      for (int dy = -radius; dy <= radius; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -radius; dx <= radius; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          const Rgb other = image.data.row(image.index(yy, xx)).transpose();
          const double weight =
              std::exp(-(dx * dx + dy * dy) * inv_spatial - (other - center).squaredNorm() / 3.0 * inv_range);
          acc += weight * other;
          wsum += weight;
        }
      }
      out.data.row(n) = (acc / wsum).cwiseMax(0.0).cwiseMin(1.0).transpose();
    }
  }
  return out;
}

IlluminationMap resize_illumination(const IlluminationMap& t, int width, int height) {
  if (width == t.width && height == t.height) return t;
  const auto plane = resample_plane(std::span<const double>(t.t.data(), std::size_t(t.t.size())), t.width, t.height,
                                    width, height);
  IlluminationMap out{width, height, Eigen::Map<const Eigen::VectorXd>(plane.data(), Eigen::Index(plane.size()))};
  out.t = out.t.cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

}  // namespace crowdlocal

#include "crowdlocal/image.hpp"

#include "crowdlocal/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace crowdlocal {

void validate(const Image& image) {
  if (image.width <= 0 || image.height <= 0) throw std::invalid_argument("image has zero dimension");
  if (image.data.rows() != image.pixel_count()) {
    throw DimensionMismatch("image buffer size does not match width x height");
  }
  if (!(image.data.array() >= 0.0).all() || !(image.data.array() <= 1.0).all()) {
    throw std::invalid_argument("image channel values must lie in [0,1]");
  }
}

std::pair<int, int> preview_size(int width, int height, int max_edge) {
  if (max_edge < 1) throw std::invalid_argument("max_edge must be >= 1");
  const int longest = std::max(width, height);
  if (longest <= max_edge) return {width, height};
  const double scale = double(max_edge) / longest;
  const int w = std::clamp(int(std::lround(width * scale)), 1, max_edge);
  const int h = std::clamp(int(std::lround(height * scale)), 1, max_edge);
  return {w, h};
}

namespace {

// Coverage of source cells [i, i+1) by the output cell [o*ratio, (o+1)*ratio).
struct Footprint {
  int first;
  std::vector<double> weights;
};

std::vector<Footprint> footprints(int in, int out) {
  std::vector<Footprint> result(out);
  const double ratio = double(in) / out;
  for (int o = 0; o < out; ++o) {
    const double lo = o * ratio;
    const double hi = (o + 1) * ratio;
    const int first = int(std::floor(lo));
    const int last = std::min(in - 1, int(std::ceil(hi)) - 1);
    Footprint fp{first, {}};
    for (int i = first; i <= last; ++i) {
      const double cover = std::min(hi, double(i + 1)) - std::max(lo, double(i));
      fp.weights.push_back(std::max(cover, 0.0) / ratio);
    }
    result[o] = std::move(fp);
  }
  return result;
}

}  // namespace

std::vector<double> resample_plane(std::span<const double> plane, int width, int height, int out_width,
                                   int out_height) {
  if (plane.size() != std::size_t(width) * height) throw DimensionMismatch("resample_plane: size mismatch");
  const auto fx = footprints(width, out_width);
  const auto fy = footprints(height, out_height);
  std::vector<double> rows(std::size_t(out_width) * height, 0.0);
  for (int y = 0; y < height; ++y) {
    for (int ox = 0; ox < out_width; ++ox) {
      double acc = 0.0;
      const auto& f = fx[ox];
      for (std::size_t k = 0; k < f.weights.size(); ++k) acc += f.weights[k] * plane[std::size_t(y) * width + f.first + k];
      rows[std::size_t(y) * out_width + ox] = acc;
    }
  }
  std::vector<double> out(std::size_t(out_width) * out_height, 0.0);
  for (int oy = 0; oy < out_height; ++oy) {
    const auto& f = fy[oy];
    for (int ox = 0; ox < out_width; ++ox) {
      double acc = 0.0;
      for (std::size_t k = 0; k < f.weights.size(); ++k) acc += f.weights[k] * rows[(f.first + k) * out_width + ox];
      out[std::size_t(oy) * out_width + ox] = acc;
    }
  }
  return out;
}

Image resize_for_preview(const Image& image, int max_edge) {
  const auto [w, h] = preview_size(image.width, image.height, max_edge);
  if (w == image.width && h == image.height) return image;
  Image out(w, h);
  std::vector<double> plane(std::size_t(image.pixel_count()));
  for (int c = 0; c < 3; ++c) {
    for (Eigen::Index i = 0; i < image.pixel_count(); ++i) plane[i] = image.data(i, c);
    const auto resampled = resample_plane(plane, image.width, image.height, w, h);
    for (Eigen::Index i = 0; i < out.pixel_count(); ++i) out.data(i, c) = std::clamp(resampled[i], 0.0, 1.0);
  }
  return out;
}

}  // namespace crowdlocal

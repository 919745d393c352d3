#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace crowdlocal {

/// N x 3 row-major buffer of RGB intensities.
using PixelBuffer = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Rgb = Eigen::Vector3d;

/// Edit parameters of one pixel: (brightness, saturation, contrast), each in [-1, 1].
using ParamVector = Eigen::Vector3d;
/// One ParamVector per pixel, row-major to match PixelBuffer.
using ParamMap = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

inline constexpr int kNumEditParams = 3;

/// RGB raster in [0,1], pixels stored row-major (index = row * width + col).
struct Image {
  int width = 0;
  int height = 0;
  PixelBuffer data;

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(PixelBuffer::Zero(Eigen::Index(w) * h, 3)) {}

  static Image filled(int w, int h, const Rgb& rgb) {
    Image img(w, h);
    img.data.rowwise() = rgb.transpose();
    return img;
  }

  Eigen::Index pixel_count() const { return Eigen::Index(width) * height; }
  Eigen::Index index(int row, int col) const { return Eigen::Index(row) * width + col; }

  auto pixel(Eigen::Index n) { return data.row(n); }
  auto pixel(Eigen::Index n) const { return data.row(n); }

  bool operator==(const Image& other) const {
    return width == other.width && height == other.height && data == other.data;
  }
};

/// Throws std::invalid_argument when dimensions or channel ranges are invalid.
void validate(const Image& image);

// Codecs. 8-bit sRGB bytes are mapped to v / 255 with no color management.

Image load_image(const std::filesystem::path& path);
Image decode_image(std::span<const unsigned char> bytes);
void save_image(const Image& image, const std::filesystem::path& path);
std::vector<unsigned char> encode_png(const Image& image);

/// Single-channel 8-bit PNG of values in [0,1].
std::vector<unsigned char> encode_gray_png(std::span<const double> values, int width, int height);

/// Box-filter downsample so the longest edge is at most max_edge.
Image resize_for_preview(const Image& image, int max_edge);

/// Area-weighted resampling of a single-channel plane.
std::vector<double> resample_plane(std::span<const double> plane, int width, int height,
                                   int out_width, int out_height);

/// Output size chosen by resize_for_preview.
std::pair<int, int> preview_size(int width, int height, int max_edge);

}  // namespace crowdlocal

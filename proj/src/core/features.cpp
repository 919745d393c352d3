#include "crowdlocal/gpr.hpp"
#include "crowdlocal/weight_export.hpp"

#include "crowdlocal/csv.hpp"

#include <cstdint>
#include <fstream>

namespace crowdlocal {
namespace {

double normalized(int index, int extent) { return extent > 1 ? double(index) / (extent - 1) : 0.0; }

}  // namespace

PixelFeatures<double> pixel_features(const Image& image, const IlluminationMap& t, const Eigen::Vector3d& scales) {
  if (t.width != image.width || t.height != image.height || t.t.size() != image.pixel_count()) {
    throw DimensionMismatch("pixel_features: illumination map does not match image");
  }
  PixelFeatures<double> f;
  f.width = image.width;
  f.height = image.height;
  f.scales = scales;
  f.raw.resize(image.pixel_count(), 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const Eigen::Index n = image.index(y, x);
      f.raw(n, 0) = normalized(x, image.width);
      f.raw(n, 1) = normalized(y, image.height);
      f.raw(n, 2) = t.t[n];
    }
  }
  return f;
}

PixelFeatures<double> spatial_features(int width, int height, const Eigen::Vector2d& scales) {
  PixelFeatures<double> f;
  f.width = width;
  f.height = height;
  f.scales = scales;
  f.raw.resize(Eigen::Index(width) * height, 2);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Index n = Eigen::Index(y) * width + x;
      f.raw(n, 0) = normalized(x, width);
      f.raw(n, 1) = normalized(y, height);
    }
  }
  return f;
}

void write_weight_pngs(const Eigen::MatrixXd& weights, int width, int height, const std::filesystem::path& dir) {
  if (weights.rows() != Eigen::Index(width) * height) throw DimensionMismatch("write_weight_pngs: size mismatch");
  std::filesystem::create_directories(dir);
  for (Eigen::Index l = 0; l < weights.cols(); ++l) {
    const Eigen::VectorXd col = weights.col(l);
    const double lo = col.minCoeff(), hi = col.maxCoeff();
    Eigen::VectorXd norm = hi > lo ? Eigen::VectorXd((col.array() - lo) / (hi - lo)) : Eigen::VectorXd::Zero(col.size());
    const auto bytes = encode_gray_png(std::span<const double>(norm.data(), std::size_t(norm.size())), width, height);
    const auto path = dir / ("weights_" + std::to_string(l + 1) + ".png");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ImageIoError(ImageIoError::Kind::unwritable, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  }
}

void write_weight_csv(const Eigen::MatrixXd& weights, int width, std::ostream& out) {
  out << "pixel,row,col";
  for (Eigen::Index l = 0; l < weights.cols(); ++l) out << ",w" << (l + 1);
  out << '\n';
  for (Eigen::Index n = 0; n < weights.rows(); ++n) {
    out << n << ',' << n / width << ',' << n % width;
    for (Eigen::Index l = 0; l < weights.cols(); ++l) out << ',' << format_double(weights(n, l));
    out << '\n';
  }
}

void write_weight_binary(const Eigen::MatrixXd& weights, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageIoError(ImageIoError::Kind::unwritable, "cannot write " + path.string());
  const std::int64_t dims[2] = {weights.rows(), weights.cols()};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = weights;
  out.write(reinterpret_cast<const char*>(rm.data()), std::streamsize(sizeof(double) * rm.size()));
  if (!out) throw ImageIoError(ImageIoError::Kind::unwritable, "cannot write " + path.string());
}

Eigen::MatrixXd read_weight_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError(ImageIoError::Kind::unreadable, "cannot read " + path.string());
  std::int64_t dims[2] = {0, 0};
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in || dims[0] < 0 || dims[1] < 0) throw ImageIoError(ImageIoError::Kind::corrupt, "bad weight dump header");
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(dims[0], dims[1]);
  in.read(reinterpret_cast<char*>(rm.data()), std::streamsize(sizeof(double) * rm.size()));
  if (!in) throw ImageIoError(ImageIoError::Kind::corrupt, "truncated weight dump");
  return rm;
}

}  // namespace crowdlocal

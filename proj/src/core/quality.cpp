#include "crowdlocal/quality.hpp"

#include "crowdlocal/edit.hpp"
#include "crowdlocal/errors.hpp"

#include <algorithm>
#include <cmath>

namespace crowdlocal {
namespace {

void check_same(const Image& a, const Image& b) {
  if (a.width != b.width || a.height != b.height) throw DimensionMismatch("images differ in size");
}

Eigen::VectorXd luma_plane(const Image& image) {
  return kLumaR * image.data.col(0) + kLumaG * image.data.col(1) + kLumaB * image.data.col(2);
}

/// (h+1) x (w+1) summed-area table of a row-major plane.
Eigen::MatrixXd integral(const Eigen::ArrayXd& plane, int w, int h) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(h + 1, w + 1);
  for (int r = 0; r < h; ++r) {
    double run = 0.0;
    for (int c = 0; c < w; ++c) {
      run += plane[Eigen::Index(r) * w + c];
      s(r + 1, c + 1) = s(r, c + 1) + run;
    }
  }
  return s;
}

double box(const Eigen::MatrixXd& s, int r, int c, int k) {
  return s(r + k, c + k) - s(r, c + k) - s(r + k, c) + s(r, c);
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  check_same(a, b);
  const double mse = (a.data - b.data).squaredNorm() / double(a.data.size());
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
  constexpr int k = 8;
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  check_same(a, b);
  if (a.width < k || a.height < k) throw std::invalid_argument("ssim needs at least 8x8 pixels");
  const Eigen::ArrayXd x = luma_plane(a).array();
  const Eigen::ArrayXd y = luma_plane(b).array();
  const int w = a.width, h = a.height;
  const auto sx = integral(x, w, h), sy = integral(y, w, h);
  const auto sxx = integral(x * x, w, h), syy = integral(y * y, w, h), sxy = integral(x * y, w, h);
  const double inv = 1.0 / (k * k);
  double total = 0.0;
  for (int r = 0; r + k <= h; ++r) {
    for (int c = 0; c + k <= w; ++c) {
      const double mx = box(sx, r, c, k) * inv, my = box(sy, r, c, k) * inv;
      const double vx = std::max(0.0, box(sxx, r, c, k) * inv - mx * mx);
      const double vy = std::max(0.0, box(syy, r, c, k) * inv - my * my);
      const double cov = box(sxy, r, c, k) * inv - mx * my;
      total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  }
  return total / double((h - k + 1) * (w - k + 1));
}

NrTerms nr_terms(const Image& image) {
  validate(image);
  const Eigen::ArrayXd y = luma_plane(image).array();
  const double n = double(y.size());
  const double mean = y.mean();
  const double sd = std::sqrt(std::max(0.0, (y - mean).square().sum() / n));
  const Eigen::ArrayXd spread = (image.data.rowwise().maxCoeff() - image.data.rowwise().minCoeff()).array();
  NrTerms t;
  t.exposure = std::clamp(1.0 - (y - 0.5).abs().mean() / 0.5, 0.0, 1.0);
  t.contrast = std::min(1.0, sd / 0.25);
  t.colorfulness = std::min(1.0, spread.mean() / 0.3);
  return t;
}

}  // namespace crowdlocal

#include "oracles.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace testsupport {

Matrix solve(Matrix a, Matrix b) {
  const std::size_t n = a.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    }
    if (std::abs(a[pivot][col]) < 1e-300) throw std::runtime_error("oracle solve: singular");
    std::swap(a[col], a[pivot]);
    std::swap(b[col], b[pivot]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double factor = a[r][col] / a[col][col];
      if (factor == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r][c] -= factor * a[col][c];
      for (std::size_t c = 0; c < b[r].size(); ++c) b[r][c] -= factor * b[col][c];
    }
  }
  for (std::size_t r = 0; r < n; ++r) {
    for (auto& v : b[r]) v /= a[r][r];
  }
  return b;
}

double exp_kernel(const std::vector<double>& a, const std::vector<double>& b, const std::vector<double>& scales,
                  double length_scale) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = scales[i] * (a[i] - b[i]);
    d2 += d * d;
  }
  return std::exp(-std::sqrt(d2) / length_scale);
}

crowdlocal::PixelFeatures<double> random_features(int width, int height, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  crowdlocal::PixelFeatures<double> f;
  f.width = width;
  f.height = height;
  f.raw.resize(Eigen::Index(width) * height, 3);
  for (Eigen::Index i = 0; i < f.raw.size(); ++i) f.raw.data()[i] = u(rng);
  f.scales = Eigen::Vector3d::Ones();
  return f;
}

std::vector<double> row_of(const crowdlocal::PixelFeatures<double>& f, Eigen::Index n) {
  std::vector<double> out(std::size_t(f.dims()));
  for (Eigen::Index d = 0; d < f.dims(); ++d) out[std::size_t(d)] = f.raw(n, d);
  return out;
}

namespace {

std::vector<double> scales_of(const crowdlocal::PixelFeatures<double>& f) {
  return std::vector<double>(f.scales.data(), f.scales.data() + f.scales.size());
}

Matrix gram(const crowdlocal::PixelFeatures<double>& f, const std::vector<Eigen::Index>& keys, double ls, double r) {
  const auto s = scales_of(f);
  Matrix k(keys.size(), std::vector<double>(keys.size()));
  for (std::size_t i = 0; i < keys.size(); ++i) {
    for (std::size_t j = 0; j < keys.size(); ++j) {
      k[i][j] = exp_kernel(row_of(f, keys[i]), row_of(f, keys[j]), s, ls) + (i == j ? r : 0.0);
    }
  }
  return k;
}

/// N x |keys| matrix of k_n^T K^{-1}.
Matrix weight_matrix(const crowdlocal::PixelFeatures<double>& f, const std::vector<Eigen::Index>& keys, double ls,
                     double r) {
  const auto s = scales_of(f);
  // K^{-1} k_n for every n at once: K X = [k_1 ... k_N].
  Matrix rhs(keys.size(), std::vector<double>(std::size_t(f.size())));
  for (std::size_t i = 0; i < keys.size(); ++i) {
    for (Eigen::Index n = 0; n < f.size(); ++n) {
      rhs[i][std::size_t(n)] = exp_kernel(row_of(f, keys[i]), row_of(f, n), s, ls);
    }
  }
  const Matrix x = solve(gram(f, keys, ls, r), rhs);
  Matrix w(std::size_t(f.size()), std::vector<double>(keys.size()));
  for (Eigen::Index n = 0; n < f.size(); ++n) {
    for (std::size_t i = 0; i < keys.size(); ++i) w[std::size_t(n)][i] = x[i][std::size_t(n)];
  }
  return w;
}

}  // namespace

std::vector<double> weight_row(const crowdlocal::PixelFeatures<double>& f, const std::vector<Eigen::Index>& keys,
                               Eigen::Index n, double length_scale, double regularizer) {
  const auto s = scales_of(f);
  Matrix rhs(keys.size(), std::vector<double>(1));
  for (std::size_t i = 0; i < keys.size(); ++i) rhs[i][0] = exp_kernel(row_of(f, keys[i]), row_of(f, n), s, length_scale);
  const Matrix x = solve(gram(f, keys, length_scale, regularizer), rhs);
  std::vector<double> out;
  for (const auto& row : x) out.push_back(row[0]);
  return out;
}

double refit_emoc(const crowdlocal::PixelFeatures<double>& f, const std::vector<Eigen::Index>& selected,
                  Eigen::Index q, double length_scale, double regularizer) {
  const auto s = scales_of(f);
  double var_q = 1.0 + regularizer;
  if (!selected.empty()) {
    const auto wq = weight_row(f, selected, q, length_scale, regularizer);
    for (std::size_t i = 0; i < selected.size(); ++i) {
      var_q -= wq[i] * exp_kernel(row_of(f, selected[i]), row_of(f, q), s, length_scale);
    }
  }
  if (var_q <= 1e-12) return 0.0;
  std::vector<Eigen::Index> augmented = selected;
  augmented.push_back(q);
  const Matrix w = weight_matrix(f, augmented, length_scale, regularizer);
  double total = 0.0;
  for (const auto& row : w) total += std::abs(row.back());
  return std::sqrt(2.0 / 3.14159265358979323846) * std::sqrt(var_q) * total / double(w.size());
}

double monte_carlo_emoc(const crowdlocal::PixelFeatures<double>& f, const std::vector<Eigen::Index>& selected,
                        Eigen::Index q, double length_scale, double regularizer, const std::vector<double>& z,
                        std::uint64_t label_seed) {
  const auto s = scales_of(f);
  const std::size_t n_pix = std::size_t(f.size());
  std::mt19937_64 rng(label_seed);
  std::normal_distribution<double> normal;
  std::vector<double> y_sel;
  for (std::size_t i = 0; i < selected.size(); ++i) y_sel.push_back(normal(rng));

  // Current model predictions and predictive distribution of the label at q.
  std::vector<double> before(n_pix, 0.0);
  double mu_q = 0.0;
  double var_q = 1.0 + regularizer;
  if (!selected.empty()) {
    const Matrix w_old = weight_matrix(f, selected, length_scale, regularizer);
    for (std::size_t n = 0; n < n_pix; ++n) {
      for (std::size_t i = 0; i < selected.size(); ++i) before[n] += w_old[n][i] * y_sel[i];
    }
    const auto wq = w_old[std::size_t(q)];
    for (std::size_t i = 0; i < selected.size(); ++i) {
      mu_q += wq[i] * y_sel[i];
      var_q -= wq[i] * exp_kernel(row_of(f, selected[i]), row_of(f, q), s, length_scale);
    }
  }
  if (var_q <= 0.0) return 0.0;
  const double sigma_q = std::sqrt(var_q);

  // Refit on selected + {q}; predictions are linear in the augmented labels.
  std::vector<Eigen::Index> augmented = selected;
  augmented.push_back(q);
  const Matrix w_new = weight_matrix(f, augmented, length_scale, regularizer);
  std::vector<double> fixed_part(n_pix, 0.0);
  for (std::size_t n = 0; n < n_pix; ++n) {
    for (std::size_t i = 0; i < selected.size(); ++i) fixed_part[n] += w_new[n][i] * y_sel[i];
  }

  double total = 0.0;
  for (double zk : z) {
    const double y_q = mu_q + sigma_q * zk;
    double change = 0.0;
    for (std::size_t n = 0; n < n_pix; ++n) {
      change += std::abs(fixed_part[n] + w_new[n][selected.size()] * y_q - before[n]);
    }
    total += change / double(n_pix);
  }
  return total / double(z.size());
}

}  // namespace testsupport

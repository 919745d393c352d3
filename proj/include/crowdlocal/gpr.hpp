#pragma once

// GPR-backed local filter: pixel features, exponential kernel, and the
// weight-map factorization P = W Q. Everything here is label-free except
// predict_param / assemble_param_map, which take the key-pixel parameters Q.

#include "crowdlocal/errors.hpp"
#include "crowdlocal/illumination.hpp"
#include "crowdlocal/image.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace crowdlocal {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar = double>
struct KernelConfig {
  Scalar length_scale = Scalar(0.5);
  /// r, added to the Gram diagonal only.
  Scalar regularizer = Scalar(1);

  void validate() const {
    if (!(length_scale > 0)) throw ConfigError("kernel length_scale must be positive");
    if (!(regularizer >= 0)) throw ConfigError("kernel regularizer must be non-negative");
  }
};

/// Raw features in [0,1] (normalized x, y and optionally illumination) plus
/// per-dimension scales that are applied at kernel-evaluation time.
template <typename Scalar = double>
struct PixelFeatures {
  int width = 0;
  int height = 0;
  MatrixX<Scalar> raw;  // N x D
  VectorX<Scalar> scales;

  Eigen::Index size() const { return raw.rows(); }
  Eigen::Index dims() const { return raw.cols(); }
  MatrixX<Scalar> scaled() const { return raw * scales.asDiagonal(); }
};

/// (col / (w-1), row / (h-1), t) per pixel; degenerate single-pixel edges map to 0.
PixelFeatures<double> pixel_features(const Image& image, const IlluminationMap& t, const Eigen::Vector3d& scales);

/// Spatial features only, for the no-illumination ablation.
PixelFeatures<double> spatial_features(int width, int height, const Eigen::Vector2d& scales);

/// Selected key pixels n_1..n_L in selection order.
struct KeyPixels {
  std::vector<Eigen::Index> indices;

  std::size_t size() const { return indices.size(); }
  bool empty() const { return indices.empty(); }
  bool contains(Eigen::Index n) const {
    return std::find(indices.begin(), indices.end(), n) != indices.end();
  }
  bool operator==(const KeyPixels&) const = default;
};

inline void validate(const KeyPixels& keys, Eigen::Index n_pixels) {
  std::unordered_set<Eigen::Index> seen;
  for (auto n : keys.indices) {
    if (n < 0 || n >= n_pixels) throw std::out_of_range("key pixel index " + std::to_string(n) + " out of range");
    if (!seen.insert(n).second) throw std::invalid_argument("duplicate key pixel " + std::to_string(n));
  }
}

/// exp(-|a - b| / length_scale) on already-scaled points.
template <typename DerivedA, typename DerivedB, typename Scalar = typename DerivedA::Scalar>
Scalar exponential_kernel(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
                          Scalar length_scale) {
  return std::exp(-(a - b).norm() / length_scale);
}

/// kappa(a, b) = exp(-|s o (a - b)| / length_scale) on raw feature points.
template <typename DerivedA, typename DerivedB, typename DerivedS, typename Scalar = typename DerivedA::Scalar>
Scalar kernel(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b,
              const Eigen::MatrixBase<DerivedS>& scales, const KernelConfig<Scalar>& cfg) {
  return std::exp(-(scales.cwiseProduct(a - b)).norm() / cfg.length_scale);
}

/// Kernel matrix between the rows of two scaled point sets (n x D, m x D) -> n x m.
template <typename DerivedX, typename DerivedY, typename Scalar = typename DerivedX::Scalar>
MatrixX<Scalar> cross_kernel(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y,
                             Scalar length_scale) {
  MatrixX<Scalar> out(x.rows(), y.rows());
  const Scalar inv = Scalar(1) / length_scale;
  for (Eigen::Index j = 0; j < y.rows(); ++j) {
    out.col(j) = ((x.rowwise() - y.row(j)).rowwise().squaredNorm().array().sqrt() * -inv).exp().matrix();
  }
  return out;
}

template <typename Scalar>
MatrixX<Scalar> gather_rows(const MatrixX<Scalar>& points, const KeyPixels& keys) {
  MatrixX<Scalar> out(Eigen::Index(keys.size()), points.cols());
  for (std::size_t l = 0; l < keys.size(); ++l) out.row(Eigen::Index(l)) = points.row(keys.indices[l]);
  return out;
}

/// K_ij = kappa(x_ni, x_nj) + r [i == j].
template <typename Scalar>
MatrixX<Scalar> gram_matrix(const PixelFeatures<Scalar>& features, const KeyPixels& keys,
                            const KernelConfig<Scalar>& cfg) {
  validate(keys, features.size());
  const MatrixX<Scalar> pts = gather_rows(features.scaled(), keys);
  MatrixX<Scalar> k = cross_kernel(pts, pts, cfg.length_scale);
  k.diagonal().array() += cfg.regularizer;
  return k;
}

/// Cholesky factor of a Gram matrix; throws SingularMatrix when K is not
/// numerically positive definite.
template <typename Scalar>
Eigen::LLT<MatrixX<Scalar>> factorize_gram(const MatrixX<Scalar>& gram) {
  Eigen::LLT<MatrixX<Scalar>> llt(gram);
  if (llt.info() != Eigen::Success) throw SingularMatrix("Gram matrix is not positive definite");
  if (gram.rows() > 0) {
    const auto diag = llt.matrixLLT().diagonal().cwiseAbs();
    if (diag.minCoeff() <= Scalar(1e-7) * diag.maxCoeff()) throw SingularMatrix("Gram matrix is singular");
  }
  return llt;
}

/// Rows k(q)^T K^{-1} for every query row; query and key points are already scaled.
template <typename Scalar>
MatrixX<Scalar> weights_at(const MatrixX<Scalar>& query, const MatrixX<Scalar>& key_points,
                           const KernelConfig<Scalar>& cfg) {
  MatrixX<Scalar> gram = cross_kernel(key_points, key_points, cfg.length_scale);
  gram.diagonal().array() += cfg.regularizer;
  const auto llt = factorize_gram(gram);
  const MatrixX<Scalar> kx = cross_kernel(query, key_points, cfg.length_scale);  // N x L
  return llt.solve(kx.transpose()).transpose();
}

/// W = [(k_1^T K^{-1})^T ... (k_N^T K^{-1})^T]^T, N x L.
template <typename Scalar>
MatrixX<Scalar> weight_maps(const PixelFeatures<Scalar>& features, const KeyPixels& keys,
                            const KernelConfig<Scalar>& cfg) {
  cfg.validate();
  validate(keys, features.size());
  if (keys.empty()) throw std::invalid_argument("weight_maps: at least one key pixel required");
  const MatrixX<Scalar> pts = features.scaled();
  return weights_at(pts, gather_rows(pts, keys), cfg);
}

/// (k_x^T K^{-1} Q)^T for one raw feature point x; not clamped.
template <typename Scalar, typename DerivedX, typename DerivedQ>
VectorX<Scalar> predict_param(const Eigen::MatrixBase<DerivedX>& x, const KeyPixels& keys,
                              const Eigen::MatrixBase<DerivedQ>& q, const PixelFeatures<Scalar>& features,
                              const KernelConfig<Scalar>& cfg) {
  if (q.rows() != Eigen::Index(keys.size())) throw DimensionMismatch("predict_param: Q rows must equal L");
  const auto llt = factorize_gram(gram_matrix(features, keys, cfg));
  VectorX<Scalar> kx(Eigen::Index(keys.size()));
  for (std::size_t l = 0; l < keys.size(); ++l) {
    kx[Eigen::Index(l)] = kernel(x, features.raw.row(keys.indices[l]).transpose(), features.scales, cfg);
  }
  const MatrixX<Scalar> alpha = llt.solve(MatrixX<Scalar>(q));  // L x M
  return alpha.transpose() * kx;
}

/// W Q without clamping.
template <typename DerivedW, typename DerivedQ>
ParamMap assemble_unclamped(const Eigen::MatrixBase<DerivedW>& w, const Eigen::MatrixBase<DerivedQ>& q) {
  if (w.cols() != q.rows()) throw DimensionMismatch("assemble_param_map: W columns must equal Q rows");
  if (q.cols() != kNumEditParams) throw DimensionMismatch("assemble_param_map: Q must have 3 columns");
  return (w.template cast<double>() * q.template cast<double>()).eval();
}

/// P = W Q, clamped into [-1,1].
template <typename DerivedW, typename DerivedQ>
ParamMap assemble_param_map(const Eigen::MatrixBase<DerivedW>& w, const Eigen::MatrixBase<DerivedQ>& q) {
  ParamMap p = assemble_unclamped(w, q);
  p = p.cwiseMax(-1.0).cwiseMin(1.0);
  return p;
}

}  // namespace crowdlocal

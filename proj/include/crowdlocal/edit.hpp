#pragma once

#include "crowdlocal/image.hpp"

namespace crowdlocal {

inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

inline double luma(const Rgb& c) { return kLumaR * c[0] + kLumaG * c[1] + kLumaB * c[2]; }

/// Brightness (c * 2^p0), then luma-anchored saturation, then midpoint-anchored
/// contrast, then clamp to [0,1]. p = 0 is exactly the identity.
Rgb apply_edit(const Rgb& rgb, const ParamVector& p);

/// f(I, P): row n of P edits pixel n.
Image apply_param_map(const Image& image, const ParamMap& params);

/// 1 p^T over n_pixels rows.
ParamMap global_map(const ParamVector& p, Eigen::Index n_pixels);

/// Componentwise clamp into the parameter box [-1,1].
template <typename Derived>
auto clamp_params(const Eigen::MatrixBase<Derived>& p) {
  return p.cwiseMax(-1.0).cwiseMin(1.0);
}

}  // namespace crowdlocal

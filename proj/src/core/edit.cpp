#include "crowdlocal/edit.hpp"

#include "crowdlocal/errors.hpp"

#include <cmath>
#include <string>

namespace crowdlocal {

Rgb apply_edit(const Rgb& rgb, const ParamVector& p) {
  Rgb c = rgb;
  if (p[0] != 0.0) c *= std::exp2(p[0]);
  if (p[1] != 0.0) {
    const double y = luma(c);
    c = (y + (1.0 + p[1]) * (c.array() - y)).matrix();
  }
  if (p[2] != 0.0) c = (0.5 + (1.0 + p[2]) * (c.array() - 0.5)).matrix();
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

Image apply_param_map(const Image& image, const ParamMap& params) {
  if (params.rows() != image.pixel_count()) {
    throw DimensionMismatch("apply_param_map: parameter map has " + std::to_string(params.rows()) +
                            " rows, image has " + std::to_string(image.pixel_count()) + " pixels");
  }
  Image out(image.width, image.height);
  const Eigen::Index n = image.pixel_count();
  for (Eigen::Index i = 0; i < n; ++i) {
    out.data.row(i) = apply_edit(image.data.row(i).transpose(), params.row(i).transpose()).transpose();
  }
  return out;
}

ParamMap global_map(const ParamVector& p, Eigen::Index n_pixels) {
  if (n_pixels <= 0) throw std::invalid_argument("global_map: n_pixels must be positive");
  ParamMap map(n_pixels, 3);
  map.rowwise() = p.transpose();
  return map;
}

}  // namespace crowdlocal

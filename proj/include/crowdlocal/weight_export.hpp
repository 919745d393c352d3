#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <ostream>

namespace crowdlocal {

/// One grayscale PNG per weight-map column (weights_<l>.png, l starting at 1),
/// each min-max normalized independently.
void write_weight_pngs(const Eigen::MatrixXd& weights, int width, int height, const std::filesystem::path& dir);

/// CSV dump with header "pixel,row,col,w1,...,wL".
void write_weight_csv(const Eigen::MatrixXd& weights, int width, std::ostream& out);

/// Flat little-endian dump: int64 rows, int64 cols, then rows*cols doubles in row-major order.
void write_weight_binary(const Eigen::MatrixXd& weights, const std::filesystem::path& path);
Eigen::MatrixXd read_weight_binary(const std::filesystem::path& path);

}  // namespace crowdlocal

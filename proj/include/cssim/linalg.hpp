#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace cssim {

using ImageId = std::uint64_t;

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using VectorRef = Eigen::Ref<const Vector>;
using ConstVectorMap = Eigen::Map<const Vector>;
using ConstRowMatrixMap = Eigen::Map<const RowMatrix>;

}  // namespace cssim

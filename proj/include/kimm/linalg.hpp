#pragma once

#include <Eigen/Dense>

namespace kimm {

using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixXf = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

}  // namespace kimm

#pragma once

#include <vector>

#include <Eigen/Dense>

namespace sfe {

// Positions are read and written a row (individual) at a time.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

/// Individuals included in a query; empty means everyone.
using Mask = std::vector<bool>;

}  // namespace sfe

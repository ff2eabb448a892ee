#pragma once

#include <Eigen/Dense>

namespace fedminimax {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace fedminimax

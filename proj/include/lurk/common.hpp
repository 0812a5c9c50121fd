#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace lurk {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// Throws std::invalid_argument when an input contract is violated.
inline void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

}  // namespace lurk

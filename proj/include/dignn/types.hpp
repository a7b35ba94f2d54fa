#pragma once

#include <Eigen/Dense>

#include <cstdio>
#include <string>

namespace dignn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Formats a double with 17 significant digits (round-trip exact) for
/// text/CSV outputs.
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace dignn

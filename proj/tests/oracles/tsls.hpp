#pragma once

// Just-identified two-stage least squares with an intercept, by the textbook
// matrix formula beta = (Z'X)^{-1} Z'y.

#include <Eigen/Dense>

#include <vector>

namespace oracle {

// Coefficient on the endogenous regressor d instrumented by z.
inline double tsls_slope(const std::vector<double>& y, const std::vector<double>& d, const std::vector<double>& z) {
    const auto n = static_cast<Eigen::Index>(y.size());
    Eigen::MatrixXd X(n, 2), Z(n, 2);
    Eigen::VectorXd Y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = d[static_cast<std::size_t>(i)];
        Z(i, 0) = 1.0;
        Z(i, 1) = z[static_cast<std::size_t>(i)];
        Y(i) = y[static_cast<std::size_t>(i)];
    }
    const Eigen::Vector2d beta = (Z.transpose() * X).fullPivLu().solve(Z.transpose() * Y);
    return beta(1);
}

} // namespace oracle

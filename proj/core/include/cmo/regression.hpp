#pragma once

#include "cmo/core_types.hpp"
#include "cmo/kernel.hpp"

namespace cmo {

/// Kernel ridge regression in the dual: w = Phi(anchors) alpha, never materialized.
struct RegressionDual {
    Vector alpha;    // N
    Matrix anchors;  // R x N, frozen loadings at solve time
    KernelSpec spec;
    double ridge = 1.0;  // gamma3 / lambda
};

/// Solves (K + ridge I) alpha = y with K = gram(anchors).
RegressionDual solve_dual(const Matrix& anchors, const Vector& y, const KernelSpec& spec,
                          double ridge);

/// Same solve for a caller-supplied Gram matrix.
Vector solve_dual_system(const Matrix& k, const Vector& y, double ridge);

/// sum_j kappa(c, anchor_j) alpha_j, summed in anchor order.
double predict(const Vector& c, const RegressionDual& dual);

/// (y - predict(c, dual))^2
double regression_residual(const Vector& c, double y, const RegressionDual& dual);

/// alpha^T K alpha, the squared norm of the implicit weight vector.
double weight_norm_sq(const RegressionDual& dual);

}  // namespace cmo

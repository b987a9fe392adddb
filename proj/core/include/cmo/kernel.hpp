#pragma once

#include "cmo/core_types.hpp"

namespace cmo {

// Derivatives are taken with respect to the first argument `c`. Both arguments
// must be finite and entrywise nonnegative, which keeps the polynomial base
// c_hat.c + 1 positive for fractional degrees.

double kernel_eval(const Vector& c, const Vector& c_hat, const KernelSpec& spec);
Vector kernel_grad(const Vector& c, const Vector& c_hat, const KernelSpec& spec);
Matrix kernel_hess(const Vector& c, const Vector& c_hat, const KernelSpec& spec);

/// Gram matrix of the kernel over the columns of `anchors` (R x N).
struct GramMatrix {
    Matrix data;
    KernelSpec spec;
};

GramMatrix gram(const Matrix& anchors, const KernelSpec& spec);

}  // namespace cmo

#include "cmo/kernel.hpp"

#include "cmo/errors.hpp"

#include <cmath>

namespace cmo {

namespace {

void check_args(const Vector& c, const Vector& c_hat) {
    require(c.size() == c_hat.size(), ErrorKind::DimensionMismatch,
            "kernel arguments differ in length");
    require(c.allFinite() && c_hat.allFinite(), ErrorKind::NonFinite,
            "kernel arguments must be finite");
    require(c.minCoeff() >= 0.0 && c_hat.minCoeff() >= 0.0, ErrorKind::InvalidArgument,
            "kernel arguments must be nonnegative");
}

// Both reductions are written so that swapping the arguments yields the same
// floating-point sequence: (a-b)^2 == (b-a)^2 and a*b == b*a.
double squared_distance(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (Index i = 0; i < a.size(); ++i) {
        const double d = a(i) - b(i);
        s += d * d;
    }
    return s;
}

double dot(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (Index i = 0; i < a.size(); ++i) s += a(i) * b(i);
    return s;
}

}  // namespace

double kernel_eval(const Vector& c, const Vector& c_hat, const KernelSpec& spec) {
    check_args(c, c_hat);
    double value = 0.0;
    if (spec.use_exponential()) value += std::exp(-squared_distance(c, c_hat) / spec.sigma_sq);
    if (spec.use_polynomial())
        value += (spec.rho / spec.ell) * std::pow(dot(c, c_hat) + 1.0, spec.ell);
    return value;
}

Vector kernel_grad(const Vector& c, const Vector& c_hat, const KernelSpec& spec) {
    check_args(c, c_hat);
    Vector g = Vector::Zero(c.size());
    if (spec.use_exponential()) {
        const double e = std::exp(-squared_distance(c, c_hat) / spec.sigma_sq);
        g.noalias() -= (2.0 / spec.sigma_sq) * e * (c - c_hat);
    }
    if (spec.use_polynomial() && spec.rho != 0.0) {
        g.noalias() += spec.rho * std::pow(dot(c, c_hat) + 1.0, spec.ell - 1.0) * c_hat;
    }
    return g;
}

Matrix kernel_hess(const Vector& c, const Vector& c_hat, const KernelSpec& spec) {
    check_args(c, c_hat);
    const Index r = c.size();
    Matrix h = Matrix::Zero(r, r);
    if (spec.use_exponential()) {
        const Vector d = c - c_hat;
        const double s = 2.0 / spec.sigma_sq;
        const double e = std::exp(-squared_distance(c, c_hat) / spec.sigma_sq);
        h.noalias() += s * e * (s * d * d.transpose() - Matrix::Identity(r, r));
    }
    if (spec.use_polynomial() && spec.rho != 0.0) {
        const double w = spec.rho * (spec.ell - 1.0) * std::pow(dot(c, c_hat) + 1.0, spec.ell - 2.0);
        h.noalias() += w * c_hat * c_hat.transpose();
    }
    // Mirror the upper triangle so the result is exactly symmetric.
    h.triangularView<Eigen::StrictlyLower>() = h.transpose();
    return h;
}

GramMatrix gram(const Matrix& anchors, const KernelSpec& spec) {
    const Index n = anchors.cols();
    Matrix k(n, n);
    for (Index i = 0; i < n; ++i) {
        const Vector ai = anchors.col(i);
        for (Index j = i; j < n; ++j) {
            k(i, j) = kernel_eval(ai, anchors.col(j), spec);
            k(j, i) = k(i, j);
        }
    }
    return {std::move(k), spec};
}

}  // namespace cmo

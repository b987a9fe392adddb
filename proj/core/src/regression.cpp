#include "cmo/regression.hpp"

#include "cmo/errors.hpp"

#include <cmath>

namespace cmo {

Vector solve_dual_system(const Matrix& k, const Vector& y, double ridge) {
    require(k.rows() == k.cols() && k.rows() == y.size(), ErrorKind::DimensionMismatch,
            "Gram matrix and score vector disagree in size");
    require(std::isfinite(ridge) && ridge > 0.0, ErrorKind::InvalidArgument,
            "ridge must be finite and > 0");
    require(k.allFinite(), ErrorKind::NonFinite, "Gram matrix has non-finite entries");
    require(y.allFinite(), ErrorKind::NonFinite, "scores contain non-finite values");

    Matrix a = k;
    a.diagonal().array() += ridge;
    Vector alpha;
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() == Eigen::Success) {
        alpha = llt.solve(y);
        alpha += llt.solve(y - a * alpha);  // one refinement step
    } else {
        // K can lose definiteness to rounding when the ridge is tiny.
        Eigen::LDLT<Matrix> ldlt(a);
        require(ldlt.info() == Eigen::Success, ErrorKind::NumericalFailure,
                "regularized Gram system is singular");
        alpha = ldlt.solve(y);
        alpha += ldlt.solve(y - a * alpha);
    }
    require(alpha.allFinite(), ErrorKind::NumericalFailure, "dual solve produced non-finite alpha");
    return alpha;
}

RegressionDual solve_dual(const Matrix& anchors, const Vector& y, const KernelSpec& spec,
                          double ridge) {
    spec.validate();
    require(anchors.cols() == y.size(), ErrorKind::DimensionMismatch,
            "anchor count differs from score count");
    RegressionDual dual;
    dual.anchors = anchors;
    dual.spec = spec;
    dual.ridge = ridge;
    dual.alpha = solve_dual_system(gram(anchors, spec).data, y, ridge);
    return dual;
}

double predict(const Vector& c, const RegressionDual& dual) {
    require(c.size() == dual.anchors.rows(), ErrorKind::DimensionMismatch,
            "loading length differs from anchor dimension");
    require(dual.alpha.size() == dual.anchors.cols(), ErrorKind::DimensionMismatch,
            "alpha length differs from anchor count");
    double y = 0.0;
    for (Index j = 0; j < dual.alpha.size(); ++j) {
        if (dual.alpha(j) == 0.0) continue;
        y += kernel_eval(c, dual.anchors.col(j), dual.spec) * dual.alpha(j);
    }
    return y;
}

double regression_residual(const Vector& c, double y, const RegressionDual& dual) {
    const double e = y - predict(c, dual);
    return e * e;
}

double weight_norm_sq(const RegressionDual& dual) {
    if (dual.alpha.size() == 0 || dual.alpha.isZero(0.0)) return 0.0;
    const Matrix k = gram(dual.anchors, dual.spec).data;
    return dual.alpha.dot(k * dual.alpha);
}

}  // namespace cmo

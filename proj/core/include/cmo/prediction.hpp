#pragma once

#include "cmo/core_types.hpp"
#include "cmo/solver.hpp"

namespace cmo {

/// min 1/2 c^T h_bar c + f_bar^T c  subject to  c >= 0.
struct UnseenQP {
    Matrix h_bar;  // 2 (X^T X) o (X^T X) + 2 gamma2 I
    Vector f_bar;  // -2 diag(X^T Gamma X)
};

UnseenQP build_qp(const Matrix& gamma_new, const Matrix& basis_x, double gamma2);
UnseenQP build_qp(const CorrelationMatrix& gamma_new, const FittedModel& model);

/// Active-set solve of the nonnegative QP. The result is exactly nonnegative and
/// satisfies the KKT conditions to rounding.
Vector solve_unseen_loading(const UnseenQP& qp);

/// max over r of the KKT violation: |grad_r| on the free set, max(0, -grad_r) on the bound set.
double kkt_residual(const UnseenQP& qp, const Vector& c);

struct UnseenPrediction {
    Vector loading;
    double score = 0.0;
};

UnseenPrediction predict_unseen(const CorrelationMatrix& gamma_new, const FittedModel& model);

}  // namespace cmo

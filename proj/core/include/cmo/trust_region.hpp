#pragma once

#include "cmo/core_types.hpp"

#include <vector>

namespace cmo {

// Per-patient loading objective, with X, V_n, Lambda_n, alpha and the anchors frozen:
//   F(c) = lambda (y_n - sum_j alpha_j kappa(c, a_j))^2 + gamma2 |c|^2
//        + tr(Lambda_n^T (V_n - X diag(c))) + 1/2 |V_n - X diag(c)|_F^2,   c >= 0.

double loading_objective(const Vector& c, Index patient, const ModelState& state,
                         const CohortDataset& cohort, const Hyperparams& hp,
                         const KernelSpec& spec);
Vector grad_c(const Vector& c, Index patient, const ModelState& state,
              const CohortDataset& cohort, const Hyperparams& hp, const KernelSpec& spec);
Matrix hess_c(const Vector& c, Index patient, const ModelState& state,
              const CohortDataset& cohort, const Hyperparams& hp, const KernelSpec& spec);

/// Quadratic model g^T p + 1/2 p^T h p around c_current, constrained to
/// |p| <= delta and c_current + p >= 0.
struct LoadingSubproblem {
    Vector g;
    Matrix h;
    Vector c_current;
    double delta = 0.0;
};

double model_decrease(const LoadingSubproblem& sp, const Vector& p);  // m(0) - m(p)

/// c - max(c - g, 0): the first-order stationarity measure under c >= 0.
Vector projected_gradient(const Vector& c, const Vector& g);

/// Euclidean projection of `x` onto { p : p >= -c, |p| <= delta }.
Vector project_step(const Vector& x, const Vector& c, double delta);

/// Approximate global minimizer of the model over the feasible set. The result is
/// always feasible and achieves at least a fraction of the Cauchy decrease.
Vector solve_subproblem(const LoadingSubproblem& sp, int max_iters = 2000);

struct LoadingUpdate {
    Vector c;
    int iterations = 0;
    int accepted = 0;
    std::vector<double> objective_trace;  // F at the start and after each accepted step
};

/// Trust-region minimization of F over c_n >= 0 starting from state.loadings.col(patient).
LoadingUpdate update_loading(Index patient, const ModelState& state, const CohortDataset& cohort,
                             const Hyperparams& hp, const KernelSpec& spec);

}  // namespace cmo

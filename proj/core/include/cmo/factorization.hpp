#pragma once

#include "cmo/core_types.hpp"

#include <vector>

namespace cmo {

/// Terms of the joint objective J. `total_j` excludes the constraint residual.
struct ObjectiveBreakdown {
    double fit_term = 0.0;         // sum_n |Gamma_n - X diag(c_n) X^T|_F^2
    double regression_term = 0.0;  // lambda sum_n (y_n - sum_j kappa(c_n, a_j) alpha_j)^2
    double l1_x = 0.0;             // gamma1 |X|_1
    double l2_c = 0.0;             // gamma2 sum_n |c_n|^2
    double l2_w = 0.0;             // gamma3 alpha^T K alpha
    double constraint_residual = 0.0;  // sum_n |V_n - X diag(c_n)|_F
    double total_j = 0.0;
};

ObjectiveBreakdown objective(const ModelState& state, const CohortDataset& cohort,
                             const Hyperparams& hp, const KernelSpec& spec);

/// sum_n |V_n - X diag(c_n)|_F
double constraint_residual(const ModelState& state);

/// Smooth X-dependent part of the augmented Lagrangian evaluated at `x`:
/// sum_n |Gamma_n - V_n x^T|^2 + tr(L_n^T (V_n - x C_n)) + 1/2 |V_n - x C_n|^2.
double x_smooth_objective(const Matrix& x, const ModelState& state, const CohortDataset& cohort);

/// x_smooth_objective plus gamma1 |x|_1; the quantity update_x never increases.
double x_block_objective(const Matrix& x, const ModelState& state, const CohortDataset& cohort,
                         const Hyperparams& hp);

/// Entrywise sgn(m) max(|m| - t, 0).
Matrix soft_threshold(const Matrix& m, double t);

/// Gradient of x_smooth_objective at `x` (default: state.basis_x). Per-patient
/// contributions are summed in patient order regardless of `threads`.
Matrix grad_x(const Matrix& x, const ModelState& state, const CohortDataset& cohort,
              int threads = 1);
Matrix grad_x(const ModelState& state, const CohortDataset& cohort, int threads = 1);

struct XUpdate {
    Matrix basis;
    double step = 0.0;  // last accepted proximal step
    double objective_before = 0.0;
    double objective_after = 0.0;
};

/// hp.prox_iters proximal-gradient iterations with halving backtracking, starting
/// from `initial_step`. Throws NumericalFailure when the step underflows 1e-12.
XUpdate update_x(const ModelState& state, const CohortDataset& cohort, const Hyperparams& hp,
                 double initial_step, int threads = 1);
XUpdate update_x(const ModelState& state, const CohortDataset& cohort, const Hyperparams& hp);

/// Closed-form minimizers V_n = (X C_n + 2 Gamma_n X - L_n)(I + 2 X^T X)^{-1}.
std::vector<Matrix> update_v(const ModelState& state, const CohortDataset& cohort,
                             int threads = 1);

/// Multiplier ascent L_n + eta (V_n - X diag(c_n)).
std::vector<Matrix> update_duals(const ModelState& state, double eta, int threads = 1);

}  // namespace cmo

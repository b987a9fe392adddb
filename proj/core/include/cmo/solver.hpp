#pragma once

#include "cmo/core_types.hpp"
#include "cmo/factorization.hpp"
#include "cmo/regression.hpp"

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace cmo {

/// One outer pass of the alternating minimization.
struct IterationRecord {
    int iteration = 0;
    ObjectiveBreakdown objective;
    double dual_step = 0.0;
    double prox_step = 0.0;
    double x_block_before = 0.0;  // X-restricted augmented objective before/after the prox step
    double x_block_after = 0.0;
    double c_block_max_increase = 0.0;  // max_n F_n(after) - F_n(before); <= 0 when monotone
    bool loadings_nonnegative = true;
    double wall_seconds = 0.0;
};

struct FitTrace {
    std::vector<IterationRecord> records;  // records[0] is the initial state
    bool converged = false;
};

struct FitSummary {
    double final_total_j = 0.0;
    double final_constraint_residual = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Everything needed to score unseen patients: the basis, the regression dual over
/// the final training loadings, and the configuration that produced them.
struct FittedModel {
    Matrix basis_x;
    RegressionDual dual;
    Hyperparams hp;
    KernelSpec spec;
    FitSummary summary;

    const Matrix& training_loadings() const noexcept { return dual.anchors; }
};

using ProgressCallback = std::function<void(int iteration, const ObjectiveBreakdown&)>;
using StateInspector = std::function<void(int iteration, const ModelState&)>;

struct FitOptions {
    int threads = 1;
    ProgressCallback progress;
    StateInspector inspect;  // called after every block update, for instrumentation
};

/// Spectral warm start: top-R eigenvectors of the cohort mean scaled by sqrt|eigenvalue|,
/// column signs drawn from `seed`, loadings from clamped projections diag(X^+ G_n X^+^T),
/// V_n = X diag(c_n), Lambda_n = 0, and alpha solved once for those loadings.
ModelState initialize(const CohortDataset& cohort, const Hyperparams& hp, const KernelSpec& spec,
                      std::uint64_t seed);

/// Alternates update_x, solve_dual, update_loading (all n), update_v and update_duals
/// until the relative change of J drops below hp.outer_tol with the constraint residual
/// under hp.constraint_tol, or hp.max_outer_iters passes. Throws Diverged on a
/// non-finite objective.
std::pair<FittedModel, FitTrace> fit(const CohortDataset& cohort, const Hyperparams& hp,
                                     const KernelSpec& spec, std::uint64_t seed,
                                     const FitOptions& options = {});

/// Prediction for each training patient from its fitted loading.
Vector training_predictions(const FittedModel& model);

}  // namespace cmo

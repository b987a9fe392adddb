#include "cmo/solver.hpp"

#include "cmo/errors.hpp"
#include "cmo/parallel.hpp"
#include "cmo/trust_region.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace cmo {

namespace {

void refresh_dual(ModelState& state, const CohortDataset& cohort, const Hyperparams& hp,
                  const KernelSpec& spec) {
    state.anchors = state.loadings;
    if (hp.coupled()) {
        state.alpha = solve_dual(state.anchors, cohort.scores, spec, hp.ridge()).alpha;
    } else {
        state.alpha = Vector::Zero(cohort.n());
    }
}

}  // namespace

ModelState initialize(const CohortDataset& cohort, const Hyperparams& hp, const KernelSpec& spec,
                      std::uint64_t seed) {
    require(cohort.n() >= 1, ErrorKind::InvalidArgument, "cohort is empty");
    hp.validate(cohort.p());
    spec.validate();
    const Index p = cohort.p();
    const Index r = hp.rank_r;
    const Index n = cohort.n();

    Matrix mean = Matrix::Zero(p, p);
    for (Index i = 0; i < n; ++i) mean += cohort.gamma(i);
    mean /= static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Matrix> es(mean);
    require(es.info() == Eigen::Success, ErrorKind::NumericalFailure,
            "eigendecomposition of the cohort mean failed");

    const double top = es.eigenvalues().cwiseAbs().maxCoeff();
    const double floor = 1e-12 * std::max(top, 1.0);
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution flip(0.5);

    ModelState state;
    state.basis_x.resize(p, r);
    for (Index k = 0; k < r; ++k) {
        const Index src = p - 1 - k;  // eigenvalues ascend
        const double mag = std::abs(es.eigenvalues()(src));
        const double scale = mag > floor ? std::sqrt(mag) : 1.0;
        Vector col = es.eigenvectors().col(src) * scale;
        // Canonical sign (largest entry positive), then a seeded flip.
        Index arg = 0;
        col.cwiseAbs().maxCoeff(&arg);
        if (col(arg) < 0.0) col = -col;
        if (flip(rng)) col = -col;
        state.basis_x.col(k) = col;
    }

    const Matrix pinv = state.basis_x.completeOrthogonalDecomposition().pseudoInverse();
    state.loadings.resize(r, n);
    state.v_mats.resize(static_cast<std::size_t>(n));
    state.duals.assign(static_cast<std::size_t>(n), Matrix::Zero(p, r));
    for (Index i = 0; i < n; ++i) {
        const Matrix proj = pinv * cohort.gamma(i) * pinv.transpose();
        state.loadings.col(i) = proj.diagonal().cwiseMax(0.0);
        state.v_mats[static_cast<std::size_t>(i)] =
            state.basis_x * state.loadings.col(i).asDiagonal();
    }
    refresh_dual(state, cohort, hp, spec);
    return state;
}

std::pair<FittedModel, FitTrace> fit(const CohortDataset& cohort, const Hyperparams& hp,
                                     const KernelSpec& spec, std::uint64_t seed,
                                     const FitOptions& options) {
    using Clock = std::chrono::steady_clock;
    const auto t0 = Clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - t0).count(); };

    ModelState state = initialize(cohort, hp, spec, seed);
    FitTrace trace;
    {
        IterationRecord rec;
        rec.objective = objective(state, cohort, hp, spec);
        rec.dual_step = hp.dual_step;
        rec.prox_step = hp.prox_step;
        rec.loadings_nonnegative = (state.loadings.array() >= 0.0).all();
        rec.wall_seconds = elapsed();
        trace.records.push_back(rec);
        if (options.progress) options.progress(0, rec.objective);
        if (options.inspect) options.inspect(0, state);
    }

    double eta = hp.dual_step;
    double prox_step = hp.prox_step;
    double prev_total = trace.records.back().objective.total_j;
    double prev_residual = trace.records.back().objective.constraint_residual;
    const Index n = cohort.n();

    for (int k = 1; k <= hp.max_outer_iters; ++k) {
        IterationRecord rec;
        rec.iteration = k;

        // Basis: proximal gradient, warm-started from twice the last accepted step.
        const XUpdate xu = update_x(state, cohort, hp, prox_step, options.threads);
        state.basis_x = xu.basis;
        rec.x_block_before = xu.objective_before;
        rec.x_block_after = xu.objective_after;
        rec.prox_step = xu.step;
        prox_step = 2.0 * xu.step;
        if (options.inspect) options.inspect(k, state);

        // Regression dual on anchors frozen from the current loadings.
        refresh_dual(state, cohort, hp, spec);

        // Loadings: independent trust-region solves per patient.
        std::vector<LoadingUpdate> updates(static_cast<std::size_t>(n));
        parallel_for(n, options.threads, [&](std::ptrdiff_t i) {
            updates[static_cast<std::size_t>(i)] = update_loading(i, state, cohort, hp, spec);
        });
        rec.c_block_max_increase = -std::numeric_limits<double>::infinity();
        for (Index i = 0; i < n; ++i) {
            const auto& u = updates[static_cast<std::size_t>(i)];
            state.loadings.col(i) = u.c;
            rec.c_block_max_increase = std::max(
                rec.c_block_max_increase, u.objective_trace.back() - u.objective_trace.front());
        }
        rec.loadings_nonnegative = (state.loadings.array() >= 0.0).all();
        if (options.inspect) options.inspect(k, state);

        // Constraint copies and multipliers.
        state.v_mats = update_v(state, cohort, options.threads);
        state.duals = update_duals(state, eta, options.threads);
        if (options.inspect) options.inspect(k, state);

        rec.objective = objective(state, cohort, hp, spec);
        rec.dual_step = eta;
        rec.wall_seconds = elapsed();
        if (!std::isfinite(rec.objective.total_j)) {
            std::ostringstream os;
            os << "objective became non-finite at outer iteration " << k;
            fail(ErrorKind::Diverged, os.str());
        }
        trace.records.push_back(rec);
        if (options.progress) options.progress(k, rec.objective);

        const double total = rec.objective.total_j;
        const double residual = rec.objective.constraint_residual;
        const double rel_change =
            std::abs(total - prev_total) / std::max(std::abs(prev_total), 1e-300);
        if (residual > prev_residual) eta *= hp.dual_step_decay;
        prev_total = total;
        prev_residual = residual;
        if (rel_change < hp.outer_tol && residual < hp.constraint_tol) {
            trace.converged = true;
            break;
        }
    }

    FittedModel model;
    model.basis_x = state.basis_x;
    model.hp = hp;
    model.spec = spec;
    if (hp.coupled()) {
        model.dual = solve_dual(state.loadings, cohort.scores, spec, hp.ridge());
    } else {
        model.dual.anchors = state.loadings;
        model.dual.alpha = Vector::Zero(n);
        model.dual.spec = spec;
        model.dual.ridge = std::numeric_limits<double>::infinity();
    }
    const auto& last = trace.records.back();
    model.summary.final_total_j = last.objective.total_j;
    model.summary.final_constraint_residual = last.objective.constraint_residual;
    model.summary.iterations = last.iteration;
    model.summary.converged = trace.converged;
    return {std::move(model), std::move(trace)};
}

Vector training_predictions(const FittedModel& model) {
    const Matrix& c = model.training_loadings();
    Vector out(c.cols());
    for (Index i = 0; i < c.cols(); ++i) out(i) = predict(c.col(i), model.dual);
    return out;
}

}  // namespace cmo

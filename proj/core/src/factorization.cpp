#include "cmo/factorization.hpp"

#include "cmo/errors.hpp"
#include "cmo/parallel.hpp"
#include "cmo/regression.hpp"

#include <cmath>
#include <limits>

namespace cmo {

namespace {

void check_state(const ModelState& state, const CohortDataset& cohort) {
    const Index n = cohort.n();
    require(state.loadings.cols() == n && state.loadings.rows() == state.r(),
            ErrorKind::DimensionMismatch, "loadings must be R x N");
    require(state.p() == cohort.p(), ErrorKind::DimensionMismatch,
            "basis rows differ from matrix size");
    require(static_cast<Index>(state.v_mats.size()) == n &&
                static_cast<Index>(state.duals.size()) == n,
            ErrorKind::DimensionMismatch, "need one V_n and one Lambda_n per patient");
    for (Index i = 0; i < n; ++i) {
        const auto& v = state.v_mats[static_cast<std::size_t>(i)];
        const auto& l = state.duals[static_cast<std::size_t>(i)];
        require(v.rows() == state.p() && v.cols() == state.r() && l.rows() == state.p() &&
                    l.cols() == state.r(),
                ErrorKind::DimensionMismatch, "V_n and Lambda_n must be P x R");
    }
    require(cohort.scores.size() == n, ErrorKind::DimensionMismatch,
            "score count differs from patient count");
}

// X diag(c): scales column r of x by c_r.
Matrix scale_columns(const Matrix& x, const Vector& c) { return x * c.asDiagonal(); }

}  // namespace

double constraint_residual(const ModelState& state) {
    double total = 0.0;
    for (Index i = 0; i < state.n(); ++i) {
        total += (state.v_mats[static_cast<std::size_t>(i)] -
                  scale_columns(state.basis_x, state.loadings.col(i)))
                     .norm();
    }
    return total;
}

ObjectiveBreakdown objective(const ModelState& state, const CohortDataset& cohort,
                             const Hyperparams& hp, const KernelSpec& spec) {
    check_state(state, cohort);
    ObjectiveBreakdown out;
    const Matrix& x = state.basis_x;
    const bool regress = hp.lambda > 0.0;
    const bool has_alpha = state.alpha.size() > 0 && !state.alpha.isZero(0.0);
    RegressionDual dual;
    if (has_alpha) {
        require(state.alpha.size() == state.anchors.cols(), ErrorKind::DimensionMismatch,
                "alpha length differs from anchor count");
        dual.alpha = state.alpha;
        dual.anchors = state.anchors;
        dual.spec = spec;
        dual.ridge = hp.ridge();
    }
    for (Index i = 0; i < cohort.n(); ++i) {
        const Vector c = state.loadings.col(i);
        out.fit_term += (cohort.gamma(i) - x * c.asDiagonal() * x.transpose()).squaredNorm();
        if (regress) {
            out.regression_term += has_alpha ? regression_residual(c, cohort.scores(i), dual)
                                             : cohort.scores(i) * cohort.scores(i);
        }
        out.l2_c += c.squaredNorm();
    }
    out.regression_term *= hp.lambda;
    out.l1_x = hp.gamma1 * x.cwiseAbs().sum();
    out.l2_c *= hp.gamma2;
    out.l2_w = has_alpha ? hp.gamma3 * weight_norm_sq(dual) : 0.0;
    out.constraint_residual = constraint_residual(state);
    out.total_j = out.fit_term + out.regression_term + out.l1_x + out.l2_c + out.l2_w;
    return out;
}

double x_smooth_objective(const Matrix& x, const ModelState& state, const CohortDataset& cohort) {
    double total = 0.0;
    for (Index i = 0; i < cohort.n(); ++i) {
        const auto& v = state.v_mats[static_cast<std::size_t>(i)];
        const auto& lam = state.duals[static_cast<std::size_t>(i)];
        const Matrix gap = v - scale_columns(x, state.loadings.col(i));
        total += (cohort.gamma(i) - v * x.transpose()).squaredNorm();
        total += (lam.cwiseProduct(gap)).sum() + 0.5 * gap.squaredNorm();
    }
    return total;
}

double x_block_objective(const Matrix& x, const ModelState& state, const CohortDataset& cohort,
                         const Hyperparams& hp) {
    return x_smooth_objective(x, state, cohort) + hp.gamma1 * x.cwiseAbs().sum();
}

Matrix soft_threshold(const Matrix& m, double t) {
    require(t >= 0.0, ErrorKind::InvalidArgument, "threshold must be >= 0");
    require(m.allFinite(), ErrorKind::NonFinite, "soft_threshold input must be finite");
    return m.unaryExpr([t](double v) {
        const double mag = std::abs(v) - t;
        return mag > 0.0 ? std::copysign(mag, v) : 0.0;
    });
}

Matrix grad_x(const Matrix& x, const ModelState& state, const CohortDataset& cohort, int threads) {
    check_state(state, cohort);
    std::vector<Matrix> parts(static_cast<std::size_t>(cohort.n()));
    parallel_for(cohort.n(), threads, [&](std::ptrdiff_t i) {
        const auto& v = state.v_mats[static_cast<std::size_t>(i)];
        const auto& lam = state.duals[static_cast<std::size_t>(i)];
        const Vector c = state.loadings.col(i);
        Matrix g = 2.0 * (x * v.transpose() - cohort.gamma(i)) * v;
        g -= scale_columns(v, c);
        g += scale_columns(x, c.cwiseProduct(c));
        g -= scale_columns(lam, c);
        parts[static_cast<std::size_t>(i)] = std::move(g);
    });
    Matrix total = Matrix::Zero(x.rows(), x.cols());
    for (const auto& part : parts) total += part;
    return total;
}

Matrix grad_x(const ModelState& state, const CohortDataset& cohort, int threads) {
    return grad_x(state.basis_x, state, cohort, threads);
}

XUpdate update_x(const ModelState& state, const CohortDataset& cohort, const Hyperparams& hp,
                 double initial_step, int threads) {
    check_state(state, cohort);
    require(initial_step > 0.0, ErrorKind::InvalidArgument, "proximal step must be > 0");
    constexpr double kMinStep = 1e-12;

    Matrix x = state.basis_x;
    double step = initial_step;
    XUpdate out;
    out.objective_before = x_block_objective(x, state, cohort, hp);
    double current = out.objective_before;

    for (int it = 0; it < hp.prox_iters; ++it) {
        const Matrix g = grad_x(x, state, cohort, threads);
        const double f = x_smooth_objective(x, state, cohort);
        const double s0 = step;
        bool accepted = false;
        while (step >= kMinStep) {
            const Matrix candidate = soft_threshold(x - step * g, step * hp.gamma1);
            const Matrix d = candidate - x;
            const double f_new = x_smooth_objective(candidate, state, cohort);
            const double model = f + g.cwiseProduct(d).sum() + d.squaredNorm() / (2.0 * step);
            const double full_new = f_new + hp.gamma1 * candidate.cwiseAbs().sum();
            if (f_new <= model && full_new <= current) {
                x = candidate;
                current = full_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            // Rounding alone rejects every step once the predicted decrease is at noise level.
            const Matrix probe = soft_threshold(x - s0 * g, s0 * hp.gamma1);
            const Matrix d = probe - x;
            const double model = f + g.cwiseProduct(d).sum() + d.squaredNorm() / (2.0 * s0) +
                                 hp.gamma1 * probe.cwiseAbs().sum();
            const double noise = 1e3 * std::numeric_limits<double>::epsilon() *
                                 (1.0 + std::abs(f) + hp.gamma1 * x.cwiseAbs().sum());
            if (std::isfinite(model) && current - model <= noise) {
                step = s0;
                break;
            }
            fail(ErrorKind::NumericalFailure, "proximal step size underflow in X update");
        }
    }
    out.basis = std::move(x);
    out.step = step;
    out.objective_after = current;
    return out;
}

XUpdate update_x(const ModelState& state, const CohortDataset& cohort, const Hyperparams& hp) {
    return update_x(state, cohort, hp, hp.prox_step);
}

std::vector<Matrix> update_v(const ModelState& state, const CohortDataset& cohort, int threads) {
    check_state(state, cohort);
    const Matrix& x = state.basis_x;
    Matrix system = 2.0 * x.transpose() * x;
    system.diagonal().array() += 1.0;
    Eigen::LLT<Matrix> llt(system);
    require(llt.info() == Eigen::Success, ErrorKind::NumericalFailure,
            "I + 2 X^T X is not positive definite");

    std::vector<Matrix> out(static_cast<std::size_t>(cohort.n()));
    parallel_for(cohort.n(), threads, [&](std::ptrdiff_t i) {
        const auto& lam = state.duals[static_cast<std::size_t>(i)];
        const Matrix rhs =
            scale_columns(x, state.loadings.col(i)) + 2.0 * cohort.gamma(i) * x - lam;
        // V (I + 2 X^T X) = rhs  <=>  (I + 2 X^T X) V^T = rhs^T (system symmetric).
        Matrix v = llt.solve(rhs.transpose()).transpose();
        require(v.allFinite(), ErrorKind::NumericalFailure, "V update produced non-finite values");
        out[static_cast<std::size_t>(i)] = std::move(v);
    });
    return out;
}

std::vector<Matrix> update_duals(const ModelState& state, double eta, int threads) {
    require(eta >= 0.0, ErrorKind::InvalidArgument, "dual step must be >= 0");
    std::vector<Matrix> out(static_cast<std::size_t>(state.n()));
    parallel_for(state.n(), threads, [&](std::ptrdiff_t i) {
        const auto idx = static_cast<std::size_t>(i);
        out[idx] = state.duals[idx] +
                   eta * (state.v_mats[idx] - scale_columns(state.basis_x, state.loadings.col(i)));
    });
    return out;
}

}  // namespace cmo

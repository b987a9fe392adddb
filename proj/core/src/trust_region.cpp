#include "cmo/trust_region.hpp"

#include "cmo/errors.hpp"
#include "cmo/kernel.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <optional>

namespace cmo {

namespace {

// Everything in F that does not move with c, precomputed once per patient.
struct LoadingTerms {
    Vector diag_xtx;   // diag(X^T X)
    Vector linear;     // diag(X^T Lambda_n) + diag(X^T V_n)
    double constant;   // tr(Lambda_n^T V_n) + 1/2 |V_n|^2
    double y;
    double lambda;
    double gamma2;
    const Vector* alpha;
    const Matrix* anchors;
    const KernelSpec* spec;

    bool has_kernel() const { return lambda > 0.0 && alpha->size() > 0; }
};

LoadingTerms make_terms(Index patient, const ModelState& state, const CohortDataset& cohort,
                        const Hyperparams& hp, const KernelSpec& spec) {
    require(patient >= 0 && patient < state.n(), ErrorKind::InvalidArgument,
            "patient index out of range");
    require(static_cast<Index>(state.v_mats.size()) == state.n() &&
                static_cast<Index>(state.duals.size()) == state.n(),
            ErrorKind::DimensionMismatch, "need one V_n and one Lambda_n per patient");
    require(cohort.scores.size() == state.n(), ErrorKind::DimensionMismatch,
            "score count differs from patient count");
    const auto idx = static_cast<std::size_t>(patient);
    const Matrix& x = state.basis_x;
    const Matrix& v = state.v_mats[idx];
    const Matrix& lam = state.duals[idx];
    require(v.rows() == x.rows() && v.cols() == x.cols() && lam.rows() == x.rows() &&
                lam.cols() == x.cols(),
            ErrorKind::DimensionMismatch, "V_n and Lambda_n must match the basis shape");
    if (state.alpha.size() > 0) {
        require(state.anchors.cols() == state.alpha.size() && state.anchors.rows() == x.cols(),
                ErrorKind::DimensionMismatch, "anchors must be R x N with N = |alpha|");
    }
    LoadingTerms t;
    t.diag_xtx = x.colwise().squaredNorm().transpose();
    t.linear = (x.cwiseProduct(lam) + x.cwiseProduct(v)).colwise().sum().transpose();
    t.constant = lam.cwiseProduct(v).sum() + 0.5 * v.squaredNorm();
    t.y = cohort.scores(patient);
    t.lambda = hp.lambda;
    t.gamma2 = hp.gamma2;
    t.alpha = &state.alpha;
    t.anchors = &state.anchors;
    t.spec = &spec;
    return t;
}

double kernel_sum(const LoadingTerms& t, const Vector& c) {
    double s = 0.0;
    for (Index j = 0; j < t.alpha->size(); ++j) {
        const double a = (*t.alpha)(j);
        if (a != 0.0) s += a * kernel_eval(c, t.anchors->col(j), *t.spec);
    }
    return s;
}

double eval_f(const LoadingTerms& t, const Vector& c) {
    double f = t.constant - t.linear.dot(c) + 0.5 * t.diag_xtx.dot(c.cwiseProduct(c)) +
               t.gamma2 * c.squaredNorm();
    if (t.has_kernel()) {
        const double r = t.y - kernel_sum(t, c);
        f += t.lambda * r * r;
    } else if (t.lambda > 0.0) {
        f += t.lambda * t.y * t.y;
    }
    return f;
}

void eval_derivatives(const LoadingTerms& t, const Vector& c, Vector* grad, Matrix* hess) {
    const Index r = c.size();
    if (grad) *grad = t.diag_xtx.cwiseProduct(c) - t.linear + 2.0 * t.gamma2 * c;
    if (hess) {
        *hess = Matrix::Zero(r, r);
        hess->diagonal() = t.diag_xtx.array() + 2.0 * t.gamma2;
    }
    if (!t.has_kernel()) return;
    double s = 0.0;
    Vector gs = Vector::Zero(r);
    Matrix hs = Matrix::Zero(r, r);
    for (Index j = 0; j < t.alpha->size(); ++j) {
        const double a = (*t.alpha)(j);
        if (a == 0.0) continue;
        const Vector aj = t.anchors->col(j);
        s += a * kernel_eval(c, aj, *t.spec);
        gs.noalias() += a * kernel_grad(c, aj, *t.spec);
        if (hess) hs.noalias() += a * kernel_hess(c, aj, *t.spec);
    }
    const double resid = t.y - s;
    if (grad) grad->noalias() -= 2.0 * t.lambda * resid * gs;
    if (hess) {
        hess->noalias() += 2.0 * t.lambda * gs * gs.transpose();
        hess->noalias() -= 2.0 * t.lambda * resid * hs;
        *hess = 0.5 * (*hess + hess->transpose()).eval();
    }
}

double model_value(const Vector& g, const Matrix& h, const Vector& p) {
    return g.dot(p) + 0.5 * p.dot(h * p);
}

// Global minimizer of g^T q + 1/2 q^T h q over |q| <= radius via the secular
// equation in h's eigenbasis. The hard case falls back to the boundary point along
// the leftmost eigenvector.
Vector ball_minimizer(const Matrix& h, const Vector& g, double radius) {
    const Index n = g.size();
    if (n == 0 || radius <= 0.0) return Vector::Zero(n);
    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    if (es.info() != Eigen::Success) return Vector::Zero(n);
    const Vector& ev = es.eigenvalues();
    const Matrix& q = es.eigenvectors();
    const Vector gt = q.transpose() * g;
    auto step = [&](double mu) {
        Vector z(n);
        for (Index i = 0; i < n; ++i) {
            const double denom = ev(i) + mu;
            z(i) = denom > 0.0 ? -gt(i) / denom : 0.0;
        }
        return z;
    };
    const double tiny = 1e-14 * std::max(g.norm(), 1e-300);
    auto step_norm = [&](double mu) {
        double acc = 0.0;
        for (Index i = 0; i < n; ++i) {
            const double denom = ev(i) + mu;
            if (denom > 0.0) {
                const double zi = gt(i) / denom;
                acc += zi * zi;
            } else if (std::abs(gt(i)) > tiny) {
                return std::numeric_limits<double>::infinity();
            }
        }
        return std::sqrt(acc);
    };
    const double lam_min = ev(0);
    if (lam_min > 0.0 && step_norm(0.0) <= radius) return q * step(0.0);
    const double lo0 = std::max(0.0, -lam_min);
    if (step_norm(lo0) < radius) {
        // Hard case: pad with the leftmost eigenvector to reach the boundary.
        Vector z = step(lo0);
        const double extra = std::sqrt(std::max(0.0, radius * radius - z.squaredNorm()));
        z(0) += (gt(0) > 0.0 ? -extra : extra);
        return q * z;
    }
    double lo = lo0;
    double hi = lo + std::max({1.0, std::abs(lam_min), g.norm() / radius});
    while (step_norm(hi) > radius && hi < 1e300) hi = lo + (hi - lo) * 2.0;
    for (int it = 0; it < 300 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (step_norm(mid) > radius) lo = mid; else hi = mid;
    }
    return q * step(hi);
}

struct Candidate {
    Vector p;
    double value;
};

class SubproblemSolver {
public:
    SubproblemSolver(const LoadingSubproblem& sp, int max_iters)
        : sp_(sp), lower_(-sp.c_current), max_iters_(max_iters) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(sp.h, Eigen::EigenvaluesOnly);
        lipschitz_ = es.info() == Eigen::Success ? es.eigenvalues().cwiseAbs().maxCoeff()
                                                 : sp.h.cwiseAbs().rowwise().sum().maxCoeff();
        lipschitz_ = std::max(lipschitz_, 1e-12);
    }

    Vector solve() {
        const Index n = sp_.g.size();
        if (sp_.delta <= 0.0 || n == 0) return Vector::Zero(n);

        // Interior Newton step of a convex model is the global minimizer.
        Eigen::LLT<Matrix> llt(sp_.h);
        if (llt.info() == Eigen::Success) {
            const Vector newton = llt.solve(-sp_.g);
            if (feasible(newton)) return newton;
        }

        std::vector<Vector> starts;
        starts.push_back(Vector::Zero(n));
        starts.push_back(cauchy_point());
        if (llt.info() == Eigen::Success) starts.push_back(project(llt.solve(-sp_.g)));
        starts.push_back(project(ball_minimizer(sp_.h, sp_.g, sp_.delta)));
        Eigen::SelfAdjointEigenSolver<Matrix> es(sp_.h);
        if (es.info() == Eigen::Success) {
            for (Index i = 0; i < n && es.eigenvalues()(i) < 0.0; ++i) {
                starts.push_back(project(sp_.delta * es.eigenvectors().col(i)));
                starts.push_back(project(-sp_.delta * es.eigenvectors().col(i)));
            }
        }

        Candidate best{Vector::Zero(n), 0.0};
        for (const auto& s : starts) {
            Candidate c = polish(projected_descent(s));
            if (c.value < best.value) best = std::move(c);
        }
        return best.p;
    }

private:
    bool feasible(const Vector& p) const {
        return (p.array() >= lower_.array()).all() && p.norm() <= sp_.delta;
    }

    Vector project(const Vector& x) const { return project_step(x, sp_.c_current, sp_.delta); }

    double value(const Vector& p) const { return model_value(sp_.g, sp_.h, p); }

    // Best point of the projected steepest-descent arc over a geometric grid.
    Vector cauchy_point() const {
        const double gn = sp_.g.norm();
        Vector best = Vector::Zero(sp_.g.size());
        if (gn == 0.0) return best;
        double best_val = 0.0;
        double t = sp_.delta / gn;
        for (int k = 0; k < 60; ++k, t *= 0.5) {
            Vector p = project(-t * sp_.g);
            const double v = value(p);
            if (v < best_val) {
                best_val = v;
                best = std::move(p);
            }
        }
        return best;
    }

    Vector projected_descent(Vector p) const {
        const double step = 1.0 / lipschitz_;
        for (int it = 0; it < max_iters_; ++it) {
            Vector next = project(p - step * (sp_.g + sp_.h * p));
            const double moved = (next - p).norm();
            p = std::move(next);
            if (moved <= 1e-15 * (1.0 + p.norm())) break;
        }
        return p;
    }

    // Re-solves exactly on the face identified by projected descent.
    Candidate polish(const Vector& p) const {
        Candidate best{p, value(p)};
        const Index n = p.size();
        std::vector<Index> free_idx;
        Vector fixed = Vector::Zero(n);
        for (Index i = 0; i < n; ++i) {
            if (p(i) <= lower_(i) + 1e-12 * (1.0 + std::abs(lower_(i)))) fixed(i) = lower_(i);
            else free_idx.push_back(i);
        }
        const Index m = static_cast<Index>(free_idx.size());
        if (m == 0) {
            consider(best, fixed);
            return best;
        }
        Matrix hf(m, m);
        Vector gf(m);
        const Vector hfix = sp_.h * fixed;
        for (Index a = 0; a < m; ++a) {
            gf(a) = sp_.g(free_idx[a]) + hfix(free_idx[a]);
            for (Index b = 0; b < m; ++b) hf(a, b) = sp_.h(free_idx[a], free_idx[b]);
        }
        const double radius_sq = sp_.delta * sp_.delta - fixed.squaredNorm();
        if (radius_sq <= 0.0) return best;
        const Vector q = ball_minimizer(hf, gf, std::sqrt(radius_sq));
        Vector trial = fixed;
        for (Index a = 0; a < m; ++a) trial(free_idx[a]) = q(a);
        consider(best, trial);
        return best;
    }

    void consider(Candidate& best, Vector trial) const {
        trial = trial.cwiseMax(lower_);
        const double nrm = trial.norm();
        if (nrm > sp_.delta) trial = project(trial);
        const double v = value(trial);
        if (v < best.value) best = {std::move(trial), v};
    }

    const LoadingSubproblem& sp_;
    Vector lower_;
    int max_iters_;
    double lipschitz_ = 1.0;
};

}  // namespace

double loading_objective(const Vector& c, Index patient, const ModelState& state,
                         const CohortDataset& cohort, const Hyperparams& hp,
                         const KernelSpec& spec) {
    return eval_f(make_terms(patient, state, cohort, hp, spec), c);
}

Vector grad_c(const Vector& c, Index patient, const ModelState& state,
              const CohortDataset& cohort, const Hyperparams& hp, const KernelSpec& spec) {
    require(c.size() == state.r(), ErrorKind::DimensionMismatch, "loading length differs from R");
    Vector g;
    eval_derivatives(make_terms(patient, state, cohort, hp, spec), c, &g, nullptr);
    return g;
}

Matrix hess_c(const Vector& c, Index patient, const ModelState& state,
              const CohortDataset& cohort, const Hyperparams& hp, const KernelSpec& spec) {
    require(c.size() == state.r(), ErrorKind::DimensionMismatch, "loading length differs from R");
    Matrix h;
    eval_derivatives(make_terms(patient, state, cohort, hp, spec), c, nullptr, &h);
    return h;
}

double model_decrease(const LoadingSubproblem& sp, const Vector& p) {
    return -model_value(sp.g, sp.h, p);
}

Vector projected_gradient(const Vector& c, const Vector& g) {
    return c - (c - g).cwiseMax(0.0);
}

Vector project_step(const Vector& x, const Vector& c, double delta) {
    require(x.size() == c.size(), ErrorKind::DimensionMismatch, "step and loading differ in size");
    if (delta <= 0.0) return Vector::Zero(x.size());
    const Vector lower = -c;
    Vector clipped = x.cwiseMax(lower);
    if (clipped.norm() <= delta) return clipped;
    // The projection has the form max(lower, t x) for some t in (0, 1]; |.| grows with t.
    double lo = 0.0;
    double hi = 1.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if ((mid * x).cwiseMax(lower).norm() <= delta) lo = mid; else hi = mid;
    }
    Vector p = (lo * x).cwiseMax(lower);
    const double nrm = p.norm();
    if (nrm > delta) p *= delta / nrm;  // guard against a final rounding excess
    return p;
}

Vector solve_subproblem(const LoadingSubproblem& sp, int max_iters) {
    require(sp.g.size() == sp.c_current.size() && sp.h.rows() == sp.g.size() &&
                sp.h.cols() == sp.g.size(),
            ErrorKind::DimensionMismatch, "subproblem dimensions disagree");
    require(sp.g.allFinite() && sp.h.allFinite(), ErrorKind::NonFinite,
            "subproblem gradient or Hessian is non-finite");
    Vector p = SubproblemSolver(sp, max_iters).solve();
    // Exact feasibility: c + p >= 0 with no rounding below zero.
    for (Index i = 0; i < p.size(); ++i) {
        if (sp.c_current(i) + p(i) < 0.0) p(i) = -sp.c_current(i);
    }
    return p;
}

LoadingUpdate update_loading(Index patient, const ModelState& state, const CohortDataset& cohort,
                             const Hyperparams& hp, const KernelSpec& spec) {
    const LoadingTerms terms = make_terms(patient, state, cohort, hp, spec);
    const TrustRegionConfig& cfg = hp.tr;
    LoadingUpdate out;
    out.c = state.loadings.col(patient).cwiseMax(0.0);
    double f = eval_f(terms, out.c);
    out.objective_trace.push_back(f);
    double delta = cfg.delta0;

    for (int it = 0; it < cfg.max_iters; ++it) {
        ++out.iterations;
        LoadingSubproblem sp;
        eval_derivatives(terms, out.c, &sp.g, &sp.h);
        if (projected_gradient(out.c, sp.g).norm() < cfg.grad_tol) break;
        sp.c_current = out.c;
        sp.delta = delta;
        const Vector p = solve_subproblem(sp, cfg.subproblem_max_iters);
        const double predicted = model_decrease(sp, p);
        if (!(predicted > 0.0)) break;

        Vector trial = out.c + p;
        trial = trial.cwiseMax(0.0);
        const double f_trial = eval_f(terms, trial);
        const double ratio = (f - f_trial) / predicted;
        if (ratio < 0.25) {
            delta = cfg.shrink * p.norm();
        } else if (ratio > 0.75 && p.norm() >= 0.99 * delta) {
            delta = std::min(cfg.expand * delta, cfg.delta_max);
        }
        if (ratio > cfg.eta_accept && f_trial < f) {
            out.c = std::move(trial);
            f = f_trial;
            ++out.accepted;
            out.objective_trace.push_back(f);
        }
        if (delta < 1e-14) break;
    }
    return out;
}

}  // namespace cmo

#include "cmo/prediction.hpp"

#include "cmo/errors.hpp"
#include "cmo/regression.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace cmo {

UnseenQP build_qp(const Matrix& gamma_new, const Matrix& basis_x, double gamma2) {
    require(gamma_new.rows() == basis_x.rows() && gamma_new.cols() == basis_x.rows(),
            ErrorKind::DimensionMismatch, "new matrix size differs from the basis rows");
    require(gamma2 >= 0.0, ErrorKind::InvalidArgument, "gamma2 must be >= 0");
    const Matrix xtx = basis_x.transpose() * basis_x;
    if (gamma2 == 0.0) {
        Eigen::LLT<Matrix> llt(xtx);
        require(llt.info() == Eigen::Success && xtx.diagonal().minCoeff() > 0.0,
                ErrorKind::InvalidArgument,
                "gamma2 = 0 requires a basis with full column rank");
    }
    UnseenQP qp;
    qp.h_bar = 2.0 * xtx.cwiseProduct(xtx);
    qp.h_bar.diagonal().array() += 2.0 * gamma2;
    qp.f_bar = -2.0 * (basis_x.transpose() * gamma_new * basis_x).diagonal();
    return qp;
}

UnseenQP build_qp(const CorrelationMatrix& gamma_new, const FittedModel& model) {
    return build_qp(gamma_new.data(), model.basis_x, model.hp.gamma2);
}

double kkt_residual(const UnseenQP& qp, const Vector& c) {
    const Vector grad = qp.h_bar * c + qp.f_bar;
    double worst = 0.0;
    for (Index r = 0; r < c.size(); ++r) {
        if (c(r) < 0.0) return std::numeric_limits<double>::infinity();
        worst = std::max(worst, c(r) > 0.0 ? std::abs(grad(r)) : std::max(0.0, -grad(r)));
    }
    return worst;
}

namespace {

// Minimizes the QP over the free coordinates with the rest pinned at zero.
Vector solve_on_free(const UnseenQP& qp, const std::vector<bool>& free) {
    const Index r = qp.f_bar.size();
    std::vector<Index> idx;
    for (Index i = 0; i < r; ++i)
        if (free[static_cast<std::size_t>(i)]) idx.push_back(i);
    Vector out = Vector::Zero(r);
    const Index m = static_cast<Index>(idx.size());
    if (m == 0) return out;
    Matrix h(m, m);
    Vector f(m);
    for (Index a = 0; a < m; ++a) {
        f(a) = qp.f_bar(idx[a]);
        for (Index b = 0; b < m; ++b) h(a, b) = qp.h_bar(idx[a], idx[b]);
    }
    Eigen::LDLT<Matrix> ldlt(h);
    require(ldlt.info() == Eigen::Success, ErrorKind::NumericalFailure,
            "reduced QP Hessian factorization failed");
    Vector z = ldlt.solve(-f);
    z += ldlt.solve(-f - h * z);  // refinement
    for (Index a = 0; a < m; ++a) out(idx[a]) = z(a);
    return out;
}

}  // namespace

Vector solve_unseen_loading(const UnseenQP& qp) {
    const Index r = qp.f_bar.size();
    require(qp.h_bar.rows() == r && qp.h_bar.cols() == r, ErrorKind::DimensionMismatch,
            "QP Hessian and linear term disagree in size");
    require(qp.h_bar.allFinite() && qp.f_bar.allFinite(), ErrorKind::NonFinite,
            "QP data must be finite");
    if (r == 0) return Vector();

    // Start from the unconstrained minimizer clipped to the orthant.
    std::vector<bool> free(static_cast<std::size_t>(r), true);
    Vector c = solve_on_free(qp, free).cwiseMax(0.0);
    for (Index i = 0; i < r; ++i) free[static_cast<std::size_t>(i)] = c(i) > 0.0;

    const double scale = 1.0 + qp.f_bar.cwiseAbs().maxCoeff();
    const int max_iters = 10 * static_cast<int>(r) + 50;
    for (int it = 0; it < max_iters; ++it) {
        const Vector target = solve_on_free(qp, free);
        const Vector d = target - c;
        if (d.cwiseAbs().maxCoeff() <= 1e-15 * (1.0 + c.cwiseAbs().maxCoeff())) {
            c = target;
            const Vector grad = qp.h_bar * c + qp.f_bar;
            Index worst = -1;
            double worst_val = -1e-14 * scale;
            for (Index i = 0; i < r; ++i) {
                if (!free[static_cast<std::size_t>(i)] && grad(i) < worst_val) {
                    worst_val = grad(i);
                    worst = i;
                }
            }
            if (worst < 0) break;
            free[static_cast<std::size_t>(worst)] = true;
            continue;
        }
        // Largest feasible step toward the face minimizer.
        double step = 1.0;
        Index blocking = -1;
        for (Index i = 0; i < r; ++i) {
            if (free[static_cast<std::size_t>(i)] && d(i) < 0.0) {
                const double s = -c(i) / d(i);
                if (s < step) {
                    step = s;
                    blocking = i;
                }
            }
        }
        c += step * d;
        if (blocking >= 0) {
            c(blocking) = 0.0;
            free[static_cast<std::size_t>(blocking)] = false;
        }
        for (Index i = 0; i < r; ++i) {
            if (c(i) <= 0.0) {
                c(i) = 0.0;
                if (i != blocking && d(i) < 0.0) free[static_cast<std::size_t>(i)] = false;
            }
        }
    }
    c = c.cwiseMax(0.0);
    const double tol = 1e-10 * scale;
    if (kkt_residual(qp, c) <= tol || r > 16) return c;

    // Fallback: enumerate active sets and keep the KKT point with the lowest value.
    Vector best = c;
    double best_val = 0.5 * c.dot(qp.h_bar * c) + qp.f_bar.dot(c);
    for (std::uint32_t mask = 0; mask < (1u << r); ++mask) {
        for (Index i = 0; i < r; ++i) free[static_cast<std::size_t>(i)] = (mask >> i) & 1u;
        const Vector trial = solve_on_free(qp, free);
        if (trial.minCoeff() < 0.0) continue;
        const double val = 0.5 * trial.dot(qp.h_bar * trial) + qp.f_bar.dot(trial);
        if (val < best_val) {
            best_val = val;
            best = trial;
        }
    }
    return best;
}

UnseenPrediction predict_unseen(const CorrelationMatrix& gamma_new, const FittedModel& model) {
    UnseenPrediction out;
    out.loading = solve_unseen_loading(build_qp(gamma_new, model));
    out.score = predict(out.loading, model.dual);
    return out;
}

}  // namespace cmo

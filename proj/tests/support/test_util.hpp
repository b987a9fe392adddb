#pragma once

#include "cmo/cohort.hpp"
#include "cmo/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace cmo::testing {

// Seeded generators for property tests.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(eng_);
    }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }

    Vector vector(Index n, double lo = 0.0, double hi = 1.0) {
        Vector v(n);
        for (Index i = 0; i < n; ++i) v(i) = uniform(lo, hi);
        return v;
    }
    Matrix matrix(Index r, Index c, double lo = -1.0, double hi = 1.0) {
        Matrix m(r, c);
        for (Index j = 0; j < c; ++j)
            for (Index i = 0; i < r; ++i) m(i, j) = uniform(lo, hi);
        return m;
    }
    Matrix gaussian(Index r, Index c) {
        Matrix m(r, c);
        for (Index j = 0; j < c; ++j)
            for (Index i = 0; i < r; ++i) m(i, j) = normal();
        return m;
    }
    Matrix symmetric(Index p) {
        const Matrix a = matrix(p, p);
        return 0.5 * (a + a.transpose());
    }
    // W W^T / cols, symmetrized exactly
    Matrix psd(Index p, Index cols) {
        const Matrix w = gaussian(p, cols);
        Matrix g = w * w.transpose() / static_cast<double>(cols);
        return 0.5 * (g + g.transpose());
    }

    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
};

inline double rel_err(const Matrix& a, const Matrix& b) {
    const double scale = std::max(a.norm(), b.norm());
    return scale == 0.0 ? 0.0 : (a - b).norm() / scale;
}

inline double rel_err(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

// Central differences, step h.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                          double h = 1e-6) {
    Vector g(x.size());
    for (Index i = 0; i < x.size(); ++i) {
        Vector xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        g(i) = (f(xp) - f(xm)) / (2.0 * h);
    }
    return g;
}

inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x,
                          double h = 1e-6) {
    const Index m = f(x).size();
    Matrix j(m, x.size());
    for (Index i = 0; i < x.size(); ++i) {
        Vector xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        j.col(i) = (f(xp) - f(xm)) / (2.0 * h);
    }
    return j;
}

inline Matrix fd_matrix_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x,
                                 double h = 1e-6) {
    Matrix g(x.rows(), x.cols());
    for (Index j = 0; j < x.cols(); ++j)
        for (Index i = 0; i < x.rows(); ++i) {
            Matrix xp = x, xm = x;
            xp(i, j) += h;
            xm(i, j) -= h;
            g(i, j) = (f(xp) - f(xm)) / (2.0 * h);
        }
    return g;
}

// Cyclic Jacobi rotations; eigenvalues sorted descending. Independent of Eigen's solver.
inline Vector jacobi_eigenvalues(Matrix a, int sweeps = 100) {
    const Index n = a.rows();
    for (int s = 0; s < sweeps; ++s) {
        double off = 0.0;
        for (Index i = 0; i < n; ++i)
            for (Index j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        if (off < 1e-30 * std::max(1.0, a.squaredNorm())) break;
        for (Index p = 0; p < n; ++p)
            for (Index q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                for (Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
            }
    }
    std::vector<double> ev(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) ev[static_cast<std::size_t>(i)] = a(i, i);
    std::sort(ev.begin(), ev.end(), std::greater<>());
    return Eigen::Map<Vector>(ev.data(), n);
}

// Random cohort of N PSD matrices with scores in [0, 10].
inline CohortDataset random_cohort(Rng& rng, Index p, Index n) {
    std::vector<Matrix> mats;
    for (Index i = 0; i < n; ++i) mats.push_back(rng.psd(p, p + 2));
    return validate_cohort(mats, rng.vector(n, 0.0, 10.0));
}

// Random full ModelState (anchors = loadings, random alpha) for derivative checks.
inline ModelState random_state(Rng& rng, Index p, Index r, Index n) {
    ModelState s;
    s.basis_x = rng.matrix(p, r);
    s.loadings = rng.matrix(r, n, 0.0, 1.5);
    for (Index i = 0; i < n; ++i) {
        s.v_mats.push_back(rng.matrix(p, r));
        s.duals.push_back(rng.matrix(p, r, -0.5, 0.5));
    }
    s.anchors = rng.matrix(r, n, 0.0, 1.5);
    s.alpha = rng.vector(n, -1.0, 1.0);
    return s;
}

}  // namespace cmo::testing

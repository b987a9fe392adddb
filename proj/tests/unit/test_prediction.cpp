#include "cmo/errors.hpp"
#include "cmo/prediction.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace cmo;
using cmo::testing::Rng;
using cmo::testing::rel_err;

namespace {

double qp_value(const UnseenQP& qp, const Vector& c) { return 0.5 * c.dot(qp.h_bar * c) + qp.f_bar.dot(c); }

// Exhaustive active-set enumeration: minimum over every free set whose
// unconstrained solution is nonnegative.
double enumerate_min(const UnseenQP& qp) {
    const Index r = qp.f_bar.size();
    double best = 0.0;
    for (int mask = 1; mask < (1 << r); ++mask) {
        std::vector<Index> free;
        for (Index i = 0; i < r; ++i)
            if (mask & (1 << i)) free.push_back(i);
        const Index k = static_cast<Index>(free.size());
        Matrix h(k, k);
        Vector f(k);
        for (Index a = 0; a < k; ++a) {
            f(a) = qp.f_bar(free[static_cast<std::size_t>(a)]);
            for (Index b = 0; b < k; ++b)
                h(a, b) = qp.h_bar(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
        }
        const Vector sol = h.inverse() * (-f);
        if ((sol.array() < 0.0).any()) continue;
        Vector c = Vector::Zero(r);
        for (Index a = 0; a < k; ++a) c(free[static_cast<std::size_t>(a)]) = sol(a);
        best = std::min(best, qp_value(qp, c));
    }
    return best;
}

FittedModel model_with(const Matrix& x, const Matrix& loadings, const Vector& alpha, double gamma2) {
    FittedModel m;
    m.basis_x = x;
    m.hp.gamma2 = gamma2;
    m.spec = KernelSpec::ados();
    m.dual.anchors = loadings;
    m.dual.alpha = alpha;
    m.dual.spec = m.spec;
    return m;
}

}  // namespace

TEST_CASE("build_qp examples") {
    const Vector d = (Vector(3) << 1.0, 2.0, 0.5).finished();
    const UnseenQP qp = build_qp(Matrix(d.asDiagonal()), Matrix::Identity(3, 3), 0.5);
    CHECK(rel_err(qp.h_bar, 3.0 * Matrix::Identity(3, 3)) < 1e-15);
    CHECK(rel_err(qp.f_bar, -2.0 * d) < 1e-15);

    const UnseenQP z = build_qp(Matrix::Identity(4, 4), Matrix::Zero(4, 2), 0.3);
    CHECK(rel_err(z.h_bar, 0.6 * Matrix::Identity(2, 2)) < 1e-15);
    CHECK(z.f_bar.isZero(0.0));
    CHECK(solve_unseen_loading(z).isZero(0.0));
}

TEST_CASE("build_qp matches a straight-line evaluation") {
    Rng rng(71);
    for (int t = 0; t < 50; ++t) {
        const Index p = rng.integer(3, 8), r = rng.integer(1, 3);
        const Matrix x = rng.matrix(p, r);
        const Matrix g = rng.psd(p, p);
        const double gamma2 = rng.uniform(0.0, 1.0);
        const UnseenQP qp = build_qp(g, x, gamma2);
        for (Index a = 0; a < r; ++a) {
            double f = 0.0;
            for (Index i = 0; i < p; ++i)
                for (Index j = 0; j < p; ++j) f += x(i, a) * g(i, j) * x(j, a);
            CHECK(qp.f_bar(a) == doctest::Approx(-2.0 * f).epsilon(1e-12));
            for (Index b = 0; b < r; ++b) {
                double xtx = 0.0;
                for (Index i = 0; i < p; ++i) xtx += x(i, a) * x(i, b);
                CHECK(qp.h_bar(a, b) == doctest::Approx(2.0 * xtx * xtx + (a == b ? 2.0 * gamma2 : 0.0)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("solve_unseen_loading examples") {
    const UnseenQP scalar = build_qp(Matrix::Constant(1, 1, 0.7), Matrix::Ones(1, 1), 0.0);
    CHECK(solve_unseen_loading(scalar)(0) == doctest::Approx(0.7).epsilon(1e-15));

    Rng rng(72);
    UnseenQP pos;
    pos.h_bar = rng.psd(3, 5) + Matrix::Identity(3, 3);
    pos.f_bar = rng.vector(3, 0.0, 1.0);
    CHECK(solve_unseen_loading(pos).isZero(0.0));
}

TEST_CASE("solve_unseen_loading matches active-set enumeration") {
    Rng rng(73);
    for (int t = 0; t < 200; ++t) {
        UnseenQP qp;
        qp.h_bar = rng.psd(3, 4) + 0.05 * Matrix::Identity(3, 3);
        qp.f_bar = rng.vector(3, -2.0, 1.0);
        const Vector c = solve_unseen_loading(qp);
        CHECK((c.array() >= 0.0).all());
        CHECK(kkt_residual(qp, c) < 1e-8);
        CHECK(std::abs(qp_value(qp, c) - enumerate_min(qp)) < 1e-8);
        // a fine grid around the solution finds nothing lower
        for (int k = 0; k < 200; ++k) {
            const Vector q = (c + rng.vector(3, -1e-3, 1e-3)).cwiseMax(0.0);
            CHECK(qp_value(qp, q) >= qp_value(qp, c) - 1e-12);
        }
        CHECK(solve_unseen_loading(qp) == c);
    }
}

TEST_CASE("noiseless recovery through the QP") {
    Rng rng(74);
    for (int seed = 0; seed < 50; ++seed) {
        const Index p = rng.integer(4, 12), r = rng.integer(1, 4);
        const Matrix x = rng.gaussian(p, r);
        Vector c = rng.vector(r, 0.0, 2.0);
        if (seed % 3 == 0) c(0) = 0.0;
        const Matrix g = x * c.asDiagonal() * x.transpose();
        const Vector got = solve_unseen_loading(build_qp(g, x, 0.0));
        CHECK((got - c).norm() <= 1e-6 * std::max(c.norm(), 1e-12));
    }
}

TEST_CASE("predict_unseen examples") {
    Rng rng(75);
    const Matrix x = rng.gaussian(7, 3);
    const Matrix loadings = rng.matrix(3, 5, 0.0, 2.0);
    const Vector alpha = rng.vector(5, -1.0, 1.0);
    const FittedModel m = model_with(x, loadings, alpha, 1e-12);

    const Matrix g = x * loadings.col(2).asDiagonal() * x.transpose();
    const UnseenPrediction u = predict_unseen(CorrelationMatrix(0.5 * (g + g.transpose())), m);
    CHECK((u.loading - loadings.col(2)).norm() < 1e-6 * loadings.col(2).norm());
    CHECK(u.score == doctest::Approx(predict(loadings.col(2), m.dual)).epsilon(1e-6));

    const UnseenPrediction zero = predict_unseen(CorrelationMatrix(Matrix::Zero(7, 7)), m);
    CHECK(zero.loading.isZero(0.0));
    double expect = 0.0;
    for (Index j = 0; j < 5; ++j) expect += kernel_eval(Vector::Zero(3), loadings.col(j), m.spec) * alpha(j);
    CHECK(zero.score == doctest::Approx(expect).epsilon(1e-14));

    const FittedModel null = model_with(x, loadings, Vector::Zero(5), 0.5);
    CHECK(predict_unseen(CorrelationMatrix(rng.psd(7, 9)), null).score == 0.0);
}

TEST_CASE("build_qp rejects bad input") {
    CHECK_THROWS_AS(build_qp(Matrix::Identity(3, 3), Matrix::Zero(4, 2), 0.5), Error);
    CHECK_THROWS_AS(build_qp(Matrix::Identity(3, 3), Matrix::Zero(3, 2), 0.0), Error);
    CHECK_THROWS_AS(build_qp(Matrix::Identity(3, 3), Matrix::Ones(3, 2), -1.0), Error);
}

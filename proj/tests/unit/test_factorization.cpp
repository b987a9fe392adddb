#include "cmo/errors.hpp"
#include "cmo/factorization.hpp"
#include "cmo/kernel.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace cmo;
using cmo::testing::Rng;
using cmo::testing::rel_err;

namespace {

// Built without validate_cohort, which requires two patients.
CohortDataset cohort_of(std::vector<Matrix> mats, Vector y) {
    CohortDataset c;
    for (auto& m : mats) c.matrices.emplace_back(std::move(m));
    c.scores = std::move(y);
    return c;
}

// Consistent state: Gamma_n = X diag(c_n) X^T, V_n = X diag(c_n), Lambda_n = 0.
std::pair<ModelState, CohortDataset> consistent(Rng& rng, Index p, Index r, Index n) {
    ModelState s;
    s.basis_x = rng.matrix(p, r);
    s.loadings = rng.matrix(r, n, 0.1, 1.5);
    std::vector<Matrix> mats;
    for (Index i = 0; i < n; ++i) {
        const Matrix v = s.basis_x * s.loadings.col(i).asDiagonal();
        s.v_mats.push_back(v);
        s.duals.push_back(Matrix::Zero(p, r));
        const Matrix g = v * s.basis_x.transpose();
        mats.push_back(0.5 * (g + g.transpose()));
    }
    s.anchors = s.loadings;
    s.alpha = Vector::Zero(n);
    return {s, cohort_of(mats, Vector::Zero(n))};
}

}  // namespace

TEST_CASE("objective examples") {
    const Index p = 4;
    std::vector<Matrix> mats;
    ModelState s;
    s.basis_x = Matrix::Identity(p, p);
    s.loadings.resize(p, 2);
    Rng rng(31);
    for (Index i = 0; i < 2; ++i) {
        const Vector d = rng.vector(p, 0.0, 2.0);
        mats.push_back(Matrix(d.asDiagonal()));
        s.loadings.col(i) = d;
        s.v_mats.push_back(Matrix(d.asDiagonal()));
        s.duals.push_back(Matrix::Zero(p, p));
    }
    s.anchors = s.loadings;
    s.alpha = Vector::Zero(2);
    const CohortDataset c = cohort_of(mats, Vector::Zero(2));
    Hyperparams hp;
    const ObjectiveBreakdown o = objective(s, c, hp, KernelSpec::ados());
    CHECK(o.fit_term == 0.0);
    CHECK(o.regression_term == 0.0);
    CHECK(o.total_j == doctest::Approx(hp.gamma1 * p + hp.gamma2 * s.loadings.squaredNorm()).epsilon(1e-14));

    ModelState z;
    z.basis_x = Matrix::Zero(3, 2);
    z.loadings = Matrix::Zero(2, 1);
    z.v_mats = {Matrix::Zero(3, 2)};
    z.duals = {Matrix::Zero(3, 2)};
    z.anchors = Matrix::Zero(2, 1);
    z.alpha = Vector::Zero(1);
    const CohortDataset one = cohort_of({Matrix::Identity(3, 3)}, Vector::Zero(1));
    CHECK(objective(z, one, hp, KernelSpec::ados()).fit_term == 3.0);
}

TEST_CASE("objective matches a straight-line recomputation") {
    Rng rng(32);
    for (int t = 0; t < 30; ++t) {
        const Index p = rng.integer(2, 6), r = rng.integer(1, 3), n = rng.integer(2, 5);
        const CohortDataset c = cmo::testing::random_cohort(rng, p, n);
        const ModelState s = cmo::testing::random_state(rng, p, r, n);
        Hyperparams hp;
        hp.lambda = rng.uniform(0.1, 2.0);
        hp.gamma1 = rng.uniform(0.1, 2.0);
        hp.gamma2 = rng.uniform(0.1, 2.0);
        hp.gamma3 = rng.uniform(0.1, 2.0);
        const KernelSpec k = KernelSpec::srs();
        double fit = 0, reg = 0, l1 = 0, l2c = 0, l2w = 0, res = 0;
        for (Index i = 0; i < n; ++i) {
            for (Index a = 0; a < p; ++a)
                for (Index b = 0; b < p; ++b) {
                    double m = 0;
                    for (Index q = 0; q < r; ++q) m += s.basis_x(a, q) * s.loadings(q, i) * s.basis_x(b, q);
                    fit += (c.gamma(i)(a, b) - m) * (c.gamma(i)(a, b) - m);
                }
            double pred = 0;
            for (Index j = 0; j < n; ++j) pred += s.alpha(j) * kernel_eval(s.loadings.col(i), s.anchors.col(j), k);
            reg += (c.scores(i) - pred) * (c.scores(i) - pred);
            for (Index q = 0; q < r; ++q) l2c += s.loadings(q, i) * s.loadings(q, i);
            for (Index j = 0; j < n; ++j)
                l2w += s.alpha(i) * s.alpha(j) * kernel_eval(s.anchors.col(i), s.anchors.col(j), k);
            double gap = 0;
            for (Index a = 0; a < p; ++a)
                for (Index q = 0; q < r; ++q) {
                    const double d = s.v_mats[static_cast<std::size_t>(i)](a, q) - s.basis_x(a, q) * s.loadings(q, i);
                    gap += d * d;
                }
            res += std::sqrt(gap);
        }
        for (Index a = 0; a < p; ++a)
            for (Index q = 0; q < r; ++q) l1 += std::abs(s.basis_x(a, q));
        const ObjectiveBreakdown o = objective(s, c, hp, k);
        CHECK(rel_err(o.fit_term, fit) < 1e-12);
        CHECK(rel_err(o.regression_term, hp.lambda * reg) < 1e-12);
        CHECK(rel_err(o.l1_x, hp.gamma1 * l1) < 1e-12);
        CHECK(rel_err(o.l2_c, hp.gamma2 * l2c) < 1e-12);
        CHECK(rel_err(o.l2_w, hp.gamma3 * l2w) < 1e-12);
        CHECK(rel_err(o.constraint_residual, res) < 1e-12);
        CHECK(rel_err(o.total_j, o.fit_term + o.regression_term + o.l1_x + o.l2_c + o.l2_w) < 1e-15);
    }
}

TEST_CASE("soft_threshold examples") {
    Matrix m(2, 2);
    m << 2.0, -0.5, 0.1, -3.0;
    Matrix expect(2, 2);
    expect << 1.5, 0.0, 0.0, -2.5;
    CHECK(soft_threshold(m, 0.5) == expect);
    CHECK(soft_threshold(m, 3.0).isZero(0.0));
    CHECK(soft_threshold(m, 10.0).isZero(0.0));
    CHECK((soft_threshold(m, 1e-15) - m).cwiseAbs().maxCoeff() <= 1e-15 + 4.0 * 3.0 * 2.3e-16);
    CHECK(soft_threshold(m, 0.0) == m);
    CHECK_THROWS_AS(soft_threshold(m, -1.0), Error);
}

TEST_CASE("soft_threshold is the exact 1-D prox minimizer") {
    Rng rng(33);
    for (int t = 0; t < 20; ++t) {
        const Matrix m = rng.matrix(3, 3, -3.0, 3.0);
        const double th = rng.uniform(0.0, 2.0);
        const Matrix z = soft_threshold(m, th);
        for (Index k = 0; k < m.size(); ++k) {
            const double mk = m(k);
            auto obj = [&](double v) { return 0.5 * (v - mk) * (v - mk) + th * std::abs(v); };
            const int steps = 60000;
            const double lo = -4.0, hi = 4.0, dz = (hi - lo) / steps;
            double best = lo, best_val = obj(lo);
            for (int s = 1; s <= steps; ++s) {
                const double v = lo + s * dz;
                if (obj(v) < best_val) { best_val = obj(v); best = v; }
            }
            CHECK(std::abs(best - z(k)) <= dz);
            CHECK(obj(z(k)) <= best_val + 1e-15);
        }
    }
}

TEST_CASE("grad_x examples") {
    Rng rng(34);
    auto [s, c] = consistent(rng, 5, 3, 4);
    CHECK(grad_x(s, c).cwiseAbs().maxCoeff() < 1e-12);

    ModelState one;
    one.basis_x = Matrix::Ones(1, 1);
    one.loadings = Matrix::Ones(1, 1);
    one.v_mats = {Matrix::Ones(1, 1)};
    one.duals = {Matrix::Zero(1, 1)};
    const CohortDataset c1 = cohort_of({Matrix::Ones(1, 1)}, Vector::Zero(1));
    CHECK(grad_x(one, c1)(0, 0) == 0.0);
}

TEST_CASE("grad_x agrees with finite differences") {
    Rng rng(35);
    int bad = 0;
    for (int t = 0; t < 100; ++t) {
        const Index p = rng.integer(2, 10), r = rng.integer(1, 4), n = rng.integer(1, 5);
        const CohortDataset c = cmo::testing::random_cohort(rng, p, std::max<Index>(n, 2));
        const ModelState s = cmo::testing::random_state(rng, p, r, c.n());
        const Matrix g = grad_x(s, c);
        const Matrix fd = cmo::testing::fd_matrix_gradient(
            [&](const Matrix& x) { return x_smooth_objective(x, s, c); }, s.basis_x);
        if (rel_err(g, fd) >= 1e-5) ++bad;
    }
    CHECK(bad == 0);
}

TEST_CASE("grad_x does not depend on the thread count") {
    Rng rng(36);
    const CohortDataset c = cmo::testing::random_cohort(rng, 6, 7);
    const ModelState s = cmo::testing::random_state(rng, 6, 3, 7);
    CHECK(grad_x(s, c, 1) == grad_x(s, c, 4));
}

TEST_CASE("update_x with a zero gradient is a pure prox step") {
    Rng rng(37);
    ModelState s;
    s.basis_x = rng.matrix(4, 2, 1.0, 2.0);
    s.basis_x(0, 0) = -1.5;
    s.loadings = Matrix::Zero(2, 3);
    s.v_mats.assign(3, Matrix::Zero(4, 2));
    s.duals.assign(3, Matrix::Zero(4, 2));
    const CohortDataset c = cmo::testing::random_cohort(rng, 4, 3);
    Hyperparams hp;
    hp.gamma1 = 2.0;
    const XUpdate u = update_x(s, c, hp, 0.1);
    CHECK(u.basis == soft_threshold(s.basis_x, 0.1 * 2.0));
    CHECK(u.step == 0.1);
}

TEST_CASE("update_x keeps a consistent state fixed") {
    Rng rng(38);
    auto [s, c] = consistent(rng, 5, 2, 3);
    Hyperparams hp;
    hp.gamma1 = 1e-14;
    const XUpdate u = update_x(s, c, hp);
    CHECK((u.basis - s.basis_x).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("update_x never increases the X-block objective") {
    Rng rng(39);
    for (int t = 0; t < 50; ++t) {
        const Index p = rng.integer(2, 8), r = rng.integer(1, 4), n = rng.integer(2, 5);
        const CohortDataset c = cmo::testing::random_cohort(rng, p, n);
        const ModelState s = cmo::testing::random_state(rng, p, r, n);
        Hyperparams hp;
        hp.gamma1 = rng.uniform(0.01, 1.0);
        hp.prox_iters = rng.integer(1, 5);
        const XUpdate u = update_x(s, c, hp, rng.uniform(1e-3, 1.0));
        CHECK(u.objective_before == doctest::Approx(x_block_objective(s.basis_x, s, c, hp)).epsilon(1e-14));
        CHECK(u.objective_after == doctest::Approx(x_block_objective(u.basis, s, c, hp)).epsilon(1e-14));
        CHECK(u.objective_after <= u.objective_before);
    }
}

TEST_CASE("update_v examples") {
    ModelState one;
    one.basis_x = Matrix::Ones(1, 1);
    one.loadings = Matrix::Ones(1, 1);
    one.v_mats = {Matrix::Zero(1, 1)};
    one.duals = {Matrix::Zero(1, 1)};
    const CohortDataset c1 = cohort_of({Matrix::Ones(1, 1)}, Vector::Zero(1));
    CHECK(update_v(one, c1)[0](0, 0) == doctest::Approx(1.0).epsilon(1e-15));

    Rng rng(40);
    auto [s, c] = consistent(rng, 6, 3, 4);
    const auto v = update_v(s, c);
    for (Index i = 0; i < 4; ++i)
        CHECK((v[static_cast<std::size_t>(i)] - s.basis_x * s.loadings.col(i).asDiagonal()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("update_v output is stationary in V_n") {
    Rng rng(41);
    for (int t = 0; t < 50; ++t) {
        const Index p = rng.integer(2, 8), r = rng.integer(1, 4), n = rng.integer(2, 5);
        const CohortDataset c = cmo::testing::random_cohort(rng, p, n);
        ModelState s = cmo::testing::random_state(rng, p, r, n);
        s.v_mats = update_v(s, c);
        for (Index i = 0; i < n; ++i) {
            const auto idx = static_cast<std::size_t>(i);
            // the objective is quadratic in V_n, so the central stencil is exact for any h
            const Matrix fd = cmo::testing::fd_matrix_gradient(
                [&](const Matrix& v) {
                    ModelState m = s;
                    m.v_mats[idx] = v;
                    return x_smooth_objective(m.basis_x, m, c);
                },
                s.v_mats[idx], 1e-3);
            CHECK(fd.norm() < 1e-8);
        }
    }
}

TEST_CASE("update_duals examples") {
    ModelState s;
    s.basis_x = Matrix::Zero(3, 2);
    s.loadings = Matrix::Ones(2, 1);
    s.v_mats = {Matrix::Ones(3, 2)};
    s.duals = {Matrix::Zero(3, 2)};
    const auto d = update_duals(s, 0.01);
    CHECK((d[0] - 0.01 * Matrix::Ones(3, 2)).cwiseAbs().maxCoeff() == 0.0);

    Rng rng(42);
    auto [st, c] = consistent(rng, 4, 2, 3);
    st.duals[1] = rng.matrix(4, 2);
    const auto same = update_duals(st, 0.7);
    for (std::size_t i = 0; i < 3; ++i) CHECK((same[i] - st.duals[i]).cwiseAbs().maxCoeff() < 1e-15);
    CHECK_THROWS_AS(update_duals(st, -1.0), Error);
}

#include "cmo/evaluation.hpp"

#include "cmo/errors.hpp"
#include "cmo/parallel.hpp"
#include "cmo/prediction.hpp"
#include "cmo/regression.hpp"
#include "cmo/solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <tuple>

namespace cmo {

double mae(const Vector& y_true, const Vector& y_pred) {
    require(y_true.size() == y_pred.size(), ErrorKind::DimensionMismatch,
            "mae inputs differ in length");
    require(y_true.size() > 0, ErrorKind::InvalidArgument, "mae of an empty sample");
    std::vector<double> err(static_cast<std::size_t>(y_true.size()));
    for (Index i = 0; i < y_true.size(); ++i)
        err[static_cast<std::size_t>(i)] = std::abs(y_true(i) - y_pred(i));
    std::sort(err.begin(), err.end());
    const std::size_t m = err.size();
    return m % 2 == 1 ? err[m / 2] : 0.5 * (err[m / 2 - 1] + err[m / 2]);
}

namespace {

// Returns false when the range is zero.
bool bin_indices(const Vector& v, int bins, std::vector<int>& out) {
    const double lo = v.minCoeff();
    const double hi = v.maxCoeff();
    if (!(hi > lo)) return false;
    out.resize(static_cast<std::size_t>(v.size()));
    for (Index i = 0; i < v.size(); ++i) {
        const int b = static_cast<int>(std::floor((v(i) - lo) / (hi - lo) * bins));
        out[static_cast<std::size_t>(i)] = std::clamp(b, 0, bins - 1);
    }
    return true;
}

}  // namespace

double mutual_information(const Vector& a, const Vector& b, int bins) {
    require(a.size() == b.size(), ErrorKind::DimensionMismatch, "MI inputs differ in length");
    require(a.size() >= 2 && bins >= 2, ErrorKind::InvalidArgument,
            "MI needs at least two samples and two bins");
    require(a.allFinite() && b.allFinite(), ErrorKind::NonFinite, "MI inputs must be finite");
    std::vector<int> ia, ib;
    if (!bin_indices(a, bins, ia) || !bin_indices(b, bins, ib)) return 0.0;
    const auto k = static_cast<std::size_t>(bins);
    std::vector<long> joint(k * k, 0), ca(k, 0), cb(k, 0);
    for (std::size_t i = 0; i < ia.size(); ++i) {
        const auto x = static_cast<std::size_t>(ia[i]);
        const auto y = static_cast<std::size_t>(ib[i]);
        ++joint[x * k + y];
        ++ca[x];
        ++cb[y];
    }
    // Integer counts and a sorted summation make the estimate exactly symmetric in its arguments.
    const double n = static_cast<double>(a.size());
    std::vector<double> terms;
    for (std::size_t x = 0; x < k; ++x) {
        for (std::size_t y = 0; y < k; ++y) {
            const auto c = static_cast<double>(joint[x * k + y]);
            if (c > 0.0)
                terms.push_back(c / n *
                                std::log2(c * n / (static_cast<double>(ca[x]) * static_cast<double>(cb[y]))));
        }
    }
    std::sort(terms.begin(), terms.end());
    double mi = 0.0;
    for (double t : terms) mi += t;
    return std::max(mi, 0.0);
}

double binned_entropy(const Vector& a, int bins) {
    require(a.size() >= 1 && bins >= 2, ErrorKind::InvalidArgument, "entropy needs data and bins");
    std::vector<int> ia;
    if (!bin_indices(a, bins, ia)) return 0.0;
    std::vector<double> p(static_cast<std::size_t>(bins), 0.0);
    for (int b : ia) p[static_cast<std::size_t>(b)] += 1.0 / static_cast<double>(a.size());
    double h = 0.0;
    for (double q : p)
        if (q > 0.0) h -= q * std::log2(q);
    return h;
}

std::vector<int> fold_assignment(Index n, int folds, std::uint64_t seed) {
    require(folds >= 2, ErrorKind::InvalidArgument, "need at least two folds");
    require(n >= folds, ErrorKind::InvalidArgument, "need at least one sample per fold");
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> out(static_cast<std::size_t>(n));
    for (std::size_t pos = 0; pos < order.size(); ++pos)
        out[static_cast<std::size_t>(order[pos])] = static_cast<int>(pos % static_cast<std::size_t>(folds));
    return out;
}

namespace {

CohortDataset subset(const CohortDataset& cohort, const std::vector<Index>& idx) {
    CohortDataset out;
    out.score_name = cohort.score_name;
    out.scores.resize(static_cast<Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out.matrices.push_back(cohort.matrices[static_cast<std::size_t>(idx[i])]);
        out.scores(static_cast<Index>(i)) = cohort.scores(idx[i]);
    }
    return out;
}

struct FoldOutput {
    FoldResult result;
    Vector train_true, train_pred, test_pred;
};

enum class Method { Coupled, Decoupled };

FoldOutput run_fold(const CohortDataset& cohort, const Hyperparams& hp, const KernelSpec& spec,
                    const CvOptions& options, const std::vector<int>& assignment, int fold,
                    Method method) {
    FoldOutput out;
    out.result.fold = fold;
    for (Index i = 0; i < cohort.n(); ++i)
        (assignment[static_cast<std::size_t>(i)] == fold ? out.result.test : out.result.train)
            .push_back(i);
    const CohortDataset train = subset(cohort, out.result.train);

    FittedModel model;
    try {
        if (method == Method::Coupled) {
            auto fitted = fit(train, hp, spec, options.seed);
            if (options.on_fit) options.on_fit(fold, fitted.second);
            model = std::move(fitted.first);
        } else {
            Hyperparams factor_only = hp;
            factor_only.lambda = 0.0;
            auto fitted = fit(train, factor_only, spec, options.seed);
            if (options.on_fit) options.on_fit(fold, fitted.second);
            model = std::move(fitted.first);
            // Post-hoc kernel ridge regression on the frozen loadings.
            const double ridge = hp.lambda > 0.0 ? hp.ridge() : hp.gamma3;
            model.dual = solve_dual(model.dual.anchors, train.scores, spec, ridge);
        }
    } catch (const Error& e) {
        fail(e.kind(), "fold " + std::to_string(fold) + ": " + e.what());
    }
    out.result.converged = model.summary.converged;

    out.train_true = train.scores;
    out.train_pred = training_predictions(model);
    Vector test_true(static_cast<Index>(out.result.test.size()));
    out.test_pred.resize(test_true.size());
    for (std::size_t i = 0; i < out.result.test.size(); ++i) {
        const Index idx = out.result.test[i];
        test_true(static_cast<Index>(i)) = cohort.scores(idx);
        out.test_pred(static_cast<Index>(i)) =
            predict_unseen(cohort.matrices[static_cast<std::size_t>(idx)], model).score;
    }
    out.result.mae_train = mae(out.train_true, out.train_pred);
    out.result.mae_test = mae(test_true, out.test_pred);
    out.result.mi_train = mutual_information(out.train_true, out.train_pred, options.mi_bins);
    out.result.mi_test = test_true.size() >= 2
                             ? mutual_information(test_true, out.test_pred, options.mi_bins)
                             : 0.0;
    return out;
}

EvalReport run_cv(const CohortDataset& cohort, const Hyperparams& hp, const KernelSpec& spec,
                  const CvOptions& options, Method method) {
    hp.validate(cohort.p());
    spec.validate();
    EvalReport report;
    report.method = method == Method::Coupled ? "cmo" : "decoupled";
    report.hp = hp;
    report.spec = spec;
    report.options = options;
    report.assignment = fold_assignment(cohort.n(), options.folds, options.seed);

    std::vector<FoldOutput> outputs(static_cast<std::size_t>(options.folds));
    parallel_for(options.folds, options.threads, [&](std::ptrdiff_t f) {
        outputs[static_cast<std::size_t>(f)] =
            run_fold(cohort, hp, spec, options, report.assignment, static_cast<int>(f), method);
    });

    report.test_true = cohort.scores;
    report.test_pred = Vector::Zero(cohort.n());
    std::vector<double> tt, tp;
    for (auto& out : outputs) {
        for (std::size_t i = 0; i < out.result.test.size(); ++i)
            report.test_pred(out.result.test[i]) = out.test_pred(static_cast<Index>(i));
        tt.insert(tt.end(), out.train_true.data(), out.train_true.data() + out.train_true.size());
        tp.insert(tp.end(), out.train_pred.data(), out.train_pred.data() + out.train_pred.size());
        report.folds.push_back(std::move(out.result));
    }
    report.train_true = Eigen::Map<Vector>(tt.data(), static_cast<Index>(tt.size()));
    report.train_pred = Eigen::Map<Vector>(tp.data(), static_cast<Index>(tp.size()));
    report.mae_train = mae(report.train_true, report.train_pred);
    report.mae_test = mae(report.test_true, report.test_pred);
    report.mi_train = mutual_information(report.train_true, report.train_pred, options.mi_bins);
    report.mi_test = mutual_information(report.test_true, report.test_pred, options.mi_bins);
    return report;
}

}  // namespace

EvalReport cross_validate(const CohortDataset& cohort, const Hyperparams& hp,
                          const KernelSpec& spec, const CvOptions& options) {
    return run_cv(cohort, hp, spec, options, Method::Coupled);
}

EvalReport decoupled_baseline(const CohortDataset& cohort, const Hyperparams& hp,
                              const KernelSpec& spec, const CvOptions& options) {
    return run_cv(cohort, hp, spec, options, Method::Decoupled);
}

std::vector<SweepEntry> grid_sweep(const CohortDataset& cohort, const Hyperparams& base_hp,
                                   const KernelSpec& base_spec, const SweepGrid& grid,
                                   const CvOptions& options) {
    auto axis = [](const std::vector<double>& v, double fallback) {
        return v.empty() ? std::vector<double>{fallback} : v;
    };
    const auto lambdas = axis(grid.lambda, base_hp.lambda);
    const auto g1s = axis(grid.gamma1, base_hp.gamma1);
    const auto g2s = axis(grid.gamma2, base_hp.gamma2);
    const auto g3s = axis(grid.gamma3, base_hp.gamma3);
    const auto sigmas = axis(grid.sigma_sq, base_spec.sigma_sq);
    const auto rhos = axis(grid.rho, base_spec.rho);
    const auto ells = axis(grid.ell, base_spec.ell);

    std::vector<SweepEntry> entries;
    for (double l : lambdas)
        for (double g1 : g1s)
            for (double g2 : g2s)
                for (double g3 : g3s)
                    for (double s : sigmas)
                        for (double rho : rhos)
                            for (double ell : ells) {
                                SweepEntry e;
                                e.hp = base_hp;
                                e.hp.lambda = l;
                                e.hp.gamma1 = g1;
                                e.hp.gamma2 = g2;
                                e.hp.gamma3 = g3;
                                e.spec = base_spec;
                                e.spec.sigma_sq = s;
                                e.spec.rho = rho;
                                e.spec.ell = ell;
                                entries.push_back(e);
                            }
    require(!entries.empty(), ErrorKind::InvalidArgument, "sweep grid is empty");

    CvOptions inner = options;
    inner.threads = 1;
    parallel_for(static_cast<std::ptrdiff_t>(entries.size()), options.threads,
                 [&](std::ptrdiff_t i) {
                     auto& e = entries[static_cast<std::size_t>(i)];
                     try {
                         const EvalReport r = cross_validate(cohort, e.hp, e.spec, inner);
                         e.ok = true;
                         e.mae_train = r.mae_train;
                         e.mae_test = r.mae_test;
                         e.mi_test = r.mi_test;
                     } catch (const std::exception& ex) {
                         e.ok = false;
                         e.error = ex.what();
                     }
                 });

    auto key = [](const SweepEntry& e) {
        return std::make_tuple(e.hp.lambda, e.hp.gamma1, e.hp.gamma2, e.hp.gamma3, e.spec.sigma_sq,
                               e.spec.rho, e.spec.ell);
    };
    std::stable_sort(entries.begin(), entries.end(), [&](const SweepEntry& a, const SweepEntry& b) {
        if (a.ok != b.ok) return a.ok;
        if (a.ok && a.mae_test != b.mae_test) return a.mae_test < b.mae_test;
        return key(a) < key(b);
    });
    return entries;
}

}  // namespace cmo

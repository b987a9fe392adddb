#include "cmo/synth.hpp"

#include "cmo/errors.hpp"
#include "cmo/kernel.hpp"
#include "cmo/regression.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace cmo {

void SynthConfig::validate() const {
    require(p >= 1 && r >= 1 && r <= p && n >= 2, ErrorKind::InvalidArgument,
            "synthetic cohort needs P >= R >= 1 and N >= 2");
    require(sparsity_x >= 0.0 && sparsity_x < 1.0, ErrorKind::InvalidArgument,
            "sparsity_x must lie in [0, 1)");
    require(loading_scale >= 0.0 && noise_sigma >= 0.0 && score_noise_sigma >= 0.0 &&
                alpha_scale >= 0.0,
            ErrorKind::InvalidArgument, "synthetic scales must be >= 0");
    require(anchor_count >= 1, ErrorKind::InvalidArgument, "anchor_count must be >= 1");
    require(component_scales.empty() || static_cast<Index>(component_scales.size()) == r,
            ErrorKind::InvalidArgument, "component_scales needs one entry per column");
    require(component_offsets.empty() || static_cast<Index>(component_offsets.size()) == r,
            ErrorKind::InvalidArgument, "component_offsets needs one entry per column");
    for (double s : component_scales)
        require(s >= 0.0, ErrorKind::InvalidArgument, "component_scales must be >= 0");
    for (double s : component_offsets)
        require(s >= 0.0, ErrorKind::InvalidArgument, "component_offsets must be >= 0");
    for (Index k : score_components)
        require(k >= 0 && k < r, ErrorKind::InvalidArgument, "score component out of range");
    kernel.validate();
}

std::pair<CohortDataset, GroundTruth> generate(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    GroundTruth truth;
    truth.true_x.resize(cfg.p, cfg.r);
    for (Index k = 0; k < cfg.r; ++k) {
        Vector col(cfg.p);
        do {
            for (Index i = 0; i < cfg.p; ++i) {
                const double v = normal(rng);
                col(i) = unit(rng) < cfg.sparsity_x ? 0.0 : v;
            }
        } while (col.norm() == 0.0);
        truth.true_x.col(k) = col / col.norm();
    }

    auto scale = [&](Index k) {
        return cfg.loading_scale *
               (cfg.component_scales.empty() ? 1.0 : cfg.component_scales[static_cast<std::size_t>(k)]);
    };
    auto offset = [&](Index k) {
        return cfg.component_offsets.empty() ? 0.0 : cfg.component_offsets[static_cast<std::size_t>(k)];
    };
    std::vector<Index> read = cfg.score_components;
    if (read.empty()) {
        read.resize(static_cast<std::size_t>(cfg.r));
        std::iota(read.begin(), read.end(), Index{0});
    }
    const auto q = static_cast<Index>(read.size());

    truth.true_loadings.resize(cfg.r, cfg.n);
    for (Index j = 0; j < cfg.n; ++j)
        for (Index k = 0; k < cfg.r; ++k) truth.true_loadings(k, j) = offset(k) + scale(k) * unit(rng);

    truth.anchors.resize(q, cfg.anchor_count);
    truth.true_alpha.resize(cfg.anchor_count);
    for (Index j = 0; j < cfg.anchor_count; ++j) {
        for (Index k = 0; k < q; ++k)
            truth.anchors(k, j) = offset(read[static_cast<std::size_t>(k)]) +
                                  scale(read[static_cast<std::size_t>(k)]) * unit(rng);
        truth.true_alpha(j) = cfg.alpha_scale * unit(rng);
    }

    RegressionDual generator;
    generator.alpha = truth.true_alpha;
    generator.anchors = truth.anchors;
    generator.spec = cfg.kernel;

    std::vector<Matrix> mats;
    mats.reserve(static_cast<std::size_t>(cfg.n));
    truth.clean_scores.resize(cfg.n);
    truth.noisy_scores.resize(cfg.n);
    for (Index j = 0; j < cfg.n; ++j) {
        const Vector c = truth.true_loadings.col(j);
        Matrix g = truth.true_x * c.asDiagonal() * truth.true_x.transpose();
        if (cfg.noise_sigma > 0.0) {
            Matrix w(cfg.p, cfg.p);
            for (Index a = 0; a < cfg.p; ++a)
                for (Index b = 0; b < cfg.p; ++b) w(a, b) = normal(rng);
            g += (cfg.noise_sigma / static_cast<double>(cfg.p)) * (w * w.transpose());
        }
        g = 0.5 * (g + g.transpose()).eval();
        mats.push_back(std::move(g));
        Vector sub(q);
        for (Index k = 0; k < q; ++k) sub(k) = c(read[static_cast<std::size_t>(k)]);
        truth.clean_scores(j) = predict(sub, generator);
        truth.noisy_scores(j) =
            truth.clean_scores(j) +
            (cfg.score_noise_sigma > 0.0 ? cfg.score_noise_sigma * normal(rng) : 0.0);
    }

    CohortDataset cohort;
    cohort.score_name = "synthetic";
    cohort.scores = truth.noisy_scores;
    for (auto& m : mats) cohort.matrices.emplace_back(std::move(m));
    return {std::move(cohort), std::move(truth)};
}

std::vector<RecoveryCurve> kernel_recovery_experiment(const Matrix& loadings, const Vector& scores,
                                                      const std::vector<KernelSpec>& variants,
                                                      const RecoveryOptions& options,
                                                      std::uint64_t seed) {
    const Index n = loadings.cols();
    require(scores.size() == n, ErrorKind::DimensionMismatch, "scores differ from loading count");
    require(options.bins >= 1 && options.test_fraction > 0.0 && options.test_fraction < 1.0,
            ErrorKind::InvalidArgument, "invalid recovery options");
    const Index n_test = std::clamp<Index>(
        static_cast<Index>(std::llround(options.test_fraction * static_cast<double>(n))), 1, n - 1);
    require(n_test >= options.bins, ErrorKind::InvalidArgument,
            "need at least one held-out patient per bin");

    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Index> test(order.begin(), order.begin() + n_test);
    std::vector<Index> train(order.begin() + n_test, order.end());
    std::stable_sort(test.begin(), test.end(),
                     [&](Index a, Index b) { return scores(a) < scores(b); });

    Matrix train_c(loadings.rows(), static_cast<Index>(train.size()));
    Vector train_y(static_cast<Index>(train.size()));
    for (std::size_t i = 0; i < train.size(); ++i) {
        train_c.col(static_cast<Index>(i)) = loadings.col(train[i]);
        train_y(static_cast<Index>(i)) = scores(train[i]);
    }

    std::vector<RecoveryCurve> curves;
    for (const auto& spec : variants) {
        const RegressionDual dual = solve_dual(train_c, train_y, spec, options.ridge);
        RecoveryCurve curve;
        curve.spec = spec;
        curve.y_true.resize(n_test);
        curve.y_pred.resize(n_test);
        for (Index i = 0; i < n_test; ++i) {
            const Index idx = test[static_cast<std::size_t>(i)];
            curve.y_true(i) = scores(idx);
            curve.y_pred(i) = predict(loadings.col(idx), dual);
        }
        curve.bin_mae = Vector::Zero(options.bins);
        for (int b = 0; b < options.bins; ++b) {
            const Index lo = n_test * b / options.bins;
            const Index hi = n_test * (b + 1) / options.bins;
            double acc = 0.0;
            for (Index i = lo; i < hi; ++i) acc += std::abs(curve.y_true(i) - curve.y_pred(i));
            curve.bin_mae(b) = acc / static_cast<double>(std::max<Index>(hi - lo, 1));
        }
        curves.push_back(std::move(curve));
    }
    return curves;
}

std::vector<RecoveryCurve> kernel_recovery_experiment(const SynthConfig& cfg,
                                                      const std::vector<KernelSpec>& variants,
                                                      const RecoveryOptions& options) {
    const auto [cohort, truth] = generate(cfg);
    return kernel_recovery_experiment(truth.true_loadings, truth.noisy_scores, variants, options,
                                      cfg.seed ^ 0x9e3779b97f4a7c15ULL);
}

}  // namespace cmo

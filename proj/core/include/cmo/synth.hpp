#pragma once

#include "cmo/core_types.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace cmo {

struct SynthConfig {
    Index p = 30;
    Index r = 4;
    Index n = 40;
    double sparsity_x = 0.2;      // fraction of basis entries zeroed before normalization
    double loading_scale = 1.0;   // loadings ~ offset + U[0, loading_scale * scale]
    double noise_sigma = 0.01;    // weight of the PSD noise W W^T / P
    KernelSpec kernel;
    double score_noise_sigma = 0.0;
    Index anchor_count = 10;      // anchors of the generating regression
    double alpha_scale = 1.0;     // alpha_j ~ U[0, alpha_scale]
    std::vector<double> component_scales;   // per-column multiplier on loading_scale; empty = 1
    std::vector<double> component_offsets;  // per-column shift added to the loading; empty = 0
    std::vector<Index> score_components;   // columns the score reads; empty = all
    std::uint64_t seed = 0;

    void validate() const;
};

struct GroundTruth {
    Matrix true_x;         // P x R, unit-norm columns
    Matrix true_loadings;  // R x N
    Vector true_alpha;     // anchor_count
    Matrix anchors;        // |score_components| x anchor_count
    Vector clean_scores;
    Vector noisy_scores;   // equal to the cohort scores
};

/// Gamma_n = X diag(c_n) X^T + noise_sigma W_n W_n^T / P and
/// y_n = sum_j alpha_j kappa(S c_n, a_j) + N(0, score_noise_sigma^2), where S selects
/// score_components and the anchors a_j live in that subspace. Deterministic per seed.
std::pair<CohortDataset, GroundTruth> generate(const SynthConfig& cfg);

/// Kernel-choice experiment on synthetic scores: per kernel variant, fit kernel ridge
/// regression on ground-truth training loadings and score held-out patients, with errors
/// grouped by quantile of the true score.
struct RecoveryOptions {
    double ridge = 1e-3;
    double test_fraction = 0.5;
    int bins = 4;
};

struct RecoveryCurve {
    KernelSpec spec;
    Vector y_true;   // held-out patients, ascending by true score
    Vector y_pred;
    Vector bin_mae;  // mean absolute error per quantile bin, lowest scores first
};

std::vector<RecoveryCurve> kernel_recovery_experiment(const SynthConfig& cfg,
                                                      const std::vector<KernelSpec>& variants,
                                                      const RecoveryOptions& options = {});

/// Same experiment on explicit loadings and scores.
std::vector<RecoveryCurve> kernel_recovery_experiment(const Matrix& loadings, const Vector& scores,
                                                      const std::vector<KernelSpec>& variants,
                                                      const RecoveryOptions& options,
                                                      std::uint64_t seed);

}  // namespace cmo

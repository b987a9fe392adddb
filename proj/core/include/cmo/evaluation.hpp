#pragma once

#include "cmo/core_types.hpp"
#include "cmo/solver.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace cmo {

/// Median absolute error; the mean of the central pair for even lengths.
double mae(const Vector& y_true, const Vector& y_pred);

/// Histogram mutual information in bits with `bins` equal-width bins spanning each
/// variable's observed range. A constant input gives 0.
double mutual_information(const Vector& a, const Vector& b, int bins = 8);

/// Entropy in bits of `a` under the same binning as mutual_information.
double binned_entropy(const Vector& a, int bins = 8);

/// Seeded shuffle split into `folds` near-equal groups; returns the fold of each sample.
std::vector<int> fold_assignment(Index n, int folds, std::uint64_t seed);

struct CvOptions {
    int folds = 10;
    std::uint64_t seed = 0;
    int threads = 1;
    int mi_bins = 8;
    /// Receives each fold's fit trace; called from worker threads when threads > 1.
    std::function<void(int fold, const FitTrace& trace)> on_fit;
};

struct FoldResult {
    int fold = 0;
    std::vector<Index> train;
    std::vector<Index> test;
    double mae_train = 0.0;
    double mae_test = 0.0;
    double mi_train = 0.0;
    double mi_test = 0.0;
    bool converged = false;
};

struct EvalReport {
    std::string method;  // "cmo" or "decoupled"
    Hyperparams hp;
    KernelSpec spec;
    CvOptions options;
    std::vector<int> assignment;  // fold of each sample
    std::vector<FoldResult> folds;
    Vector test_true;  // per sample, as held out
    Vector test_pred;
    Vector train_true;  // pooled over folds (each sample folds - 1 times)
    Vector train_pred;
    double mae_train = 0.0;
    double mae_test = 0.0;
    double mi_train = 0.0;
    double mi_test = 0.0;
};

/// K-fold CV of the coupled model: fit on each training split, score the held-out
/// patients through the unseen-patient QP. Fit errors carry the fold index.
EvalReport cross_validate(const CohortDataset& cohort, const Hyperparams& hp,
                          const KernelSpec& spec, const CvOptions& options = {});

/// Same folds, but the factorization is fit with lambda = 0 and kernel ridge
/// regression is trained afterwards on the frozen loadings.
EvalReport decoupled_baseline(const CohortDataset& cohort, const Hyperparams& hp,
                              const KernelSpec& spec, const CvOptions& options = {});

struct SweepGrid {
    std::vector<double> lambda;
    std::vector<double> gamma1;
    std::vector<double> gamma2;
    std::vector<double> gamma3;
    std::vector<double> sigma_sq;
    std::vector<double> rho;
    std::vector<double> ell;
};

struct SweepEntry {
    Hyperparams hp;
    KernelSpec spec;
    bool ok = false;
    std::string error;
    double mae_train = 0.0;
    double mae_test = 0.0;
    double mi_test = 0.0;
};

/// Cartesian product of the grid around `base` (empty axes keep the base value), ranked
/// by pooled test MAE with ties broken by configuration order. Failed configurations are
/// kept, with their error, after every successful one.
std::vector<SweepEntry> grid_sweep(const CohortDataset& cohort, const Hyperparams& base_hp,
                                   const KernelSpec& base_spec, const SweepGrid& grid,
                                   const CvOptions& options = {});

}  // namespace cmo

#pragma once

#include "cmo/core_types.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cmo {

struct CohortCheck {
    bool check_psd = true;  ///< reject raw inputs with eigenvalues below -kPsdTol * scale
};

/// Builds a checked cohort. Throws on length or shape mismatch, asymmetry,
/// non-finite entries or scores, N < 2, or (optionally) indefinite matrices.
CohortDataset validate_cohort(std::span<const Matrix> raw, const Vector& scores,
                              std::string score_name = "score", CohortCheck check = {});

/// Re-runs every check on an existing cohort and returns an equal copy.
CohortDataset validate_cohort(const CohortDataset& cohort, CohortCheck check = {});

/// Removes the rank-one contribution lambda1 v1 v1^T of the largest eigenpair.
CorrelationMatrix residualize_first_eigenvector(const CorrelationMatrix& g);

/// Residualizes every matrix of the cohort; scores are carried over.
CohortDataset residualize_cohort(const CohortDataset& cohort);

/// Eigenvalues of each matrix sorted descending, averaged over the cohort.
Vector mean_spectrum(const CohortDataset& cohort);

/// Knee of a descending spectrum: the number of eigenvalues before the point of
/// largest second difference. Throws NoKnee for a flat spectrum, InvalidArgument for P < 3.
int knee_rank(const Vector& descending_spectrum);

/// Rank at the knee of the cohort's mean spectrum, or `override_rank` when given.
int select_rank(const CohortDataset& cohort, std::optional<int> override_rank = std::nullopt);

}  // namespace cmo

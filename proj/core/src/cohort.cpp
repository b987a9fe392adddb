#include "cmo/cohort.hpp"

#include "cmo/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <sstream>

namespace cmo {

namespace {

void check_psd(const Matrix& m, std::size_t index) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) {
        fail(ErrorKind::NumericalFailure,
             "eigendecomposition failed for matrix " + std::to_string(index));
    }
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    const double min_eig = es.eigenvalues().minCoeff();
    if (min_eig < -kPsdTol * scale) {
        std::ostringstream os;
        os << "matrix " << index << " is not positive semidefinite (min eigenvalue " << min_eig
           << ")";
        fail(ErrorKind::NotPsd, os.str());
    }
}

}  // namespace

CohortDataset validate_cohort(std::span<const Matrix> raw, const Vector& scores,
                              std::string score_name, CohortCheck check) {
    require(!raw.empty(), ErrorKind::InvalidArgument, "cohort is empty");
    if (static_cast<Index>(raw.size()) != scores.size()) {
        std::ostringstream os;
        os << "cohort has " << raw.size() << " matrices but " << scores.size() << " scores";
        fail(ErrorKind::DimensionMismatch, os.str());
    }
    require(raw.size() >= 2, ErrorKind::InvalidArgument, "cohort needs at least two patients");
    require(scores.allFinite(), ErrorKind::NonFinite, "scores contain non-finite values");

    CohortDataset out;
    out.score_name = std::move(score_name);
    out.scores = scores;
    out.matrices.reserve(raw.size());
    const Index p = raw.front().rows();
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i].rows() != p || raw[i].cols() != p) {
            std::ostringstream os;
            os << "matrix " << i << " is " << raw[i].rows() << "x" << raw[i].cols()
               << ", expected " << p << "x" << p;
            fail(ErrorKind::DimensionMismatch, os.str());
        }
        try {
            out.matrices.emplace_back(raw[i]);
        } catch (const Error& e) {
            fail(e.kind(), "matrix " + std::to_string(i) + ": " + e.what());
        }
        if (check.check_psd) check_psd(raw[i], i);
    }
    return out;
}

CohortDataset validate_cohort(const CohortDataset& cohort, CohortCheck check) {
    std::vector<Matrix> raw;
    raw.reserve(cohort.matrices.size());
    for (const auto& m : cohort.matrices) raw.push_back(m.data());
    return validate_cohort(raw, cohort.scores, cohort.score_name, check);
}

CorrelationMatrix residualize_first_eigenvector(const CorrelationMatrix& g) {
    const Matrix& m = g.data();
    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    require(es.info() == Eigen::Success, ErrorKind::NumericalFailure,
            "eigendecomposition failed during residualization");
    const Index top = m.rows() - 1;  // eigenvalues ascend
    const double lambda1 = es.eigenvalues()(top);
    const Vector v1 = es.eigenvectors().col(top);
    Matrix out = m - lambda1 * v1 * v1.transpose();
    out = 0.5 * (out + out.transpose()).eval();
    return CorrelationMatrix(std::move(out));
}

CohortDataset residualize_cohort(const CohortDataset& cohort) {
    CohortDataset out;
    out.scores = cohort.scores;
    out.score_name = cohort.score_name;
    out.matrices.reserve(cohort.matrices.size());
    for (const auto& m : cohort.matrices) out.matrices.push_back(residualize_first_eigenvector(m));
    return out;
}

Vector mean_spectrum(const CohortDataset& cohort) {
    require(cohort.n() > 0, ErrorKind::InvalidArgument, "cohort is empty");
    const Index p = cohort.p();
    Vector acc = Vector::Zero(p);
    for (const auto& m : cohort.matrices) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(m.data(), Eigen::EigenvaluesOnly);
        require(es.info() == Eigen::Success, ErrorKind::NumericalFailure,
                "eigendecomposition failed in mean_spectrum");
        acc += es.eigenvalues().reverse();
    }
    return acc / static_cast<double>(cohort.n());
}

int knee_rank(const Vector& spectrum) {
    const Index p = spectrum.size();
    require(p >= 3, ErrorKind::InvalidArgument, "knee detection needs P >= 3");
    Index best = -1;
    double best_val = 0.0;
    for (Index i = 1; i + 1 < p; ++i) {
        const double d2 = spectrum(i - 1) - 2.0 * spectrum(i) + spectrum(i + 1);
        if (best < 0 || d2 > best_val) {
            best = i;
            best_val = d2;
        }
    }
    const double scale = std::max(spectrum.cwiseAbs().maxCoeff(), 1e-300);
    if (!(best_val > 1e-12 * scale)) fail(ErrorKind::NoKnee, "eigenspectrum has no knee");
    return static_cast<int>(best);
}

int select_rank(const CohortDataset& cohort, std::optional<int> override_rank) {
    if (override_rank) {
        require(*override_rank >= 1 && *override_rank <= cohort.p(), ErrorKind::InvalidArgument,
                "rank override must satisfy 1 <= R <= P");
        return *override_rank;
    }
    return knee_rank(mean_spectrum(cohort));
}

}  // namespace cmo

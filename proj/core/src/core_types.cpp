#include "cmo/core_types.hpp"

#include "cmo/errors.hpp"

#include <cmath>
#include <sstream>

namespace cmo {

bool all_finite(const Matrix& m) { return m.allFinite(); }
bool all_finite(const Vector& v) { return v.allFinite(); }

CorrelationMatrix::CorrelationMatrix(Matrix data) : data_(std::move(data)) {
    if (data_.rows() != data_.cols() || data_.rows() == 0) {
        std::ostringstream os;
        os << "correlation matrix must be square and nonempty, got " << data_.rows() << "x"
           << data_.cols();
        fail(ErrorKind::DimensionMismatch, os.str());
    }
    require(data_.allFinite(), ErrorKind::NonFinite, "correlation matrix has non-finite entries");
    const double scale = std::max(1.0, data_.cwiseAbs().maxCoeff());
    const double asym = (data_ - data_.transpose()).cwiseAbs().maxCoeff();
    if (asym > kSymmetryTol * scale) {
        std::ostringstream os;
        os << "correlation matrix is not symmetric (max |a_ij - a_ji| = " << asym << ")";
        fail(ErrorKind::Asymmetric, os.str());
    }
}

std::string to_string(KernelTerms terms) {
    switch (terms) {
        case KernelTerms::Mixed: return "mixed";
        case KernelTerms::ExponentialOnly: return "exponential";
        case KernelTerms::PolynomialOnly: return "polynomial";
    }
    return "mixed";
}

KernelTerms kernel_terms_from_string(const std::string& name) {
    if (name == "mixed") return KernelTerms::Mixed;
    if (name == "exponential" || name == "exp") return KernelTerms::ExponentialOnly;
    if (name == "polynomial" || name == "poly") return KernelTerms::PolynomialOnly;
    fail(ErrorKind::InvalidArgument, "unknown kernel terms '" + name + "'");
}

void KernelSpec::validate() const {
    require(std::isfinite(sigma_sq) && sigma_sq > 0.0, ErrorKind::InvalidArgument,
            "kernel sigma_sq must be > 0");
    require(std::isfinite(rho) && rho >= 0.0, ErrorKind::InvalidArgument,
            "kernel rho must be >= 0");
    require(std::isfinite(ell) && ell > 1.0, ErrorKind::InvalidArgument,
            "kernel degree ell must be > 1");
}

void TrustRegionConfig::validate() const {
    require(delta0 > 0.0 && delta0 <= delta_max, ErrorKind::InvalidArgument,
            "trust region needs 0 < delta0 <= delta_max");
    require(eta_accept > 0.0 && eta_accept < 0.25, ErrorKind::InvalidArgument,
            "trust region eta_accept must lie in (0, 0.25)");
    require(shrink > 0.0 && shrink < 1.0, ErrorKind::InvalidArgument,
            "trust region shrink must lie in (0, 1)");
    require(expand > 1.0, ErrorKind::InvalidArgument, "trust region expand must be > 1");
    require(max_iters >= 0 && subproblem_max_iters > 0, ErrorKind::InvalidArgument,
            "trust region iteration limits must be positive");
    require(grad_tol > 0.0, ErrorKind::InvalidArgument, "trust region grad_tol must be > 0");
}

void Hyperparams::validate(Index p) const {
    require(std::isfinite(lambda) && lambda >= 0.0, ErrorKind::InvalidArgument,
            "lambda must be >= 0");
    require(gamma1 > 0.0 && gamma2 > 0.0 && gamma3 > 0.0, ErrorKind::InvalidArgument,
            "gamma1, gamma2, gamma3 must be > 0");
    require(rank_r >= 1 && rank_r <= p, ErrorKind::InvalidArgument,
            "rank must satisfy 1 <= R <= P");
    require(prox_step > 0.0 && prox_iters >= 1, ErrorKind::InvalidArgument,
            "prox_step must be > 0 and prox_iters >= 1");
    require(dual_step > 0.0, ErrorKind::InvalidArgument, "dual_step must be > 0");
    require(dual_step_decay > 0.0 && dual_step_decay <= 1.0, ErrorKind::InvalidArgument,
            "dual_step_decay must lie in (0, 1]");
    require(outer_tol > 0.0 && constraint_tol > 0.0 && max_outer_iters >= 1,
            ErrorKind::InvalidArgument, "outer tolerances must be > 0");
    tr.validate();
}

}  // namespace cmo

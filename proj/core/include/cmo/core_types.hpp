#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace cmo {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Relative tolerance used for the symmetry check on input matrices.
inline constexpr double kSymmetryTol = 1e-10;
/// Smallest admissible eigenvalue of a raw input matrix (PSD up to rounding).
inline constexpr double kPsdTol = 1e-8;

/// Symmetric P x P connectivity matrix. Construction checks shape, finiteness and symmetry.
class CorrelationMatrix {
public:
    CorrelationMatrix() = default;
    explicit CorrelationMatrix(Matrix data);

    const Matrix& data() const noexcept { return data_; }
    Index p() const noexcept { return data_.rows(); }

private:
    Matrix data_;
};

/// N matrices sharing one P plus one severity score per matrix.
/// Use validate_cohort() to build a checked instance.
struct CohortDataset {
    std::vector<CorrelationMatrix> matrices;
    Vector scores;
    std::string score_name;

    Index p() const noexcept { return matrices.empty() ? 0 : matrices.front().p(); }
    Index n() const noexcept { return static_cast<Index>(matrices.size()); }
    const Matrix& gamma(Index i) const { return matrices[static_cast<std::size_t>(i)].data(); }
};

enum class KernelTerms : std::uint32_t {
    Mixed = 0,
    ExponentialOnly = 1,
    PolynomialOnly = 2,
};

/// Mixed kernel exp(-|c - c'|^2 / sigma_sq) + (rho / ell) (c'.c + 1)^ell.
/// `terms` switches either summand off for single-kernel comparisons.
struct KernelSpec {
    double sigma_sq = 1.0;
    double rho = 0.8;
    double ell = 2.5;
    KernelTerms terms = KernelTerms::Mixed;

    void validate() const;

    bool use_exponential() const noexcept { return terms != KernelTerms::PolynomialOnly; }
    bool use_polynomial() const noexcept { return terms != KernelTerms::ExponentialOnly; }

    // Per-score operating points used for the ASD cohort.
    static KernelSpec ados() { return {1.0, 0.8, 2.5, KernelTerms::Mixed}; }
    static KernelSpec srs() { return {1.0, 2.0, 1.5, KernelTerms::Mixed}; }
    static KernelSpec praxis() { return {1.0, 0.5, 1.5, KernelTerms::Mixed}; }

    friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

std::string to_string(KernelTerms terms);
KernelTerms kernel_terms_from_string(const std::string& name);

struct TrustRegionConfig {
    double delta0 = 1.0;
    double delta_max = 100.0;
    double eta_accept = 0.1;
    double shrink = 0.25;
    double expand = 2.0;
    int max_iters = 50;
    double grad_tol = 1e-6;
    int subproblem_max_iters = 2000;

    void validate() const;

    friend bool operator==(const TrustRegionConfig&, const TrustRegionConfig&) = default;
};

struct Hyperparams {
    double lambda = 1.0;   ///< trade-off between factorization and regression; 0 = factorization only
    double gamma1 = 10.0;  ///< l1 weight on the basis
    double gamma2 = 0.7;   ///< l2 weight on each loading vector
    double gamma3 = 1.0;   ///< l2 weight on the (implicit) regression weights
    int rank_r = 8;
    double prox_step = 1e-3;  ///< initial proximal step before backtracking
    int prox_iters = 1;       ///< proximal iterations per outer pass
    double dual_step = 1.0;        ///< initial multiplier ascent step
    double dual_step_decay = 1.0;  ///< factor applied to the step when the residual rises
    TrustRegionConfig tr;
    double outer_tol = 1e-5;
    int max_outer_iters = 200;
    double constraint_tol = 1e-4;  ///< residual threshold required to declare convergence

    /// Throws unless every weight and tolerance is in range and 1 <= rank_r <= p.
    void validate(Index p) const;

    double ridge() const { return gamma3 / lambda; }
    bool coupled() const noexcept { return lambda > 0.0; }

    friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

/// All optimizer state. Loadings are stored column-wise (column n is c_n).
/// `alpha` solves the regularized Gram system for `anchors`.
struct ModelState {
    Matrix basis_x;               // P x R
    Matrix loadings;              // R x N, entrywise >= 0
    std::vector<Matrix> v_mats;   // N of P x R
    std::vector<Matrix> duals;    // N of P x R
    Vector alpha;                 // N
    Matrix anchors;               // R x N

    Index p() const noexcept { return basis_x.rows(); }
    Index r() const noexcept { return basis_x.cols(); }
    Index n() const noexcept { return loadings.cols(); }
};

bool all_finite(const Matrix& m);
bool all_finite(const Vector& v);

}  // namespace cmo

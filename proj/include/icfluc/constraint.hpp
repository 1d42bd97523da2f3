#pragma once

#include "icfluc/jacobian.hpp"

#include <cstdint>
#include <vector>

namespace icfluc {

// Floors keeping priors and targets away from singular values; both are far
// below any physically meaningful fluctuation.
constexpr double kVarianceFloor = 1e-6;  // rad^2
constexpr double kTargetFloor = 1e-4;    // A^2

// Diagonal prior over internal-coordinate deviations with per-coordinate
// data variances scaled by strength a: precision = a / sigma^2.
struct KappaPrior {
    double strength = 1.0;
    Eigen::VectorXd data_variance;  // floored, rad^2

    int dof() const { return static_cast<int>(data_variance.size()); }
    Eigen::VectorXd precision_diagonal() const {
        return strength * data_variance.cwiseInverse();
    }
};

// Per-atom targets for the expected squared 3D displacement (A^2).
struct ConstraintSet {
    Eigen::VectorXd targets;

    int atom_count() const { return static_cast<int>(targets.size()); }
};

// Prior precision plus the constraint-induced term 2 sum_m lambda_m G_m,
// with its Cholesky factor. Immutable after assembly; safe to share across
// threads for sampling.
class PrecisionModel {
public:
    PrecisionModel(Eigen::VectorXd lambda, Eigen::MatrixXd precision);

    const Eigen::VectorXd& lambda() const { return lambda_; }
    const Eigen::MatrixXd& precision() const { return precision_; }
    const Eigen::LLT<Eigen::MatrixXd>& cholesky() const { return llt_; }
    int dof() const { return static_cast<int>(precision_.rows()); }

    // log det of the precision matrix, via the Cholesky factor.
    double log_det_precision() const;

    // Unnormalized Gaussian log-density of a deviation vector:
    // -0.5 dk^T P dk + 0.5 log det P (the 2*pi constant is omitted).
    double log_density(const Eigen::VectorXd& dk) const;

private:
    Eigen::VectorXd lambda_;
    Eigen::MatrixXd precision_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

// Per-coordinate variances of the wrapped deviations (N-1 denominator),
// floored at kVarianceFloor. Rows of `deviations` are conformations.
KappaPrior build_prior(const Eigen::MatrixXd& deviations, double a);

// Sigma^-1 = prior + 2 sum_m lambda_m G_m. Requires lambda >= 0; verifies
// symmetry and positive definiteness.
PrecisionModel assemble_precision(const KappaPrior& prior, const Eigen::VectorXd& lambda,
                                  const GramSet& grams);

// C_m = tr(Sigma G_m) for every atom, evaluated as triangular solves against
// the Cholesky factor (Sigma itself is never formed).
ConstraintSet induced_fluctuations(const PrecisionModel& model, const GramSet& grams);

struct LambdaFitOptions {
    double tol = 1e-2;      // max relative constraint residual
    int max_iters = 500;
    double damping = 0.5;   // exponent eta of the multiplicative update
};

struct LambdaFitResult {
    explicit LambdaFitResult(PrecisionModel unconstrained)
        : model(std::move(unconstrained)) {}

    PrecisionModel model;
    bool converged = false;
    int iterations = 0;
    double max_residual = 0.0;       // over binding constraints
    Eigen::VectorXd achieved;        // C_m at the returned lambda
    Eigen::VectorXd targets;         // floored targets actually used
    std::vector<int> infeasible_atoms;  // target above the unconstrained level
    std::vector<std::string> warnings;
};

// Solves the inverse problem: find lambda >= 0 with C_m(lambda) matching the
// targets. Damped multiplicative fixed point in log-lambda, one Cholesky per
// iteration; a global-scale line search guards stagnation. Atoms whose
// unconstrained fluctuation is already at or below target get lambda_m = 0
// (a warning, not an error). Non-convergence is reported through the result,
// not thrown.
LambdaFitResult fit_lambda(const KappaPrior& prior, const GramSet& grams,
                           const ConstraintSet& targets, const LambdaFitOptions& opts = {});

// n rows of deviations drawn from N(0, P^-1) given the Cholesky of P,
// deterministic in the seed.
Eigen::MatrixXd sample_gaussian_deviations(const Eigen::LLT<Eigen::MatrixXd>& chol, int n,
                                           std::uint64_t seed);

// Draws n conformations: deviation + mean, dihedrals wrapped to [-pi, pi),
// bond angles clamped into (0, pi); bond lengths are copied unchanged.
std::vector<InternalCoords> sample(const PrecisionModel& model, const KappaVector& mean,
                                   const Eigen::VectorXd& bond_lengths, int n,
                                   std::uint64_t seed);

}  // namespace icfluc

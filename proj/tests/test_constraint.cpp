#include "icfluc/constraint.hpp"

#include "icfluc/geometry.hpp"
#include "synthetic.hpp"

#include <doctest.h>

#include <random>

using namespace icfluc;

namespace {

struct SmallSystem {
    InternalCoords mean_ic;
    GramSet grams;
    KappaPrior prior;
};

// 10-residue helix with a data-like prior.
SmallSystem make_system(double a, std::uint64_t seed = 101) {
    InternalCoords ic = testing::helix_internal(10);
    const BackboneChain chain = internal_to_cartesian(ic);
    GramSet grams = compute_gram_set(compute_jacobian(chain, ic.layout()));

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd dev(50, ic.layout().dof());
    for (int i = 0; i < dev.rows(); ++i) {
        for (int j = 0; j < dev.cols(); ++j) dev(i, j) = 0.08 * normal(rng);
    }
    KappaPrior prior = build_prior(dev, a);
    return {std::move(ic), std::move(grams), std::move(prior)};
}

}  // namespace

TEST_SUITE_BEGIN("constraint");

TEST_CASE("prior variances hit the floor for a frozen ensemble") {
    Eigen::MatrixXd dev = Eigen::MatrixXd::Zero(5, 7);
    const KappaPrior prior = build_prior(dev, 2.0);
    CHECK(prior.data_variance.minCoeff() == kVarianceFloor);
    CHECK(prior.data_variance.maxCoeff() == kVarianceFloor);
    CHECK(prior.precision_diagonal()[0] == doctest::Approx(2.0 / kVarianceFloor));
}

TEST_CASE("prior recovers i.i.d. variances within 2%") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int n = 100000, d = 6;
    const double s = 0.3;
    Eigen::MatrixXd dev(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) dev(i, j) = s * normal(rng);
    }
    const KappaPrior prior = build_prior(dev, 1.0);
    for (int j = 0; j < d; ++j) {
        CHECK(prior.data_variance[j] == doctest::Approx(s * s).epsilon(0.02));
    }
}

TEST_CASE("prior rejects single-conformation input") {
    CHECK_THROWS_AS(build_prior(Eigen::MatrixXd::Zero(1, 4), 1.0), Error);
    CHECK_THROWS_AS(build_prior(Eigen::MatrixXd::Zero(5, 4), -1.0), Error);
}

TEST_CASE("lambda = 0 reproduces the prior exactly") {
    const SmallSystem sys = make_system(1.0);
    const PrecisionModel model = assemble_precision(
        sys.prior, Eigen::VectorXd::Zero(sys.grams.atom_count()), sys.grams);
    const Eigen::MatrixXd expected = sys.prior.precision_diagonal().asDiagonal();
    CHECK((model.precision() - expected).cwiseAbs().maxCoeff() == 0.0);

    // C_m = tr(Sigma_prior G_m) with a diagonal prior has a closed form.
    const ConstraintSet c = induced_fluctuations(model, sys.grams);
    const Eigen::VectorXd prior_var = sys.prior.precision_diagonal().cwiseInverse();
    for (int m = 0; m < sys.grams.atom_count(); ++m) {
        const double expected_c = sys.grams.matrix(m).diagonal().dot(prior_var);
        CHECK(c.targets[m] == doctest::Approx(expected_c).epsilon(1e-10));
    }
}

TEST_CASE("uniform lambda matches the independently summed precision") {
    const SmallSystem sys = make_system(2.0);
    const int atoms = sys.grams.atom_count();
    const double c = 0.37;
    const PrecisionModel model =
        assemble_precision(sys.prior, Eigen::VectorXd::Constant(atoms, c), sys.grams);

    Eigen::MatrixXd oracle = sys.prior.precision_diagonal().asDiagonal();
    for (int m = 0; m < atoms; ++m) oracle += 2.0 * c * sys.grams.matrix(m);
    CHECK((model.precision() - oracle).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("constraint term is homogeneous: doubling lambda halves C as a -> 0") {
    const SmallSystem sys = make_system(1e-9);
    const int atoms = sys.grams.atom_count();
    const Eigen::VectorXd lambda = Eigen::VectorXd::Constant(atoms, 0.8);

    const ConstraintSet c1 =
        induced_fluctuations(assemble_precision(sys.prior, lambda, sys.grams), sys.grams);
    const ConstraintSet c2 = induced_fluctuations(
        assemble_precision(sys.prior, (2.0 * lambda).eval(), sys.grams), sys.grams);
    for (int m = 3; m < atoms; ++m) {
        CHECK(c2.targets[m] == doctest::Approx(0.5 * c1.targets[m]).epsilon(1e-4));
    }
}

TEST_CASE("negative lambda and mismatched sizes are rejected") {
    const SmallSystem sys = make_system(1.0);
    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(sys.grams.atom_count());
    lambda[5] = -1.0;
    CHECK_THROWS_AS(assemble_precision(sys.prior, lambda, sys.grams), Error);
    CHECK_THROWS_AS(
        assemble_precision(sys.prior, Eigen::VectorXd::Zero(3), sys.grams), Error);
}

TEST_CASE("diagonal toy: induced fluctuation has the commuting closed form") {
    // D = 2, one atom with G = diag(g1, g2), prior precision diag(p1, p2).
    const double g1 = 0.9, g2 = 0.4, p1 = 2.0, p2 = 5.0, ell = 0.7;
    JacobianTable jac(1, 2);
    jac.atom_block(0)(0, 0) = std::sqrt(g1);
    jac.atom_block(0)(1, 1) = std::sqrt(g2);
    const GramSet grams = compute_gram_set(std::move(jac));

    KappaPrior prior;
    prior.strength = 1.0;
    prior.data_variance = Eigen::Vector2d(1.0 / p1, 1.0 / p2);

    const PrecisionModel model =
        assemble_precision(prior, Eigen::VectorXd::Constant(1, ell), grams);
    const ConstraintSet c = induced_fluctuations(model, grams);
    const double expected =
        g1 / (p1 + 2.0 * ell * g1) + g2 / (p2 + 2.0 * ell * g2);
    CHECK(c.targets[0] == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("monte-carlo quadratic form means match the trace identity") {
    const SmallSystem sys = make_system(1.0);
    const int atoms = sys.grams.atom_count();
    Eigen::VectorXd lambda = Eigen::VectorXd::Constant(atoms, 0.15);
    const PrecisionModel model = assemble_precision(sys.prior, lambda, sys.grams);
    const ConstraintSet c = induced_fluctuations(model, sys.grams);

    const int n = 100000;
    const Eigen::MatrixXd dev = sample_gaussian_deviations(model.cholesky(), n, 2024);
    for (int m = 0; m < atoms; ++m) {
        double mc = 0.0;
        for (int i = 0; i < n; ++i) {
            mc += sys.grams.quadratic_form(m, dev.row(i).transpose());
        }
        mc /= n;
        if (c.targets[m] == 0.0) {
            CHECK(mc == 0.0);
        } else {
            CHECK(mc == doctest::Approx(c.targets[m]).epsilon(0.015));
        }
    }
}

TEST_CASE("sampling collapses to the mean in the infinite-precision limit") {
    const SmallSystem sys = make_system(1e9);
    const int atoms = sys.grams.atom_count();
    const PrecisionModel model = assemble_precision(
        sys.prior, Eigen::VectorXd::Constant(atoms, 1e9), sys.grams);

    const KappaVector mean = sys.mean_ic.kappa();
    const auto samples = sample(model, mean, sys.mean_ic.bond_lengths, 50, 5);
    double rms = 0.0;
    for (const auto& ic : samples) {
        const KappaVector k = ic.kappa();
        for (int j = 0; j < mean.dof(); ++j) {
            rms += std::pow(wrap_angle(k.values[j] - mean.values[j]), 2);
        }
    }
    rms = std::sqrt(rms / (50.0 * mean.dof()));
    CHECK(rms < 1e-4);
}

TEST_CASE("sample covariance recovers the model covariance entrywise") {
    const SmallSystem sys = make_system(1.0);
    const int atoms = sys.grams.atom_count();
    const int d = sys.grams.dof();
    const PrecisionModel model = assemble_precision(
        sys.prior, Eigen::VectorXd::Constant(atoms, 0.2), sys.grams);
    const Eigen::MatrixXd sigma =
        model.cholesky().solve(Eigen::MatrixXd::Identity(d, d));

    const int n = 100000;
    const Eigen::MatrixXd dev = sample_gaussian_deviations(model.cholesky(), n, 99);
    const Eigen::MatrixXd sample_cov = dev.transpose() * dev / (n - 1.0);

    double worst = 0.0;
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            const double mc_sd =
                std::sqrt((sigma(i, i) * sigma(j, j) + sigma(i, j) * sigma(i, j)) / n);
            worst = std::max(worst, std::abs(sample_cov(i, j) - sigma(i, j)) / mc_sd);
        }
    }
    CHECK(worst < 5.0);
}

TEST_CASE("constraints only add precision: sampled variance below prior variance") {
    const SmallSystem sys = make_system(1.0);
    const int atoms = sys.grams.atom_count();
    const PrecisionModel model = assemble_precision(
        sys.prior, Eigen::VectorXd::Constant(atoms, 0.5), sys.grams);
    const int n = 50000;
    const Eigen::MatrixXd dev = sample_gaussian_deviations(model.cholesky(), n, 7);
    const Eigen::VectorXd var =
        (dev.colwise().squaredNorm() / (n - 1.0)).transpose();
    const Eigen::VectorXd prior_var =
        sys.prior.data_variance / sys.prior.strength;
    for (int j = 0; j < var.size(); ++j) {
        CHECK(var[j] <= prior_var[j] * (1.0 + 5.0 / std::sqrt(n)));
    }
}

TEST_CASE("fit returns lambda = 0 when targets equal the unconstrained level") {
    const SmallSystem sys = make_system(1.0);
    const PrecisionModel unconstrained = assemble_precision(
        sys.prior, Eigen::VectorXd::Zero(sys.grams.atom_count()), sys.grams);
    const ConstraintSet targets = induced_fluctuations(unconstrained, sys.grams);

    const LambdaFitResult fit = fit_lambda(sys.prior, sys.grams, targets);
    CHECK(fit.converged);
    CHECK(fit.model.lambda().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fit is self-consistent: targets generated from lambda* are achieved") {
    const SmallSystem sys = make_system(1.0);
    const int atoms = sys.grams.atom_count();
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.05, 2.0);
    Eigen::VectorXd lambda_star(atoms);
    for (int m = 0; m < atoms; ++m) lambda_star[m] = u(rng);

    const ConstraintSet targets = induced_fluctuations(
        assemble_precision(sys.prior, lambda_star, sys.grams), sys.grams);
    const LambdaFitResult fit = fit_lambda(sys.prior, sys.grams, targets);

    CHECK(fit.converged);
    CHECK(fit.iterations <= 500);
    for (int m = 0; m < atoms; ++m) {
        if (fit.targets[m] <= kTargetFloor) continue;
        CHECK(fit.achieved[m] == doctest::Approx(fit.targets[m]).epsilon(1.1e-2));
    }
}

TEST_CASE("infeasible targets warn and keep lambda at zero") {
    const SmallSystem sys = make_system(1.0);
    const int atoms = sys.grams.atom_count();
    const PrecisionModel unconstrained =
        assemble_precision(sys.prior, Eigen::VectorXd::Zero(atoms), sys.grams);
    ConstraintSet targets = induced_fluctuations(unconstrained, sys.grams);
    targets.targets *= 10.0;  // all above the unconstrained level
    targets.targets = targets.targets.cwiseMax(kTargetFloor);

    const LambdaFitResult fit = fit_lambda(sys.prior, sys.grams, targets);
    CHECK(fit.converged);
    CHECK(fit.model.lambda().cwiseAbs().maxCoeff() == 0.0);
    CHECK(!fit.infeasible_atoms.empty());
    CHECK(!fit.warnings.empty());
}

TEST_CASE("monotonicity: raising lambda never raises any fluctuation") {
    const SmallSystem sys = make_system(1.0);
    const int atoms = sys.grams.atom_count();
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 10; ++rep) {
        Eigen::VectorXd lo(atoms), hi(atoms);
        for (int m = 0; m < atoms; ++m) {
            lo[m] = u(rng);
            hi[m] = lo[m] + u(rng);
        }
        const ConstraintSet c_lo = induced_fluctuations(
            assemble_precision(sys.prior, lo, sys.grams), sys.grams);
        const ConstraintSet c_hi = induced_fluctuations(
            assemble_precision(sys.prior, hi, sys.grams), sys.grams);
        for (int m = 0; m < atoms; ++m) {
            CHECK(c_hi.targets[m] <= c_lo.targets[m] + 1e-12);
        }
    }
}

TEST_CASE("log density decreases away from the mean") {
    const SmallSystem sys = make_system(1.0);
    const PrecisionModel model = assemble_precision(
        sys.prior, Eigen::VectorXd::Constant(sys.grams.atom_count(), 0.1), sys.grams);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(model.dof());
    Eigen::VectorXd off = zero;
    off[0] = 0.3;
    CHECK(model.log_density(zero) > model.log_density(off));
}

TEST_SUITE_END();

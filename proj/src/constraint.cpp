#include "icfluc/constraint.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <random>

namespace icfluc {

namespace {

// Bond angles are clamped this far inside (0, pi) after sampling.
constexpr double kAngleMargin = 1e-6;

double max_abs_asymmetry(const Eigen::MatrixXd& m) {
    return (m - m.transpose()).cwiseAbs().maxCoeff();
}

}  // namespace

PrecisionModel::PrecisionModel(Eigen::VectorXd lambda, Eigen::MatrixXd precision)
    : lambda_(std::move(lambda)), precision_(std::move(precision)) {
    const double asym = max_abs_asymmetry(precision_);
    const double scale = std::max(1.0, precision_.cwiseAbs().maxCoeff());
    if (asym > 1e-12 * scale) {
        throw Error("precision matrix asymmetry " + std::to_string(asym) +
                    " exceeds tolerance");
    }
    precision_ = 0.5 * (precision_ + precision_.transpose()).eval();
    llt_.compute(precision_);
    if (llt_.info() != Eigen::Success) {
        throw Error("precision matrix is not positive definite (Cholesky failed); "
                    "lambda min " + std::to_string(lambda_.size() ? lambda_.minCoeff() : 0.0) +
                    ", diag min " + std::to_string(precision_.diagonal().minCoeff()));
    }
}

double PrecisionModel::log_det_precision() const {
    return 2.0 * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double PrecisionModel::log_density(const Eigen::VectorXd& dk) const {
    const Eigen::VectorXd y = llt_.matrixL().transpose() * dk;
    return -0.5 * y.squaredNorm() + 0.5 * log_det_precision();
}

KappaPrior build_prior(const Eigen::MatrixXd& deviations, double a) {
    const int n = static_cast<int>(deviations.rows());
    if (n < 2) throw Error("prior estimation needs at least 2 conformations, got " +
                           std::to_string(n));
    if (!(a > 0.0)) throw Error("prior strength a must be positive");

    KappaPrior prior;
    prior.strength = a;
    const Eigen::VectorXd mean = deviations.colwise().mean();
    prior.data_variance =
        ((deviations.rowwise() - mean.transpose()).colwise().squaredNorm() / (n - 1))
            .transpose();
    prior.data_variance = prior.data_variance.cwiseMax(kVarianceFloor);
    return prior;
}

PrecisionModel assemble_precision(const KappaPrior& prior, const Eigen::VectorXd& lambda,
                                  const GramSet& grams) {
    if (lambda.size() != grams.atom_count()) {
        throw Error("lambda count " + std::to_string(lambda.size()) +
                    " does not match atom count " + std::to_string(grams.atom_count()));
    }
    if (prior.dof() != grams.dof()) {
        throw Error("prior dof does not match Gram dof");
    }
    if (lambda.size() > 0 && lambda.minCoeff() < 0.0) {
        throw Error("negative lambda is not supported");
    }
    Eigen::MatrixXd precision = grams.weighted_sum(2.0 * lambda);
    precision += Eigen::MatrixXd(prior.precision_diagonal().asDiagonal());
    return PrecisionModel(lambda, std::move(precision));
}

namespace {

// C_m = tr(Sigma G_m) via one batched triangular solve; the solved factor
// S = L^-1 J^T also yields every cross sensitivity
// tr(Sigma G_j Sigma G_m) = |S_j^T S_m|_F^2 used by the Newton phase.
struct FluctuationFactors {
    Eigen::VectorXd c;       // per atom
    Eigen::MatrixXd solved;  // D x 3M, blocks of 3 columns per atom
};

FluctuationFactors induced_with_factors(const PrecisionModel& model, const GramSet& grams) {
    if (model.dof() != grams.dof()) throw Error("model dof does not match Gram dof");
    FluctuationFactors out;
    out.solved = grams.jacobian().data().transpose();
    model.cholesky().matrixL().solveInPlace(out.solved);
    out.c.resize(grams.atom_count());
    for (int m = 0; m < grams.atom_count(); ++m) {
        out.c[m] = out.solved.middleCols(3 * m, 3).squaredNorm();
    }
    return out;
}

}  // namespace

ConstraintSet induced_fluctuations(const PrecisionModel& model, const GramSet& grams) {
    ConstraintSet out;
    out.targets = induced_with_factors(model, grams).c;
    return out;
}

LambdaFitResult fit_lambda(const KappaPrior& prior, const GramSet& grams,
                           const ConstraintSet& targets, const LambdaFitOptions& opts) {
    const int atoms = grams.atom_count();
    if (targets.atom_count() != atoms) {
        throw Error("target count does not match atom count");
    }
    if (!(opts.tol > 0.0) || opts.max_iters < 1 || !(opts.damping > 0.0)) {
        throw Error("invalid solver options");
    }

    Eigen::VectorXd target = targets.targets.cwiseMax(kTargetFloor);

    // Unconstrained fluctuations decide which constraints can bind at all:
    // lambda only ever shrinks C_m.
    PrecisionModel unconstrained =
        assemble_precision(prior, Eigen::VectorXd::Zero(atoms), grams);
    const Eigen::VectorXd c0 = induced_fluctuations(unconstrained, grams).targets;

    LambdaFitResult result(std::move(unconstrained));
    result.targets = target;

    // Inactive: target at or above the unconstrained level (never binds).
    // Dropped: became slack during iteration (complementary slackness).
    enum : char { kInactive = 0, kActive = 1, kDropped = 2 };
    std::vector<char> state(atoms, kInactive);
    Eigen::VectorXd init = Eigen::VectorXd::Zero(atoms);
    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(atoms);
    int n_active = 0;
    for (int m = 0; m < atoms; ++m) {
        if (c0[m] > target[m]) {
            state[m] = kActive;
            init[m] = 1.0 / (2.0 * atoms * target[m]);
            lambda[m] = init[m];
            ++n_active;
        } else if (c0[m] < target[m]) {
            result.infeasible_atoms.push_back(m);
        }
    }
    if (!result.infeasible_atoms.empty()) {
        result.warnings.push_back(
            std::to_string(result.infeasible_atoms.size()) +
            " atom target(s) above the unconstrained fluctuation; lambda fixed to 0 there");
    }
    if (n_active == 0) {
        result.converged = true;
        result.achieved = c0;
        return result;
    }

    // Active constraints must sit within tol of the target; slack ones must
    // stay below it.
    auto residual_of = [&](const Eigen::VectorXd& c) {
        double worst = 0.0;
        for (int m = 0; m < atoms; ++m) {
            if (state[m] == kActive) {
                worst = std::max(worst, std::abs(c[m] / target[m] - 1.0));
            } else {
                worst = std::max(worst, c[m] / target[m] - 1.0);
            }
        }
        return worst;
    };

    PrecisionModel model = assemble_precision(prior, lambda, grams);
    FluctuationFactors fluct = induced_with_factors(model, grams);
    Eigen::VectorXd achieved = fluct.c;
    double best_residual = residual_of(achieved);
    int stagnant = 0;

    // Newton step in log-lambda over the currently active constraints,
    // using d log C_m / d log lambda_j = -2 lambda_j |S_j^T S_m|_F^2 / C_m.
    // Returns true and refreshes model/achieved when the step improves the
    // residual (with backtracking); the caller falls back to the damped
    // multiplicative update otherwise.
    auto try_newton = [&](double current_res) {
        std::vector<int> act;
        for (int m = 0; m < atoms; ++m) {
            if (state[m] == kActive && lambda[m] > 0.0) act.push_back(m);
        }
        const int k = static_cast<int>(act.size());
        if (k == 0) return false;

        Eigen::MatrixXd sens(k, k);
        Eigen::VectorXd f(k);
        for (int a = 0; a < k; ++a) {
            const auto sa = fluct.solved.middleCols(3 * act[a], 3);
            for (int b = 0; b < k; ++b) {
                const auto sb = fluct.solved.middleCols(3 * act[b], 3);
                const double cross = (sa.transpose() * sb).squaredNorm();
                sens(a, b) = -2.0 * lambda[act[b]] * cross / achieved[act[a]];
            }
            f[a] = std::log(achieved[act[a]] / target[act[a]]);
        }
        sens.diagonal().array() -= 1e-12;

        Eigen::VectorXd step = sens.fullPivLu().solve(-f);
        if (!step.allFinite()) return false;
        step = step.cwiseMax(-2.0).cwiseMin(2.0);

        for (int bt = 0; bt < 4; ++bt) {
            Eigen::VectorXd trial = lambda;
            for (int a = 0; a < k; ++a) trial[act[a]] *= std::exp(step[a]);
            PrecisionModel trial_model = assemble_precision(prior, trial, grams);
            FluctuationFactors trial_fluct = induced_with_factors(trial_model, grams);
            if (residual_of(trial_fluct.c) < current_res) {
                lambda = std::move(trial);
                model = std::move(trial_model);
                fluct = std::move(trial_fluct);
                achieved = fluct.c;
                return true;
            }
            step *= 0.5;
        }
        return false;
    };

    // ICFLUC_FIT_TRACE=1 prints one line per iteration to stderr.
    const bool trace = std::getenv("ICFLUC_FIT_TRACE") != nullptr;

    for (int it = 1; it <= opts.max_iters; ++it) {
        result.iterations = it;
        const double res = residual_of(achieved);
        if (trace) {
            int na = 0, nd = 0;
            for (int m = 0; m < atoms; ++m) {
                na += state[m] == kActive;
                nd += state[m] == kDropped;
            }
            std::fprintf(stderr, "fit iter %3d res %.5g active %d dropped %d\n", it, res,
                         na, nd);
        }
        if (res <= opts.tol) {
            result.converged = true;
            break;
        }

        if (res < best_residual * (1.0 - 1e-4)) {
            best_residual = res;
            stagnant = 0;
        } else if (++stagnant >= 25) {
            // Stagnation guard: line search over a global scale on lambda.
            double best_scale = 1.0;
            double best = res;
            for (int e = -4; e <= 4; ++e) {
                if (e == 0) continue;
                const double s = std::pow(2.0, e);
                PrecisionModel trial = assemble_precision(prior, (lambda * s).eval(), grams);
                const double r = residual_of(induced_fluctuations(trial, grams).targets);
                if (r < best) {
                    best = r;
                    best_scale = s;
                }
            }
            if (best_scale != 1.0) lambda *= best_scale;
            stagnant = 0;
        }

        // Complementary slackness bookkeeping: a constraint whose multiplier
        // has collapsed while the fluctuation sits below target has stopped
        // binding; dropped ones re-enter if the fluctuation overshoots again.
        for (int m = 0; m < atoms; ++m) {
            const double ratio = achieved[m] / target[m];
            if (state[m] == kActive) {
                if (ratio < 1.0 - opts.tol && lambda[m] <= 1e-6 * init[m]) {
                    state[m] = kDropped;
                    lambda[m] = 0.0;
                }
            } else if (state[m] == kDropped && ratio > 1.0 + opts.tol) {
                state[m] = kActive;
                lambda[m] = 1e-3 * init[m];
            }
        }

        if (res < 0.5 && try_newton(res)) continue;

        for (int m = 0; m < atoms; ++m) {
            if (state[m] != kActive || lambda[m] == 0.0) continue;
            lambda[m] *= std::pow(achieved[m] / target[m], opts.damping);
        }
        model = assemble_precision(prior, lambda, grams);
        fluct = induced_with_factors(model, grams);
        achieved = fluct.c;
    }

    result.max_residual = residual_of(achieved);
    if (!result.converged && result.max_residual <= opts.tol) result.converged = true;
    result.achieved = achieved;
    result.model = std::move(model);
    if (!result.converged) {
        result.warnings.push_back("constraint solver did not converge: max residual " +
                                  std::to_string(result.max_residual) + " after " +
                                  std::to_string(result.iterations) + " iterations");
    }
    return result;
}

Eigen::MatrixXd sample_gaussian_deviations(const Eigen::LLT<Eigen::MatrixXd>& chol, int n,
                                           std::uint64_t seed) {
    if (n < 1) throw Error("sample count must be >= 1");
    const int d = static_cast<int>(chol.matrixL().rows());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    Eigen::MatrixXd out(n, d);
    Eigen::VectorXd z(d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) z[j] = normal(rng);
        // L^T x = z gives x ~ N(0, (L L^T)^-1).
        chol.matrixU().solveInPlace(z);
        out.row(i) = z.transpose();
    }
    return out;
}

std::vector<InternalCoords> sample(const PrecisionModel& model, const KappaVector& mean,
                                   const Eigen::VectorXd& bond_lengths, int n,
                                   std::uint64_t seed) {
    if (mean.dof() != model.dof()) throw Error("mean dof does not match model dof");
    const KappaLayout& lay = mean.layout;
    const Eigen::MatrixXd dev = sample_gaussian_deviations(model.cholesky(), n, seed);

    std::vector<InternalCoords> out;
    out.reserve(n);
    KappaVector k;
    k.layout = lay;
    for (int i = 0; i < n; ++i) {
        k.values = mean.values + dev.row(i).transpose();
        for (int j = 0; j < lay.dihedral_count(); ++j) {
            k.values[j] = wrap_angle(k.values[j]);
        }
        for (int j = lay.dihedral_count(); j < lay.dof(); ++j) {
            k.values[j] = std::clamp(k.values[j], kAngleMargin, kPi - kAngleMargin);
        }
        out.push_back(InternalCoords::from_kappa(k, bond_lengths));
    }
    return out;
}

}  // namespace icfluc

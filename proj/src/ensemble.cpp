#include "icfluc/ensemble.hpp"

#include <algorithm>
#include <cmath>

namespace icfluc {

namespace {

constexpr double kResultantFloor = 1e-9;
constexpr double kRecenterTol = 1e-12;
constexpr int kRecenterMaxIters = 64;

Eigen::MatrixXd wrapped_deviations(const std::vector<InternalCoords>& confs,
                                   const KappaVector& mean) {
    const int n = static_cast<int>(confs.size());
    const int d = mean.dof();
    Eigen::MatrixXd dev(n, d);
    for (int i = 0; i < n; ++i) {
        const KappaVector k = confs[i].kappa();
        for (int j = 0; j < d; ++j) {
            dev(i, j) = wrap_angle(k.values[j] - mean.values[j]);
        }
    }
    return dev;
}

}  // namespace

KappaVector circular_mean(const std::vector<InternalCoords>& conformations,
                          std::vector<std::string>* warnings) {
    if (conformations.empty()) throw Error("circular mean of an empty ensemble");
    const KappaLayout lay = conformations[0].layout();
    for (const auto& c : conformations) {
        if (c.atom_count() != lay.atoms) {
            throw Error("conformations have inconsistent atom counts");
        }
    }

    KappaVector mean;
    mean.layout = lay;
    mean.values.resize(lay.dof());
    const KappaVector first = conformations[0].kappa();

    for (int j = 0; j < lay.dof(); ++j) {
        double s = 0.0, c = 0.0;
        for (const auto& conf : conformations) {
            const double v = j < lay.dihedral_count()
                                 ? conf.dihedrals[j]
                                 : conf.bond_angles[j - lay.dihedral_count()];
            s += std::sin(v);
            c += std::cos(v);
        }
        s /= conformations.size();
        c /= conformations.size();
        if (std::hypot(s, c) < kResultantFloor) {
            mean.values[j] = first.values[j];
            if (warnings) {
                warnings->push_back("circular mean undefined at coordinate " +
                                    std::to_string(j) + "; using first conformation");
            }
        } else {
            mean.values[j] = std::atan2(s, c);
        }
    }
    return mean;
}

EnsembleDataset EnsembleDataset::from_conformations(
    std::vector<InternalCoords> conformations, std::vector<std::string> residue_names) {
    if (conformations.empty()) throw Error("empty ensemble");
    for (const auto& c : conformations) c.validate();

    EnsembleDataset ds;
    ds.conformations = std::move(conformations);
    ds.mean = circular_mean(ds.conformations, &ds.warnings);

    // Refine until the wrapped deviations average to zero; the plain
    // circular mean only approximates that for concentrated angles.
    for (int iter = 0; iter < kRecenterMaxIters; ++iter) {
        ds.deviations = wrapped_deviations(ds.conformations, ds.mean);
        const Eigen::VectorXd shift = ds.deviations.colwise().mean();
        if (shift.cwiseAbs().maxCoeff() < kRecenterTol) break;
        for (int j = 0; j < ds.mean.dof(); ++j) {
            const double updated = ds.mean.values[j] + shift[j];
            ds.mean.values[j] = ds.mean.layout.kind(j) == CoordKind::Dihedral
                                    ? wrap_angle(updated)
                                    : updated;
        }
    }

    const int m = ds.atom_count();
    ds.mean_bond_lengths = Eigen::VectorXd::Zero(m - 1);
    for (const auto& c : ds.conformations) ds.mean_bond_lengths += c.bond_lengths;
    ds.mean_bond_lengths /= ds.size();

    if (residue_names.empty()) {
        ds.residue_names.assign(m / 3, "ALA");
    } else {
        ds.residue_names = std::move(residue_names);
    }
    return ds;
}

std::string to_string(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::Empirical: return "empirical";
        case BaselineKind::Oas: return "oas";
        case BaselineKind::Diagonal: return "diagonal";
    }
    return "?";
}

BaselineKind baseline_kind_from_string(const std::string& name) {
    if (name == "empirical") return BaselineKind::Empirical;
    if (name == "oas") return BaselineKind::Oas;
    if (name == "diagonal") return BaselineKind::Diagonal;
    throw Error("unknown baseline kind: " + name);
}

double oas_shrinkage_coefficient(const Eigen::MatrixXd& sample_cov, int n_samples) {
    const double p = static_cast<double>(sample_cov.rows());
    const double n = static_cast<double>(n_samples);
    const double tr = sample_cov.trace();
    const double tr2 = sample_cov.squaredNorm();  // tr(S^2) for symmetric S
    const double num = (1.0 - 2.0 / p) * tr2 + tr * tr;
    const double den = (n + 1.0 - 2.0 / p) * (tr2 - tr * tr / p);
    if (den <= 0.0) return 1.0;
    return std::min(1.0, num / den);
}

BaselineModel fit_baseline(const EnsembleDataset& dataset, BaselineKind kind, double a) {
    const int n = dataset.size();
    const int d = dataset.dof();
    if (n < 2) throw Error("baseline fitting needs at least 2 conformations");

    BaselineModel model;
    model.kind = kind;
    model.mean = dataset.mean;

    if (kind == BaselineKind::Diagonal) {
        const KappaPrior prior = build_prior(dataset.deviations, a);
        model.precision = prior.precision_diagonal().asDiagonal();
    } else {
        Eigen::MatrixXd cov =
            dataset.deviations.transpose() * dataset.deviations / (n - 1);
        if (kind == BaselineKind::Empirical) {
            if (n <= d) {
                throw Error("empirical estimator needs more samples than degrees of freedom (" +
                            std::to_string(n) + " <= " + std::to_string(d) +
                            "); use the oas baseline");
            }
            cov += 1e-10 * Eigen::MatrixXd::Identity(d, d);
        } else {
            const double rho = oas_shrinkage_coefficient(cov, n);
            model.oas_shrinkage = rho;
            const double mu = cov.trace() / d;
            cov = (1.0 - rho) * cov + rho * mu * Eigen::MatrixXd::Identity(d, d);
        }
        Eigen::LLT<Eigen::MatrixXd> cov_llt(cov);
        if (cov_llt.info() != Eigen::Success) {
            throw Error("baseline covariance is singular; use the oas baseline");
        }
        model.precision = cov_llt.solve(Eigen::MatrixXd::Identity(d, d));
        model.precision = 0.5 * (model.precision + model.precision.transpose()).eval();
    }

    model.chol.compute(model.precision);
    if (model.chol.info() != Eigen::Success) {
        throw Error("baseline precision is not positive definite");
    }
    return model;
}

std::vector<InternalCoords> sample_baseline(const BaselineModel& model,
                                            const Eigen::VectorXd& bond_lengths, int n,
                                            std::uint64_t seed) {
    PrecisionModel as_model(Eigen::VectorXd::Zero(0), model.precision);
    // Reuse the constrained-model sampler; wrapping and clamping are shared.
    return sample(as_model, model.mean, bond_lengths, n, seed);
}

}  // namespace icfluc

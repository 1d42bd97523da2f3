#pragma once

#include "icfluc/constraint.hpp"

#include <string>
#include <vector>

namespace icfluc {

// Periodicity-safe per-coordinate mean: atan2(mean sin, mean cos).
// Coordinates with a vanishing resultant (< 1e-9) fall back to the first
// conformation's value, with a warning appended when a sink is given.
KappaVector circular_mean(const std::vector<InternalCoords>& conformations,
                          std::vector<std::string>* warnings = nullptr);

// Aligned conformations with their circular mean and wrapped deviations.
// The mean is refined by a fixed point so the deviations average to zero.
struct EnsembleDataset {
    std::vector<InternalCoords> conformations;
    KappaVector mean;
    Eigen::VectorXd mean_bond_lengths;
    Eigen::MatrixXd deviations;  // N x D, each entry in [-pi, pi)
    std::vector<std::string> residue_names;  // L entries; "ALA" when unknown
    std::vector<std::string> warnings;

    int size() const { return static_cast<int>(conformations.size()); }
    int atom_count() const { return mean.layout.atoms; }
    int dof() const { return mean.layout.dof(); }

    static EnsembleDataset from_conformations(std::vector<InternalCoords> conformations,
                                              std::vector<std::string> residue_names = {});
};

enum class BaselineKind { Empirical, Oas, Diagonal };

std::string to_string(BaselineKind kind);
BaselineKind baseline_kind_from_string(const std::string& name);

// Gaussian over internal-coordinate deviations with a precision estimated
// directly from the data (the comparison estimators).
struct BaselineModel {
    BaselineKind kind = BaselineKind::Diagonal;
    KappaVector mean;
    Eigen::MatrixXd precision;
    Eigen::LLT<Eigen::MatrixXd> chol;
    double oas_shrinkage = 0.0;  // meaningful for the OAS kind only
};

// empirical: inverse sample covariance (needs N > D; suggests OAS otherwise).
// oas: inverse of the OAS-shrunk covariance (closed-form coefficient).
// diagonal: diag(a / sigma^2), the fixed diagonal-prior baseline.
BaselineModel fit_baseline(const EnsembleDataset& dataset, BaselineKind kind, double a = 1.0);

// OAS shrinkage coefficient in [0, 1] for a sample covariance S over n samples.
double oas_shrinkage_coefficient(const Eigen::MatrixXd& sample_cov, int n_samples);

std::vector<InternalCoords> sample_baseline(const BaselineModel& model,
                                            const Eigen::VectorXd& bond_lengths, int n,
                                            std::uint64_t seed);

}  // namespace icfluc

#pragma once

#include "icfluc/types.hpp"

#include <utility>
#include <vector>

namespace icfluc {

// Root-mean-square deviation without alignment.
double rmsd(const BackboneChain& a, const BackboneChain& b);

// Optimal rigid alignment of target onto reference (SVD construction with
// reflection correction, det = +1). Throws on coincident point sets.
BackboneChain kabsch_superpose(const BackboneChain& reference, const BackboneChain& target);

// Index of the conformation minimizing total pairwise RMSD. Computed on an
// evenly spaced subsample of at most `max_subset` conformations to keep the
// cost quadratic in a small constant.
int medoid_index(const std::vector<BackboneChain>& ensemble, int max_subset = 256);

struct FluctuationProfile {
    Eigen::VectorXd per_atom_variance;  // mean of the x, y, z variances, A^2
    bool superposed = false;

    int atom_count() const { return static_cast<int>(per_atom_variance.size()); }
};

// Per-atom positional variance across the ensemble. With superpose set, all
// conformations are first aligned to the medoid; otherwise the chains are
// used as given (canonical-frame, non-superposed mode).
FluctuationProfile fluctuation_profile(const std::vector<BackboneChain>& ensemble,
                                       bool superpose);

// Mean squared entrywise difference (A^4); modes and sizes must match.
double profile_mse(const FluctuationProfile& a, const FluctuationProfile& b);

struct Histogram2D {
    Eigen::VectorXd x_edges;  // bins + 1
    Eigen::VectorXd y_edges;
    Eigen::MatrixXd counts;         // x bins by y bins
    Eigen::MatrixXd probabilities;  // counts / total
};

Histogram2D histogram2d(const std::vector<std::pair<double, double>>& points, int x_bins,
                        int y_bins, double x_lo, double x_hi, double y_lo, double y_hi);

// Backbone phi/psi from the dihedral array: phi_i = dihedrals[3i-1] (i >= 1),
// psi_i = dihedrals[3i] (i <= L-2); each terminus lacks one angle.
struct PhiPsi {
    std::vector<double> phi;  // residues 1..L-1
    std::vector<double> psi;  // residues 0..L-2
    std::vector<std::pair<double, double>> pairs;  // interior residues
};

PhiPsi phi_psi_angles(const InternalCoords& ic);

// (phi, psi) density over [-pi, pi)^2, pooled over interior residues and
// conformations.
Histogram2D ramachandran(const std::vector<InternalCoords>& ensemble, int bins = 60);

// Square root of the Jensen-Shannon divergence (base-2 logs), in [0, 1].
// Requires identical binning.
double js_distance(const Histogram2D& p, const Histogram2D& q);

// Negative log probabilities (kT = 1); empty bins map to +infinity.
Eigen::MatrixXd free_energy_grid(const Histogram2D& h);

struct TicaModel {
    int lag = 1;
    Eigen::VectorXd mean;
    Eigen::MatrixXd components;   // features x 2, ordered by eigenvalue
    Eigen::Vector2d eigenvalues;  // in (-1, 1]
    std::string featurization;
};

// Time-lagged independent components: symmetrized covariance estimates, a
// generalized eigenproblem solved by whitening with an eigenvalue floor,
// top two components kept. Rows of `series` are time-ordered frames.
TicaModel tica_fit(const Eigen::MatrixXd& series, int lag);

Eigen::MatrixXd tica_project(const TicaModel& model, const Eigen::MatrixXd& features);

// (sin, cos) pairs of every internal coordinate per frame; columns
// 2i and 2i+1 hold sin and cos of coordinate i.
Eigen::MatrixXd tica_features(const std::vector<InternalCoords>& conformations);

}  // namespace icfluc

#include "icfluc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace icfluc {

double rmsd(const BackboneChain& a, const BackboneChain& b) {
    if (a.atom_count() != b.atom_count()) throw Error("rmsd: atom counts differ");
    if (a.atom_count() == 0) throw Error("rmsd: empty chains");
    double ss = 0.0;
    for (int i = 0; i < a.atom_count(); ++i) {
        ss += (a.positions[i] - b.positions[i]).squaredNorm();
    }
    return std::sqrt(ss / a.atom_count());
}

BackboneChain kabsch_superpose(const BackboneChain& reference, const BackboneChain& target) {
    const int m = reference.atom_count();
    if (target.atom_count() != m) throw Error("superposition: atom counts differ");
    if (m < 1) throw Error("superposition: empty chains");

    Vec3 rc = Vec3::Zero(), tc = Vec3::Zero();
    for (int i = 0; i < m; ++i) {
        rc += reference.positions[i];
        tc += target.positions[i];
    }
    rc /= m;
    tc /= m;

    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    double spread = 0.0;
    for (int i = 0; i < m; ++i) {
        const Vec3 t = target.positions[i] - tc;
        const Vec3 r = reference.positions[i] - rc;
        h += t * r.transpose();
        spread += t.squaredNorm() + r.squaredNorm();
    }
    if (spread <= 1e-20) throw Error("superposition: all atoms coincident");

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d rot = svd.matrixV() * svd.matrixU().transpose();
    if (rot.determinant() < 0.0) {
        Eigen::Matrix3d flip = Eigen::Matrix3d::Identity();
        flip(2, 2) = -1.0;
        rot = svd.matrixV() * flip * svd.matrixU().transpose();
    }

    BackboneChain out;
    out.positions.resize(m);
    for (int i = 0; i < m; ++i) {
        out.positions[i] = rot * (target.positions[i] - tc) + rc;
    }
    return out;
}

int medoid_index(const std::vector<BackboneChain>& ensemble, int max_subset) {
    const int n = static_cast<int>(ensemble.size());
    if (n == 0) throw Error("medoid of an empty ensemble");
    if (n == 1) return 0;

    std::vector<int> subset;
    const int count = std::min(n, max_subset);
    for (int i = 0; i < count; ++i) subset.push_back(static_cast<int>(i * (long long)n / count));

    double best = std::numeric_limits<double>::infinity();
    int best_idx = subset[0];
    for (int i : subset) {
        double total = 0.0;
        for (int j : subset) {
            if (i == j) continue;
            total += rmsd(ensemble[i], kabsch_superpose(ensemble[i], ensemble[j]));
        }
        if (total < best) {
            best = total;
            best_idx = i;
        }
    }
    return best_idx;
}

FluctuationProfile fluctuation_profile(const std::vector<BackboneChain>& ensemble,
                                       bool superpose) {
    const int n = static_cast<int>(ensemble.size());
    if (n < 2) throw Error("fluctuation profile needs at least 2 conformations");
    const int m = ensemble[0].atom_count();
    for (const auto& c : ensemble) {
        if (c.atom_count() != m) throw Error("inconsistent atom counts in ensemble");
    }

    std::vector<const BackboneChain*> chains;
    std::vector<BackboneChain> aligned;
    if (superpose) {
        const BackboneChain& ref = ensemble[medoid_index(ensemble)];
        aligned.reserve(n);
        for (const auto& c : ensemble) aligned.push_back(kabsch_superpose(ref, c));
        for (const auto& c : aligned) chains.push_back(&c);
    } else {
        for (const auto& c : ensemble) chains.push_back(&c);
    }

    FluctuationProfile profile;
    profile.superposed = superpose;
    profile.per_atom_variance.resize(m);
    for (int a = 0; a < m; ++a) {
        Vec3 mean = Vec3::Zero();
        for (const auto* c : chains) mean += c->positions[a];
        mean /= n;
        double ss = 0.0;
        for (const auto* c : chains) ss += (c->positions[a] - mean).squaredNorm();
        // Mean of the three per-axis variances (N-1 denominator).
        profile.per_atom_variance[a] = ss / (n - 1) / 3.0;
    }
    return profile;
}

double profile_mse(const FluctuationProfile& a, const FluctuationProfile& b) {
    if (a.superposed != b.superposed) {
        throw Error("profile mse: superposition modes differ");
    }
    if (a.atom_count() != b.atom_count()) throw Error("profile mse: atom counts differ");
    return (a.per_atom_variance - b.per_atom_variance).squaredNorm() / a.atom_count();
}

Histogram2D histogram2d(const std::vector<std::pair<double, double>>& points, int x_bins,
                        int y_bins, double x_lo, double x_hi, double y_lo, double y_hi) {
    if (x_bins < 1 || y_bins < 1) throw Error("histogram needs at least one bin per axis");
    if (!(x_hi > x_lo) || !(y_hi > y_lo)) throw Error("histogram range is empty");
    if (points.empty()) throw Error("histogram of no points");

    Histogram2D h;
    h.x_edges = Eigen::VectorXd::LinSpaced(x_bins + 1, x_lo, x_hi);
    h.y_edges = Eigen::VectorXd::LinSpaced(y_bins + 1, y_lo, y_hi);
    h.counts = Eigen::MatrixXd::Zero(x_bins, y_bins);

    const double x_w = (x_hi - x_lo) / x_bins;
    const double y_w = (y_hi - y_lo) / y_bins;
    for (const auto& [px, py] : points) {
        if (px < x_lo || px >= x_hi || py < y_lo || py >= y_hi) continue;
        const int i = std::min(static_cast<int>((px - x_lo) / x_w), x_bins - 1);
        const int j = std::min(static_cast<int>((py - y_lo) / y_w), y_bins - 1);
        h.counts(i, j) += 1.0;
    }
    const double total = h.counts.sum();
    if (total <= 0.0) throw Error("histogram: all points out of range");
    h.probabilities = h.counts / total;
    return h;
}

PhiPsi phi_psi_angles(const InternalCoords& ic) {
    const int m = ic.atom_count();
    if (m % 3 != 0 || m < 9) throw Error("phi/psi extraction needs a 3L-atom chain, L >= 3");
    const int residues = m / 3;

    PhiPsi out;
    // phi_i spans atoms (3i-1 .. 3i+2), psi_i spans (3i .. 3i+3).
    for (int i = 1; i < residues; ++i) out.phi.push_back(ic.dihedrals[3 * i - 1]);
    for (int i = 0; i + 1 < residues; ++i) out.psi.push_back(ic.dihedrals[3 * i]);
    for (int i = 1; i + 1 < residues; ++i) {
        out.pairs.emplace_back(ic.dihedrals[3 * i - 1], ic.dihedrals[3 * i]);
    }
    return out;
}

Histogram2D ramachandran(const std::vector<InternalCoords>& ensemble, int bins) {
    if (ensemble.empty()) throw Error("ramachandran of an empty ensemble");
    std::vector<std::pair<double, double>> points;
    for (const auto& ic : ensemble) {
        const PhiPsi pp = phi_psi_angles(ic);
        points.insert(points.end(), pp.pairs.begin(), pp.pairs.end());
    }
    return histogram2d(points, bins, bins, -kPi, kPi, -kPi, kPi);
}

double js_distance(const Histogram2D& p, const Histogram2D& q) {
    if (p.probabilities.rows() != q.probabilities.rows() ||
        p.probabilities.cols() != q.probabilities.cols() ||
        p.x_edges.size() != q.x_edges.size() || p.y_edges.size() != q.y_edges.size()) {
        throw Error("js distance: binning mismatch");
    }
    if ((p.x_edges - q.x_edges).cwiseAbs().maxCoeff() > 1e-9 ||
        (p.y_edges - q.y_edges).cwiseAbs().maxCoeff() > 1e-9) {
        throw Error("js distance: bin edges differ");
    }

    double div = 0.0;
    for (int i = 0; i < p.probabilities.rows(); ++i) {
        for (int j = 0; j < p.probabilities.cols(); ++j) {
            const double a = p.probabilities(i, j);
            const double b = q.probabilities(i, j);
            const double m = 0.5 * (a + b);
            if (a > 0.0) div += 0.5 * a * std::log2(a / m);
            if (b > 0.0) div += 0.5 * b * std::log2(b / m);
        }
    }
    return std::sqrt(std::clamp(div, 0.0, 1.0));
}

Eigen::MatrixXd free_energy_grid(const Histogram2D& h) {
    Eigen::MatrixXd out(h.probabilities.rows(), h.probabilities.cols());
    for (int i = 0; i < out.rows(); ++i) {
        for (int j = 0; j < out.cols(); ++j) {
            const double p = h.probabilities(i, j);
            out(i, j) = p > 0.0 ? -std::log(p) : std::numeric_limits<double>::infinity();
        }
    }
    return out;
}

TicaModel tica_fit(const Eigen::MatrixXd& series, int lag) {
    const int t = static_cast<int>(series.rows());
    const int f = static_cast<int>(series.cols());
    if (lag < 1) throw Error("tica lag must be >= 1");
    if (t <= lag + 2) {
        throw Error("tica needs more than lag+2 frames, got " + std::to_string(t) +
                    " with lag " + std::to_string(lag));
    }

    TicaModel model;
    model.lag = lag;
    model.mean = series.colwise().mean();

    const Eigen::MatrixXd centered = series.rowwise() - model.mean.transpose();
    const int pairs = t - lag;
    const Eigen::MatrixXd head = centered.topRows(pairs);
    const Eigen::MatrixXd tail = centered.bottomRows(pairs);

    const Eigen::MatrixXd c0 =
        (head.transpose() * head + tail.transpose() * tail) / (2.0 * pairs);
    const Eigen::MatrixXd ct =
        (head.transpose() * tail + tail.transpose() * head) / (2.0 * pairs);

    // Whiten by C0 with an eigenvalue floor, then solve the symmetric problem.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es0(c0);
    if (es0.info() != Eigen::Success) throw Error("tica: C0 eigendecomposition failed");
    const double floor = es0.eigenvalues().maxCoeff() * 1e-10;
    if (!(floor > 0.0)) throw Error("tica: C0 has no positive eigenvalues");

    std::vector<int> keep;
    for (int i = 0; i < f; ++i) {
        if (es0.eigenvalues()[i] > floor) keep.push_back(i);
    }
    const int k = static_cast<int>(keep.size());
    if (k < 2) throw Error("tica: fewer than 2 non-degenerate feature directions");

    Eigen::MatrixXd whiten(f, k);
    for (int i = 0; i < k; ++i) {
        whiten.col(i) =
            es0.eigenvectors().col(keep[i]) / std::sqrt(es0.eigenvalues()[keep[i]]);
    }

    Eigen::MatrixXd reduced = whiten.transpose() * ct * whiten;
    reduced = 0.5 * (reduced + reduced.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> est(reduced);
    if (est.info() != Eigen::Success) throw Error("tica: eigendecomposition failed");

    // SelfAdjointEigenSolver sorts ascending; take the top two.
    model.components.resize(f, 2);
    for (int i = 0; i < 2; ++i) {
        model.components.col(i) = whiten * est.eigenvectors().col(k - 1 - i);
        model.eigenvalues[i] = std::clamp(est.eigenvalues()[k - 1 - i], -1.0, 1.0);
    }
    return model;
}

Eigen::MatrixXd tica_project(const TicaModel& model, const Eigen::MatrixXd& features) {
    if (features.cols() != model.mean.size()) {
        throw Error("tica projection: feature dimension mismatch");
    }
    return (features.rowwise() - model.mean.transpose()) * model.components;
}

Eigen::MatrixXd tica_features(const std::vector<InternalCoords>& conformations) {
    if (conformations.empty()) throw Error("tica features of an empty ensemble");
    const int d = conformations[0].layout().dof();
    Eigen::MatrixXd out(static_cast<int>(conformations.size()), 2 * d);
    for (int i = 0; i < out.rows(); ++i) {
        const KappaVector k = conformations[i].kappa();
        if (k.dof() != d) throw Error("inconsistent conformation sizes");
        for (int j = 0; j < d; ++j) {
            out(i, 2 * j) = std::sin(k.values[j]);
            out(i, 2 * j + 1) = std::cos(k.values[j]);
        }
    }
    return out;
}

}  // namespace icfluc

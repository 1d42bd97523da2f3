#include "icfluc/types.hpp"

#include <cmath>

namespace icfluc {

double wrap_angle(double x) {
    double r = std::remainder(x, 2.0 * kPi);
    if (r >= kPi) r = -kPi;
    return r;
}

void BackboneChain::validate_protein() const {
    const int m = atom_count();
    if (m % 3 != 0 || m < 9) {
        throw Error("backbone chain must have 3 atoms per residue and at least 3 residues, got " +
                    std::to_string(m) + " atoms");
    }
    for (int i = 0; i < m; ++i) {
        if (!positions[i].allFinite()) {
            throw Error("non-finite coordinates at atom " + std::to_string(i));
        }
    }
    for (int i = 0; i + 1 < m; ++i) {
        if ((positions[i + 1] - positions[i]).norm() <= 0.0) {
            throw Error("coincident consecutive atoms at index " + std::to_string(i));
        }
    }
}

KappaLayout::KappaLayout(int atom_count) : atoms(atom_count) {
    if (atom_count < 3) {
        throw Error("internal-coordinate layout needs at least 3 atoms, got " +
                    std::to_string(atom_count));
    }
}

CoordKind KappaLayout::kind(int flat) const {
    return flat < dihedral_count() ? CoordKind::Dihedral : CoordKind::BondAngle;
}

int KappaLayout::chain_index(int flat) const {
    return flat < dihedral_count() ? flat : flat - dihedral_count();
}

int KappaLayout::first_moving_atom(int flat) const {
    // Dihedral k moves atoms k+3.., bond angle k moves atoms k+2..
    const int k = chain_index(flat);
    return kind(flat) == CoordKind::Dihedral ? k + 3 : k + 2;
}

KappaVector InternalCoords::kappa() const {
    KappaVector out;
    out.layout = layout();
    out.values.resize(out.layout.dof());
    out.values.head(dihedrals.size()) = dihedrals;
    out.values.tail(bond_angles.size()) = bond_angles;
    return out;
}

InternalCoords InternalCoords::from_kappa(const KappaVector& kappa,
                                          const Eigen::VectorXd& bond_lengths) {
    const KappaLayout& lay = kappa.layout;
    if (kappa.values.size() != lay.dof()) {
        throw Error("kappa vector size does not match its layout");
    }
    if (bond_lengths.size() != lay.atoms - 1) {
        throw Error("bond length count does not match layout atom count");
    }
    InternalCoords ic;
    ic.dihedrals = kappa.values.head(lay.dihedral_count());
    ic.bond_angles = kappa.values.tail(lay.angle_count());
    ic.bond_lengths = bond_lengths;
    for (int i = 0; i < ic.dihedrals.size(); ++i) {
        ic.dihedrals[i] = wrap_angle(ic.dihedrals[i]);
    }
    ic.validate();
    return ic;
}

void InternalCoords::validate() const {
    const int m = atom_count();
    if (m < 3) throw Error("internal coordinates need at least 3 atoms");
    if (dihedrals.size() != m - 3 || bond_angles.size() != m - 2) {
        throw Error("internal coordinate sizes inconsistent: expected " +
                    std::to_string(m - 3) + " dihedrals and " + std::to_string(m - 2) +
                    " bond angles");
    }
    for (int i = 0; i < dihedrals.size(); ++i) {
        const double d = dihedrals[i];
        if (!std::isfinite(d) || d < -kPi || d >= kPi) {
            throw Error("dihedral " + std::to_string(i) + " outside [-pi, pi)");
        }
    }
    for (int i = 0; i < bond_angles.size(); ++i) {
        const double a = bond_angles[i];
        if (!std::isfinite(a) || a <= 0.0 || a >= kPi) {
            throw Error("bond angle " + std::to_string(i) + " outside (0, pi)");
        }
    }
    for (int i = 0; i < bond_lengths.size(); ++i) {
        if (!(bond_lengths[i] > 0.0) || !std::isfinite(bond_lengths[i])) {
            throw Error("bond length " + std::to_string(i) + " must be positive");
        }
    }
}

Eigen::VectorXd ideal_bond_lengths(int atom_count) {
    // Engh-Huber backbone values: N-CA 1.458, CA-C 1.525, C-N 1.329.
    static const double kCycle[3] = {1.458, 1.525, 1.329};
    Eigen::VectorXd out(atom_count - 1);
    for (int i = 0; i + 1 < atom_count; ++i) out[i] = kCycle[i % 3];
    return out;
}

}  // namespace icfluc

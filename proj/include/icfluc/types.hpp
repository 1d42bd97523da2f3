#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace icfluc {

using Vec3 = Eigen::Vector3d;

constexpr double kPi = 3.14159265358979323846;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Maps x into [-pi, pi), congruent mod 2*pi. wrap_angle(pi) == -pi.
double wrap_angle(double x);

// Ordered backbone positions (N, CA, C per residue) for one conformation.
// Geometry routines accept any chain with >= 3 atoms; the 3-per-residue
// protein invariant is enforced at ingestion (validate_protein).
struct BackboneChain {
    std::vector<Vec3> positions;

    int atom_count() const { return static_cast<int>(positions.size()); }
    int residue_count() const { return atom_count() / 3; }

    // Requires M = 3L with L >= 3, finite coordinates, distinct neighbors.
    void validate_protein() const;
};

enum class CoordKind { Dihedral, BondAngle };

// Flat layout of the 2M-5 sampled internal degrees of freedom: the M-3
// dihedrals first, then the M-2 bond angles. Bond lengths are not part of
// the layout (they are held fixed).
struct KappaLayout {
    int atoms = 0;

    KappaLayout() = default;
    explicit KappaLayout(int atom_count);

    int dihedral_count() const { return atoms - 3; }
    int angle_count() const { return atoms - 2; }
    int dof() const { return 2 * atoms - 5; }

    CoordKind kind(int flat) const;
    // Index along the chain: dihedral k spans atoms (k..k+3), angle k spans
    // atoms (k..k+2).
    int chain_index(int flat) const;

    int flat_dihedral(int k) const { return k; }
    int flat_angle(int k) const { return dihedral_count() + k; }

    // First atom displaced when coordinate `flat` changes; every atom before
    // it stays fixed (the post-rotational condition).
    int first_moving_atom(int flat) const;
};

// Flattened internal-coordinate vector over one KappaLayout.
struct KappaVector {
    KappaLayout layout;
    Eigen::VectorXd values;

    int dof() const { return static_cast<int>(values.size()); }
};

// Internal coordinates of one conformation. Dihedrals are stored wrapped to
// [-pi, pi); bond angles must lie strictly inside (0, pi); bond lengths are
// strictly positive (angstroms).
struct InternalCoords {
    Eigen::VectorXd dihedrals;     // M-3
    Eigen::VectorXd bond_angles;   // M-2
    Eigen::VectorXd bond_lengths;  // M-1

    int atom_count() const { return static_cast<int>(bond_lengths.size()) + 1; }
    KappaLayout layout() const { return KappaLayout(atom_count()); }

    KappaVector kappa() const;
    static InternalCoords from_kappa(const KappaVector& kappa,
                                     const Eigen::VectorXd& bond_lengths);

    void validate() const;
};

// Standard backbone bond lengths (angstroms) for the fixed-ideal-lengths
// reconstruction mode: N-CA, CA-C, C-N repeating.
Eigen::VectorXd ideal_bond_lengths(int atom_count);

}  // namespace icfluc

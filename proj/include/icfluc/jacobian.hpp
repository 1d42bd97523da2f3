#pragma once

#include "icfluc/types.hpp"

namespace icfluc {

// First-order derivatives d x_m / d kappa_i of atom positions with respect
// to each internal coordinate, evaluated at a canonical-frame chain. Entries
// are zero wherever atom m is at or upstream of coordinate i's pivot.
// Stored as one 3 x D block per atom inside a (3M) x D matrix.
class JacobianTable {
public:
    JacobianTable(int atom_count, int dof)
        : atoms_(atom_count), data_(Eigen::MatrixXd::Zero(3 * atom_count, dof)) {}

    int atom_count() const { return atoms_; }
    int dof() const { return static_cast<int>(data_.cols()); }

    // 3 x D derivative block of atom m (rows are x, y, z).
    auto atom_block(int m) const { return data_.middleRows(3 * m, 3); }
    auto atom_block(int m) { return data_.middleRows(3 * m, 3); }

    Vec3 entry(int m, int i) const { return data_.block<3, 1>(3 * m, i); }

    const Eigen::MatrixXd& data() const { return data_; }

private:
    int atoms_;
    Eigen::MatrixXd data_;
};

// Rotation-axis derivatives: for a dihedral about bond (a, b) with unit axis
// u = (x_b - x_a)/|..|, downstream atoms satisfy d x_m = u x (x_m - x_b).
// For a bond angle at (a, b, c) the axis is the plane normal anchored at
// x_b, with the sign calibrated against internal_to_cartesian.
JacobianTable compute_jacobian(const BackboneChain& chain, const KappaLayout& layout);

// Per-atom Gram matrices G_m[i][j] = J[m][i] . J[m][j], kept in factored
// form (G_m = B_m^T B_m with B_m the 3 x D block of atom m); dense D x D
// matrices are materialized only on demand since the full set is the
// dominant memory object for long chains.
class GramSet {
public:
    explicit GramSet(JacobianTable jacobian) : jac_(std::move(jacobian)) {}

    int atom_count() const { return jac_.atom_count(); }
    int dof() const { return jac_.dof(); }

    // Dense D x D Gram matrix of atom m; symmetric PSD of rank <= 3.
    Eigen::MatrixXd matrix(int m) const;

    // dk^T G_m dk without materializing G_m.
    double quadratic_form(int m, const Eigen::VectorXd& dk) const;

    // sum_m w_m G_m accumulated from the factors (w >= 0 not required).
    Eigen::MatrixXd weighted_sum(const Eigen::VectorXd& weights) const;

    const JacobianTable& jacobian() const { return jac_; }

private:
    JacobianTable jac_;
};

GramSet compute_gram_set(JacobianTable jacobian);

}  // namespace icfluc

#include "icfluc/jacobian.hpp"

namespace icfluc {

namespace {
constexpr double kDegenerateAxis = 1e-10;
}

JacobianTable compute_jacobian(const BackboneChain& chain, const KappaLayout& layout) {
    const int m = chain.atom_count();
    if (layout.atoms != m) {
        throw Error("layout atom count " + std::to_string(layout.atoms) +
                    " does not match chain size " + std::to_string(m));
    }
    const auto& x = chain.positions;
    JacobianTable table(m, layout.dof());

    for (int k = 0; k + 3 < m; ++k) {
        // Dihedral k rotates atoms k+3.. about the bond (k+1, k+2).
        const Vec3 axis = x[k + 2] - x[k + 1];
        const double len = axis.norm();
        if (len <= kDegenerateAxis) {
            throw Error("degenerate dihedral axis at bond " + std::to_string(k + 1));
        }
        const Vec3 u = axis / len;
        const int col = layout.flat_dihedral(k);
        for (int a = k + 3; a < m; ++a) {
            table.atom_block(a).col(col) = u.cross(x[a] - x[k + 2]);
        }
    }

    for (int k = 0; k + 2 < m; ++k) {
        // Bond angle k rotates atoms k+2.. about the plane normal at x_{k+1}.
        // The sign makes a positive angle increment open the angle, matching
        // internal_to_cartesian (finite-difference calibrated).
        const Vec3 v1 = x[k + 1] - x[k];
        const Vec3 v2 = x[k + 2] - x[k + 1];
        Vec3 n = v1.cross(v2);
        const double nn = n.norm();
        if (nn <= kDegenerateAxis * v1.norm() * v2.norm()) {
            throw Error("collinear bond-angle triple at atom " + std::to_string(k));
        }
        n /= nn;
        const int col = layout.flat_angle(k);
        for (int a = k + 2; a < m; ++a) {
            table.atom_block(a).col(col) = -n.cross(x[a] - x[k + 1]);
        }
    }
    return table;
}

Eigen::MatrixXd GramSet::matrix(int m) const {
    const auto block = jac_.atom_block(m);
    return block.transpose() * block;
}

double GramSet::quadratic_form(int m, const Eigen::VectorXd& dk) const {
    return (jac_.atom_block(m) * dk).squaredNorm();
}

Eigen::MatrixXd GramSet::weighted_sum(const Eigen::VectorXd& weights) const {
    if (weights.size() != atom_count()) {
        throw Error("weight count does not match atom count");
    }
    const int d = dof();
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(d, d);
    for (int m = 0; m < atom_count(); ++m) {
        if (weights[m] == 0.0) continue;
        const auto block = jac_.atom_block(m);
        sum.noalias() += weights[m] * (block.transpose() * block);
    }
    return sum;
}

GramSet compute_gram_set(JacobianTable jacobian) { return GramSet(std::move(jacobian)); }

}  // namespace icfluc

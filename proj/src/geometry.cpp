#include "icfluc/geometry.hpp"

#include <cmath>

namespace icfluc {

namespace {

// Degeneracy threshold for normalized cross products; consecutive backbone
// atoms are ~1.5 A apart, so anything below this is numerically collinear.
constexpr double kDegenerate = 1e-10;

}  // namespace

double torsion(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    const Vec3 b1 = b - a;
    const Vec3 b2 = c - b;
    const Vec3 b3 = d - c;
    const Vec3 n1 = b1.cross(b2);
    const Vec3 n2 = b2.cross(b3);
    const double b2n = b2.norm();
    const double x = n1.dot(n2);
    const double y = n1.cross(n2).dot(b2 / b2n);
    return wrap_angle(std::atan2(y, x));
}

double interior_angle(const Vec3& a, const Vec3& b, const Vec3& c) {
    const Vec3 u = a - b;
    const Vec3 v = c - b;
    // atan2 form is stable near 0 and pi.
    return std::atan2(u.cross(v).norm(), u.dot(v));
}

InternalCoords cartesian_to_internal(const BackboneChain& chain) {
    const int m = chain.atom_count();
    if (m < 3) throw Error("chain needs at least 3 atoms, got " + std::to_string(m));
    const auto& x = chain.positions;

    for (int i = 0; i < m; ++i) {
        if (!x[i].allFinite()) throw Error("non-finite position at atom " + std::to_string(i));
    }

    InternalCoords ic;
    ic.bond_lengths.resize(m - 1);
    for (int i = 0; i + 1 < m; ++i) {
        const double len = (x[i + 1] - x[i]).norm();
        if (len <= kDegenerate) {
            throw Error("coincident atoms at index " + std::to_string(i));
        }
        ic.bond_lengths[i] = len;
    }

    ic.bond_angles.resize(m - 2);
    for (int i = 0; i + 2 < m; ++i) {
        const Vec3 u = x[i] - x[i + 1];
        const Vec3 v = x[i + 2] - x[i + 1];
        const double sine = u.cross(v).norm() / (u.norm() * v.norm());
        if (sine <= kDegenerate) {
            throw Error("collinear atom triple starting at index " + std::to_string(i));
        }
        ic.bond_angles[i] = interior_angle(x[i], x[i + 1], x[i + 2]);
    }

    ic.dihedrals.resize(m - 3);
    for (int i = 0; i + 3 < m; ++i) {
        ic.dihedrals[i] = torsion(x[i], x[i + 1], x[i + 2], x[i + 3]);
    }
    return ic;
}

BackboneChain internal_to_cartesian(const InternalCoords& ic) {
    ic.validate();
    const int m = ic.atom_count();
    const Eigen::VectorXd& r = ic.bond_lengths;
    const Eigen::VectorXd& theta = ic.bond_angles;
    const Eigen::VectorXd& phi = ic.dihedrals;

    BackboneChain chain;
    chain.positions.resize(m);
    auto& x = chain.positions;

    x[0] = Vec3::Zero();
    x[1] = Vec3(r[0], 0.0, 0.0);
    x[2] = Vec3(r[0] - r[1] * std::cos(theta[0]), r[1] * std::sin(theta[0]), 0.0);

    for (int i = 3; i < m; ++i) {
        const Vec3& a = x[i - 3];
        const Vec3& b = x[i - 2];
        const Vec3& c = x[i - 1];
        const Vec3 bc = (c - b).normalized();
        const Vec3 n = (b - a).cross(bc).normalized();
        const Vec3 cross = n.cross(bc);

        const double len = r[i - 1];
        const double ang = theta[i - 2];
        const double tor = phi[i - 3];
        const Vec3 local(-len * std::cos(ang),
                         len * std::sin(ang) * std::cos(tor),
                         len * std::sin(ang) * std::sin(tor));
        x[i] = c + bc * local.x() + cross * local.y() + n * local.z();
    }
    return chain;
}

}  // namespace icfluc

#pragma once

#include "icfluc/types.hpp"

namespace icfluc {

// Signed torsion of four consecutive points, IUPAC convention: trans/anti is
// +-pi, cis is 0, positive when the far bond rotates clockwise viewed along
// the central bond. Result in [-pi, pi).
double torsion(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

// Interior angle at b formed by (a, b, c), in (0, pi).
double interior_angle(const Vec3& a, const Vec3& b, const Vec3& c);

// Measures dihedrals, bond angles and bond lengths along the chain.
// Throws Error naming the first offending atom index on degenerate geometry
// (coincident neighbors or an exactly collinear triple).
InternalCoords cartesian_to_internal(const BackboneChain& chain);

// Sequential (NeRF) reconstruction in the canonical frame: atom 0 at the
// origin, atom 1 on +x, atom 2 in the xy half-plane with y > 0. Atom m
// depends only on internal coordinates upstream of m.
BackboneChain internal_to_cartesian(const InternalCoords& ic);

}  // namespace icfluc

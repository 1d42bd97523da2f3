#include "icfluc/metrics.hpp"

#include "icfluc/geometry.hpp"
#include "synthetic.hpp"

#include <doctest.h>

#include <random>

using namespace icfluc;

namespace {

BackboneChain transformed(const BackboneChain& chain, double ax, double ay, double az,
                          const Vec3& shift) {
    const Eigen::Matrix3d rot =
        (Eigen::AngleAxisd(az, Vec3::UnitZ()) * Eigen::AngleAxisd(ay, Vec3::UnitY()) *
         Eigen::AngleAxisd(ax, Vec3::UnitX()))
            .toRotationMatrix();
    BackboneChain out = chain;
    for (auto& p : out.positions) p = rot * p + shift;
    return out;
}

// Brute-force search over rotations (Euler grid with local refinement); an
// SVD-free oracle for the optimal superposition RMSD.
double grid_search_rmsd(const BackboneChain& reference, const BackboneChain& target) {
    const int m = reference.atom_count();
    Vec3 rc = Vec3::Zero(), tc = Vec3::Zero();
    for (int i = 0; i < m; ++i) {
        rc += reference.positions[i];
        tc += target.positions[i];
    }
    rc /= m;
    tc /= m;

    auto rmsd_at = [&](double ax, double ay, double az) {
        const Eigen::Matrix3d rot =
            (Eigen::AngleAxisd(az, Vec3::UnitZ()) * Eigen::AngleAxisd(ay, Vec3::UnitY()) *
             Eigen::AngleAxisd(ax, Vec3::UnitX()))
                .toRotationMatrix();
        double ss = 0.0;
        for (int i = 0; i < m; ++i) {
            const Vec3 p = rot * (target.positions[i] - tc) + rc;
            ss += (p - reference.positions[i]).squaredNorm();
        }
        return std::sqrt(ss / m);
    };

    double best = std::numeric_limits<double>::infinity();
    double bx = 0, by = 0, bz = 0;
    const int steps = 24;
    for (int i = 0; i < steps; ++i) {
        for (int j = 0; j < steps / 2 + 1; ++j) {
            for (int k = 0; k < steps; ++k) {
                const double ax = -kPi + 2.0 * kPi * i / steps;
                const double ay = -kPi / 2.0 + kPi * j / (steps / 2);
                const double az = -kPi + 2.0 * kPi * k / steps;
                const double r = rmsd_at(ax, ay, az);
                if (r < best) {
                    best = r;
                    bx = ax;
                    by = ay;
                    bz = az;
                }
            }
        }
    }
    double width = 2.0 * kPi / steps;
    for (int refine = 0; refine < 8; ++refine) {
        const double step = width / 4.0;
        for (int i = -2; i <= 2; ++i) {
            for (int j = -2; j <= 2; ++j) {
                for (int k = -2; k <= 2; ++k) {
                    const double r = rmsd_at(bx + i * step, by + j * step, bz + k * step);
                    if (r < best) {
                        best = r;
                        bx += i * step;
                        by += j * step;
                        bz += k * step;
                    }
                }
            }
        }
        width /= 2.0;
    }
    return best;
}

Histogram2D random_histogram(int bins, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-kPi, kPi);
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 200; ++i) pts.emplace_back(wrap_angle(u(rng)), wrap_angle(u(rng)));
    return histogram2d(pts, bins, bins, -kPi, kPi, -kPi, kPi);
}

}  // namespace

TEST_SUITE_BEGIN("metrics");

TEST_CASE("kabsch recovers a rigid transform exactly") {
    std::mt19937_64 rng(1);
    const BackboneChain chain = testing::random_chain(30, rng);
    const BackboneChain moved = transformed(chain, 0.4, -1.1, 2.2, Vec3(5, -3, 1));
    const BackboneChain aligned = kabsch_superpose(chain, moved);
    CHECK(rmsd(chain, aligned) < 1e-10);

    const BackboneChain same = kabsch_superpose(chain, chain);
    CHECK(rmsd(chain, same) < 1e-12);
}

TEST_CASE("kabsch matches the rotation-grid oracle on a 5-atom toy") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    BackboneChain a, b;
    for (int i = 0; i < 5; ++i) {
        a.positions.emplace_back(u(rng), u(rng), u(rng));
        b.positions.emplace_back(u(rng), u(rng), u(rng));
    }
    const double aligned = rmsd(a, kabsch_superpose(a, b));
    const double unaligned = rmsd(a, b);
    CHECK(aligned <= unaligned + 1e-12);
    CHECK(std::abs(aligned - grid_search_rmsd(a, b)) < 1e-3);
}

TEST_CASE("superposing against a rigidly moved reference leaves rmsd unchanged") {
    std::mt19937_64 rng(3);
    const BackboneChain ref = testing::random_chain(24, rng);
    const BackboneChain target = testing::random_chain(24, rng);
    const double r1 = rmsd(ref, kabsch_superpose(ref, target));
    const BackboneChain moved_ref = transformed(ref, 1.0, 0.3, -0.7, Vec3(2, 2, -9));
    const double r2 = rmsd(moved_ref, kabsch_superpose(moved_ref, target));
    CHECK(std::abs(r1 - r2) < 1e-10);
}

TEST_CASE("kabsch rejects degenerate input") {
    BackboneChain a, b;
    for (int i = 0; i < 4; ++i) {
        a.positions.emplace_back(0, 0, 0);
        b.positions.emplace_back(0, 0, 0);
    }
    CHECK_THROWS_AS(kabsch_superpose(a, b), Error);
}

TEST_CASE("profile of identical conformations is zero") {
    std::mt19937_64 rng(4);
    const BackboneChain chain = testing::random_chain(15, rng);
    const std::vector<BackboneChain> ens = {chain, chain, chain};
    CHECK(fluctuation_profile(ens, false).per_atom_variance.cwiseAbs().maxCoeff() < 1e-24);
    CHECK(fluctuation_profile(ens, true).per_atom_variance.cwiseAbs().maxCoeff() < 1e-20);
}

TEST_CASE("profile of isotropic jitter recovers the per-axis variance") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> normal(0.0, 1.0);
    const BackboneChain base = testing::random_chain(12, rng);
    const double s = 0.2;
    std::vector<BackboneChain> ens;
    for (int i = 0; i < 4000; ++i) {
        BackboneChain c = base;
        for (auto& p : c.positions) p += s * Vec3(normal(rng), normal(rng), normal(rng));
        ens.push_back(std::move(c));
    }
    const FluctuationProfile prof = fluctuation_profile(ens, false);
    for (int a = 0; a < prof.atom_count(); ++a) {
        CHECK(prof.per_atom_variance[a] == doctest::Approx(s * s).epsilon(0.08));
    }
}

TEST_CASE("superposition can only lower the total variance") {
    const EnsembleDataset ds = testing::villin_like_ensemble();
    std::vector<BackboneChain> chains;
    for (const auto& ic : ds.conformations) chains.push_back(internal_to_cartesian(ic));
    const double total_nonsup =
        fluctuation_profile(chains, false).per_atom_variance.sum();
    const double total_sup = fluctuation_profile(chains, true).per_atom_variance.sum();
    CHECK(total_sup <= total_nonsup + 1e-12);
}

TEST_CASE("profile mse: zero, unit offset, and a recomputation oracle") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    FluctuationProfile a, b;
    a.per_atom_variance.resize(10);
    for (int i = 0; i < 10; ++i) a.per_atom_variance[i] = u(rng);
    b = a;
    CHECK(profile_mse(a, b) == 0.0);

    b.per_atom_variance.array() += 1.0;
    CHECK(profile_mse(a, b) == doctest::Approx(1.0));

    for (int i = 0; i < 10; ++i) b.per_atom_variance[i] = u(rng);
    double expected = 0.0;
    for (int i = 0; i < 10; ++i) {
        const double d = a.per_atom_variance[i] - b.per_atom_variance[i];
        expected += d * d;
    }
    expected /= 10.0;
    CHECK(profile_mse(a, b) == doctest::Approx(expected).epsilon(1e-12));

    b.superposed = true;
    CHECK_THROWS_AS(profile_mse(a, b), Error);
}

TEST_CASE("phi/psi counting: termini each lack one angle") {
    const InternalCoords helix = testing::helix_internal(7);
    const PhiPsi pp = phi_psi_angles(helix);
    CHECK(pp.phi.size() == 6);
    CHECK(pp.psi.size() == 6);
    CHECK(pp.pairs.size() == 5);
}

TEST_CASE("ideal helix occupies a single bin near (-60, -45) degrees") {
    // Round-trip through Cartesian space first. 50 bins keep -60 degrees
    // interior to a bin (it is an edge of the default 60-bin grid, and the
    // round-tripped angles straddle it by rounding).
    const InternalCoords helix =
        cartesian_to_internal(internal_to_cartesian(testing::helix_internal(10)));
    const Histogram2D h = ramachandran({helix}, 50);
    CHECK(h.probabilities.sum() == doctest::Approx(1.0).epsilon(1e-12));

    int occupied = 0;
    int bi = -1, bj = -1;
    for (int i = 0; i < h.probabilities.rows(); ++i) {
        for (int j = 0; j < h.probabilities.cols(); ++j) {
            if (h.probabilities(i, j) > 0.0) {
                ++occupied;
                bi = i;
                bj = j;
            }
        }
    }
    CHECK(occupied == 1);
    const double phi = -60.0 * kPi / 180.0, psi = -45.0 * kPi / 180.0;
    CHECK(h.x_edges[bi] <= phi);
    CHECK(phi < h.x_edges[bi + 1]);
    CHECK(h.y_edges[bj] <= psi);
    CHECK(psi < h.y_edges[bj + 1]);
}

TEST_CASE("ramachandran mass is invariant to conformation order") {
    const EnsembleDataset ds = testing::villin_like_ensemble();
    std::vector<InternalCoords> rev(ds.conformations.rbegin(), ds.conformations.rend());
    const Histogram2D a = ramachandran(ds.conformations, 30);
    const Histogram2D b = ramachandran(rev, 30);
    CHECK((a.counts - b.counts).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("js distance: identity, disjoint supports, and a scalar oracle") {
    std::mt19937_64 rng(7);
    const Histogram2D p = random_histogram(12, rng);
    CHECK(js_distance(p, p) == 0.0);

    // Disjoint: all mass in different corners.
    const Histogram2D corner1 =
        histogram2d({{-3.0, -3.0}}, 4, 4, -kPi, kPi, -kPi, kPi);
    const Histogram2D corner2 = histogram2d({{3.0, 3.0}}, 4, 4, -kPi, kPi, -kPi, kPi);
    CHECK(js_distance(corner1, corner2) == doctest::Approx(1.0));

    // Two-bin case: p = (1/2, 1/2), q = (1, 0), computed directly.
    const Histogram2D hp = histogram2d({{-1.0, 0.0}, {1.0, 0.0}}, 2, 1, -kPi, kPi, -1, 1);
    const Histogram2D hq = histogram2d({{-1.0, 0.0}, {-1.5, 0.0}}, 2, 1, -kPi, kPi, -1, 1);
    const double expected_div = 0.5 * (0.5 * std::log2(0.5 / 0.75) +
                                       0.5 * std::log2(0.5 / 0.25)) +
                                0.5 * (1.0 * std::log2(1.0 / 0.75));
    CHECK(js_distance(hp, hq) == doctest::Approx(std::sqrt(expected_div)).epsilon(1e-12));
}

TEST_CASE("js distance is symmetric, bounded and satisfies the triangle inequality") {
    std::mt19937_64 rng(8);
    for (int rep = 0; rep < 20; ++rep) {
        const Histogram2D a = random_histogram(8, rng);
        const Histogram2D b = random_histogram(8, rng);
        const Histogram2D c = random_histogram(8, rng);
        const double ab = js_distance(a, b);
        CHECK(ab == doctest::Approx(js_distance(b, a)).epsilon(1e-14));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
        CHECK(ab <= js_distance(a, c) + js_distance(c, b) + 1e-12);
    }

    const Histogram2D fine = random_histogram(16, rng);
    const Histogram2D coarse = random_histogram(8, rng);
    CHECK_THROWS_AS(js_distance(fine, coarse), Error);
}

TEST_CASE("tica on i.i.d. noise finds no slow mode") {
    const int n = 20000;
    std::mt19937_64 rng(9);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd series(n, 2);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < 2; ++j) series(i, j) = normal(rng);
    }
    const TicaModel model = tica_fit(series, 5);
    CHECK(std::abs(model.eigenvalues[0]) < 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("tica recovers a slow two-state coordinate among fast noise") {
    const Eigen::MatrixXd series = testing::two_state_series(20000, 10, 0.002, 1.0, 10);
    const TicaModel model = tica_fit(series, 10);
    const Eigen::VectorXd first = model.components.col(0);
    const double cosine = std::abs(first[0]) / first.norm();
    CHECK(cosine > 0.95);
    CHECK(model.eigenvalues[0] > 0.8);
    CHECK(model.eigenvalues[0] <= 1.0);
}

TEST_CASE("tica projections of the training series have unit C0-norm") {
    const Eigen::MatrixXd series = testing::two_state_series(5000, 6, 0.01, 0.5, 11);
    const int lag = 7;
    const TicaModel model = tica_fit(series, lag);

    const Eigen::MatrixXd centered = series.rowwise() - model.mean.transpose();
    const int pairs = static_cast<int>(series.rows()) - lag;
    const Eigen::MatrixXd head = centered.topRows(pairs);
    const Eigen::MatrixXd tail = centered.bottomRows(pairs);
    const Eigen::MatrixXd c0 =
        (head.transpose() * head + tail.transpose() * tail) / (2.0 * pairs);
    for (int k = 0; k < 2; ++k) {
        const double norm = model.components.col(k).transpose() * c0 * model.components.col(k);
        CHECK(norm == doctest::Approx(1.0).epsilon(1e-8));
    }
}

TEST_CASE("tica rejects an insufficient series") {
    Eigen::MatrixXd series = Eigen::MatrixXd::Random(10, 3);
    CHECK_THROWS_AS(tica_fit(series, 10), Error);
}

TEST_CASE("free energy grid is -log p with +inf in empty bins") {
    const Histogram2D h = histogram2d({{0.0, 0.0}, {0.1, 0.1}}, 2, 2, -1, 1, -1, 1);
    const Eigen::MatrixXd fe = free_energy_grid(h);
    CHECK(fe(1, 1) == doctest::Approx(-std::log(1.0)));
    CHECK(std::isinf(fe(0, 0)));
}

TEST_SUITE_END();

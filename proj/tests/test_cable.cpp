#include <doctest.h>

#include <random>

#include "flatcable/cable.hpp"

using namespace flatcable;
using Eigen::Vector3d;

namespace {

CableParams table1_params() {
    // 1 m cable, 7 g, 6 points; identified stiffness values.
    CableParams p;
    p.n = 6;
    p.k = {0.0, 11.312, 5.411, 15.519, 7.008, 14.477};
    p.l0 = {0.0, 0.1950, 0.1942, 0.1827, 0.1943, 0.1977};
    p.mass.assign(7, 7e-3 / 6.0);
    p.mass[0] = 0.0;
    p.c.assign(7, 0.002);
    p.c[0] = 0.0;
    return p;
}

}  // namespace

TEST_CASE("spring force: stretched vertical segment with identified values") {
    const Vector3d f = spring_force({0, 0, 0.3}, {0, 0, 0}, 11.312, 0.1950);
    // elongation 0.105 m, force pulls the upper mass down
    CHECK(f.x() == doctest::Approx(0.0));
    CHECK(f.y() == doctest::Approx(0.0));
    CHECK(f.z() == doctest::Approx(-1.18776).epsilon(1e-6));
}

TEST_CASE("spring force: zero elongation gives zero force") {
    const Vector3d f = spring_force({0.1, 0.2, 0.3}, {0.1, 0.2, 0.3 - 0.1950},
                                    11.312, 0.1950);
    CHECK(f.norm() == doctest::Approx(0.0));
}

TEST_CASE("spring force: stretched horizontal segment points toward the far mass") {
    const Vector3d f = spring_force({0, 0, 0}, {0.4, 0, 0}, 5.411, 0.1942);
    CHECK(f.x() == doctest::Approx(5.411 * (0.4 - 0.1942)).epsilon(1e-9));
    CHECK(f.x() == doctest::Approx(1.11338).epsilon(1e-4));
    CHECK(f.y() == doctest::Approx(0.0));
    CHECK(f.z() == doctest::Approx(0.0));
}

TEST_CASE("spring force rejects coincident endpoints") {
    CHECK_THROWS_AS(spring_force({0, 0, 0}, {0, 0, 1e-8}, 1.0, 0.1),
                    SeparationTooSmall);
}

TEST_CASE("spring force is the negative potential gradient") {
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> U(-0.5, 0.5);
    const double k = 7.008, l0 = 0.1943, h = 1e-6;
    for (int trial = 0; trial < 10; ++trial) {
        Vector3d a(U(rng), U(rng), U(rng)), b(U(rng), U(rng), U(rng));
        if ((a - b).norm() < 0.05) continue;
        const Vector3d f = spring_force(a, b, k, l0);
        for (int axis = 0; axis < 3; ++axis) {
            Vector3d ap = a, am = a;
            ap[axis] += h;
            am[axis] -= h;
            const double dU = (spring_energy(ap, b, k, l0) -
                               spring_energy(am, b, k, l0)) / (2 * h);
            CHECK(std::abs(f[axis] + dU) <
                  1e-6 * std::max(1.0, std::abs(dU)));
        }
    }
}

TEST_CASE("spring force antisymmetry, translation invariance, rotation equivariance") {
    std::mt19937 rng(23);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    const double k = 5.411, l0 = 0.1942;
    for (int trial = 0; trial < 10; ++trial) {
        const Vector3d a(U(rng), U(rng), U(rng));
        const Vector3d b = a + Vector3d(U(rng), U(rng), U(rng)).normalized() * 0.4;
        CHECK(spring_force(a, b, k, l0)
                  .isApprox(-spring_force(b, a, k, l0), 1e-12));
        const Vector3d shift(U(rng), U(rng), U(rng));
        CHECK(spring_force(a + shift, b + shift, k, l0)
                  .isApprox(spring_force(a, b, k, l0), 1e-12));
        const Eigen::Matrix3d R =
            Eigen::AngleAxisd(U(rng) * M_PI, Vector3d(U(rng), U(rng), U(rng)).normalized())
                .toRotationMatrix();
        CHECK(spring_force(R * a, R * b, k, l0)
                  .isApprox(R * spring_force(a, b, k, l0), 1e-10));
    }
}

TEST_CASE("ground anchor force") {
    SUBCASE("zero elongation") {
        const Vector3d f = ground_anchor_force({0, 0, 0.2}, 10.0, 0.2);
        CHECK(f.norm() == doctest::Approx(0.0));
    }
    SUBCASE("stretched") {
        const Vector3d f = ground_anchor_force({0, 0, 0.25}, 10.0, 0.2);
        CHECK(f.z() == doctest::Approx(0.5));
    }
    SUBCASE("compressed pushes up on the ground side") {
        const Vector3d f = ground_anchor_force({0, 0, 0.15}, 10.0, 0.2);
        CHECK(f.z() == doctest::Approx(-0.5));
    }
    SUBCASE("rejects mass at anchor") {
        CHECK_THROWS_AS(ground_anchor_force({0, 0, 1e-9}, 10.0, 0.2),
                        SeparationTooSmall);
    }
}

TEST_CASE("mass acceleration") {
    CableParams p = table1_params();
    p.mass[2] = 1.16e-3;
    p.c[2] = 0.002;
    SUBCASE("free fall") {
        MassState st;
        const Vector3d a =
            mass_acceleration(2, st, Vector3d::Zero(), Vector3d::Zero(), p);
        CHECK(a.isApprox(Vector3d(0, 0, -9.81)));
    }
    SUBCASE("viscous drag") {
        MassState st;
        st.v = {1, 0, 0};
        const Vector3d a =
            mass_acceleration(2, st, Vector3d::Zero(), Vector3d::Zero(), p);
        CHECK(a.x() == doctest::Approx(-0.002 / 1.16e-3).epsilon(1e-9));
        CHECK(a.x() == doctest::Approx(-1.72414).epsilon(1e-5));
        CHECK(a.z() == doctest::Approx(-9.81));
    }
}

TEST_CASE("static equilibrium: hanging chain below a fixed top (class b shape)") {
    Topology topo;
    topo.cls = SystemClass::B;
    topo.n = 3;
    topo.robots = {3};
    CableParams p;
    p.n = 3;
    p.k = {0.0, 11.312, 5.411};
    p.l0 = {0.0, 0.1950, 0.1942};
    p.mass = {0.0, 1.16e-3, 1.16e-3, 1.16e-3};
    p.c = {0.0, 0.002, 0.002, 0.002};

    const auto pos = static_equilibrium(topo, p, {{3, Vector3d(0, 0, 1)}});

    // Segment tension = weight hanging below it; elongation = T/k.
    const double T1 = 9.81 * (p.mass[1]);               // below segment 1: mass 1
    const double T2 = 9.81 * (p.mass[1] + p.mass[2]);   // below segment 2
    CHECK((pos[3] - pos[2]).norm() ==
          doctest::Approx(p.l0[2] + T2 / p.k[2]).epsilon(1e-9));
    CHECK((pos[2] - pos[1]).norm() ==
          doctest::Approx(p.l0[1] + T1 / p.k[1]).epsilon(1e-9));
    // closed-form check for the top-segment analogue: g(m2+m3)/k with
    // k = 11.312 and two points hanging equals 2.0121e-3 m.
    CHECK(9.81 * 2.32e-3 / 11.312 == doctest::Approx(2.0121e-3).epsilon(1e-4));

    // Net-force residual on every free mass.
    for (int i = 1; i <= 2; ++i) {
        const Vector3d f_i = spring_force(pos[i], pos[i + 1], p.k[i], p.l0[i]);
        const Vector3d f_prev =
            (i >= 2) ? spring_force(pos[i - 1], pos[i], p.k[i - 1], p.l0[i - 1])
                     : Vector3d::Zero();
        const Vector3d r =
            -p.mass[i] * 9.81 * Vector3d::UnitZ() + f_i - f_prev;
        CHECK(r.norm() < 1e-9);
    }
}

TEST_CASE("static equilibrium: zero gravity leaves segments at rest length") {
    Topology topo;
    topo.cls = SystemClass::C;
    topo.n = 4;
    topo.robots = {1, 4};
    CableParams p;
    p.n = 4;
    p.k = {0.0, 10.0, 10.0, 10.0};
    p.l0 = {0.0, 0.2, 0.2, 0.2};
    p.mass = {0.0, 1e-3, 1e-3, 1e-3, 1e-3};
    p.c = {0.0, 0, 0, 0, 0};
    p.g = 0.0;

    const auto pos = static_equilibrium(
        topo, p, {{1, Vector3d(0, 0, 0)}, {4, Vector3d(0.6, 0, 0)}});
    for (int s = 1; s <= 3; ++s)
        CHECK((pos[s] - pos[s + 1]).norm() == doctest::Approx(0.2).epsilon(1e-8));
}

TEST_CASE("static equilibrium: class a vertical chain carries per-segment elongation") {
    Topology topo;
    topo.cls = SystemClass::A;
    topo.n = 3;
    topo.robots = {3};
    CableParams p;
    p.n = 3;
    p.k = {8.0, 11.312, 5.411};
    p.l0 = {0.2, 0.1950, 0.1942};
    p.mass = {0.0, 1.16e-3, 1.16e-3, 1.16e-3};
    p.c = {0.0, 0.002, 0.002, 0.002};

    // Robot directly above the anchor: sagless vertical solution.
    const Vector3d top(0, 0, 0.75);
    const auto pos = static_equilibrium(topo, p, {{3, top}});
    CHECK(pos[1].head<2>().norm() < 1e-9);
    CHECK(pos[2].head<2>().norm() < 1e-9);

    for (int i = 1; i <= 2; ++i) {
        const Vector3d f_i = spring_force(pos[i], pos[i + 1], p.k[i], p.l0[i]);
        const Vector3d f_prev =
            (i == 1) ? ground_anchor_force(pos[1], p.k[0], p.l0[0])
                     : spring_force(pos[i - 1], pos[i], p.k[i - 1], p.l0[i - 1]);
        const Vector3d r = -p.mass[i] * 9.81 * Vector3d::UnitZ() + f_i - f_prev;
        CHECK(r.norm() < 1e-9);
    }
}

TEST_CASE("static equilibrium: slack cable between two robots sags") {
    Topology topo;
    topo.cls = SystemClass::C;
    topo.n = 6;
    topo.robots = {1, 6};
    CableParams p = table1_params();

    const auto pos = static_equilibrium(
        topo, p, {{1, Vector3d(0, 0, 1)}, {6, Vector3d(0.8, 0, 1)}});
    // Sag below the endpoints, monotone towards the middle.
    CHECK(pos[3].z() < 1.0);
    CHECK(pos[3].z() < pos[2].z());
    for (int i = 2; i <= 5; ++i) {
        const Vector3d f_i = spring_force(pos[i], pos[i + 1], p.k[i], p.l0[i]);
        const Vector3d f_prev =
            spring_force(pos[i - 1], pos[i], p.k[i - 1], p.l0[i - 1]);
        const Vector3d r = -p.mass[i] * p.g * Vector3d::UnitZ() + f_i - f_prev;
        CHECK(r.norm() < 1e-9);
    }
}

TEST_CASE("Newton's third law: internal forces cancel in the summed dynamics") {
    // Summing f_i - f_{i-1} over all masses leaves only the boundary terms.
    Topology topo;
    topo.cls = SystemClass::C;
    topo.n = 6;
    topo.robots = {1, 6};
    CableParams p = table1_params();

    std::mt19937 rng(5);
    std::uniform_real_distribution<double> U(-0.4, 0.4);
    std::vector<Vector3d> pos(7);
    for (int i = 1; i <= 6; ++i)
        pos[i] = Vector3d(0.22 * i + 0.05 * U(rng), U(rng) * 0.1, U(rng) * 0.1);

    Vector3d total = Vector3d::Zero();
    for (int i = 1; i <= 6; ++i) {
        const Vector3d f_i =
            (i <= 5) ? spring_force(pos[i], pos[i + 1], p.k[i], p.l0[i])
                     : Vector3d::Zero();
        const Vector3d f_prev =
            (i >= 2) ? spring_force(pos[i - 1], pos[i], p.k[i - 1], p.l0[i - 1])
                     : Vector3d::Zero();
        total += f_i - f_prev;
    }
    // Interior contributions telescope to zero: no segment 0 and no segment n.
    CHECK(total.norm() < 1e-12);
}

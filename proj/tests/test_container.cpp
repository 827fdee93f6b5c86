#include <doctest.h>

#include <cmath>

#include "piston/container.hpp"

using namespace piston;

namespace {

Container<2> unit_square() { return Container<2>(CrossSection<2>{1.0}, {}, {}); }

Container<2> stadium(double ell = 1.0) {
    Arc left, right;
    left.center = {{0.0, ell / 2}};
    left.radius = ell / 2;
    left.theta0 = M_PI / 2;
    left.theta1 = 3 * M_PI / 2;
    right.center = {{1.0, ell / 2}};
    right.radius = ell / 2;
    right.theta0 = -M_PI / 2;
    right.theta1 = M_PI / 2;
    return Container<2>(CrossSection<2>{ell}, {left}, {right});
}

Container<3> unit_box() { return Container<3>(CrossSection<3>{1.0, 1.0}, {}, {}); }

// box with one shallow spherical cap adjoined over a hole in each end wall
Container<3> box_with_caps(double hole_r = 0.3, double height = 0.1) {
    const double R = (hole_r * hole_r + height * height) / (2 * height);
    auto make_cap = [&](int side) {
        const double xi = side == 0 ? 0.0 : 1.0;
        const double sgn = side == 0 ? -1.0 : 1.0;  // caps bulge away from the tube
        Facet wall;
        wall.verts = {{{xi, 0, 0}}, {{xi, 1, 0}}, {{xi, 1, 1}}, {{xi, 0, 1}}};
        wall.inward = {{-sgn, 0, 0}};
        wall.holes = {{{{xi, 0.5, 0.5}}, hole_r}};
        SphericalPatch cap;
        cap.center = {{xi + sgn * (height - R), 0.5, 0.5}};
        cap.radius = R;
        cap.axis = {{sgn, 0, 0}};
        cap.cos_half = (R - height) / R;
        cap.normal_toward_center = true;
        return std::vector<Piece<3>>{wall, cap};
    };
    return Container<3>(CrossSection<3>{1.0, 1.0}, make_cap(0), make_cap(1));
}

}  // namespace

TEST_CASE("subdomain measures: closed forms") {
    CHECK(unit_square().side_measure(1, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
    // half-disk cap of radius 0.5 plus tube slab of length 0.3
    CHECK(stadium().side_measure(1, 0.3) ==
          doctest::Approx(M_PI * 0.25 / 2 + 0.3).epsilon(1e-14));
    CHECK(unit_box().side_measure(2, 0.25) == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("measures are affine in Q with slope +-ell") {
    const auto c = stadium(0.7);
    Rng rng(5);
    for (int k = 0; k < 100; ++k) {
        const double qa = rng.uniform(0.0, 1.0), qb = rng.uniform(0.0, 1.0);
        const double lhs1 = c.side_measure(1, qb) - c.side_measure(1, qa);
        const double lhs2 = c.side_measure(2, qb) - c.side_measure(2, qa);
        CHECK(std::fabs(lhs1 - 0.7 * (qb - qa)) <= 1e-12);
        CHECK(std::fabs(lhs2 + 0.7 * (qb - qa)) <= 1e-12);
    }
}

TEST_CASE("boundary measures") {
    CHECK(unit_square().side_boundary_measure(1, 1.0) == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(unit_box().side_boundary_measure(1, 1.0) == doctest::Approx(6.0).epsilon(1e-14));
    // stadium side 1 at Q: half-circle + 2Q walls + piston of length 1
    CHECK(stadium().side_boundary_measure(1, 0.5) ==
          doctest::Approx(M_PI * 0.5 + 2 * 0.5 + 1.0).epsilon(1e-14));
}

TEST_CASE("3D cap measure: spherical-cap closed form") {
    const double hole_r = 0.3, h = 0.1;
    const double R = (hole_r * hole_r + h * h) / (2 * h);
    const auto c = box_with_caps(hole_r, h);
    const double cap_volume = M_PI * h * h * (3 * R - h) / 3.0;
    CHECK(c.side_measure(1, 0.0) == doctest::Approx(cap_volume).epsilon(1e-12));
    CHECK(c.side_measure(1, 0.5) == doctest::Approx(cap_volume + 0.5).epsilon(1e-12));
    const double wall_area = 1.0 - M_PI * hole_r * hole_r;
    const double cap_area = 2 * M_PI * R * h;
    CHECK(c.side_boundary_measure(1, 0.5) ==
          doctest::Approx(wall_area + cap_area + 4 * 0.5 + 1.0).epsilon(1e-12));
}

TEST_CASE("Monte Carlo cross-check of the measure") {
    const auto c = stadium();
    const double Q = 0.5;
    const auto bb = c.side_bbox(1, Q);
    const double box_area = (bb.hi[0] - bb.lo[0]) * (bb.hi[1] - bb.lo[1]);
    Rng rng(99);
    const long n = 1000000;
    long in = 0;
    for (long k = 0; k < n; ++k) {
        const Vec2 p{{rng.uniform(bb.lo[0], bb.hi[0]), rng.uniform(bb.lo[1], bb.hi[1])}};
        if (c.side_contains(1, Q, p)) ++in;
    }
    const double p_hat = static_cast<double>(in) / n;
    const double est = p_hat * box_area;
    const double sigma = box_area * std::sqrt(p_hat * (1 - p_hat) / n);
    CHECK(std::fabs(est - c.side_measure(1, Q)) <= 3 * sigma);
}

TEST_CASE("membership splits at the piston plane") {
    const auto c = stadium();
    CHECK(c.side_contains(1, 0.5, Vec2{{-0.2, 0.5}}));   // in the left cap
    CHECK(c.side_contains(1, 0.5, Vec2{{0.3, 0.7}}));    // in the tube, left of piston
    CHECK(!c.side_contains(1, 0.5, Vec2{{0.7, 0.7}}));   // right of piston
    CHECK(c.side_contains(2, 0.5, Vec2{{0.7, 0.7}}));
    CHECK(!c.side_contains(1, 0.5, Vec2{{-0.2, 1.2}}));  // outside the cap disk
    CHECK(!c.side_contains(2, 0.5, Vec2{{1.6, 0.5}}));   // beyond the right cap
}

TEST_CASE("3D membership and sampling") {
    const auto c = box_with_caps();
    CHECK(c.side_contains(1, 0.5, Vec3{{0.2, 0.5, 0.5}}));
    CHECK(c.side_contains(1, 0.5, Vec3{{-0.05, 0.5, 0.5}}));  // inside the cap bump
    CHECK(!c.side_contains(1, 0.5, Vec3{{-0.05, 0.1, 0.1}})); // behind the wall, off the hole
    CHECK(!c.side_contains(1, 0.5, Vec3{{0.6, 0.5, 0.5}}));
}

TEST_CASE("invalid piston positions are domain errors") {
    const auto c = unit_square();
    CHECK_THROWS_AS(c.side_measure(1, -0.1), std::domain_error);
    CHECK_THROWS_AS(c.side_measure(1, 1.1), std::domain_error);
    CHECK_THROWS_AS(c.side_measure(3, 0.5), std::invalid_argument);
}

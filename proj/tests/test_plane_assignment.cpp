#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "histoloc/plane_assignment.hpp"

using namespace histoloc;

namespace {

ParametricCubic line_along_x(double length, double y, double z) {
    ParametricCubic c;
    c.coefficients.setZero();
    c.coefficients(0, 1) = length;
    c.coefficients(1, 0) = y;
    c.coefficients(2, 0) = z;
    return c;
}

// independent argmin-over-dense-scan root oracle
double dense_scan_root(const ParametricCubic& c, const Point3& fRef, double d,
                       long samples = 2000000) {
    double bestT = 0.0, bestAbs = std::numeric_limits<double>::max();
    for (long i = 0; i <= samples; ++i) {
        const double t = -0.05 + 1.10 * static_cast<double>(i) / samples;
        const double g = std::abs((curve_eval(c, t) - fRef).norm() - d);
        if (g < bestAbs) {
            bestAbs = g;
            bestT = t;
        }
    }
    return bestT;
}

} // namespace

TEST_CASE("straight line intersection") {
    const auto line = line_along_x(100, 0, 0);
    const FiducialReference f{{0, 0, 0}, "f"};

    const IntersectionSolution sol = solve_intersection(line, f, 25.0, 0.0);
    CHECK(sol.t == Catch::Approx(0.25).margin(1e-9));
    CHECK((sol.point - Point3(25, 0, 0)).norm() < 1e-6);
    CHECK(sol.residual < 1e-9);
    CHECK(sol.method == RootMethod::Newton);
}

TEST_CASE("zero distance with fiducial on the curve") {
    const auto line = line_along_x(100, 0, 0);
    const FiducialReference f{{0, 0, 0}, "f"};
    const IntersectionSolution sol = solve_intersection(line, f, 0.0, 0.0);
    CHECK(sol.t == Catch::Approx(0.0).margin(1e-9));
    CHECK(sol.residual < 1e-9);
}

TEST_CASE("unreachable distance raises NoRoot") {
    const auto line = line_along_x(100, 0, 0);
    const FiducialReference f{{0, 0, 0}, "f"};
    CHECK_THROWS_AS(solve_intersection(line, f, 200.0, 0.0), NoRoot);
}

TEST_CASE("curved cubic root matches dense scan oracle") {
    // cubic approximating a quarter-circle of radius 50
    MarkupCurve arc{"arc", {}};
    for (int i = 0; i < 8; ++i) {
        const double theta = 0.5 * M_PI * i / 7.0;
        arc.points.emplace_back(50.0 * std::sin(theta), 50.0 * (1.0 - std::cos(theta)), 0.0);
    }
    const ParametricCubic c = fit_parametric_cubic(arc);
    const FiducialReference f{{0, 0, 0}, "f"};

    const IntersectionSolution sol = solve_intersection(c, f, 30.0, 0.0);
    const double oracle = dense_scan_root(c, f.position, 30.0);
    CHECK(std::abs(sol.t - oracle) < 1e-6);
    CHECK(sol.residual < 1e-6);
}

TEST_CASE("newton equals dense scan on random fitted cubics") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> amp(-8.0, 8.0), dd(10.0, 95.0);
    for (int trial = 0; trial < 50; ++trial) {
        ParametricCubic c;
        c.coefficients.setZero();
        c.coefficients(0, 1) = 100.0;
        c.coefficients(1, 2) = amp(rng);
        c.coefficients(1, 3) = amp(rng);
        c.coefficients(2, 2) = amp(rng);
        const FiducialReference f{curve_eval(c, 0.0), "f"};
        const double d = dd(rng);
        const IntersectionSolution sol = solve_intersection(c, f, d, 0.0);
        CHECK(std::abs(sol.t - dense_scan_root(c, f.position, d, 200000)) < 1e-5);
    }
}

TEST_CASE("parallel straight edges give a transverse plane") {
    const auto ca = line_along_x(100, 0, 0);
    const auto cb = line_along_x(100, 10, 0);
    const FiducialReference f{{0, 0, 0}, "f"};

    // anchor on curve b at x = 30 is sqrt(30^2 + 10^2) from the fiducial
    DissectionMeasurement m;
    m.index = 1;
    m.dA = 30.0;
    m.dB = std::sqrt(1000.0);
    const DissectionPlane p = assign_plane(ca, cb, f, m, 0.0, 0.0);

    CHECK((p.anchorA - Point3(30, 0, 0)).norm() < 1e-6);
    CHECK((p.anchorB - Point3(30, 10, 0)).norm() < 1e-6);
    CHECK((p.origin - Point3(30, 5, 0)).norm() < 1e-6);
    CHECK(std::abs(std::abs(p.normal.dot(Vec3::UnitX())) - 1.0) < 1e-9);
}

TEST_CASE("skewed measurement keeps the normal orthogonal to the chord") {
    const auto ca = line_along_x(100, 0, 0);
    const auto cb = line_along_x(100, 10, 0);
    const FiducialReference f{{0, 0, 0}, "f"};

    DissectionMeasurement m;
    m.index = 1;
    m.dA = 30.0;
    m.dB = std::sqrt(40.0 * 40.0 + 100.0); // anchor (40, 10, 0)
    const DissectionPlane p = assign_plane(ca, cb, f, m, 0.0, 0.0);

    CHECK((p.anchorA - Point3(30, 0, 0)).norm() < 1e-6);
    CHECK((p.anchorB - Point3(40, 10, 0)).norm() < 1e-6);
    CHECK(std::abs(p.normal.dot(p.anchorB - p.anchorA)) < 1e-9);
    CHECK(std::abs(p.normal.z()) < 1e-9); // normal stays in the x-y plane
    // frame orthonormal and right handed
    CHECK(std::abs(p.uAxis.dot(p.vAxis)) < 1e-9);
    CHECK(std::abs(p.uAxis.dot(p.normal)) < 1e-9);
    CHECK(std::abs(p.vAxis.dot(p.normal)) < 1e-9);
    CHECK((p.uAxis.cross(p.vAxis) - p.normal).norm() < 1e-9);
    // anchors lie in the plane
    CHECK(std::abs(p.signedDistance(p.anchorA)) < 1e-9);
    CHECK(std::abs(p.signedDistance(p.anchorB)) < 1e-9);
}

TEST_CASE("opposing tangents raise DegenerateTangents") {
    const auto ca = line_along_x(100, 0, 0);
    ParametricCubic cb; // runs backwards: (100 - 100t, 10, 0)
    cb.coefficients.setZero();
    cb.coefficients(0, 0) = 100.0;
    cb.coefficients(0, 1) = -100.0;
    cb.coefficients(1, 0) = 10.0;
    const FiducialReference f{{0, 0, 0}, "f"};

    DissectionMeasurement m;
    m.index = 1;
    m.dA = 30.0;
    m.dB = std::sqrt(1000.0);
    CHECK_THROWS_AS(assign_plane(ca, cb, f, m, 0.0, 0.0), DegenerateTangents);
}

TEST_CASE("tangent parallel to chord raises") {
    const auto ca = line_along_x(100, 0, 0);
    const auto cb = line_along_x(100, 0, 0); // same line: chord along the tangents
    const FiducialReference f{{0, 0, 0}, "f"};
    DissectionMeasurement m;
    m.index = 1;
    m.dA = 30.0;
    m.dB = 40.0;
    CHECK_THROWS_AS(assign_plane(ca, cb, f, m, 0.0, 0.0), TangentParallelToChord);
}

TEST_CASE("plane offset shifts along the normal and is reversible") {
    const auto ca = line_along_x(100, 0, 0);
    const auto cb = line_along_x(100, 10, 0);
    const FiducialReference f{{0, 0, 0}, "f"};
    DissectionMeasurement base;
    base.index = 1;
    base.dA = 30.0;
    base.dB = std::sqrt(1000.0);

    const DissectionPlane p0 = assign_plane(ca, cb, f, base, 0.0, 0.0);
    DissectionMeasurement shifted = base;
    shifted.offset = 2.5;
    const DissectionPlane p1 = assign_plane(ca, cb, f, shifted, 0.0, 0.0);

    CHECK((p1.origin - p0.origin - 2.5 * p0.normal).norm() < 1e-12);
    CHECK((p1.anchorA - p0.anchorA - 2.5 * p0.normal).norm() < 1e-12);
    // applying the opposite offset restores the plane
    CHECK(((p1.origin - 2.5 * p1.normal) - p0.origin).norm() < 1e-12);
    CHECK((p1.normal - p0.normal).norm() < 1e-12);
}

TEST_CASE("batch assignment in index order with chained seeds") {
    const auto ca = line_along_x(100, 0, 0);
    const auto cb = line_along_x(100, 10, 0);
    const FiducialReference f{{0, 0, 0}, "f"};

    std::vector<DissectionMeasurement> ms;
    int idx = 1;
    for (double x : {30.0, 50.0, 80.0}) {
        DissectionMeasurement m;
        m.index = idx++;
        m.dA = x;
        m.dB = std::sqrt(x * x + 100.0);
        ms.push_back(m);
    }
    const auto results = assign_all_planes(ca, cb, f, ms);
    REQUIRE(results.size() == 3);
    double prevA = -1.0, prevB = -1.0;
    for (std::size_t i = 0; i < 3; ++i) {
        REQUIRE(results[i].plane.has_value());
        const auto& p = *results[i].plane;
        CHECK(p.anchorA.x() == Catch::Approx(ms[i].dA).margin(1e-6));
        CHECK(std::abs(std::abs(p.normal.dot(Vec3::UnitX())) - 1.0) < 1e-9);
        CHECK(p.paramA > prevA);
        CHECK(p.paramB > prevB);
        prevA = p.paramA;
        prevB = p.paramB;
        // anchor-distance contract
        CHECK(std::abs((p.anchorA - f.position).norm() - ms[i].dA) < 1e-6);
        CHECK(std::abs((p.anchorB - f.position).norm() - ms[i].dB) < 1e-6);
    }
}

TEST_CASE("empty measurement list gives empty plane list") {
    const auto ca = line_along_x(100, 0, 0);
    const auto cb = line_along_x(100, 10, 0);
    CHECK(assign_all_planes(ca, cb, {{0, 0, 0}, "f"}, {}).empty());
}

TEST_CASE("failed planes are marked absent and processing continues") {
    const auto ca = line_along_x(100, 0, 0);
    const auto cb = line_along_x(100, 10, 0);
    const FiducialReference f{{0, 0, 0}, "f"};

    std::vector<DissectionMeasurement> ms(3);
    ms[0] = {1, 30.0, std::sqrt(1000.0)};
    ms[1] = {2, 500.0, 500.0}; // unreachable
    ms[2] = {3, 80.0, std::sqrt(6500.0)};
    const auto results = assign_all_planes(ca, cb, f, ms);
    REQUIRE(results.size() == 3);
    CHECK(results[0].plane.has_value());
    CHECK_FALSE(results[1].plane.has_value());
    CHECK_FALSE(results[1].error.empty());
    CHECK(results[2].plane.has_value());
}

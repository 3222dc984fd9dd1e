#ifndef HISTOLOC_PLANE_ASSIGNMENT_HPP
#define HISTOLOC_PLANE_ASSIGNMENT_HPP

// Solve dissection-cut planes from laboratory distance measurements.
// Cuts are modeled as flat and perpendicular to the curved bisection
// surface: the plane contains the chord between the two edge intersections
// and its normal lies in the span of the chord and the averaged tangent.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "histoloc/geometry.hpp"

namespace histoloc {

struct DissectionMeasurement {
    int index = 0;
    double dA = 0.0; // mm from f_ref to the corner on curve a
    double dB = 0.0; // mm from f_ref to the corner on curve b
    bool curvedCut = false;
    double offset = 0.0; // signed mm along plane normal (microtome shavings / kerf)

    // optional physical caliper distances for validation
    std::optional<double> d1Phy, d2Phy, d3Phy;
};

enum class RootMethod { Newton, BisectionFallback };

struct IntersectionSolution {
    double t = 0.0;
    Point3 point{Point3::Zero()};
    double residual = 0.0;
    int iterations = 0;
    RootMethod method = RootMethod::Newton;
    int bracketCount = 0; // sign-change brackets found on the sampled domain
};

namespace detail {

constexpr double kDomainLo = -0.05; // 5% extrapolation margin
constexpr double kDomainHi = 1.05;
constexpr int kDenseSamples = 4096;
constexpr int kNewtonMaxIter = 50;
constexpr double kNewtonTol = 1e-9;
constexpr double kBisectTol = 1e-9;

inline double distance_gap(const ParametricCubic& c, const Point3& fRef, double d, double t) {
    return (curve_eval(c, t) - fRef).norm() - d;
}

inline double bisect_root(const ParametricCubic& c, const Point3& fRef, double d,
                          double lo, double hi) {
    double glo = distance_gap(c, fRef, d, lo);
    while (hi - lo > kBisectTol) {
        const double mid = 0.5 * (lo + hi);
        const double gm = distance_gap(c, fRef, d, mid);
        if ((glo <= 0.0) == (gm <= 0.0)) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

// Root of g(t) = ||C(t) - f_ref|| - d. Newton from tSeed with analytic
// derivative; dense sampling + bisection on divergence. When several roots
// exist the smallest one at or beyond tSeed is returned (dissections
// proceed away from the fiducial).
inline IntersectionSolution solve_intersection(const ParametricCubic& c,
                                               const FiducialReference& fRef, double d,
                                               double tSeed) {
    using namespace detail;
    if (d < 0.0) throw InvalidParams("distance must be non-negative");

    IntersectionSolution sol;

    // Dense scan for sign-change brackets over the extended domain.
    const double step = (kDomainHi - kDomainLo) / (kDenseSamples - 1);
    std::vector<std::pair<double, double>> brackets;
    double prevT = kDomainLo;
    double prevG = distance_gap(c, fRef.position, d, prevT);
    double bestAbsT = prevT;
    double bestAbsG = std::abs(prevG);
    for (int i = 1; i < kDenseSamples; ++i) {
        const double t = kDomainLo + i * step;
        const double g = distance_gap(c, fRef.position, d, t);
        if ((prevG <= 0.0) != (g <= 0.0)) brackets.emplace_back(prevT, t);
        if (std::abs(g) < bestAbsG) {
            bestAbsG = std::abs(g);
            bestAbsT = t;
        }
        prevT = t;
        prevG = g;
    }
    sol.bracketCount = static_cast<int>(brackets.size());

    // Newton iteration from the seed.
    double t = tSeed;
    double g = distance_gap(c, fRef.position, d, t);
    bool newtonOk = false;
    int iter = 0;
    for (; iter < kNewtonMaxIter; ++iter) {
        if (std::abs(g) < kNewtonTol) {
            newtonOk = true;
            break;
        }
        const Point3 delta = curve_eval(c, t) - fRef.position;
        const double dist = delta.norm();
        if (dist < 1e-12) {
            // curve point coincides with the fiducial: the derivative of the
            // distance is undefined there, step forward past the singularity
            t += step;
            g = distance_gap(c, fRef.position, d, t);
            continue;
        }
        Eigen::Vector4d powers(0.0, 1.0, 2.0 * t, 3.0 * t * t);
        const Vec3 deriv = c.coefficients * powers;
        const double gPrime = delta.dot(deriv) / dist;
        if (std::abs(gPrime) < 1e-12) break;
        t -= g / gPrime;
        if (t < kDomainLo - 0.5 || t > kDomainHi + 0.5) break;
        g = distance_gap(c, fRef.position, d, t);
    }
    newtonOk = newtonOk && t >= kDomainLo && t <= kDomainHi && t >= tSeed - 1e-6;

    // Smallest bracketed root at or beyond the seed.
    std::optional<double> orderedRoot;
    for (const auto& [lo, hi] : brackets) {
        if (hi >= tSeed - 1e-9) {
            orderedRoot = bisect_root(c, fRef.position, d, lo, hi);
            break;
        }
    }

    if (newtonOk && (!orderedRoot || t <= *orderedRoot + 1e-6)) {
        sol.t = t;
        sol.method = RootMethod::Newton;
        sol.iterations = iter;
    } else if (orderedRoot) {
        sol.t = *orderedRoot;
        sol.method = RootMethod::BisectionFallback;
        sol.iterations = iter;
    } else if (bestAbsG < 1e-6 && bestAbsT >= tSeed - 1e-9) {
        // Tangency (e.g. d at a local extremum of the distance): no sign
        // change, but the sampled minimum already satisfies the tolerance.
        sol.t = bestAbsT;
        sol.method = RootMethod::BisectionFallback;
        sol.iterations = iter;
    } else {
        throw NoRoot("distance " + std::to_string(d) +
                     " mm is unreachable on the curve domain (incl. 5% margin)");
    }

    sol.point = curve_eval(c, sol.t);
    sol.residual = std::abs((sol.point - fRef.position).norm() - d);
    return sol;
}

// Plane through both curve intersections, perpendicular to the local
// bisection direction: n = Gram-Schmidt of the averaged unit tangents
// against the chord between intersections.
inline DissectionPlane plane_from_intersections(const ParametricCubic& ca,
                                                const ParametricCubic& cb, double tA,
                                                double tB, int index) {
    const Point3 pa = curve_eval(ca, tA);
    const Point3 pb = curve_eval(cb, tB);
    const Vec3 chord = pb - pa;
    if (chord.norm() <= 1e-3)
        throw NumericalError("intersection chord degenerate for dissection " +
                             std::to_string(index));
    const Vec3 vHat = chord.normalized();

    const Vec3 ta = curve_tangent(ca, tA).normalized();
    const Vec3 tb = curve_tangent(cb, tB).normalized();
    const Vec3 tSum = ta + tb;
    if (tSum.norm() < 1e-6)
        throw DegenerateTangents("opposing edge tangents at dissection " +
                                 std::to_string(index));
    const Vec3 tAvg = tSum.normalized();

    const Vec3 rejected = tAvg - tAvg.dot(vHat) * vHat;
    if (rejected.norm() < 1e-6)
        throw TangentParallelToChord("averaged tangent parallel to chord at dissection " +
                                     std::to_string(index));

    DissectionPlane plane;
    plane.index = index;
    plane.normal = rejected.normalized();
    plane.uAxis = vHat;
    plane.vAxis = plane.normal.cross(plane.uAxis);
    plane.anchorA = pa;
    plane.anchorB = pb;
    plane.paramA = tA;
    plane.paramB = tB;
    plane.origin = 0.5 * (pa + pb);
    return plane;
}

inline DissectionPlane assign_plane(const ParametricCubic& ca, const ParametricCubic& cb,
                                    const FiducialReference& fRef,
                                    const DissectionMeasurement& m, double seedA,
                                    double seedB, IntersectionSolution* outSolA = nullptr,
                                    IntersectionSolution* outSolB = nullptr) {
    const IntersectionSolution solA = solve_intersection(ca, fRef, m.dA, seedA);
    const IntersectionSolution solB = solve_intersection(cb, fRef, m.dB, seedB);
    if (outSolA) *outSolA = solA;
    if (outSolB) *outSolB = solB;

    DissectionPlane plane = plane_from_intersections(ca, cb, solA.t, solB.t, m.index);

    if (m.offset != 0.0) {
        const Vec3 shift = m.offset * plane.normal;
        plane.origin += shift;
        plane.anchorA += shift;
        plane.anchorB += shift;
    }
    return plane;
}

struct PlaneAssignmentResult {
    std::optional<DissectionPlane> plane;
    IntersectionSolution solutionA, solutionB;
    std::string error; // non-empty when the plane is absent
};

// Planes solved in index order, each solve seeded with the previous
// plane's curve parameters. Failures are recorded and skipped.
inline std::vector<PlaneAssignmentResult>
assign_all_planes(const ParametricCubic& ca, const ParametricCubic& cb,
                  const FiducialReference& fRef,
                  const std::vector<DissectionMeasurement>& measurements) {
    std::vector<PlaneAssignmentResult> results;
    results.reserve(measurements.size());
    double seedA = 0.0, seedB = 0.0;
    for (const auto& m : measurements) {
        PlaneAssignmentResult r;
        try {
            r.plane = assign_plane(ca, cb, fRef, m, seedA, seedB, &r.solutionA, &r.solutionB);
            seedA = r.solutionA.t;
            seedB = r.solutionB.t;
        } catch (const std::exception& e) {
            r.error = "dissection " + std::to_string(m.index) + ": " + e.what();
        }
        results.push_back(std::move(r));
    }
    return results;
}

} // namespace histoloc

#endif

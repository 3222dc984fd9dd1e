#ifndef HISTOLOC_STATS_HPP
#define HISTOLOC_STATS_HPP

// Plane-assignment validation: estimated vs. physical dissection sizes,
// error statistics with curved-cut exclusion, Shapiro-Wilk normality and
// input-perturbation sensitivity.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "histoloc/plane_assignment.hpp"

namespace histoloc {

struct ValidationRecord {
    int dissectionIndex = 0;
    std::optional<double> d1Est, d2Est, d3Est;
    std::optional<double> d1Phy, d2Phy, d3Phy;
    bool curvedCut = false;
};

struct ChannelStats {
    int n = 0;
    double mean = 0.0;
    double stdev = 0.0;
};

struct ErrorReport {
    int n = 0;          // included record-measurement count (pooled)
    double mean = 0.0;  // mm, est - phy
    double stdev = 0.0; // sample stdev, n-1 denominator
    ChannelStats d13;   // d1 & d3 pooled
    ChannelStats d2;
    std::optional<double> shapiroW; // absent when n < 3 or zero variance
    int excludedCurved = 0;
};

struct SensitivityReport {
    std::vector<double> rotationsDeg;   // per plane, angle between variant normals
    std::vector<double> translationsMm; // per measurement pair/channel, |estA - estB|
    double maxRotationDeg = 0.0;
    double meanTranslationMm = 0.0;
    double stdevTranslationMm = 0.0;
};

inline double sample_mean(const std::vector<double>& xs) {
    if (xs.empty()) throw InsufficientData("mean of empty sample");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double sample_stdev(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double mu = sample_mean(xs);
    double ss = 0.0;
    for (const double x : xs) ss += (x - mu) * (x - mu);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

// Wichura's AS241 (PPND16) inverse normal CDF.
inline double normal_quantile(double p) {
    if (p <= 0.0 || p >= 1.0) throw InvalidParams("quantile requires p in (0, 1)");
    const double q = p - 0.5;
    double r;
    if (std::abs(q) <= 0.425) {
        r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                     6.7265770927008700853e4) *
                        r +
                    4.5921953931549871457e4) *
                       r +
                   1.3731693765509461125e4) *
                      r +
                  1.9715909503065514427e3) *
                     r +
                 1.3314166789178437745e2) *
                    r +
                3.3871328727963666080e0) /
               (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                     3.9307895800092710610e4) *
                        r +
                    2.1213794301586595867e4) *
                       r +
                   5.3941960214247511077e3) *
                      r +
                  6.8718700749205790830e2) *
                     r +
                 4.2313330701600911252e1) *
                    r +
                1.0);
    }
    r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double value;
    if (r <= 5.0) {
        r -= 1.6;
        value = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                      2.41780725177450611770e-1) *
                         r +
                     1.27045825245236838258e0) *
                        r +
                    3.64784832476320460504e0) *
                       r +
                   5.76949722146069140550e0) *
                      r +
                  4.63033784615654529590e0) *
                     r +
                 1.42343711074968357734e0) /
                (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                      1.51986665636164571966e-2) *
                         r +
                     1.48103976427480074590e-1) *
                        r +
                    6.89767334985100004550e-1) *
                       r +
                   1.67638483018380384940e0) *
                      r +
                  2.05319162663775882187e0) *
                     r +
                 1.0);
    } else {
        r -= 5.0;
        value = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                      1.24266094738807843860e-3) *
                         r +
                     2.65321895265761230930e-2) *
                        r +
                    2.96560571828504891230e-1) *
                       r +
                   1.78482653991729133580e0) *
                      r +
                  5.46378491116411436990e0) *
                     r +
                 6.65790464350110377720e0) /
                (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                      1.84631831751005468180e-5) *
                         r +
                     7.86869131145613259100e-4) *
                        r +
                    1.48753612908506148525e-2) *
                       r +
                   1.36929880922735805310e-1) *
                      r +
                  5.99832206555887937690e-1) *
                     r +
                 1.0);
    }
    return (q < 0.0) ? -value : value;
}

// Shapiro-Wilk W statistic, Royston AS R94 coefficient approximation.
inline double shapiro_wilk(std::vector<double> samples) {
    const std::size_t n = samples.size();
    if (n < 3 || n > 5000)
        throw OutOfRangeN("Shapiro-Wilk requires 3 <= n <= 5000, got " + std::to_string(n));
    std::sort(samples.begin(), samples.end());

    const double mu = sample_mean(samples);
    double ssx = 0.0;
    for (const double x : samples) ssx += (x - mu) * (x - mu);
    if (ssx <= 1e-300) throw ZeroVariance("Shapiro-Wilk undefined for constant sample");

    std::vector<double> m(n);
    double ssm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = normal_quantile((static_cast<double>(i + 1) - 0.375) /
                               (static_cast<double>(n) + 0.25));
        ssm += m[i] * m[i];
    }

    std::vector<double> a(n, 0.0);
    if (n == 3) {
        a[0] = -std::sqrt(0.5);
        a[2] = std::sqrt(0.5);
    } else {
        const double rsn = 1.0 / std::sqrt(static_cast<double>(n));
        const double cn = m[n - 1] / std::sqrt(ssm);
        const double an = cn + rsn * (0.221157 +
                                      rsn * (-0.147981 +
                                             rsn * (-2.071190 +
                                                    rsn * (4.434685 + rsn * -2.706056))));
        if (n <= 5) {
            const double phi = (ssm - 2.0 * m[n - 1] * m[n - 1]) / (1.0 - 2.0 * an * an);
            a[n - 1] = an;
            a[0] = -an;
            for (std::size_t i = 1; i + 1 < n; ++i) a[i] = m[i] / std::sqrt(phi);
        } else {
            const double cn1 = m[n - 2] / std::sqrt(ssm);
            const double an1 =
                cn1 + rsn * (0.042981 +
                             rsn * (-0.293762 +
                                    rsn * (-1.752461 + rsn * (5.682633 + rsn * -3.582633))));
            const double phi =
                (ssm - 2.0 * m[n - 1] * m[n - 1] - 2.0 * m[n - 2] * m[n - 2]) /
                (1.0 - 2.0 * an * an - 2.0 * an1 * an1);
            a[n - 1] = an;
            a[n - 2] = an1;
            a[0] = -an;
            a[1] = -an1;
            for (std::size_t i = 2; i + 2 < n; ++i) a[i] = m[i] / std::sqrt(phi);
        }
    }

    double num = 0.0;
    for (std::size_t i = 0; i < n; ++i) num += a[i] * samples[i];
    return num * num / ssx;
}

// Estimated dissection sizes for one consecutive plane pair (Fig. 3 style
// d1/d2/d3 protocol).
struct PairEstimates {
    int indexFrom = 0, indexTo = 0;
    double d1 = 0.0; // between anchorA points of successive planes
    std::optional<double> d2; // along the third (outer contour) spline
    double d3 = 0.0; // between anchorB points
};

namespace detail {

// cEdge point minimizing |signed plane distance|, refined by Newton on the
// plane equation; seeded from a dense scan.
inline Point3 plane_edge_intersection(const DissectionPlane& plane,
                                      const ParametricCubic& cEdge) {
    constexpr double lo = -0.05, hi = 1.05;
    constexpr int samples = 2048;
    double bestT = lo;
    double bestAbs = std::numeric_limits<double>::max();
    double prevT = lo;
    double prevS = plane.signedDistance(curve_eval(cEdge, lo));
    std::optional<std::pair<double, double>> bracket;
    for (int i = 0; i <= samples; ++i) {
        const double t = lo + (hi - lo) * i / samples;
        const double s = plane.signedDistance(curve_eval(cEdge, t));
        if (std::abs(s) < bestAbs) {
            bestAbs = std::abs(s);
            bestT = t;
        }
        if (!bracket && i > 0 && (prevS <= 0.0) != (s <= 0.0)) bracket = {prevT, t};
        prevT = t;
        prevS = s;
    }
    if (!bracket && bestAbs > 1e-6)
        throw EdgeIntersectionMissing("third spline does not cross plane " +
                                      std::to_string(plane.index));

    double t = bestT;
    for (int iter = 0; iter < 50; ++iter) {
        const double s = plane.signedDistance(curve_eval(cEdge, t));
        if (std::abs(s) < 1e-12) break;
        Eigen::Vector4d powers(0.0, 1.0, 2.0 * t, 3.0 * t * t);
        const double sp = plane.normal.dot(cEdge.coefficients * powers);
        if (std::abs(sp) < 1e-12) break;
        t -= s / sp;
        t = std::clamp(t, lo, hi);
    }
    if (std::abs(plane.signedDistance(curve_eval(cEdge, t))) > 1e-6) {
        if (!bracket)
            throw EdgeIntersectionMissing("third spline does not cross plane " +
                                          std::to_string(plane.index));
        auto [bl, bh] = *bracket;
        while (bh - bl > 1e-12) {
            const double mid = 0.5 * (bl + bh);
            if ((plane.signedDistance(curve_eval(cEdge, bl)) <= 0.0) ==
                (plane.signedDistance(curve_eval(cEdge, mid)) <= 0.0))
                bl = mid;
            else
                bh = mid;
        }
        t = 0.5 * (bl + bh);
    }
    return curve_eval(cEdge, t);
}

} // namespace detail

// Euclidean distances between spline intersections on successive planes
// (d1, d3) and along a third outer-contour spline (d2).
inline std::vector<PairEstimates>
compute_estimates(const std::vector<DissectionPlane>& planes, const ParametricCubic& ca,
                  const ParametricCubic& cb,
                  const ParametricCubic* cEdge = nullptr) {
    (void)ca;
    (void)cb;
    std::vector<PairEstimates> out;
    if (planes.size() < 2) return out;

    std::vector<std::optional<Point3>> edgePoints(planes.size());
    if (cEdge)
        for (std::size_t i = 0; i < planes.size(); ++i)
            edgePoints[i] = detail::plane_edge_intersection(planes[i], *cEdge);

    for (std::size_t i = 0; i + 1 < planes.size(); ++i) {
        PairEstimates e;
        e.indexFrom = planes[i].index;
        e.indexTo = planes[i + 1].index;
        e.d1 = (planes[i + 1].anchorA - planes[i].anchorA).norm();
        e.d3 = (planes[i + 1].anchorB - planes[i].anchorB).norm();
        if (cEdge) e.d2 = (*edgePoints[i + 1] - *edgePoints[i]).norm();
        out.push_back(e);
    }
    return out;
}

inline ErrorReport error_report(const std::vector<ValidationRecord>& records,
                                bool excludeCurved) {
    ErrorReport report;
    std::vector<double> pooled, d13, d2;
    for (const auto& r : records) {
        if (excludeCurved && r.curvedCut) {
            ++report.excludedCurved;
            continue;
        }
        const auto push = [&](const std::optional<double>& est,
                              const std::optional<double>& phy, std::vector<double>& channel) {
            if (est && phy) {
                const double diff = *est - *phy;
                pooled.push_back(diff);
                channel.push_back(diff);
            }
        };
        push(r.d1Est, r.d1Phy, d13);
        push(r.d3Est, r.d3Phy, d13);
        push(r.d2Est, r.d2Phy, d2);
    }
    if (pooled.empty()) throw InsufficientData("no included measurements");

    report.n = static_cast<int>(pooled.size());
    report.mean = sample_mean(pooled);
    report.stdev = sample_stdev(pooled);
    report.d13 = {static_cast<int>(d13.size()), d13.empty() ? 0.0 : sample_mean(d13),
                  sample_stdev(d13)};
    report.d2 = {static_cast<int>(d2.size()), d2.empty() ? 0.0 : sample_mean(d2),
                 sample_stdev(d2)};
    if (pooled.size() >= 3) {
        try {
            report.shapiroW = shapiro_wilk(pooled);
        } catch (const ZeroVariance&) {
            // degenerate (est == phy everywhere); W stays absent
        }
    }
    return report;
}

struct SplineVariant {
    ParametricCubic ca, cb;
    std::optional<ParametricCubic> cEdge;
};

// Compare plane assignment between two spline-placement variants of the
// same measurement set: per-plane rotation of the normals and
// per-measurement translation of the d-estimates.
inline SensitivityReport sensitivity_analysis(const SplineVariant& variantA,
                                              const SplineVariant& variantB,
                                              const FiducialReference& fRef,
                                              const std::vector<DissectionMeasurement>& ms) {
    const auto assign = [&](const SplineVariant& v) {
        std::vector<DissectionPlane> planes;
        for (const auto& r : assign_all_planes(v.ca, v.cb, fRef, ms)) {
            if (!r.plane) throw NumericalError("sensitivity variant failed: " + r.error);
            planes.push_back(*r.plane);
        }
        return planes;
    };
    const auto planesA = assign(variantA);
    const auto planesB = assign(variantB);

    SensitivityReport report;
    for (std::size_t i = 0; i < planesA.size(); ++i) {
        // atan2 form is exact for identical normals and stable near 0 and pi
        const Vec3& na = planesA[i].normal;
        const Vec3& nb = planesB[i].normal;
        const double angle = std::atan2(na.cross(nb).norm(), na.dot(nb));
        report.rotationsDeg.push_back(angle * 180.0 / M_PI);
    }
    report.maxRotationDeg = report.rotationsDeg.empty()
                                ? 0.0
                                : *std::max_element(report.rotationsDeg.begin(),
                                                    report.rotationsDeg.end());

    const bool withEdge = variantA.cEdge.has_value() && variantB.cEdge.has_value();
    const auto estA = compute_estimates(planesA, variantA.ca, variantA.cb,
                                        withEdge ? &*variantA.cEdge : nullptr);
    const auto estB = compute_estimates(planesB, variantB.ca, variantB.cb,
                                        withEdge ? &*variantB.cEdge : nullptr);
    for (std::size_t i = 0; i < estA.size(); ++i) {
        report.translationsMm.push_back(std::abs(estA[i].d1 - estB[i].d1));
        if (estA[i].d2 && estB[i].d2)
            report.translationsMm.push_back(std::abs(*estA[i].d2 - *estB[i].d2));
        report.translationsMm.push_back(std::abs(estA[i].d3 - estB[i].d3));
    }
    if (!report.translationsMm.empty()) {
        report.meanTranslationMm = sample_mean(report.translationsMm);
        report.stdevTranslationMm = sample_stdev(report.translationsMm);
    }
    return report;
}

} // namespace histoloc

#endif

#ifndef HISTOLOC_SYNTH_HPP
#define HISTOLOC_SYNTH_HPP

// Synthetic specimens with exact ground truth: cubic bisection edges,
// dissection planes built by the same perpendicularity rule the solver
// uses, distance measurements, phantom CT halves and rendered slides.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "histoloc/geometry.hpp"
#include "histoloc/histology.hpp"
#include "histoloc/plane_assignment.hpp"
#include "histoloc/volume.hpp"

namespace histoloc {

enum class SpecimenShape { ParallelLines, HalfCylinder, BentPrism };

struct SpecimenParams {
    SpecimenShape shape = SpecimenShape::HalfCylinder;
    double extent = 100.0; // mm along the dissection direction
    double width = 20.0;   // mm between the two edge splines
    int cuts = 6;
    double noiseSigma = 0.0; // mm, Gaussian, on measurements
    std::uint64_t seed = 0;
    int controlPointCount = 8;
};

struct SyntheticSpecimen {
    SpecimenParams params;
    MarkupCurve markupA, markupB, markupEdge;
    FiducialReference fRef;
    ParametricCubic curveA, curveB, curveEdge; // canonical fits of the markups
    std::vector<DissectionPlane> truthPlanes;
    std::vector<double> truthParamsA, truthParamsB;
    std::vector<double> trueDA, trueDB; // noise-free distances
    std::vector<DissectionMeasurement> measurements; // with noise when sigma > 0
};

namespace detail {

// Control points sampled uniformly in the generator parameter. The ground
// truth downstream is defined on the canonical fit of these points, not on
// the generator, so closure does not depend on the fit residual.
inline std::vector<Point3> sample_generator(const Eigen::Matrix<double, 3, 4>& coeffs,
                                            int n) {
    std::vector<Point3> points(n);
    for (int i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / (n - 1);
        Eigen::Vector4d powers(1.0, t, t * t, t * t * t);
        points[i] = Point3(coeffs * powers);
    }
    return points;
}

struct GeneratorSet {
    Eigen::Matrix<double, 3, 4> a, b, edge;
};

inline GeneratorSet make_generators(const SpecimenParams& p, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> amp(0.8, 1.2);
    const double L = p.extent;
    const double W = p.width;

    GeneratorSet g;
    g.a.setZero();
    g.b.setZero();
    g.edge.setZero();
    g.a(0, 1) = L;
    g.b(0, 1) = L;
    g.edge(0, 1) = L;
    g.b(1, 0) = W;
    g.edge(1, 0) = 0.5 * W;
    g.edge(2, 0) = W;

    switch (p.shape) {
        case SpecimenShape::ParallelLines:
            break;
        case SpecimenShape::HalfCylinder: {
            // gentle in-plane bow: y(t) = A (3t^2 - 2t^3)
            const double A = 0.25 * W * amp(rng);
            g.a(1, 2) = 3.0 * A;
            g.a(1, 3) = -2.0 * A;
            const double Ab = 0.8 * A;
            g.b(1, 2) += 3.0 * Ab;
            g.b(1, 3) += -2.0 * Ab;
            const double Ae = 0.6 * A;
            g.edge(2, 2) = 3.0 * Ae;
            g.edge(2, 3) = -2.0 * Ae;
            break;
        }
        case SpecimenShape::BentPrism: {
            const double A = 0.2 * W * amp(rng);
            const double B = 0.15 * W * amp(rng);
            g.a(1, 2) = 3.0 * A;
            g.a(1, 3) = -2.0 * A;
            g.a(2, 2) = B;
            g.b(1, 2) += 2.4 * A;
            g.b(1, 3) += -1.6 * A;
            g.b(2, 2) = 1.2 * B;
            g.edge(1, 2) = 1.5 * A;
            g.edge(1, 3) = -1.0 * A;
            g.edge(2, 3) = B;
            break;
        }
    }
    return g;
}

} // namespace detail

inline SyntheticSpecimen generate(const SpecimenParams& params) {
    if (params.cuts < 1) throw InvalidParams("cut count must be >= 1");
    if (params.extent <= 0.0 || params.width <= 0.0)
        throw InvalidParams("extent and width must be positive");
    if (params.noiseSigma < 0.0) throw InvalidParams("noise sigma must be >= 0");
    if (params.controlPointCount < 4)
        throw InvalidParams("need >= 4 control points per spline");

    std::mt19937_64 rng(params.seed);
    const detail::GeneratorSet gen = detail::make_generators(params, rng);

    SyntheticSpecimen spec;
    spec.params = params;
    spec.markupA = {"spline_ma", detail::sample_generator(gen.a, params.controlPointCount)};
    spec.markupB = {"spline_mb", detail::sample_generator(gen.b, params.controlPointCount)};
    spec.markupEdge = {"spline_edge",
                       detail::sample_generator(gen.edge, params.controlPointCount)};
    spec.curveA = fit_parametric_cubic(spec.markupA);
    spec.curveB = fit_parametric_cubic(spec.markupB);
    spec.curveEdge = fit_parametric_cubic(spec.markupEdge);

    spec.fRef.label = "f_ref";
    spec.fRef.position = curve_eval(spec.curveA, 0.0);

    std::normal_distribution<double> noise(0.0, params.noiseSigma);

    // Cut parameters spread over the spline interior; a small alternating
    // skew on curve b keeps consecutive cuts nonparallel.
    const double t0 = 0.15, t1 = 0.90;
    for (int i = 0; i < params.cuts; ++i) {
        const double tA = (params.cuts == 1)
                              ? 0.5 * (t0 + t1)
                              : t0 + (t1 - t0) * i / (params.cuts - 1);
        const double skew =
            (params.shape == SpecimenShape::ParallelLines) ? 0.0 : 0.02 * ((i % 2) ? 1.0 : -1.0);
        const double tB = tA + skew;

        spec.truthParamsA.push_back(tA);
        spec.truthParamsB.push_back(tB);
        spec.truthPlanes.push_back(
            plane_from_intersections(spec.curveA, spec.curveB, tA, tB, i + 1));

        const double dA = (curve_eval(spec.curveA, tA) - spec.fRef.position).norm();
        const double dB = (curve_eval(spec.curveB, tB) - spec.fRef.position).norm();
        spec.trueDA.push_back(dA);
        spec.trueDB.push_back(dB);

        DissectionMeasurement m;
        m.index = i + 1;
        m.dA = dA + (params.noiseSigma > 0.0 ? noise(rng) : 0.0);
        m.dB = dB + (params.noiseSigma > 0.0 ? noise(rng) : 0.0);
        m.dA = std::max(0.0, m.dA);
        m.dB = std::max(0.0, m.dB);
        spec.measurements.push_back(m);
    }
    return spec;
}

struct PhantomParams {
    double length = 60.0;      // mm along x
    double crossSection = 40.0; // mm box in y/z
    double spacing = 2.0;      // mm isotropic
    double corticalRadius = 12.0;
    double marrowRadius = 6.0;
    double corticalHU = 1200.0;
    double marrowHU = 100.0;
    double softHU = 40.0;
    double maxRotationDeg = 10.0;
    double maxTranslation = 20.0;
    std::uint64_t seed = 0;
};

struct PhantomPair {
    VolumeGrid full;   // uncut reference phantom
    VolumeGrid fixed;  // half kept in place
    VolumeGrid moving; // other half, displaced by the inverse of tFuseTruth
    RigidTransform tFuseTruth; // moving -> fixed world
    std::vector<Point3> fiducialsFixed, fiducialsMoving;
    std::size_t corticalVoxels = 0; // voxels at or above cortical HU
};

namespace detail {

inline RigidTransform random_rigid(std::mt19937_64& rng, double maxRotationDeg,
                                   double maxTranslation) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vec3 axis(u(rng), u(rng), u(rng));
    if (axis.norm() < 1e-6) axis = Vec3::UnitZ();
    axis.normalize();
    std::uniform_real_distribution<double> ang(-maxRotationDeg, maxRotationDeg);
    const double theta = ang(rng) * M_PI / 180.0;
    const Eigen::Matrix3d r = Eigen::AngleAxisd(theta, axis).toRotationMatrix();
    std::uniform_real_distribution<double> tr(-maxTranslation, maxTranslation);
    return RigidTransform::fromParts(r, Vec3(tr(rng), tr(rng), tr(rng)));
}

} // namespace detail

// Analytic bone phantom (cortical shell, marrow core, soft tissue box)
// voxelized and split by its bisection plane; the moving half is displaced
// by a random rigid transform whose inverse is the truth T_fuse.
inline PhantomPair render_phantom(const PhantomParams& p) {
    if (p.length <= 0.0 || p.crossSection <= 0.0 || p.spacing <= 0.0)
        throw InvalidParams("phantom dimensions must be positive");
    if (p.marrowRadius >= p.corticalRadius)
        throw InvalidParams("marrow radius must be below cortical radius");

    std::mt19937_64 rng(p.seed);

    PhantomPair pair;
    VolumeGrid& full = pair.full;
    full.dims = {static_cast<int>(std::round(p.length / p.spacing)) + 1,
                 static_cast<int>(std::round(p.crossSection / p.spacing)) + 1,
                 static_cast<int>(std::round(p.crossSection / p.spacing)) + 1};
    full.spacing = Vec3::Constant(p.spacing);
    full.origin = Point3::Zero();
    full.voxels.resize(full.voxelCount());

    // Bowed and tapered shaft: no rotational or translational symmetry, so
    // surface registration of the halves is well posed.
    const double yc = 0.5 * p.crossSection, zc = 0.5 * p.crossSection;
    const auto bowY = [&](double x) {
        return yc + 0.08 * p.crossSection * std::sin(M_PI * x / p.length);
    };
    const auto taper = [&](double x) { return 1.1 - 0.2 * x / p.length; };
    for (int k = 0; k < full.dims[2]; ++k)
        for (int j = 0; j < full.dims[1]; ++j)
            for (int i = 0; i < full.dims[0]; ++i) {
                const Point3 w = full.worldFromIndex(i, j, k);
                const double s = taper(w.x());
                const double r = std::hypot(w.y() - bowY(w.x()), w.z() - zc);
                double hu = p.softHU;
                if (r <= s * p.marrowRadius)
                    hu = p.marrowHU;
                else if (r <= s * p.corticalRadius)
                    hu = p.corticalHU;
                full.at(i, j, k) = static_cast<float>(hu);
                if (hu >= p.corticalHU) ++pair.corticalVoxels;
            }

    // Split along the mid-x bisection plane; halves share the seam slice.
    const int iSplit = full.dims[0] / 2;
    const auto crop = [&](int iBegin, int iEnd) {
        VolumeGrid half;
        half.dims = {iEnd - iBegin + 1, full.dims[1], full.dims[2]};
        half.spacing = full.spacing;
        half.direction = full.direction;
        half.origin = full.worldFromIndex(iBegin, 0, 0);
        half.voxels.resize(half.voxelCount());
        for (int k = 0; k < half.dims[2]; ++k)
            for (int j = 0; j < half.dims[1]; ++j)
                for (int i = 0; i < half.dims[0]; ++i)
                    half.at(i, j, k) = full.at(i + iBegin, j, k);
        return half;
    };
    pair.fixed = crop(0, iSplit);
    VolumeGrid movingHalf = crop(iSplit, full.dims[0] - 1);

    const RigidTransform displace =
        detail::random_rigid(rng, p.maxRotationDeg, p.maxTranslation);
    pair.tFuseTruth = invert(displace);

    pair.moving = movingHalf;
    pair.moving.origin = displace.apply(movingHalf.origin);
    pair.moving.direction = displace.rotation() * movingHalf.direction;

    // Non-collinear landmarks on the seam bone surface (world coordinates
    // of the undisplaced specimen, then carried through the displacement).
    const double xs = iSplit * p.spacing;
    const double ys = bowY(xs), rs = taper(xs) * p.corticalRadius;
    pair.fiducialsFixed = {Point3(xs, ys + rs, zc), Point3(xs, ys - rs, zc),
                           Point3(xs, ys, zc + rs), Point3(xs - 5.0, ys, zc - rs)};
    for (const auto& f : pair.fiducialsFixed)
        pair.fiducialsMoving.push_back(displace.apply(f));
    return pair;
}

// Render a binary slide of the specimen cross-section on a plane: bone
// class where the phantom is cortical, tumour elsewhere inside the section.
// Landmarks are three pixel/world pairs consistent with a ground-truth
// in-plane scale and translation.
struct RenderedSlide {
    HistologySlide slide;
    DissectionPlane plane;
    double truthScale = 1.0;
    Vec2 truthTranslation{Vec2::Zero()};
};

inline RenderedSlide render_slide(const DissectionPlane& plane, double sizeMm = 30.0,
                                  double pixelMm = 0.5, double shrink = 1.0,
                                  std::uint64_t seed = 0) {
    if (sizeMm <= 0.0 || pixelMm <= 0.0 || shrink <= 0.0)
        throw InvalidParams("slide render parameters must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(-2.0, 2.0);

    RenderedSlide out;
    out.plane = plane;
    out.truthScale = 1.0 / shrink;
    out.truthTranslation = Vec2(-0.5 * sizeMm + jitter(rng), -0.5 * sizeMm + jitter(rng));

    HistologySlide& s = out.slide;
    s.index = plane.index;
    s.width = s.height = static_cast<int>(std::round(sizeMm * shrink / pixelMm));
    s.pixelSpacing = Vec2(pixelMm, pixelMm);
    s.pixels.assign(static_cast<std::size_t>(s.width) * s.height, 0);
    for (int y = 0; y < s.height; ++y)
        for (int x = 0; x < s.width; ++x) {
            const double u = out.truthScale * x * pixelMm + out.truthTranslation.x();
            const double v = out.truthScale * y * pixelMm + out.truthTranslation.y();
            const double r = std::hypot(u, v);
            s.pixels[static_cast<std::size_t>(y) * s.width + x] =
                (r < 0.25 * sizeMm) ? 1 : 2; // 1 = bone, 2 = tumour
        }

    // three landmark pairs mapped through the truth placement
    const std::vector<Vec2> pix = {Vec2(0.2 * s.width, 0.3 * s.height),
                                   Vec2(0.8 * s.width, 0.25 * s.height),
                                   Vec2(0.5 * s.width, 0.85 * s.height)};
    const RigidTransform pose = plane_pose(plane);
    for (const auto& px : pix) {
        const double u = out.truthScale * px.x() * pixelMm + out.truthTranslation.x();
        const double v = out.truthScale * px.y() * pixelMm + out.truthTranslation.y();
        s.landmarksImage.push_back(px);
        s.landmarksWorld.push_back(pose.apply(Point3(u, v, 0.0)));
    }
    return out;
}

} // namespace histoloc

#endif

#ifndef HISTOLOC_HISTOLOGY_HPP
#define HISTOLOC_HISTOLOGY_HPP

// Pose digitized histology labelmaps on their assigned dissection planes:
// rigid plane pose plus an in-plane scale+translation fitted from landmark
// pairs.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "histoloc/geometry.hpp"

namespace histoloc {

struct HistologySlide {
    int index = 0;
    int width = 0, height = 0;
    std::vector<std::uint8_t> pixels; // row-major; 0 = background, >0 = tissue class
    Vec2 pixelSpacing{1.0, 1.0};      // mm/pixel (sx, sy)
    std::vector<Vec2> landmarksImage; // pixel coordinates
    std::vector<Point3> landmarksWorld;

    std::uint8_t at(int x, int y) const {
        return pixels[static_cast<std::size_t>(y) * width + x];
    }
};

struct PlacedSlide {
    HistologySlide slide;
    RigidTransform planePose;     // plane (u,v,0) -> world
    SimilarityTransform2D inPlane;
    Eigen::Matrix4d composed{Eigen::Matrix4d::Identity()}; // pixel coords -> world mm
    double landmarkRms = 0.0;

    Point3 mapPixel(const Vec2& px) const {
        Eigen::Vector4d h(px.x(), px.y(), 0.0, 1.0);
        return (composed * h).head<3>();
    }
};

struct HistologyVolume {
    std::string specimenId;
    std::string bisectionId;
    std::vector<PlacedSlide> slides;
};

// Transform with columns (uAxis, vAxis, normal), translation = origin;
// maps in-plane coordinates (u, v, 0) to world.
inline RigidTransform plane_pose(const DissectionPlane& p) {
    Eigen::Matrix3d r;
    r.col(0) = p.uAxis;
    r.col(1) = p.vAxis;
    r.col(2) = p.normal;
    return RigidTransform::fromParts(r, p.origin);
}

// Least-squares uniform scale + translation: closed form
// s = sum((p - pbar) . (q - qbar)) / sum(|p - pbar|^2), tau = qbar - s pbar.
inline SimilarityTransform2D fit_inplane_similarity(const std::vector<Vec2>& imagePoints,
                                                    const std::vector<Vec2>& worldPoints) {
    if (imagePoints.size() < 3 || imagePoints.size() != worldPoints.size())
        throw TooFewPairs("in-plane fit needs >= 3 landmark pairs");

    const std::size_t n = imagePoints.size();
    Vec2 pBar = Vec2::Zero(), qBar = Vec2::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        pBar += imagePoints[i];
        qBar += worldPoints[i];
    }
    pBar /= static_cast<double>(n);
    qBar /= static_cast<double>(n);

    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 p = imagePoints[i] - pBar;
        const Vec2 q = worldPoints[i] - qBar;
        num += p.dot(q);
        den += p.squaredNorm();
    }
    if (den < 1e-12) throw DegenerateLandmarks("image landmarks have zero spread");
    const double s = num / den;
    if (s <= 0.0)
        throw NegativeScale("anti-correlated landmarks; slide orientation likely flipped");

    SimilarityTransform2D sim;
    sim.scale = s;
    sim.translation = qBar - s * pBar;

    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        ss += (sim.apply(imagePoints[i]) - worldPoints[i]).squaredNorm();
    sim.residualRms = std::sqrt(ss / static_cast<double>(n));
    return sim;
}

// Rotation-enabled variant (2D Procrustes with uniform scale) kept behind a
// flag for robustness experiments; returns the similarity plus the rotation
// angle in radians.
struct Similarity2DWithRotation {
    double scale = 1.0;
    double angle = 0.0;
    Vec2 translation{Vec2::Zero()};
    double residualRms = 0.0;

    Vec2 apply(const Vec2& p) const {
        const double c = std::cos(angle), s = std::sin(angle);
        return Vec2(scale * (c * p.x() - s * p.y()), scale * (s * p.x() + c * p.y())) +
               translation;
    }
};

inline Similarity2DWithRotation
fit_inplane_procrustes(const std::vector<Vec2>& imagePoints,
                       const std::vector<Vec2>& worldPoints) {
    if (imagePoints.size() < 3 || imagePoints.size() != worldPoints.size())
        throw TooFewPairs("in-plane fit needs >= 3 landmark pairs");

    const std::size_t n = imagePoints.size();
    Vec2 pBar = Vec2::Zero(), qBar = Vec2::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        pBar += imagePoints[i];
        qBar += worldPoints[i];
    }
    pBar /= static_cast<double>(n);
    qBar /= static_cast<double>(n);

    double a = 0.0, b = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 p = imagePoints[i] - pBar;
        const Vec2 q = worldPoints[i] - qBar;
        a += p.x() * q.x() + p.y() * q.y();
        b += p.x() * q.y() - p.y() * q.x();
        den += p.squaredNorm();
    }
    if (den < 1e-12) throw DegenerateLandmarks("image landmarks have zero spread");

    Similarity2DWithRotation out;
    out.angle = std::atan2(b, a);
    out.scale = std::sqrt(a * a + b * b) / den;
    if (out.scale <= 0.0) throw NegativeScale("degenerate landmark correlation");
    const double c = std::cos(out.angle), s = std::sin(out.angle);
    out.translation =
        qBar - out.scale * Vec2(c * pBar.x() - s * pBar.y(), s * pBar.x() + c * pBar.y());

    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        ss += (out.apply(imagePoints[i]) - worldPoints[i]).squaredNorm();
    out.residualRms = std::sqrt(ss / static_cast<double>(n));
    return out;
}

// World landmarks are orthogonally projected into plane coordinates
// (tolerance 0.5 mm off-plane; CT picks are voxel-quantized), then the
// in-plane similarity is fitted against image landmarks in millimetres.
inline PlacedSlide place_slide(const HistologySlide& slide, const DissectionPlane& plane,
                               double offPlaneTolerance = 0.5) {
    if (slide.landmarksImage.size() < 3 ||
        slide.landmarksImage.size() != slide.landmarksWorld.size())
        throw TooFewPairs("slide needs >= 3 paired landmarks");

    std::vector<Vec2> imageMm, planeCoords;
    imageMm.reserve(slide.landmarksImage.size());
    planeCoords.reserve(slide.landmarksWorld.size());
    for (std::size_t i = 0; i < slide.landmarksWorld.size(); ++i) {
        const Point3& w = slide.landmarksWorld[i];
        const double off = plane.signedDistance(w);
        if (std::abs(off) > offPlaneTolerance)
            throw LandmarkOffPlane("landmark " + std::to_string(i) + " is " +
                                   std::to_string(std::abs(off)) + " mm off-plane");
        const Vec3 rel = w - plane.origin;
        planeCoords.emplace_back(rel.dot(plane.uAxis), rel.dot(plane.vAxis));
        imageMm.emplace_back(slide.landmarksImage[i].x() * slide.pixelSpacing.x(),
                             slide.landmarksImage[i].y() * slide.pixelSpacing.y());
    }

    PlacedSlide placed;
    placed.slide = slide;
    placed.planePose = plane_pose(plane);
    placed.inPlane = fit_inplane_similarity(imageMm, planeCoords);

    // pixel -> in-plane mm -> world
    Eigen::Matrix4d pixelToPlane = Eigen::Matrix4d::Identity();
    pixelToPlane(0, 0) = placed.inPlane.scale * slide.pixelSpacing.x();
    pixelToPlane(1, 1) = placed.inPlane.scale * slide.pixelSpacing.y();
    pixelToPlane(0, 3) = placed.inPlane.translation.x();
    pixelToPlane(1, 3) = placed.inPlane.translation.y();
    placed.composed = placed.planePose.matrix * pixelToPlane;

    double ss = 0.0;
    for (std::size_t i = 0; i < slide.landmarksImage.size(); ++i) {
        const Point3 mapped = placed.mapPixel(slide.landmarksImage[i]);
        const Vec3 rel = slide.landmarksWorld[i] - plane.origin;
        const Point3 projected = plane.origin + rel.dot(plane.uAxis) * plane.uAxis +
                                 rel.dot(plane.vAxis) * plane.vAxis;
        ss += (mapped - projected).squaredNorm();
    }
    placed.landmarkRms = std::sqrt(ss / static_cast<double>(slide.landmarksImage.size()));
    return placed;
}

} // namespace histoloc

#endif

#ifndef HISTOLOC_VOLUME_HPP
#define HISTOLOC_VOLUME_HPP

// CT volume grid handling for bisection fusion: threshold segmentation,
// surface point extraction, landmark rigid registration, trimmed ICP
// refinement and grid stitching.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "histoloc/geometry.hpp"

namespace histoloc {

enum class ScalarType { Short, Float };

struct VolumeGrid {
    std::array<int, 3> dims{0, 0, 0};
    Vec3 spacing{1.0, 1.0, 1.0}; // mm per axis
    Point3 origin{Point3::Zero()};
    Eigen::Matrix3d direction{Eigen::Matrix3d::Identity()};
    std::vector<float> voxels; // HU for CT, labels for masks
    ScalarType scalarType = ScalarType::Float;

    std::size_t voxelCount() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    std::size_t flatIndex(int i, int j, int k) const {
        return (static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i;
    }
    float at(int i, int j, int k) const { return voxels[flatIndex(i, j, k)]; }
    float& at(int i, int j, int k) { return voxels[flatIndex(i, j, k)]; }

    bool inBounds(int i, int j, int k) const {
        return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
    }

    Point3 worldFromIndex(double i, double j, double k) const {
        return origin + direction * Vec3(i * spacing.x(), j * spacing.y(), k * spacing.z());
    }
    Vec3 indexFromWorld(const Point3& w) const {
        const Vec3 local = direction.transpose() * (w - origin);
        return Vec3(local.x() / spacing.x(), local.y() / spacing.y(),
                    local.z() / spacing.z());
    }
};

struct PointCloud {
    std::vector<Point3> points;
    std::vector<Vec3> normals; // optional, empty or same size as points
};

// mask voxel = 1 iff value >= threshold; geometry metadata copied.
inline VolumeGrid threshold_segment(const VolumeGrid& v, double thresholdHU) {
    VolumeGrid mask = v;
    for (auto& x : mask.voxels) x = (x >= thresholdHU) ? 1.0f : 0.0f;
    mask.scalarType = ScalarType::Short;
    return mask;
}

// World coordinates of boundary voxels: foreground with at least one
// background 6-neighbor (out-of-bounds counts as background).
inline PointCloud mask_surface_points(const VolumeGrid& mask, int stride = 1) {
    if (stride < 1) throw InvalidParams("stride must be >= 1");
    PointCloud cloud;
    bool anyForeground = false;
    int taken = 0;
    for (int k = 0; k < mask.dims[2]; ++k)
        for (int j = 0; j < mask.dims[1]; ++j)
            for (int i = 0; i < mask.dims[0]; ++i) {
                if (mask.at(i, j, k) == 0.0f) continue;
                anyForeground = true;
                const bool boundary =
                    !mask.inBounds(i - 1, j, k) || mask.at(i - 1, j, k) == 0.0f ||
                    !mask.inBounds(i + 1, j, k) || mask.at(i + 1, j, k) == 0.0f ||
                    !mask.inBounds(i, j - 1, k) || mask.at(i, j - 1, k) == 0.0f ||
                    !mask.inBounds(i, j + 1, k) || mask.at(i, j + 1, k) == 0.0f ||
                    !mask.inBounds(i, j, k - 1) || mask.at(i, j, k - 1) == 0.0f ||
                    !mask.inBounds(i, j, k + 1) || mask.at(i, j, k + 1) == 0.0f;
                if (!boundary) continue;
                if (taken++ % stride == 0)
                    cloud.points.push_back(mask.worldFromIndex(i, j, k));
            }
    if (!anyForeground) throw EmptyMask("mask has no foreground voxels");
    return cloud;
}

struct FiducialRegistration {
    RigidTransform transform; // moving -> fixed
    double fre = 0.0;         // RMS over pairs after alignment
};

// Least-squares rigid alignment via cross-covariance SVD (Kabsch), with
// reflection correction so det(R) = +1.
inline FiducialRegistration fiducial_register(const std::vector<Point3>& moving,
                                              const std::vector<Point3>& fixed) {
    if (moving.size() < 3 || moving.size() != fixed.size())
        throw TooFewPairs("fiducial registration needs >= 3 paired points");
    const std::size_t n = moving.size();

    Point3 mBar = Point3::Zero(), fBar = Point3::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        mBar += moving[i];
        fBar += fixed[i];
    }
    mBar /= static_cast<double>(n);
    fBar /= static_cast<double>(n);

    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 dm = moving[i] - mBar;
        h += dm * (fixed[i] - fBar).transpose();
        scatter += dm * dm.transpose();
    }

    // Collinear moving points leave the rotation about their axis free.
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es;
    es.computeDirect(scatter);
    const double spread = es.eigenvalues()(2);
    if (spread < 1e-12 || es.eigenvalues()(1) / spread < 1e-10)
        throw CollinearFiducials("fiducial points are collinear");

    Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant();
    const Eigen::Matrix3d r = svd.matrixV() * d * svd.matrixU().transpose();

    FiducialRegistration out;
    out.transform = RigidTransform::fromParts(r, fBar - r * mBar);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        ss += (out.transform.apply(moving[i]) - fixed[i]).squaredNorm();
    out.fre = std::sqrt(ss / static_cast<double>(n));
    return out;
}

namespace detail {

// Uniform hash-grid nearest neighbor index.
class GridIndex {
  public:
    explicit GridIndex(const std::vector<Point3>& points) : points_(points) {
        Point3 lo = Point3::Constant(std::numeric_limits<double>::max());
        Point3 hi = Point3::Constant(std::numeric_limits<double>::lowest());
        for (const auto& p : points) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        const double diag = (hi - lo).norm();
        cell_ = std::max(1e-6, diag / std::max(1.0, std::cbrt(static_cast<double>(points.size()))));
        lo_ = lo;
        for (std::size_t i = 0; i < points.size(); ++i)
            cells_[key(cellOf(points[i]))].push_back(i);
    }

    std::size_t nearest(const Point3& q) const {
        const Eigen::Vector3i c0 = cellOf(q);
        std::size_t best = 0;
        double bestD2 = std::numeric_limits<double>::max();
        for (int radius = 0;; ++radius) {
            bool anyCell = false;
            for (int dk = -radius; dk <= radius; ++dk)
                for (int dj = -radius; dj <= radius; ++dj)
                    for (int di = -radius; di <= radius; ++di) {
                        if (std::max({std::abs(di), std::abs(dj), std::abs(dk)}) != radius)
                            continue;
                        const auto it =
                            cells_.find(key(c0 + Eigen::Vector3i(di, dj, dk)));
                        if (it == cells_.end()) continue;
                        anyCell = true;
                        for (const std::size_t idx : it->second) {
                            const double d2 = (points_[idx] - q).squaredNorm();
                            if (d2 < bestD2) {
                                bestD2 = d2;
                                best = idx;
                            }
                        }
                    }
            // Any point in a shell at this radius can be no closer than
            // (radius - 1) * cell; stop once the best beats that bound.
            if (bestD2 < std::numeric_limits<double>::max() &&
                std::sqrt(bestD2) <= (radius)*cell_)
                break;
            if (!anyCell && radius > maxRadius()) break;
        }
        return best;
    }

  private:
    Eigen::Vector3i cellOf(const Point3& p) const {
        return Eigen::Vector3i(static_cast<int>(std::floor((p.x() - lo_.x()) / cell_)),
                               static_cast<int>(std::floor((p.y() - lo_.y()) / cell_)),
                               static_cast<int>(std::floor((p.z() - lo_.z()) / cell_)));
    }
    static std::int64_t key(const Eigen::Vector3i& c) {
        return (static_cast<std::int64_t>(c.x()) & 0x1FFFFF) |
               ((static_cast<std::int64_t>(c.y()) & 0x1FFFFF) << 21) |
               ((static_cast<std::int64_t>(c.z()) & 0x1FFFFF) << 42);
    }
    int maxRadius() const { return 1 << 12; }

    const std::vector<Point3>& points_;
    std::unordered_map<std::int64_t, std::vector<std::size_t>> cells_;
    double cell_ = 1.0;
    Point3 lo_{Point3::Zero()};
};

} // namespace detail

struct IcpResult {
    RigidTransform transform; // moving -> fixed
    double initialRms = 0.0;
    double finalRms = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> rmsHistory;
};

// Point-to-point ICP with optional trimming of the worst pairs. Stops when
// the RMS improvement drops below 1e-6 mm or after maxIterations; the best
// iterate seen is returned, so the final RMS never exceeds the initial.
inline IcpResult icp_refine(const PointCloud& moving, const PointCloud& fixedSurface,
                            const RigidTransform& init, double trimFraction = 0.1,
                            int maxIterations = 100) {
    if (moving.points.empty() || fixedSurface.points.empty())
        throw InvalidParams("ICP needs non-empty point clouds");
    if (trimFraction < 0.0 || trimFraction >= 1.0)
        throw InvalidParams("trim fraction must be in [0, 1)");

    const detail::GridIndex index(fixedSurface.points);
    const std::size_t n = moving.points.size();
    const std::size_t kept =
        std::max<std::size_t>(3, static_cast<std::size_t>(
                                     std::ceil((1.0 - trimFraction) * n)));

    IcpResult result;
    result.transform = init;
    RigidTransform current = init;
    double prevRms = std::numeric_limits<double>::max();
    double bestRms = std::numeric_limits<double>::max();

    for (int iter = 0; iter < maxIterations; ++iter) {
        std::vector<std::size_t> match(n);
        std::vector<double> dist(n);
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) {
            const Point3 p = current.apply(moving.points[i]);
            match[i] = index.nearest(p);
            dist[i] = (fixedSurface.points[match[i]] - p).norm();
            order[i] = i;
        }
        std::nth_element(order.begin(), order.begin() + kept - 1, order.end(),
                         [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });

        double ss = 0.0;
        std::vector<Point3> src, dst;
        src.reserve(kept);
        dst.reserve(kept);
        for (std::size_t r = 0; r < kept; ++r) {
            const std::size_t i = order[r];
            ss += dist[i] * dist[i];
            src.push_back(moving.points[i]);
            dst.push_back(fixedSurface.points[match[i]]);
        }
        const double rms = std::sqrt(ss / static_cast<double>(kept));
        result.rmsHistory.push_back(rms);
        if (iter == 0) result.initialRms = rms;
        if (rms < bestRms) {
            bestRms = rms;
            result.transform = current;
        }
        result.iterations = iter + 1;

        if (std::abs(prevRms - rms) < 1e-6) {
            result.converged = true;
            break;
        }
        prevRms = rms;

        try {
            current = fiducial_register(src, dst).transform;
        } catch (const CollinearFiducials&) {
            break; // degenerate correspondence set; keep best iterate
        }
    }

    result.finalRms = bestRms;
    return result;
}

struct StitchResult {
    VolumeGrid volume;
    std::size_t overlapVoxels = 0;
    bool emptyOverlapWarning = false;
};

namespace detail {

inline bool trilinear_sample(const VolumeGrid& v, const Point3& world, double& out) {
    // tolerance keeps samples that land on the boundary up to rounding error
    constexpr double kEdgeTol = 1e-6;
    const Vec3 idx = v.indexFromWorld(world);
    if (idx.x() < -kEdgeTol || idx.y() < -kEdgeTol || idx.z() < -kEdgeTol ||
        idx.x() > v.dims[0] - 1 + kEdgeTol || idx.y() > v.dims[1] - 1 + kEdgeTol ||
        idx.z() > v.dims[2] - 1 + kEdgeTol)
        return false;
    const int i0 = std::clamp(static_cast<int>(std::floor(idx.x())), 0,
                              std::max(v.dims[0] - 2, 0));
    const int j0 = std::clamp(static_cast<int>(std::floor(idx.y())), 0,
                              std::max(v.dims[1] - 2, 0));
    const int k0 = std::clamp(static_cast<int>(std::floor(idx.z())), 0,
                              std::max(v.dims[2] - 2, 0));
    const double fx = std::clamp(idx.x() - i0, 0.0, 1.0);
    const double fy = std::clamp(idx.y() - j0, 0.0, 1.0);
    const double fz = std::clamp(idx.z() - k0, 0.0, 1.0);
    const int i1 = std::min(i0 + 1, v.dims[0] - 1);
    const int j1 = std::min(j0 + 1, v.dims[1] - 1);
    const int k1 = std::min(k0 + 1, v.dims[2] - 1);

    const double c000 = v.at(i0, j0, k0), c100 = v.at(i1, j0, k0);
    const double c010 = v.at(i0, j1, k0), c110 = v.at(i1, j1, k0);
    const double c001 = v.at(i0, j0, k1), c101 = v.at(i1, j0, k1);
    const double c011 = v.at(i0, j1, k1), c111 = v.at(i1, j1, k1);

    const double c00 = c000 * (1 - fx) + c100 * fx;
    const double c10 = c010 * (1 - fx) + c110 * fx;
    const double c01 = c001 * (1 - fx) + c101 * fx;
    const double c11 = c011 * (1 - fx) + c111 * fx;
    const double c0 = c00 * (1 - fy) + c10 * fy;
    const double c1 = c01 * (1 - fy) + c11 * fy;
    out = c0 * (1 - fz) + c1 * fz;
    return true;
}

} // namespace detail

enum class StitchBlend { Mean, FixedWins };

// Output grid keeps the fixed volume's spacing, direction and voxel
// lattice, extended to the union bounding box. The moving volume is
// resampled by trilinear interpolation through tFuse; overlap voxels are
// blended (mean by default) and uncovered voxels are air (-1024 HU).
inline StitchResult stitch_volumes(const VolumeGrid& fixed, const VolumeGrid& moving,
                                   const RigidTransform& tFuse,
                                   StitchBlend blend = StitchBlend::Mean,
                                   float background = -1024.0f) {
    const RigidTransform tFuseInv = invert(tFuse);

    // Union extent in fixed index coordinates, via moving's corners.
    Vec3 lo = Vec3::Zero();
    Vec3 hi(fixed.dims[0] - 1, fixed.dims[1] - 1, fixed.dims[2] - 1);
    for (int c = 0; c < 8; ++c) {
        const Point3 corner = moving.worldFromIndex(
            (c & 1) ? moving.dims[0] - 1 : 0, (c & 2) ? moving.dims[1] - 1 : 0,
            (c & 4) ? moving.dims[2] - 1 : 0);
        const Vec3 idx = fixed.indexFromWorld(tFuse.apply(corner));
        lo = lo.cwiseMin(idx);
        hi = hi.cwiseMax(idx);
    }
    const Eigen::Vector3i offset(static_cast<int>(std::floor(lo.x())),
                                 static_cast<int>(std::floor(lo.y())),
                                 static_cast<int>(std::floor(lo.z())));

    StitchResult result;
    VolumeGrid& out = result.volume;
    out.dims = {static_cast<int>(std::ceil(hi.x())) - offset.x() + 1,
                static_cast<int>(std::ceil(hi.y())) - offset.y() + 1,
                static_cast<int>(std::ceil(hi.z())) - offset.z() + 1};
    out.spacing = fixed.spacing;
    out.direction = fixed.direction;
    out.origin = fixed.worldFromIndex(offset.x(), offset.y(), offset.z());
    out.scalarType = fixed.scalarType;
    out.voxels.assign(out.voxelCount(), background);

    for (int k = 0; k < out.dims[2]; ++k)
        for (int j = 0; j < out.dims[1]; ++j)
            for (int i = 0; i < out.dims[0]; ++i) {
                const int fi = i + offset.x(), fj = j + offset.y(), fk = k + offset.z();
                const bool inFixed = fixed.inBounds(fi, fj, fk);
                const Point3 world = out.worldFromIndex(i, j, k);
                double movingValue = 0.0;
                const bool inMoving =
                    detail::trilinear_sample(moving, tFuseInv.apply(world), movingValue);

                if (inFixed && inMoving) {
                    ++result.overlapVoxels;
                    out.at(i, j, k) = (blend == StitchBlend::FixedWins)
                                          ? fixed.at(fi, fj, fk)
                                          : static_cast<float>(
                                                0.5 * (fixed.at(fi, fj, fk) + movingValue));
                } else if (inFixed) {
                    out.at(i, j, k) = fixed.at(fi, fj, fk); // bit-identical copy
                } else if (inMoving) {
                    out.at(i, j, k) = static_cast<float>(movingValue);
                }
            }

    result.emptyOverlapWarning = (result.overlapVoxels == 0);
    return result;
}

} // namespace histoloc

#endif

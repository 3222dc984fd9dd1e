#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "histoloc/volume.hpp"

using namespace histoloc;

namespace {

// Dominant eigenvector of a symmetric 4x4 by cyclic Jacobi sweeps. Kept
// self-contained so the oracle shares no solver code with the implementation
// under test.
Eigen::Vector4d dominant_eigenvector(Eigen::Matrix4d a) {
    Eigen::Matrix4d v = Eigen::Matrix4d::Identity();
    for (int sweep = 0; sweep < 50; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < 4; ++p)
            for (int q = p + 1; q < 4; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-28 * a.squaredNorm()) break;
        for (int p = 0; p < 4; ++p)
            for (int q = p + 1; q < 4; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                Eigen::Matrix4d g = Eigen::Matrix4d::Identity();
                g(p, p) = c;
                g(q, q) = c;
                g(p, q) = t * c;
                g(q, p) = -t * c;
                a = (g.transpose() * a * g).eval();
                v = (v * g).eval();
            }
    }
    int best = 0;
    for (int i = 1; i < 4; ++i)
        if (a(i, i) > a(best, best)) best = i;
    return v.col(best);
}

// Horn's closed-form quaternion solution, as an independent oracle for the
// SVD-based registration.
RigidTransform horn_quaternion_register(const std::vector<Point3>& moving,
                                        const std::vector<Point3>& fixed) {
    const std::size_t n = moving.size();
    Point3 mBar = Point3::Zero(), fBar = Point3::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        mBar += moving[i];
        fBar += fixed[i];
    }
    mBar /= double(n);
    fBar /= double(n);

    Eigen::Matrix3d s = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < n; ++i)
        s += (moving[i] - mBar) * (fixed[i] - fBar).transpose();

    Eigen::Matrix4d nMat;
    nMat(0, 0) = s(0, 0) + s(1, 1) + s(2, 2);
    nMat(0, 1) = s(1, 2) - s(2, 1);
    nMat(0, 2) = s(2, 0) - s(0, 2);
    nMat(0, 3) = s(0, 1) - s(1, 0);
    nMat(1, 1) = s(0, 0) - s(1, 1) - s(2, 2);
    nMat(1, 2) = s(0, 1) + s(1, 0);
    nMat(1, 3) = s(2, 0) + s(0, 2);
    nMat(2, 2) = -s(0, 0) + s(1, 1) - s(2, 2);
    nMat(2, 3) = s(1, 2) + s(2, 1);
    nMat(3, 3) = -s(0, 0) - s(1, 1) + s(2, 2);
    for (int r = 1; r < 4; ++r)
        for (int c = 0; c < r; ++c) nMat(r, c) = nMat(c, r);

    const Eigen::Vector4d q = dominant_eigenvector(nMat);
    const Eigen::Quaterniond quat(q(0), q(1), q(2), q(3));
    const Eigen::Matrix3d r = quat.normalized().toRotationMatrix();
    return RigidTransform::fromParts(r, fBar - r * mBar);
}

VolumeGrid small_volume(std::initializer_list<float> values,
                        std::array<int, 3> dims = {2, 1, 1}) {
    VolumeGrid v;
    v.dims = dims;
    v.voxels.assign(values);
    return v;
}

RigidTransform rigid_zrot_deg(double deg, const Vec3& t) {
    return RigidTransform::fromParts(
        Eigen::AngleAxisd(deg * M_PI / 180.0, Vec3::UnitZ()).toRotationMatrix(), t);
}

} // namespace

TEST_CASE("threshold selects voxels at or above the cutoff") {
    const VolumeGrid v = small_volume({200.0f, 300.0f});
    const VolumeGrid mask = threshold_segment(v, 226.0);
    CHECK(mask.voxels[0] == 0.0f);
    CHECK(mask.voxels[1] == 1.0f);

    const VolumeGrid below = threshold_segment(small_volume({10.0f, 225.9f}), 226.0);
    CHECK(below.voxels[0] == 0.0f);
    CHECK(below.voxels[1] == 0.0f);
}

TEST_CASE("threshold of a binary mask at 0.5 is idempotent") {
    VolumeGrid mask = small_volume({0.0f, 1.0f, 1.0f, 0.0f}, {4, 1, 1});
    const VolumeGrid again = threshold_segment(mask, 0.5);
    CHECK(again.voxels == mask.voxels);
}

TEST_CASE("single foreground voxel yields its center point") {
    VolumeGrid mask;
    mask.dims = {3, 3, 3};
    mask.voxels.assign(27, 0.0f);
    mask.at(1, 1, 1) = 1.0f;
    mask.spacing = Vec3(2, 2, 2);
    const PointCloud cloud = mask_surface_points(mask);
    REQUIRE(cloud.points.size() == 1);
    CHECK((cloud.points[0] - Point3(2, 2, 2)).norm() < 1e-12);
}

TEST_CASE("solid cube shell count") {
    VolumeGrid mask;
    mask.dims = {10, 10, 10};
    mask.voxels.assign(1000, 1.0f);
    const PointCloud cloud = mask_surface_points(mask, 1);
    CHECK(cloud.points.size() == 1000 - 512); // 10^3 - 8^3
}

TEST_CASE("empty mask raises") {
    VolumeGrid mask;
    mask.dims = {2, 2, 2};
    mask.voxels.assign(8, 0.0f);
    CHECK_THROWS_AS(mask_surface_points(mask), EmptyMask);
}

TEST_CASE("identical point sets register to identity with zero FRE") {
    const std::vector<Point3> pts = {{0, 0, 0}, {10, 0, 0}, {0, 10, 0}, {0, 0, 10}};
    const FiducialRegistration reg = fiducial_register(pts, pts);
    CHECK((reg.transform.matrix - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff() <
          1e-12);
    CHECK(reg.fre < 1e-12);
}

TEST_CASE("rotated and translated tetrahedron is recovered exactly") {
    const std::vector<Point3> moving = {{0, 0, 0}, {10, 0, 0}, {0, 10, 0}, {0, 0, 10}};
    const RigidTransform truth = rigid_zrot_deg(90.0, Vec3(1, 2, 3));
    std::vector<Point3> fixed;
    for (const auto& p : moving) fixed.push_back(truth.apply(p));
    const FiducialRegistration reg = fiducial_register(moving, fixed);
    CHECK((reg.transform.matrix - truth.matrix).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(reg.fre < 1e-12);
}

TEST_CASE("SVD registration agrees with the quaternion oracle under noise") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> noise(0.0, 0.5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<Point3> moving;
        for (int i = 0; i < 8; ++i)
            moving.emplace_back(20 * u(rng), 20 * u(rng), 20 * u(rng));
        Vec3 axis(u(rng), u(rng), u(rng));
        axis.normalize();
        const RigidTransform truth = RigidTransform::fromParts(
            Eigen::AngleAxisd(u(rng) * M_PI, axis).toRotationMatrix(),
            Vec3(10 * u(rng), 10 * u(rng), 10 * u(rng)));
        std::vector<Point3> fixed;
        for (const auto& p : moving)
            fixed.push_back(truth.apply(p) + Point3(noise(rng), noise(rng), noise(rng)));

        const FiducialRegistration reg = fiducial_register(moving, fixed);
        const RigidTransform oracle = horn_quaternion_register(moving, fixed);
        CHECK((reg.transform.matrix - oracle.matrix).cwiseAbs().maxCoeff() < 1e-9);

        double ss = 0.0;
        for (std::size_t i = 0; i < moving.size(); ++i)
            ss += (oracle.apply(moving[i]) - fixed[i]).squaredNorm();
        CHECK(reg.fre == Catch::Approx(std::sqrt(ss / moving.size())).margin(1e-9));
    }
}

TEST_CASE("registration FRE is locally optimal") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> noise(0.0, 0.5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Point3> moving, fixed;
    const RigidTransform truth = rigid_zrot_deg(30.0, Vec3(4, -2, 7));
    for (int i = 0; i < 10; ++i) {
        moving.emplace_back(25 * u(rng), 25 * u(rng), 25 * u(rng));
        fixed.push_back(truth.apply(moving.back()) +
                        Point3(noise(rng), noise(rng), noise(rng)));
    }
    const FiducialRegistration reg = fiducial_register(moving, fixed);

    const auto fre = [&](const RigidTransform& t) {
        double ss = 0.0;
        for (std::size_t i = 0; i < moving.size(); ++i)
            ss += (t.apply(moving[i]) - fixed[i]).squaredNorm();
        return std::sqrt(ss / moving.size());
    };
    for (int trial = 0; trial < 1000; ++trial) {
        Vec3 axis(u(rng), u(rng), u(rng));
        axis.normalize();
        const RigidTransform perturbation = RigidTransform::fromParts(
            Eigen::AngleAxisd(0.01 * u(rng), axis).toRotationMatrix(),
            0.05 * Vec3(u(rng), u(rng), u(rng)));
        CHECK(fre(compose(perturbation, reg.transform)) >= reg.fre - 1e-12);
    }
}

TEST_CASE("collinear fiducials raise") {
    const std::vector<Point3> line = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
    CHECK_THROWS_AS(fiducial_register(line, line), CollinearFiducials);
}

TEST_CASE("too few pairs raise") {
    const std::vector<Point3> two = {{0, 0, 0}, {1, 0, 0}};
    CHECK_THROWS_AS(fiducial_register(two, two), TooFewPairs);
}

namespace {

PointCloud box_surface_cloud(int n = 8) {
    VolumeGrid mask;
    mask.dims = {n, n, n};
    mask.voxels.assign(static_cast<std::size_t>(n) * n * n, 0.0f);
    // an L-shaped solid so the registration has no rotational symmetry
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i)
                if (j < n / 2 || i < n / 3) mask.at(i, j, k) = 1.0f;
    return mask_surface_points(mask, 1);
}

} // namespace

TEST_CASE("ICP on identical clouds stays at identity") {
    const PointCloud cloud = box_surface_cloud();
    const IcpResult r = icp_refine(cloud, cloud, RigidTransform::identity(), 0.0);
    CHECK(r.finalRms < 1e-9);
    CHECK((r.transform.matrix - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(r.iterations <= 2);
}

TEST_CASE("ICP recovers a small rigid perturbation") {
    const PointCloud fixedCloud = box_surface_cloud(10);
    const RigidTransform truth = rigid_zrot_deg(2.0, Vec3(0.8, -0.5, 0.3));
    PointCloud moving;
    for (const auto& p : fixedCloud.points) moving.points.push_back(invert(truth).apply(p));

    const IcpResult r = icp_refine(moving, fixedCloud, RigidTransform::identity(), 0.0);
    CHECK(r.finalRms < 1e-3);
    CHECK(r.finalRms <= r.initialRms);
    CHECK((r.transform.matrix - truth.matrix).cwiseAbs().maxCoeff() < 0.05);
    for (std::size_t i = 1; i < r.rmsHistory.size(); ++i)
        CHECK(r.rmsHistory[i] <= r.rmsHistory[i - 1] + 1e-9);
}

TEST_CASE("ICP with trimming survives outliers") {
    const PointCloud fixedCloud = box_surface_cloud(10);
    const RigidTransform truth = rigid_zrot_deg(1.5, Vec3(0.5, 0.4, -0.2));
    PointCloud moving;
    for (const auto& p : fixedCloud.points) moving.points.push_back(invert(truth).apply(p));
    // a few far outliers
    for (int i = 0; i < 10; ++i) moving.points.emplace_back(100 + i, 100, 100);

    const IcpResult r = icp_refine(moving, fixedCloud, RigidTransform::identity(), 0.1);
    CHECK((r.transform.matrix - truth.matrix).cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("self-stitch reproduces the volume on its extent") {
    VolumeGrid v;
    v.dims = {6, 5, 4};
    v.spacing = Vec3(1, 1, 1);
    v.voxels.resize(v.voxelCount());
    for (std::size_t i = 0; i < v.voxels.size(); ++i)
        v.voxels[i] = static_cast<float>(i % 97) * 10.0f;

    const StitchResult r = stitch_volumes(v, v, RigidTransform::identity());
    REQUIRE(r.volume.dims == v.dims);
    for (std::size_t i = 0; i < v.voxels.size(); ++i)
        CHECK(r.volume.voxels[i] == Catch::Approx(v.voxels[i]).margin(1e-3));
    CHECK(r.overlapVoxels == v.voxelCount());
    CHECK_FALSE(r.emptyOverlapWarning);
}

TEST_CASE("disjoint volumes are both present with background elsewhere") {
    VolumeGrid a;
    a.dims = {3, 3, 3};
    a.voxels.assign(27, 100.0f);
    VolumeGrid b = a;
    b.voxels.assign(27, 500.0f);
    b.origin = Point3(10, 0, 0);

    const StitchResult r = stitch_volumes(a, b, RigidTransform::identity());
    CHECK(r.emptyOverlapWarning);
    CHECK(r.volume.dims[0] >= 13);
    // fixed corner kept bit-identical
    CHECK(r.volume.at(0, 0, 0) == 100.0f);
    // moving end present
    CHECK(r.volume.at(r.volume.dims[0] - 1, 0, 0) == 500.0f);
    // gap is air
    CHECK(r.volume.at(5, 0, 0) == -1024.0f);
}

TEST_CASE("fixed voxels outside the overlap are bit-identical") {
    VolumeGrid fixed;
    fixed.dims = {8, 4, 4};
    fixed.voxels.resize(fixed.voxelCount());
    for (std::size_t i = 0; i < fixed.voxels.size(); ++i)
        fixed.voxels[i] = 0.1f * static_cast<float>(i) + 7.0f;

    VolumeGrid moving = fixed;
    moving.origin = Point3(6, 0, 0); // overlaps the right part of fixed only

    const StitchResult r = stitch_volumes(fixed, moving, RigidTransform::identity());
    for (int k = 0; k < 4; ++k)
        for (int j = 0; j < 4; ++j)
            for (int i = 0; i < 5; ++i) // x in [0, 5) world < 6: outside overlap
                CHECK(r.volume.at(i, j, k) == fixed.at(i, j, k));
}

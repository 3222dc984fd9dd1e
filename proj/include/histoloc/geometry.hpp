#ifndef HISTOLOC_GEOMETRY_HPP
#define HISTOLOC_GEOMETRY_HPP

// Foundational 3D types: points, parametric cubic curves, dissection planes
// and rigid transforms. All positions are millimetres in a right-handed
// RAS patient frame.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "histoloc/errors.hpp"

namespace histoloc {

using Vec3 = Eigen::Vector3d;
using Point3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

// Ordered control points exported from a radiology viewer markup.
struct MarkupCurve {
    std::string label;
    std::vector<Point3> points;
};

struct FiducialReference {
    Point3 position{Point3::Zero()};
    std::string label;
};

// One cubic polynomial per axis over a normalized parameter in [0, 1],
// fitted against cumulative-chord-length parameters of the control points.
struct ParametricCubic {
    // coefficients(axis, k) multiplies t^k
    Eigen::Matrix<double, 3, 4> coefficients{Eigen::Matrix<double, 3, 4>::Zero()};
    std::vector<double> chordParams;
    double residualRms = 0.0;
};

// Oriented plane modeling one bandsaw dissection cut.
struct DissectionPlane {
    Point3 origin{Point3::Zero()};
    Vec3 normal{Vec3::UnitZ()};
    Vec3 uAxis{Vec3::UnitX()};
    Vec3 vAxis{Vec3::UnitY()};
    Point3 anchorA{Point3::Zero()};
    Point3 anchorB{Point3::Zero()};
    double paramA = 0.0;
    double paramB = 0.0;
    int index = 0;

    double signedDistance(const Point3& p) const { return normal.dot(p - origin); }
};

// 4x4 homogeneous rigid transform (R | t).
struct RigidTransform {
    Eigen::Matrix4d matrix{Eigen::Matrix4d::Identity()};

    static RigidTransform identity() { return RigidTransform{}; }

    static RigidTransform fromParts(const Eigen::Matrix3d& rotation, const Vec3& translation) {
        RigidTransform t;
        t.matrix.topLeftCorner<3, 3>() = rotation;
        t.matrix.topRightCorner<3, 1>() = translation;
        return t;
    }

    Eigen::Matrix3d rotation() const { return matrix.topLeftCorner<3, 3>(); }
    Vec3 translation() const { return matrix.topRightCorner<3, 1>(); }

    Point3 apply(const Point3& p) const {
        return rotation() * p + translation();
    }
    Vec3 applyVector(const Vec3& v) const { return rotation() * v; }

    bool isValid(double tol = 1e-9) const {
        const Eigen::Matrix3d r = rotation();
        if (((r.transpose() * r) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol)
            return false;
        if (std::abs(r.determinant() - 1.0) > tol) return false;
        return matrix(3, 0) == 0.0 && matrix(3, 1) == 0.0 && matrix(3, 2) == 0.0 &&
               matrix(3, 3) == 1.0;
    }
};

inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
    RigidTransform out;
    out.matrix = a.matrix * b.matrix;
    out.matrix.row(3) << 0, 0, 0, 1;
    return out;
}

inline RigidTransform invert(const RigidTransform& a) {
    const Eigen::Matrix3d rt = a.rotation().transpose();
    return RigidTransform::fromParts(rt, -(rt * a.translation()));
}

// In-plane uniform scale plus translation (no rotation).
struct SimilarityTransform2D {
    double scale = 1.0;
    Vec2 translation{Vec2::Zero()};
    double residualRms = 0.0;

    Vec2 apply(const Vec2& p) const { return scale * p + translation; }
};

// Normalized cumulative chord length parameters: first 0, last 1.
inline std::vector<double> chord_length_params(const std::vector<Point3>& points) {
    std::vector<double> params(points.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        const double seg = (points[i] - points[i - 1]).norm();
        if (seg <= 1e-6)
            throw DegenerateChord("coincident consecutive control points at index " +
                                  std::to_string(i));
        total += seg;
        params[i] = total;
    }
    if (total <= 1e-3) throw DegenerateChord("total chord length below 1e-3 mm");
    for (auto& p : params) p /= total;
    params.back() = 1.0;
    return params;
}

// Least-squares cubic per axis against chord-length parameters.
inline ParametricCubic fit_parametric_cubic(const MarkupCurve& curve) {
    const std::size_t n = curve.points.size();
    if (n < 4)
        throw TooFewPoints("cubic fit needs >= 4 control points, got " + std::to_string(n));

    ParametricCubic cubic;
    cubic.chordParams = chord_length_params(curve.points);

    Eigen::MatrixXd design(n, 4);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = cubic.chordParams[i];
        design(i, 0) = 1.0;
        design(i, 1) = t;
        design(i, 2) = t * t;
        design(i, 3) = t * t * t;
    }

    Eigen::MatrixXd rhs(n, 3);
    for (std::size_t i = 0; i < n; ++i) rhs.row(i) = curve.points[i].transpose();

    const Eigen::MatrixXd solution = design.colPivHouseholderQr().solve(rhs); // 4x3
    cubic.coefficients = solution.transpose();

    const Eigen::MatrixXd residual = design * solution - rhs;
    cubic.residualRms = std::sqrt(residual.squaredNorm() / static_cast<double>(n));
    return cubic;
}

inline Point3 curve_eval(const ParametricCubic& c, double t) {
    Eigen::Vector4d powers(1.0, t, t * t, t * t * t);
    return c.coefficients * powers;
}

// Analytic derivative, not normalized.
inline Vec3 curve_tangent(const ParametricCubic& c, double t) {
    Eigen::Vector4d powers(0.0, 1.0, 2.0 * t, 3.0 * t * t);
    const Vec3 d = c.coefficients * powers;
    if (d.norm() <= 1e-9)
        throw StationaryPoint("curve derivative vanishes at t = " + std::to_string(t));
    return d;
}

} // namespace histoloc

#endif

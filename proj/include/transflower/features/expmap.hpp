// Exponential-map (axis-angle) rotation parametrization.
#pragma once

#include <cmath>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "transflower/core/error.hpp"

namespace tf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline bool is_rotation(const Mat3& r, double tol = 1e-6) {
    return (r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() < tol &&
           std::abs(r.determinant() - 1.0) < tol;
}

// Axis-angle vector with angle in [0, pi].
inline Vec3 expmap_encode(const Mat3& r) {
    if (!is_rotation(r))
        throw data_error("expmap_encode: input is not a rotation matrix");
    Eigen::AngleAxisd aa(r);
    double angle = aa.angle();
    Vec3 axis = aa.axis();
    if (angle > M_PI) {  // Eigen keeps angle in [0, pi]; guard anyway
        angle = 2.0 * M_PI - angle;
        axis = -axis;
    }
    return angle * axis;
}

// Rodrigues rotation; series expansion below |v| = 1e-4.
inline Mat3 expmap_decode(const Vec3& v) {
    const double th = v.norm();
    Mat3 k;
    k << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
    double a, b;  // R = I + a*K + b*K^2
    if (th < 1e-4) {
        const double th2 = th * th;
        a = 1.0 - th2 / 6.0;
        b = 0.5 - th2 / 24.0;
    } else {
        a = std::sin(th) / th;
        b = (1.0 - std::cos(th)) / (th * th);
    }
    return Mat3::Identity() + a * k + b * (k * k);
}

}  // namespace tf

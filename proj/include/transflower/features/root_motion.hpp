// Invertible root-trajectory encoding: displacements in the previous
// frame's ground-projected coordinates, absolute height, root orientation
// relative to its own ground-projected frame, and facing-angle change.
#pragma once

#include <cmath>
#include <vector>

#include "transflower/core/error.hpp"
#include "transflower/features/expmap.hpp"
#include "transflower/features/types.hpp"

namespace tf {

struct RootFrame {
    Vec3 position;     // world, meters; y up
    Mat3 orientation;  // world rotation of the root
};

struct RootFeatures {
    double dx, dz, y;  // sideways, forward, height
    Vec3 theta;        // expmap vs ground-projected frame
    double dry;        // facing-angle change, wrapped to (-pi, pi]
};

inline double wrap_angle(double a) {
    a = std::fmod(a + M_PI, 2.0 * M_PI);
    if (a <= 0.0) a += 2.0 * M_PI;
    return a - M_PI;
}

// Facing angle: yaw of the root's forward (+z) axis projected on the ground.
inline double facing_angle(const Mat3& r) {
    const Vec3 f = r * Vec3(0, 0, 1);
    return std::atan2(f.x(), f.z());
}

inline Mat3 yaw_rotation(double a) {
    Mat3 r;
    const double c = std::cos(a), s = std::sin(a);
    r << c, 0, s, 0, 1, 0, -s, 0, c;
    return r;
}

inline std::vector<RootFeatures> encode_root_motion(const std::vector<RootFrame>& traj) {
    if (traj.size() < 2) throw data_error("encode_root_motion: need at least 2 frames");
    std::vector<RootFeatures> out(traj.size());
    std::vector<double> yaw(traj.size());
    for (std::size_t i = 0; i < traj.size(); ++i) {
        if (!is_rotation(traj[i].orientation))
            throw data_error("encode_root_motion: invalid orientation at frame " +
                             std::to_string(i));
        yaw[i] = facing_angle(traj[i].orientation);
    }
    for (std::size_t i = 0; i < traj.size(); ++i) {
        RootFeatures f;
        f.y = traj[i].position.y();
        f.theta = expmap_encode(yaw_rotation(yaw[i]).transpose() * traj[i].orientation);
        if (i == 0) {
            f.dx = f.dz = f.dry = 0.0;
        } else {
            const Vec3 dp = traj[i].position - traj[i - 1].position;
            const Vec3 local = yaw_rotation(yaw[i - 1]).transpose() * dp;
            f.dx = local.x();
            f.dz = local.z();
            f.dry = wrap_angle(yaw[i] - yaw[i - 1]);
        }
        out[i] = f;
    }
    return out;
}

// Integrates the encoding back into a world trajectory from a known initial
// position and yaw. Frame 0's deltas are zero by the encoding convention.
inline std::vector<RootFrame> decode_root_motion(const std::vector<RootFeatures>& feats,
                                                 const Vec3& initial_position,
                                                 double initial_yaw) {
    std::vector<RootFrame> out(feats.size());
    double yaw = initial_yaw;
    Vec3 pos = initial_position;
    for (std::size_t i = 0; i < feats.size(); ++i) {
        if (i > 0) {
            const Vec3 local(feats[i].dx, 0.0, feats[i].dz);
            pos = pos + yaw_rotation(yaw) * local;
            yaw = wrap_angle(yaw + feats[i].dry);
        }
        pos.y() = feats[i].y;
        out[i].position = pos;
        out[i].orientation = yaw_rotation(yaw) * expmap_decode(feats[i].theta);
    }
    return out;
}

}  // namespace tf

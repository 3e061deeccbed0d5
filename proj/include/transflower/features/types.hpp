// Core feature-domain types: skeleton description and feature sequences.
#pragma once

#include <string>
#include <vector>

#include "transflower/core/error.hpp"
#include "transflower/core/tensor.hpp"
#include "transflower/features/expmap.hpp"

namespace tf {

constexpr std::size_t kPoseDim = 67;   // root (7) + 20 joints x 3
constexpr std::size_t kAudioDim = 85;  // 80 mel + onset + 2 beat + 2 band flux
constexpr std::size_t kNumJoints = 21;
constexpr double kFps = 20.0;

// Pose feature layout (indices into the 67-vector):
//   0 dx (m, sideways)   1 dz (m, forward)   2 y (m, root height)
//   3..5 root expmap vs ground-projected frame   6 d(facing angle)
//   7..66 non-root joint expmaps
constexpr std::size_t kRootHeightChannel = 2;
constexpr std::size_t kJointChannelsStart = 7;

struct SkeletonSpec {
    std::vector<std::string> joint_names;  // 21, root first
    std::vector<int> parents;              // -1 for root; parent index < child index
    std::vector<Vec3> rest_offsets;        // meters

    void validate() const {
        if (joint_names.size() != kNumJoints || parents.size() != kNumJoints ||
            rest_offsets.size() != kNumJoints)
            throw data_error("SkeletonSpec: expected " + std::to_string(kNumJoints) +
                             " joints, got " + std::to_string(joint_names.size()));
        int roots = 0;
        for (std::size_t i = 0; i < parents.size(); ++i) {
            if (parents[i] < 0) {
                ++roots;
            } else if (static_cast<std::size_t>(parents[i]) >= i) {
                throw data_error("SkeletonSpec: parent index must precede child at joint " +
                                 std::to_string(i));
            }
        }
        if (roots != 1) throw data_error("SkeletonSpec: exactly one root required");
    }

    static SkeletonSpec canonical() {
        SkeletonSpec sk;
        sk.joint_names = {"Hips", "Spine", "Spine1", "Spine2", "Neck", "Head",
                          "LeftShoulder", "LeftArm", "LeftForeArm", "LeftHand",
                          "RightShoulder", "RightArm", "RightForeArm", "RightHand",
                          "LeftUpLeg", "LeftLeg", "LeftFoot", "LeftToeBase",
                          "RightUpLeg", "RightLeg", "RightFoot"};
        sk.parents = {-1, 0, 1, 2, 3, 4, 3, 6, 7, 8, 3, 10, 11, 12, 0, 14, 15, 16, 0, 18, 19};
        sk.rest_offsets.assign(kNumJoints, Vec3::Zero());
        return sk;
    }
};

struct MotionSequence {
    Tensor<double> frames;  // n x 67
    double fps = kFps;
    std::string provenance;

    std::size_t length() const { return frames.shape.empty() ? 0 : frames.shape[0]; }
};

struct AudioFeatureSequence {
    Tensor<double> frames;  // n x 85
    double fps = kFps;
    std::string provenance;

    std::size_t length() const { return frames.shape.empty() ? 0 : frames.shape[0]; }
};

}  // namespace tf

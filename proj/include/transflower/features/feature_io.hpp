// Feature-file IO.
//   .mfeat / .afeat: JSON header at <path>, raw little-endian f32 frames at
//   <path>.bin (row-major, frames x dim).
//   Motion interchange: JSON with skeleton + per-frame root pose and joint
//   rotation matrices, converted to the 67-dim feature layout.
#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "transflower/core/error.hpp"
#include "transflower/features/root_motion.hpp"
#include "transflower/features/types.hpp"

namespace tf {

inline void write_feature_file(const std::string& path, const Tensor<double>& frames,
                               const std::string& layout, const std::string& skeleton,
                               double fps = kFps) {
    nlohmann::json hdr = {{"version", "tffeat-1"},
                          {"skeleton", skeleton},
                          {"fps", fps},
                          {"feature_layout", layout},
                          {"frames", frames.shape[0]},
                          {"data", path.substr(path.find_last_of('/') + 1) + ".bin"}};
    std::ofstream hf(path);
    if (!hf) throw data_error("write_feature_file: cannot open " + path);
    hf << hdr.dump(2) << "\n";

    std::ofstream bf(path + ".bin", std::ios::binary);
    if (!bf) throw data_error("write_feature_file: cannot open " + path + ".bin");
    std::vector<float> row(frames.shape[1]);
    for (std::size_t i = 0; i < frames.shape[0]; ++i) {
        for (std::size_t j = 0; j < frames.shape[1]; ++j)
            row[j] = static_cast<float>(frames(i, j));
        bf.write(reinterpret_cast<const char*>(row.data()),
                 static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
}

inline Tensor<double> read_feature_file(const std::string& path,
                                        const std::string& expected_layout,
                                        double* fps_out = nullptr) {
    std::ifstream hf(path);
    if (!hf) throw data_error("read_feature_file: cannot open " + path);
    nlohmann::json hdr;
    try {
        hf >> hdr;
    } catch (const std::exception& e) {
        throw data_error("read_feature_file: bad header in " + path + ": " + e.what());
    }
    if (hdr.value("version", "") != std::string("tffeat-1"))
        throw data_error("read_feature_file: unsupported version in " + path);
    if (hdr.value("feature_layout", "") != expected_layout)
        throw data_error("read_feature_file: layout mismatch in " + path + " (want " +
                         expected_layout + ", got " + hdr.value("feature_layout", "?") + ")");
    const std::size_t frames = hdr.at("frames").get<std::size_t>();
    if (fps_out) *fps_out = hdr.value("fps", kFps);
    const std::size_t dim = expected_layout == "tf67-v1" ? kPoseDim : kAudioDim;

    std::ifstream bf(path + ".bin", std::ios::binary);
    if (!bf) throw data_error("read_feature_file: cannot open " + path + ".bin");
    Tensor<double> out({frames, dim});
    std::vector<float> row(dim);
    for (std::size_t i = 0; i < frames; ++i) {
        bf.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(dim * sizeof(float)));
        if (!bf)
            throw data_error("read_feature_file: truncated data in " + path + ".bin at frame " +
                             std::to_string(i));
        for (std::size_t j = 0; j < dim; ++j) out(i, j) = row[j];
    }
    return out;
}

inline void write_motion_file(const std::string& path, const MotionSequence& m,
                              const std::string& skeleton = "tf21") {
    write_feature_file(path, m.frames, "tf67-v1", skeleton, m.fps);
}
inline MotionSequence read_motion_file(const std::string& path) {
    MotionSequence m;
    m.frames = read_feature_file(path, "tf67-v1", &m.fps);
    m.provenance = path;
    return m;
}
inline void write_audio_file(const std::string& path, const AudioFeatureSequence& a) {
    write_feature_file(path, a.frames, "tf85-v1", "n/a", a.fps);
}
inline AudioFeatureSequence read_audio_feature_file(const std::string& path) {
    AudioFeatureSequence a;
    a.frames = read_feature_file(path, "tf85-v1", &a.fps);
    a.provenance = path;
    return a;
}

namespace detail {
inline Mat3 mat3_from_json(const nlohmann::json& j) {
    if (j.size() != 9) throw data_error("motion interchange: rotation needs 9 values");
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) r(i, k) = j[3 * i + k].get<double>();
    return r;
}
}  // namespace detail

// Pre-retargeted joint rotations (JSON) -> 67-dim motion features.
inline MotionSequence motion_from_interchange(const nlohmann::json& j) {
    SkeletonSpec sk;
    const auto& jsk = j.at("skeleton");
    sk.joint_names = jsk.at("names").get<std::vector<std::string>>();
    sk.parents = jsk.at("parents").get<std::vector<int>>();
    for (const auto& o : jsk.at("offsets"))
        sk.rest_offsets.emplace_back(o[0].get<double>(), o[1].get<double>(),
                                     o[2].get<double>());
    sk.validate();

    const auto& jframes = j.at("frames");
    if (jframes.size() < 2) throw data_error("motion interchange: need at least 2 frames");

    std::vector<RootFrame> root(jframes.size());
    for (std::size_t i = 0; i < jframes.size(); ++i) {
        const auto& p = jframes[i].at("root_position");
        root[i].position = Vec3(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
        root[i].orientation = detail::mat3_from_json(jframes[i].at("root_rotation"));
    }
    const auto root_feats = encode_root_motion(root);

    MotionSequence m;
    m.fps = j.value("fps", kFps);
    m.frames = Tensor<double>({jframes.size(), kPoseDim});
    for (std::size_t i = 0; i < jframes.size(); ++i) {
        double* row = &m.frames.data[i * kPoseDim];
        row[0] = root_feats[i].dx;
        row[1] = root_feats[i].dz;
        row[2] = root_feats[i].y;
        row[3] = root_feats[i].theta.x();
        row[4] = root_feats[i].theta.y();
        row[5] = root_feats[i].theta.z();
        row[6] = root_feats[i].dry;
        const auto& jr = jframes[i].at("joint_rotations");
        if (jr.size() != kNumJoints - 1)
            throw data_error("motion interchange: expected " +
                             std::to_string(kNumJoints - 1) + " joint rotations");
        for (std::size_t k = 0; k < kNumJoints - 1; ++k) {
            const Vec3 e = expmap_encode(detail::mat3_from_json(jr[k]));
            row[kJointChannelsStart + 3 * k + 0] = e.x();
            row[kJointChannelsStart + 3 * k + 1] = e.y();
            row[kJointChannelsStart + 3 * k + 2] = e.z();
        }
    }
    return m;
}

// Beat-time text file: one decimal seconds value per line.
inline std::vector<double> read_beat_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw data_error("read_beat_file: cannot open " + path);
    std::vector<double> beats;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        try {
            beats.push_back(std::stod(line));
        } catch (const std::exception&) {
            throw data_error("read_beat_file: bad line '" + line + "' in " + path);
        }
    }
    return beats;
}

}  // namespace tf

// Per-feature corpus standardization (population mean/std, std floored).
#pragma once

#include <cmath>
#include <vector>

#include "transflower/core/error.hpp"
#include "transflower/core/tensor.hpp"
#include "transflower/features/types.hpp"

#include <json.hpp>

namespace tf {

constexpr double kStdFloor = 1e-6;

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> std;

    void apply_row(double* row) const {
        for (std::size_t j = 0; j < mean.size(); ++j)
            row[j] = (row[j] - mean[j]) / std[j];
    }
    void invert_row(double* row) const {
        for (std::size_t j = 0; j < mean.size(); ++j)
            row[j] = row[j] * std[j] + mean[j];
    }
};

struct Standardizer {
    ChannelStats motion;  // 67
    ChannelStats audio;   // 85

    static Standardizer identity() {
        Standardizer st;
        st.motion.mean.assign(kPoseDim, 0.0);
        st.motion.std.assign(kPoseDim, 1.0);
        st.audio.mean.assign(kAudioDim, 0.0);
        st.audio.std.assign(kAudioDim, 1.0);
        return st;
    }

    template <class Seq>
    static ChannelStats fit_channels(const std::vector<Seq>& seqs, std::size_t dim) {
        std::size_t n = 0;
        std::vector<double> sum(dim, 0.0), sumsq(dim, 0.0);
        for (const auto& s : seqs) {
            for (std::size_t i = 0; i < s.length(); ++i) {
                for (std::size_t j = 0; j < dim; ++j) {
                    const double v = s.frames(i, j);
                    sum[j] += v;
                    sumsq[j] += v * v;
                }
            }
            n += s.length();
        }
        if (n < 2) throw data_error("fit_standardizer: need at least 2 frames per modality");
        ChannelStats cs;
        cs.mean.resize(dim);
        cs.std.resize(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            cs.mean[j] = sum[j] / double(n);
            const double var = sumsq[j] / double(n) - cs.mean[j] * cs.mean[j];
            cs.std[j] = std::max(kStdFloor, std::sqrt(std::max(0.0, var)));
        }
        return cs;
    }

    static Standardizer fit(const std::vector<MotionSequence>& motion,
                            const std::vector<AudioFeatureSequence>& audio) {
        Standardizer st;
        st.motion = fit_channels(motion, kPoseDim);
        st.audio = fit_channels(audio, kAudioDim);
        return st;
    }

    Tensor<double> apply_motion(const Tensor<double>& frames) const {
        Tensor<double> out = frames;
        for (std::size_t i = 0; i < out.shape[0]; ++i)
            motion.apply_row(&out.data[i * kPoseDim]);
        return out;
    }
    Tensor<double> invert_motion(const Tensor<double>& frames) const {
        Tensor<double> out = frames;
        for (std::size_t i = 0; i < out.shape[0]; ++i)
            motion.invert_row(&out.data[i * kPoseDim]);
        return out;
    }
    Tensor<double> apply_audio(const Tensor<double>& frames) const {
        Tensor<double> out = frames;
        for (std::size_t i = 0; i < out.shape[0]; ++i)
            audio.apply_row(&out.data[i * kAudioDim]);
        return out;
    }

    nlohmann::json to_json() const {
        return {{"version", "tfstd-1"},
                {"motion", {{"mean", motion.mean}, {"std", motion.std}}},
                {"audio", {{"mean", audio.mean}, {"std", audio.std}}}};
    }

    static Standardizer from_json(const nlohmann::json& j) {
        if (j.value("version", "") != std::string("tfstd-1"))
            throw data_error("standardizer: unsupported version");
        Standardizer st;
        st.motion.mean = j.at("motion").at("mean").get<std::vector<double>>();
        st.motion.std = j.at("motion").at("std").get<std::vector<double>>();
        st.audio.mean = j.at("audio").at("mean").get<std::vector<double>>();
        st.audio.std = j.at("audio").at("std").get<std::vector<double>>();
        if (st.motion.mean.size() != kPoseDim || st.audio.mean.size() != kAudioDim)
            throw data_error("standardizer: wrong channel counts");
        return st;
    }
};

}  // namespace tf

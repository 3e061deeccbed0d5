// Synthetic music->dance corpus with a known conditional distribution:
// pulse-train audio features at a chosen tempo; motion whose root height
// oscillates with velocity minima on the beat and whose limb channels follow
// a per-clip style pattern drawn from mode probabilities. Gaussian frame
// jitter gives a closed-form entropy floor for end-to-end training checks.
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "transflower/core/rng.hpp"
#include "transflower/features/audio.hpp"
#include "transflower/features/feature_io.hpp"
#include "transflower/features/types.hpp"

namespace tf {

struct SynthConfig {
    std::vector<double> tempos = {120.0};     // bpm, drawn per clip
    std::size_t n_styles = 2;
    std::vector<double> mode_probs = {0.5, 0.5};
    double sigma = 0.03;                      // per-frame Gaussian jitter, all channels
    double beat_jitter = 0.0;                 // beat placement jitter (s)
    double clip_seconds = 10.0;
    std::size_t clip_count = 20;
    std::uint64_t seed = 0;

    double y_amplitude = 0.06;    // root-height oscillation (m)
    double style_amplitude = 0.15;  // limb-channel oscillation
    std::size_t style_width = 18;   // limb channels per style block

    void validate() const {
        if (tempos.empty()) throw data_error("synth: need at least one tempo");
        for (double t : tempos)
            if (t < 60.0 || t > 180.0)
                throw data_error("synth: tempo " + std::to_string(t) +
                                 " outside [60, 180] bpm");
        if (n_styles < 1 || mode_probs.size() != n_styles)
            throw data_error("synth: mode probabilities must match style count");
        double s = 0.0;
        for (double p : mode_probs) {
            if (p < 0.0) throw data_error("synth: negative mode probability");
            s += p;
        }
        if (std::abs(s - 1.0) > 1e-9)
            throw data_error("synth: mode probabilities must sum to 1");
        if (kJointChannelsStart + n_styles * style_width > kPoseDim)
            throw data_error("synth: style blocks exceed the limb channel range");
        if (sigma < 0.0 || beat_jitter < 0.0 || clip_seconds <= 0.0)
            throw data_error("synth: negative noise or duration");
    }
};

struct SynthClip {
    MotionSequence motion;
    AudioFeatureSequence audio;
    std::size_t style = 0;
    double tempo_bpm = 120.0;
    std::vector<double> beat_times;  // seconds
};

struct SynthCorpus {
    std::vector<SynthClip> clips;
};

inline SynthCorpus make_synthetic_corpus(const SynthConfig& cfg) {
    cfg.validate();
    SynthCorpus corpus;
    RngStream root(cfg.seed);
    const std::size_t frames = static_cast<std::size_t>(cfg.clip_seconds * kFps);
    const double log_floor = std::log(1e-5);

    for (std::size_t c = 0; c < cfg.clip_count; ++c) {
        RngStream rng = root.substream(c + 1);
        SynthClip clip;
        clip.tempo_bpm = cfg.tempos[rng.randint(cfg.tempos.size())];
        const double period = 60.0 / clip.tempo_bpm;

        // style draw from the mode probabilities
        {
            const double u = rng.uniform();
            double acc = 0.0;
            clip.style = cfg.n_styles - 1;
            for (std::size_t s = 0; s < cfg.n_styles; ++s) {
                acc += cfg.mode_probs[s];
                if (u <= acc) {
                    clip.style = s;
                    break;
                }
            }
        }

        for (double t = 0.0; t < cfg.clip_seconds - 1e-9; t += period) {
            double bt = t + (cfg.beat_jitter > 0.0 ? cfg.beat_jitter * rng.normal() : 0.0);
            if (bt >= 0.0 && bt < cfg.clip_seconds) clip.beat_times.push_back(bt);
        }

        // audio: pulse train rendered into the 85-channel layout
        clip.audio.fps = kFps;
        clip.audio.frames = Tensor<double>({frames, kAudioDim});
        for (std::size_t f = 0; f < frames; ++f)
            for (std::size_t b = 0; b < kMelBands; ++b)
                clip.audio.frames(f, b) = log_floor;
        std::size_t beat_idx = 0;
        for (double bt : clip.beat_times) {
            const long long f = std::llround(bt * kFps);
            if (f < 0 || f >= (long long)frames) continue;
            for (std::size_t b = 0; b < 20; ++b)
                clip.audio.frames(std::size_t(f), b) = std::log(0.5);
            clip.audio.frames(std::size_t(f), 80) = 1.0;  // onset
            clip.audio.frames(std::size_t(f), 81) = 1.0;  // beat
            if (beat_idx % 4 == 0) clip.audio.frames(std::size_t(f), 82) = 1.0;
            clip.audio.frames(std::size_t(f), 83) = 1.0;
            clip.audio.frames(std::size_t(f), 84) = 0.5;
            ++beat_idx;
        }

        // motion: y oscillation with velocity minima on the beat, style
        // oscillation on the clip's limb block, Gaussian jitter everywhere
        clip.motion.fps = kFps;
        clip.motion.frames = Tensor<double>({frames, kPoseDim});
        const std::size_t s0 = kJointChannelsStart + clip.style * cfg.style_width;
        for (std::size_t f = 0; f < frames; ++f) {
            const double t = double(f) / kFps;
            const double phase = 2.0 * M_PI * t / period;
            clip.motion.frames(f, kRootHeightChannel) =
                0.9 - cfg.y_amplitude * std::sin(phase);
            for (std::size_t j = 0; j < cfg.style_width; ++j)
                clip.motion.frames(f, s0 + j) =
                    cfg.style_amplitude *
                    std::sin(phase + 2.0 * M_PI * double(j) / double(cfg.style_width));
            if (cfg.sigma > 0.0)
                for (std::size_t j = 0; j < kPoseDim; ++j)
                    clip.motion.frames(f, j) += cfg.sigma * rng.normal();
        }
        clip.motion.provenance = "synth";
        clip.audio.provenance = "synth";
        corpus.clips.push_back(std::move(clip));
    }
    return corpus;
}

struct SynthOracle {
    double entropy_rate_per_dim;       // nats/dim, raw feature space
    std::vector<double> mode_probs;
    double mode_entropy;               // nats per clip-level style choice
    double expected_beat_offset;       // s, |kinematic - pulse| expectation
};

// Closed-form reference quantities. The per-frame conditional distribution
// given context (which reveals the style) is Gaussian with the config's
// sigma in every channel, so the entropy rate is the Gaussian entropy.
inline SynthOracle oracle_stats(const SynthConfig& cfg) {
    cfg.validate();
    if (cfg.sigma <= 0.0)
        throw data_error("oracle_stats: entropy undefined for sigma = 0");
    SynthOracle o;
    o.entropy_rate_per_dim = 0.5 * std::log(2.0 * M_PI * M_E * cfg.sigma * cfg.sigma);
    o.mode_probs = cfg.mode_probs;
    o.mode_entropy = 0.0;
    for (double p : cfg.mode_probs)
        if (p > 0.0) o.mode_entropy -= p * std::log(p);
    // half-normal mean of the beat jitter plus up to half a frame of
    // quantization when beats land between frames
    o.expected_beat_offset = cfg.beat_jitter * std::sqrt(2.0 / M_PI);
    return o;
}

inline void write_synth_corpus(const std::string& dir, const SynthCorpus& corpus) {
    std::filesystem::create_directories(dir);
    std::ofstream labels(dir + "/labels.csv");
    if (!labels) throw data_error("write_synth_corpus: cannot open " + dir + "/labels.csv");
    labels << "clip,style,tempo\n";
    for (std::size_t c = 0; c < corpus.clips.size(); ++c) {
        char name[32];
        std::snprintf(name, sizeof(name), "clip_%03zu", c);
        const auto& clip = corpus.clips[c];
        write_motion_file(dir + "/" + name + ".mfeat", clip.motion);
        write_audio_file(dir + "/" + name + ".afeat", clip.audio);
        labels << name << "," << clip.style << "," << clip.tempo_bpm << "\n";
        std::ofstream bf(dir + "/" + name + ".beats");
        for (double t : clip.beat_times) bf << t << "\n";
    }
}

}  // namespace tf

// Kinematic and audio beat extraction plus beat-alignment statistics.
#pragma once

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "transflower/features/audio.hpp"
#include "transflower/features/types.hpp"

namespace tf {

struct BeatTrain {
    std::vector<double> times;       // seconds, strictly increasing
    std::vector<double> magnitudes;  // optional, parallel to times
    bool warning = false;            // set when the source was undecidable

    void validate() const {
        for (std::size_t i = 1; i < times.size(); ++i)
            if (times[i] <= times[i - 1])
                throw data_error("BeatTrain: times must be strictly increasing");
        if (!magnitudes.empty() && magnitudes.size() != times.size())
            throw data_error("BeatTrain: magnitude/time count mismatch");
    }
};

// Beats at strict local minima of the root-height velocity (central
// differences on channel 2), kept when the minimum's prominence — its depth
// below the lower of the surrounding velocity maxima — reaches the
// threshold. Magnitude is |velocity| at the minimum.
inline BeatTrain kinematic_beats(const MotionSequence& motion,
                                 double prominence = 0.01) {
    const std::size_t n = motion.length();
    if (n < 3) throw data_error("kinematic_beats: need at least 3 frames");
    std::vector<double> v(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i)
        v[i] = (motion.frames(i + 1, kRootHeightChannel) -
                motion.frames(i - 1, kRootHeightChannel)) *
               motion.fps / 2.0;
    v[0] = v[1];
    v[n - 1] = v[n - 2];

    BeatTrain bt;
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!(v[i] < v[i - 1] && v[i] < v[i + 1])) continue;
        double left_max = v[i], right_max = v[i];
        for (std::size_t j = i; j-- > 0;) {
            left_max = std::max(left_max, v[j]);
            if (v[j] < v[i]) break;
        }
        for (std::size_t j = i + 1; j < n; ++j) {
            right_max = std::max(right_max, v[j]);
            if (v[j] < v[i]) break;
        }
        if (std::min(left_max, right_max) - v[i] >= prominence) {
            bt.times.push_back(double(i) / motion.fps);
            bt.magnitudes.push_back(std::abs(v[i]));
        }
    }
    return bt;
}

// Beat train from extracted audio features: onset envelope -> tempo ->
// dynamic-programming beat picking. A flat envelope yields an empty train
// with the warning flag set.
inline BeatTrain audio_beats(const AudioFeatureSequence& features) {
    const std::size_t n = features.length();
    if (n < std::size_t(2.0 * features.fps))
        throw data_error("audio_beats: need at least 2 s of audio");
    std::vector<double> onset(n);
    for (std::size_t t = 0; t < n; ++t) onset[t] = features.frames(t, 80);
    BeatTrain bt;
    const double bpm = estimate_tempo_bpm(onset, features.fps);
    if (bpm <= 0.0) {
        bt.warning = true;
        return bt;
    }
    for (std::size_t f : dp_beat_track(onset, features.fps, bpm)) {
        bt.times.push_back(double(f) / features.fps);
        bt.magnitudes.push_back(onset[f]);
    }
    return bt;
}

inline BeatTrain audio_beats(const std::vector<double>& pcm, double sample_rate) {
    return audio_beats(extract_audio_features(pcm, sample_rate));
}

inline BeatTrain beat_train_from_times(const std::vector<double>& times) {
    BeatTrain bt;
    bt.times = times;
    bt.validate();
    return bt;
}

// Mean and standard deviation of |music beat - nearest kinematic beat|.
// An empty kinematic train yields (+inf, 0) with the source's warning
// semantics surfaced through the sentinel, never a silent zero.
inline std::pair<double, double> beat_alignment(const BeatTrain& music,
                                                const BeatTrain& kinematic) {
    if (music.times.empty()) throw data_error("beat_alignment: empty music beat train");
    if (kinematic.times.empty())
        return {std::numeric_limits<double>::infinity(), 0.0};
    double sum = 0.0, sumsq = 0.0;
    for (double t : music.times) {
        double best = std::numeric_limits<double>::infinity();
        for (double k : kinematic.times) best = std::min(best, std::abs(t - k));
        sum += best;
        sumsq += best * best;
    }
    const double n = double(music.times.size());
    const double mean = sum / n;
    return {mean, std::sqrt(std::max(0.0, sumsq / n - mean * mean))};
}

}  // namespace tf

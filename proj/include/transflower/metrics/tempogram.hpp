// Time x tempo energy maps: short-time Fourier magnitude of a 20 Hz novelty
// curve over 8 s Hann windows with 1 s hop, evaluated at 30-480 bpm.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <string>
#include <vector>

#include "transflower/core/error.hpp"
#include "transflower/core/tensor.hpp"
#include "transflower/features/types.hpp"
#include "transflower/metrics/beats.hpp"

namespace tf {

constexpr double kTempogramWindowSec = 8.0;
constexpr double kTempogramHopSec = 1.0;
constexpr double kTempogramBpmMin = 30.0;
constexpr double kTempogramBpmMax = 480.0;

// Impulse novelty at 20 Hz from a beat train, weighted by magnitude when
// available.
inline std::vector<double> novelty_from_beats(const BeatTrain& beats,
                                              double duration_sec,
                                              double fps = kFps) {
    std::vector<double> nov(static_cast<std::size_t>(std::ceil(duration_sec * fps)), 0.0);
    for (std::size_t i = 0; i < beats.times.size(); ++i) {
        const long long f = std::llround(beats.times[i] * fps);
        if (f >= 0 && f < (long long)nov.size())
            nov[f] += beats.magnitudes.empty() ? 1.0 : beats.magnitudes[i];
    }
    return nov;
}

// Rows = time steps (one per hop), columns = bpm values 30..480 inclusive.
inline Tensor<double> tempogram(const std::vector<double>& novelty, double fps = kFps) {
    const std::size_t win = static_cast<std::size_t>(kTempogramWindowSec * fps);
    const std::size_t hop = static_cast<std::size_t>(kTempogramHopSec * fps);
    if (novelty.size() < win)
        throw data_error("tempogram: need at least " + std::to_string(win) +
                         " novelty frames (8 s), got " + std::to_string(novelty.size()));
    const std::size_t steps = (novelty.size() - win) / hop + 1;
    const std::size_t bpms =
        static_cast<std::size_t>(kTempogramBpmMax - kTempogramBpmMin) + 1;

    std::vector<double> hann(win);
    for (std::size_t i = 0; i < win; ++i)
        hann[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (win - 1));

    Tensor<double> out({steps, bpms});
    for (std::size_t s = 0; s < steps; ++s)
        for (std::size_t b = 0; b < bpms; ++b) {
            const double freq = (kTempogramBpmMin + double(b)) / 60.0;  // Hz
            std::complex<double> acc = 0.0;
            for (std::size_t i = 0; i < win; ++i) {
                const double t = double(i) / fps;
                acc += novelty[s * hop + i] * hann[i] *
                       std::polar(1.0, -2.0 * M_PI * freq * t);
            }
            out(s, b) = std::abs(acc);
        }
    return out;
}

inline void write_tempogram_csv(const std::string& path, const Tensor<double>& tg) {
    std::ofstream f(path);
    if (!f) throw data_error("write_tempogram_csv: cannot open " + path);
    for (std::size_t b = 0; b < tg.shape[1]; ++b)
        f << (b ? "," : "") << (kTempogramBpmMin + double(b));
    f << "\n";
    for (std::size_t s = 0; s < tg.shape[0]; ++s) {
        for (std::size_t b = 0; b < tg.shape[1]; ++b) f << (b ? "," : "") << tg(s, b);
        f << "\n";
    }
}

// 8-bit grayscale, max-normalized; rows = time, columns = bpm.
inline void write_tempogram_pgm(const std::string& path, const Tensor<double>& tg) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw data_error("write_tempogram_pgm: cannot open " + path);
    double mx = 0.0;
    for (double v : tg.data) mx = std::max(mx, v);
    f << "P5\n" << tg.shape[1] << " " << tg.shape[0] << "\n255\n";
    for (double v : tg.data) {
        const unsigned char px =
            mx > 0.0 ? static_cast<unsigned char>(std::lround(255.0 * v / mx)) : 0;
        f.write(reinterpret_cast<const char*>(&px), 1);
    }
}

}  // namespace tf

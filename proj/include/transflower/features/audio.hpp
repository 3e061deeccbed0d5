// Audio feature extraction at 20 Hz: 80-band log-mel, spectral-flux onset
// envelope, DSP beat/downbeat salience, and low/high band flux. Mirrors the
// 85-channel layout expected by the model.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "transflower/core/error.hpp"
#include "transflower/features/types.hpp"

namespace tf {

constexpr double kAudioSampleRate = 16000.0;
constexpr std::size_t kStftWindow = 1024;
constexpr std::size_t kStftHop = 800;  // 50 ms at 16 kHz
constexpr std::size_t kMelBands = 80;
constexpr double kMelFmin = 0.0;
constexpr double kMelFmax = 8000.0;
constexpr double kLogFloor = 1e-5;

// ---- WAV input ----

struct WavData {
    std::vector<double> samples;  // mono
    double sample_rate = 0;
};

namespace detail {
inline std::uint32_t rd_u32(const unsigned char* p) {
    return p[0] | (p[1] << 8) | (p[2] << 16) | (std::uint32_t(p[3]) << 24);
}
inline std::uint16_t rd_u16(const unsigned char* p) { return p[0] | (p[1] << 8); }
}  // namespace detail

// PCM 16-bit int or 32-bit float; stereo downmixed by averaging.
inline WavData read_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw data_error("read_wav: cannot open " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 44 || std::memcmp(buf.data(), "RIFF", 4) ||
        std::memcmp(buf.data() + 8, "WAVE", 4))
        throw data_error("read_wav: not a RIFF/WAVE file: " + path);

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    std::size_t data_off = 0, data_len = 0;
    std::size_t pos = 12;
    while (pos + 8 <= buf.size()) {
        const std::uint32_t len = detail::rd_u32(buf.data() + pos + 4);
        if (!std::memcmp(buf.data() + pos, "fmt ", 4)) {
            format = detail::rd_u16(buf.data() + pos + 8);
            channels = detail::rd_u16(buf.data() + pos + 10);
            rate = detail::rd_u32(buf.data() + pos + 12);
            bits = detail::rd_u16(buf.data() + pos + 22);
        } else if (!std::memcmp(buf.data() + pos, "data", 4)) {
            data_off = pos + 8;
            data_len = std::min<std::size_t>(len, buf.size() - data_off);
        }
        pos += 8 + len + (len & 1);
    }
    if (!data_off || !channels || !rate)
        throw data_error("read_wav: missing fmt/data chunk: " + path);

    WavData w;
    w.sample_rate = rate;
    const unsigned char* d = buf.data() + data_off;
    if (format == 1 && bits == 16) {
        const std::size_t n = data_len / 2 / channels;
        w.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0;
            for (std::size_t c = 0; c < channels; ++c) {
                std::int16_t s = static_cast<std::int16_t>(
                    detail::rd_u16(d + 2 * (i * channels + c)));
                acc += s / 32768.0;
            }
            w.samples[i] = acc / channels;
        }
    } else if (format == 3 && bits == 32) {
        const std::size_t n = data_len / 4 / channels;
        w.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0;
            for (std::size_t c = 0; c < channels; ++c) {
                std::uint32_t u = detail::rd_u32(d + 4 * (i * channels + c));
                float s;
                std::memcpy(&s, &u, 4);
                acc += s;
            }
            w.samples[i] = acc / channels;
        }
    } else {
        throw data_error("read_wav: unsupported format (want PCM16 or float32): " + path);
    }
    return w;
}

inline std::vector<double> resample_linear(const std::vector<double>& x, double from,
                                           double to) {
    if (from == to) return x;
    const double ratio = from / to;
    const std::size_t n = static_cast<std::size_t>(std::floor(x.size() / ratio));
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = i * ratio;
        const std::size_t i0 = static_cast<std::size_t>(t);
        const double frac = t - i0;
        const double a = x[std::min(i0, x.size() - 1)];
        const double b = x[std::min(i0 + 1, x.size() - 1)];
        out[i] = a + frac * (b - a);
    }
    return out;
}

// ---- FFT / STFT ----

// In-place iterative radix-2 FFT; n must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / double(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

// Magnitude spectrogram, frames x (window/2 + 1). Frame t covers samples
// [t*hop, t*hop + window), zero-padded past the end; frame count is
// floor(len / hop).
inline std::vector<std::vector<double>> stft_magnitude(const std::vector<double>& x,
                                                       std::size_t window = kStftWindow,
                                                       std::size_t hop = kStftHop) {
    const std::size_t frames = x.size() / hop;
    std::vector<double> hann(window);
    for (std::size_t i = 0; i < window; ++i)
        hann[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / (window - 1));
    std::vector<std::vector<double>> mag(frames, std::vector<double>(window / 2 + 1));
    std::vector<std::complex<double>> buf(window);
    for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t i = 0; i < window; ++i) {
            const std::size_t idx = t * hop + i;
            buf[i] = (idx < x.size()) ? x[idx] * hann[i] : 0.0;
        }
        fft_radix2(buf);
        for (std::size_t k = 0; k <= window / 2; ++k) mag[t][k] = std::abs(buf[k]);
    }
    return mag;
}

// ---- mel filterbank ----

inline double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
inline double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// Triangular filters, rows = bands, cols = fft bins.
inline std::vector<std::vector<double>> mel_filterbank(std::size_t bands,
                                                       std::size_t fft_bins,
                                                       double sample_rate,
                                                       double fmin = kMelFmin,
                                                       double fmax = kMelFmax) {
    const std::size_t window = (fft_bins - 1) * 2;
    std::vector<double> edges(bands + 2);
    const double mlo = hz_to_mel(fmin), mhi = hz_to_mel(fmax);
    for (std::size_t i = 0; i < edges.size(); ++i)
        edges[i] = mel_to_hz(mlo + (mhi - mlo) * i / double(bands + 1));
    std::vector<std::vector<double>> fb(bands, std::vector<double>(fft_bins, 0.0));
    for (std::size_t b = 0; b < bands; ++b) {
        const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
        for (std::size_t k = 0; k < fft_bins; ++k) {
            const double f = k * sample_rate / window;
            if (f > lo && f < mid)
                fb[b][k] = (f - lo) / (mid - lo);
            else if (f >= mid && f < hi)
                fb[b][k] = (hi - f) / (hi - mid);
        }
    }
    return fb;
}

inline double mel_band_center(std::size_t band, std::size_t bands = kMelBands,
                              double fmin = kMelFmin, double fmax = kMelFmax) {
    const double mlo = hz_to_mel(fmin), mhi = hz_to_mel(fmax);
    return mel_to_hz(mlo + (mhi - mlo) * (band + 1) / double(bands + 1));
}

// ---- onset and beats ----

// Half-wave-rectified spectral flux over a log spectrogram.
inline std::vector<double> spectral_flux(const std::vector<std::vector<double>>& log_spec) {
    std::vector<double> flux(log_spec.size(), 0.0);
    for (std::size_t t = 1; t < log_spec.size(); ++t)
        for (std::size_t b = 0; b < log_spec[t].size(); ++b)
            flux[t] += std::max(0.0, log_spec[t][b] - log_spec[t - 1][b]);
    return flux;
}

// Autocorrelation tempo estimate on a novelty curve, searched in [30, 480] bpm.
// Returns 0 when the envelope is flat (undetectable tempo).
inline double estimate_tempo_bpm(const std::vector<double>& novelty, double fps,
                                 double bpm_min = 30.0, double bpm_max = 480.0) {
    const std::size_t n = novelty.size();
    double mean = 0.0;
    for (double v : novelty) mean += v;
    mean /= std::max<std::size_t>(1, n);
    std::vector<double> c(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        c[i] = novelty[i] - mean;
        var += c[i] * c[i];
    }
    if (var < 1e-12) return 0.0;

    const std::size_t lag_min =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(60.0 * fps / bpm_max)));
    const std::size_t lag_max = std::min<std::size_t>(
        n - 1, static_cast<std::size_t>(std::ceil(60.0 * fps / bpm_min)));
    double best = -1.0;
    std::size_t best_lag = 0;
    for (std::size_t lag = lag_min; lag <= lag_max; ++lag) {
        double acc = 0.0;
        for (std::size_t i = lag; i < n; ++i) acc += c[i] * c[i - lag];
        acc /= double(n - lag);
        // mild log-normal prior centered at 120 bpm keeps octave errors in check
        const double bpm = 60.0 * fps / double(lag);
        const double w = std::exp(-0.5 * std::pow(std::log2(bpm / 120.0) / 1.2, 2.0));
        if (acc * w > best) {
            best = acc * w;
            best_lag = lag;
        }
    }
    if (best_lag == 0 || best <= 0.0) return 0.0;
    return 60.0 * fps / double(best_lag);
}

// Dynamic-programming beat picking (onset energy plus log-spacing penalty
// around the tempo period). Returns beat frame indices.
inline std::vector<std::size_t> dp_beat_track(const std::vector<double>& novelty,
                                              double fps, double bpm,
                                              double tightness = 100.0) {
    if (bpm <= 0.0 || novelty.size() < 2) return {};
    const double period = 60.0 * fps / bpm;  // frames per beat
    const std::size_t n = novelty.size();
    std::vector<double> score(n);
    std::vector<long long> from(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        score[i] = novelty[i];
        const long long lo = static_cast<long long>(i) - static_cast<long long>(std::round(2.0 * period));
        const long long hi = static_cast<long long>(i) - static_cast<long long>(std::round(period / 2.0));
        for (long long j = std::max<long long>(0, lo); j <= hi; ++j) {
            const double gap = double(i) - double(j);
            const double penalty = tightness * std::pow(std::log(gap / period), 2.0);
            const double s = score[j] - penalty + novelty[i];
            if (s > score[i]) {
                score[i] = s;
                from[i] = j;
            }
        }
    }
    std::size_t end = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (score[i] > score[end]) end = i;
    std::vector<std::size_t> beats;
    for (long long i = static_cast<long long>(end); i >= 0; i = from[i]) {
        beats.push_back(static_cast<std::size_t>(i));
        if (from[i] < 0) break;
    }
    std::reverse(beats.begin(), beats.end());
    return beats;
}

// ---- feature assembly ----

inline AudioFeatureSequence extract_audio_features(const std::vector<double>& pcm,
                                                   double sample_rate) {
    if (pcm.empty()) throw data_error("extract_audio_features: empty audio");
    for (double v : pcm)
        if (!std::isfinite(v)) throw data_error("extract_audio_features: non-finite sample");
    if (sample_rate < 8000.0)
        throw data_error("extract_audio_features: sample rate below 8 kHz");

    const std::vector<double> x = resample_linear(pcm, sample_rate, kAudioSampleRate);
    if (x.size() < kStftHop)
        throw data_error("extract_audio_features: audio shorter than one hop");

    const auto mag = stft_magnitude(x);
    const std::size_t frames = mag.size();
    const std::size_t bins = kStftWindow / 2 + 1;
    const auto fb = mel_filterbank(kMelBands, bins, kAudioSampleRate);

    // log-mel
    std::vector<std::vector<double>> logmel(frames, std::vector<double>(kMelBands));
    for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t b = 0; b < kMelBands; ++b) {
            double acc = 0.0;
            for (std::size_t k = 0; k < bins; ++k) acc += fb[b][k] * mag[t][k];
            logmel[t][b] = std::log(std::max(kLogFloor, acc));
        }

    const std::vector<double> onset = spectral_flux(logmel);

    // band-limited rectified flux on the linear spectrogram
    std::vector<double> low_flux(frames, 0.0), high_flux(frames, 0.0);
    for (std::size_t t = 1; t < frames; ++t)
        for (std::size_t k = 0; k < bins; ++k) {
            const double f = k * kAudioSampleRate / kStftWindow;
            const double d = std::log(std::max(kLogFloor, mag[t][k])) -
                             std::log(std::max(kLogFloor, mag[t - 1][k]));
            if (d > 0.0) {
                if (f < 500.0) low_flux[t] += d;
                if (f > 4000.0) high_flux[t] += d;
            }
        }

    // beat / downbeat salience in [0, 1]
    std::vector<double> beat_ch(frames, 0.0), downbeat_ch(frames, 0.0);
    const double bpm = estimate_tempo_bpm(onset, kFps);
    if (bpm > 0.0) {
        const auto beats = dp_beat_track(onset, kFps, bpm);
        for (std::size_t k = 0; k < beats.size(); ++k) {
            beat_ch[beats[k]] = 1.0;
            if (k % 4 == 0) downbeat_ch[beats[k]] = 1.0;
        }
    }

    AudioFeatureSequence seq;
    seq.frames = Tensor<double>({frames, kAudioDim});
    for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t b = 0; b < kMelBands; ++b) seq.frames(t, b) = logmel[t][b];
        seq.frames(t, 80) = onset[t];
        seq.frames(t, 81) = beat_ch[t];
        seq.frames(t, 82) = downbeat_ch[t];
        seq.frames(t, 83) = low_flux[t];
        seq.frames(t, 84) = high_flux[t];
    }
    return seq;
}

}  // namespace tf

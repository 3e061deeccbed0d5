// Sliding-window dataset construction for teacher-forced training.
//
// A window anchored at first-target index i provides:
//   motion context: frames [i-k_x, i-1]           (k_x rows, zero-padded before start)
//   audio context:  frames [i+N-k_m, i+N+l_m-1]   (k_m+l_m rows: k_m through the end
//                                                  of the target block, l_m future)
//   targets:        frames [i, i+N-1]             (never padded)
// Padding is zeros, i.e. the corpus mean in standardized space.
#pragma once

#include <vector>

#include "transflower/core/error.hpp"
#include "transflower/core/tensor.hpp"
#include "transflower/features/types.hpp"

namespace tf {

struct WindowParams {
    std::size_t k_x = 40;
    std::size_t k_m = 40;
    std::size_t l_m = 8;
    std::size_t n_pred = 4;
    std::size_t stride = 1;
};

struct ContextWindow {
    Tensor<double> motion;  // k_x x 67
    Tensor<double> audio;   // (k_m + l_m) x 85
};

struct TrainingExample {
    ContextWindow window;
    Tensor<double> target;  // N x 67
};

// Rows [start, start+rows) of `src`, zero rows where the index falls outside.
inline Tensor<double> padded_rows(const Tensor<double>& src, long long start,
                                  std::size_t rows) {
    const long long n = static_cast<long long>(src.shape[0]);
    const std::size_t c = src.shape[1];
    Tensor<double> out({rows, c});
    for (std::size_t r = 0; r < rows; ++r) {
        const long long idx = start + static_cast<long long>(r);
        if (idx >= 0 && idx < n)
            for (std::size_t j = 0; j < c; ++j) out(r, j) = src(idx, j);
    }
    return out;
}

inline ContextWindow make_window(const Tensor<double>& motion,
                                 const Tensor<double>& audio, long long first_target,
                                 const WindowParams& p) {
    ContextWindow w;
    w.motion = padded_rows(motion, first_target - static_cast<long long>(p.k_x), p.k_x);
    w.audio = padded_rows(audio,
                          first_target + static_cast<long long>(p.n_pred) -
                              static_cast<long long>(p.k_m),
                          p.k_m + p.l_m);
    return w;
}

// Expects standardized, frame-aligned sequences.
inline std::vector<TrainingExample> window_dataset(const Tensor<double>& motion,
                                                   const Tensor<double>& audio,
                                                   const WindowParams& p) {
    if (motion.shape[0] != audio.shape[0])
        throw data_error("window_dataset: motion/audio frame counts differ");
    if (p.k_x < 1 || p.k_m < 1 || p.l_m < 1 || p.n_pred < 1 || p.stride < 1)
        throw data_error("window_dataset: window parameters must be >= 1");
    const std::size_t len = motion.shape[0];
    if (len < p.n_pred + p.l_m)
        throw data_error("window_dataset: sequence shorter than N + l_m (" +
                         std::to_string(p.n_pred + p.l_m) + " frames required)");

    std::vector<TrainingExample> out;
    for (std::size_t i = 0; i + p.n_pred + p.l_m <= len; i += p.stride) {
        TrainingExample ex;
        ex.window = make_window(motion, audio, static_cast<long long>(i), p);
        ex.target = padded_rows(motion, static_cast<long long>(i), p.n_pred);
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace tf

// Motion-prompting experiment: generate rollouts seeded with each style's
// motion and measure FMD against every style's ground-truth corpus.
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "transflower/metrics/frechet.hpp"
#include "transflower/model/transflower.hpp"

namespace tf {

// Generator signature: (seed-style index, song index) -> generated motion.
using PromptGenerator = std::function<MotionSequence(std::size_t, std::size_t)>;

// Row = seed style, column = ground-truth style; entry = FMD between the
// rollouts seeded with the row's style (pooled over songs) and the column
// style's reference corpus.
inline Tensor<double> motion_prompt_matrix(
    const PromptGenerator& generate, std::size_t n_styles, std::size_t n_songs,
    const std::vector<std::vector<MotionSequence>>& references) {
    if (n_styles < 1 || references.size() != n_styles)
        throw data_error("prompt_matrix: need one reference corpus per style");
    if (n_songs < 1) throw data_error("prompt_matrix: need at least one song");

    std::vector<std::vector<MotionSequence>> generated(n_styles);
    for (std::size_t s = 0; s < n_styles; ++s)
        for (std::size_t g = 0; g < n_songs; ++g)
            generated[s].push_back(generate(s, g));

    Tensor<double> out({n_styles, n_styles});
    for (std::size_t s = 0; s < n_styles; ++s)
        for (std::size_t t = 0; t < n_styles; ++t)
            out(s, t) = fpd_fmd(generated[s], references[t]).second;
    return out;
}

// Prompt matrix for a trained model: rollouts of `length` frames at
// temperature tau, seeded per (style, song) from a substream of `seed`.
template <class T>
Tensor<double> model_prompt_matrix(
    const ParameterStore<T>& store, const TransflowerConfig& cfg,
    const Standardizer& std_, const std::vector<Tensor<double>>& seed_motions,
    const std::vector<AudioFeatureSequence>& songs,
    const std::vector<std::vector<MotionSequence>>& references, std::size_t length,
    double tau, std::uint64_t seed, std::size_t stride = 1) {
    if (seed_motions.size() != references.size())
        throw data_error("prompt_matrix: seed/reference style count mismatch");
    auto gen = [&](std::size_t style, std::size_t song) {
        RngStream rng = RngStream(seed).substream(style * 1000 + song);
        return rollout(store, cfg, std_, seed_motions[style], songs[song], length, tau,
                       rng, stride);
    };
    return motion_prompt_matrix(gen, seed_motions.size(), songs.size(), references);
}

inline void write_prompt_matrix_csv(const std::string& path, const Tensor<double>& m,
                                    const std::vector<std::string>& style_names) {
    std::ofstream f(path);
    if (!f) throw data_error("write_prompt_matrix_csv: cannot open " + path);
    f << "seed_style";
    for (const auto& n : style_names) f << ",fmd_vs_" << n;
    f << "\n";
    for (std::size_t i = 0; i < m.shape[0]; ++i) {
        f << style_names[i];
        for (std::size_t j = 0; j < m.shape[1]; ++j) f << "," << m(i, j);
        f << "\n";
    }
}

}  // namespace tf

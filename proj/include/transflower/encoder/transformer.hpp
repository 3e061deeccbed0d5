// Full-attention transformer encoder with T5-style bucketed relative
// position biases, plus the three-transformer cross-modal context encoder.
#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "transflower/core/optim.hpp"
#include "transflower/core/rng.hpp"
#include "transflower/core/tape.hpp"
#include "transflower/features/types.hpp"

namespace tf {

struct TransformerConfig {
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t d_model = 64;
    std::size_t d_ff = 256;
    double dropout = 0.0;
    std::size_t relbias_buckets = 32;
    std::size_t relbias_max_distance = 128;

    void validate(const std::string& who) const {
        if (layers < 1) throw data_error(who + ": layers must be >= 1");
        if (d_model % heads != 0)
            throw data_error(who + ": d_model (" + std::to_string(d_model) +
                             ") not divisible by heads (" + std::to_string(heads) + ")");
    }
};

// Bidirectional T5 bucketing of a relative offset (key - query).
inline std::size_t relpos_bucket(long long rel, std::size_t num_buckets,
                                 std::size_t max_distance) {
    std::size_t bucket = 0;
    std::size_t nb = num_buckets / 2;
    if (rel > 0) bucket += nb;
    const std::size_t n = static_cast<std::size_t>(rel > 0 ? rel : -rel);
    const std::size_t max_exact = nb / 2;
    if (n < max_exact) return bucket + n;
    const double v = std::log(double(n) / double(max_exact)) /
                     std::log(double(max_distance) / double(max_exact)) *
                     double(nb - max_exact);
    return bucket + std::min(max_exact + static_cast<std::size_t>(v), nb - 1);
}

// Plain-value bias tensor (heads x q x k) from a bucket table, for tests and
// inspection; the model path uses the same buckets through the tape lookup.
template <class T>
Tensor<T> relpos_bias(const TransformerConfig& cfg, const Tensor<T>& table,
                      std::size_t q_len, std::size_t k_len) {
    Tensor<T> out({cfg.heads, q_len, k_len});
    for (std::size_t h = 0; h < cfg.heads; ++h)
        for (std::size_t i = 0; i < q_len; ++i)
            for (std::size_t j = 0; j < k_len; ++j) {
                const std::size_t b =
                    relpos_bucket(static_cast<long long>(j) - static_cast<long long>(i),
                                  cfg.relbias_buckets, cfg.relbias_max_distance);
                out.data[(h * q_len + i) * k_len + j] = table(h, b);
            }
    return out;
}

// Per-tape parameter context: one leaf per parameter name, shared by every
// use on the tape so gradients accumulate in one place.
template <class T>
struct ModelCtx {
    Tape<T>& tape;
    const ParameterStore<T>& store;
    bool training = false;
    RngStream* dropout_rng = nullptr;
    std::map<std::string, typename Tape<T>::Var> cache;

    using Var = typename Tape<T>::Var;

    Var p(const std::string& name) {
        auto it = cache.find(name);
        if (it != cache.end()) return it->second;
        Var v = tape.param(name, store.p(name));
        cache.emplace(name, v);
        return v;
    }

    std::map<std::string, Tensor<T>> collect_grads() const {
        std::map<std::string, Tensor<T>> g;
        for (const auto& [name, var] : cache) g.emplace(name, tape.grad(var));
        return g;
    }
};

template <class T>
Tensor<T> random_normal(RngStream& rng, std::vector<std::size_t> shape, double std_dev) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<T>(rng.normal() * std_dev);
    return t;
}

template <class T>
void init_transformer_params(ParameterStore<T>& store, const std::string& prefix,
                             const TransformerConfig& cfg, std::size_t d_in,
                             RngStream& rng) {
    cfg.validate(prefix);
    auto w = [&](const std::string& n, std::vector<std::size_t> s, double sd) {
        store.params[n] = random_normal<T>(rng, std::move(s), sd);
    };
    const double sd_in = 1.0 / std::sqrt(double(d_in));
    const double sd_d = 1.0 / std::sqrt(double(cfg.d_model));
    const double sd_ff = 1.0 / std::sqrt(double(cfg.d_ff));
    w(prefix + ".in.w", {d_in, cfg.d_model}, sd_in);
    store.params[prefix + ".in.b"] = Tensor<T>({cfg.d_model});
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::string lp = prefix + ".l" + std::to_string(l);
        for (const char* nm : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"})
            w(lp + nm, {cfg.d_model, cfg.d_model}, sd_d);
        for (const char* nm : {".attn.bq", ".attn.bk", ".attn.bv", ".attn.bo"})
            store.params[lp + nm] = Tensor<T>({cfg.d_model});
        w(lp + ".attn.relbias", {cfg.heads, cfg.relbias_buckets}, 0.02);
        w(lp + ".ffn.w1", {cfg.d_model, cfg.d_ff}, sd_d);
        store.params[lp + ".ffn.b1"] = Tensor<T>({cfg.d_ff});
        w(lp + ".ffn.w2", {cfg.d_ff, cfg.d_model}, sd_ff);
        store.params[lp + ".ffn.b2"] = Tensor<T>({cfg.d_model});
        store.params[lp + ".ln1.g"] = Tensor<T>({cfg.d_model}, T(1));
        store.params[lp + ".ln1.b"] = Tensor<T>({cfg.d_model});
        store.params[lp + ".ln2.g"] = Tensor<T>({cfg.d_model}, T(1));
        store.params[lp + ".ln2.b"] = Tensor<T>({cfg.d_model});
    }
}

namespace detail {

template <class T>
typename Tape<T>::Var linear(ModelCtx<T>& ctx, typename Tape<T>::Var x,
                             const std::string& w, const std::string& b) {
    return ctx.tape.add_rowvec(ctx.tape.matmul(x, ctx.p(w)), ctx.p(b));
}

template <class T>
typename Tape<T>::Var self_attention(ModelCtx<T>& ctx, const TransformerConfig& cfg,
                                     const std::string& lp, typename Tape<T>::Var x) {
    auto& tape = ctx.tape;
    const std::size_t seq = tape.val(x).shape[0];
    const std::size_t dh = cfg.d_model / cfg.heads;
    auto q = linear(ctx, x, lp + ".attn.wq", lp + ".attn.bq");
    auto k = linear(ctx, x, lp + ".attn.wk", lp + ".attn.bk");
    auto v = linear(ctx, x, lp + ".attn.wv", lp + ".attn.bv");

    std::vector<std::size_t> buckets(seq * seq);
    for (std::size_t i = 0; i < seq; ++i)
        for (std::size_t j = 0; j < seq; ++j)
            buckets[i * seq + j] =
                relpos_bucket(static_cast<long long>(j) - static_cast<long long>(i),
                              cfg.relbias_buckets, cfg.relbias_max_distance);

    auto bias_table = ctx.p(lp + ".attn.relbias");
    typename Tape<T>::Var heads_out = 0;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        auto qh = tape.slice_cols(q, h * dh, dh);
        auto kh = tape.slice_cols(k, h * dh, dh);
        auto vh = tape.slice_cols(v, h * dh, dh);
        auto scores = tape.scale(tape.matmul_nt(qh, kh), T(1) / std::sqrt(T(dh)));
        auto bias = tape.gather_row(bias_table, h, buckets, {seq, seq});
        auto probs = tape.softmax_rows(tape.add(scores, bias));
        auto ch = tape.matmul(probs, vh);
        heads_out = (h == 0) ? ch : tape.concat_cols(heads_out, ch);
    }
    return linear(ctx, heads_out, lp + ".attn.wo", lp + ".attn.bo");
}

}  // namespace detail

// Input projection followed by post-norm blocks of
// {self-attention + residual + LN, feed-forward + residual + LN}.
template <class T>
typename Tape<T>::Var transformer_encode(ModelCtx<T>& ctx, const std::string& prefix,
                                         const TransformerConfig& cfg,
                                         typename Tape<T>::Var x) {
    auto& tape = ctx.tape;
    auto h = detail::linear(ctx, x, prefix + ".in.w", prefix + ".in.b");
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::string lp = prefix + ".l" + std::to_string(l);
        auto a = detail::self_attention(ctx, cfg, lp, h);
        if (cfg.dropout > 0.0 && ctx.training && ctx.dropout_rng)
            a = tape.dropout(a, T(cfg.dropout), *ctx.dropout_rng, true);
        h = tape.layernorm_rows(tape.add(h, a), ctx.p(lp + ".ln1.g"), ctx.p(lp + ".ln1.b"));
        auto f = detail::linear(ctx, h, lp + ".ffn.w1", lp + ".ffn.b1");
        f = tape.gelu(f);
        f = detail::linear(ctx, f, lp + ".ffn.w2", lp + ".ffn.b2");
        if (cfg.dropout > 0.0 && ctx.training && ctx.dropout_rng)
            f = tape.dropout(f, T(cfg.dropout), *ctx.dropout_rng, true);
        h = tape.layernorm_rows(tape.add(h, f), ctx.p(lp + ".ln2.g"), ctx.p(lp + ".ln2.b"));

        if (!tape.val(h).all_finite())
            throw numeric_error(prefix + ": non-finite activations in layer " +
                                std::to_string(l));
    }
    return h;
}

// ---- cross-modal context encoder ----

struct EncoderSetConfig {
    TransformerConfig motion;      // f_x
    TransformerConfig music;       // f_m
    TransformerConfig cross;       // f_cm
    std::size_t k_x = 40, k_m = 40, l_m = 8;
    std::size_t prefix_len = 4;    // K_pref = N

    void validate() const {
        motion.validate("f_x");
        music.validate("f_m");
        cross.validate("f_cm");
        if (motion.d_model != music.d_model || music.d_model != cross.d_model)
            throw data_error("encoder: d_model mismatch between sub-transformers");
        if (prefix_len > k_x + k_m + l_m)
            throw data_error("encoder: prefix length exceeds cross-modal sequence");
    }
};

template <class T>
void init_encoder_params(ParameterStore<T>& store, const EncoderSetConfig& cfg,
                         RngStream& rng) {
    cfg.validate();
    init_transformer_params(store, "fx", cfg.motion, kPoseDim, rng);
    init_transformer_params(store, "fm", cfg.music, kAudioDim, rng);
    init_transformer_params(store, "fcm", cfg.cross, cfg.cross.d_model, rng);
}

// h = first K_pref rows of f_cm(concat(f_x(motion), f_m(audio))).
// Motion rows come first in the cross-modal sequence.
template <class T>
typename Tape<T>::Var encode_context(ModelCtx<T>& ctx, const EncoderSetConfig& cfg,
                                     typename Tape<T>::Var motion,
                                     typename Tape<T>::Var audio) {
    auto& tape = ctx.tape;
    if (tape.val(motion).shape[0] != cfg.k_x ||
        tape.val(audio).shape[0] != cfg.k_m + cfg.l_m)
        throw data_error("encode_context: window shape does not match config");
    auto hx = transformer_encode(ctx, "fx", cfg.motion, motion);
    auto hm = transformer_encode(ctx, "fm", cfg.music, audio);
    auto hcat = tape.concat_rows(hx, hm);
    auto hcm = transformer_encode(ctx, "fcm", cfg.cross, hcat);
    return tape.slice_rows(hcm, 0, cfg.prefix_len);
}

template <class T>
Tensor<T> cast_tensor(const Tensor<double>& t) {
    Tensor<T> out(t.shape);
    for (std::size_t i = 0; i < t.size(); ++i) out.data[i] = static_cast<T>(t.data[i]);
    return out;
}

template <class T>
Tensor<double> to_double(const Tensor<T>& t) {
    Tensor<double> out(t.shape);
    for (std::size_t i = 0; i < t.size(); ++i) out.data[i] = static_cast<double>(t.data[i]);
    return out;
}

}  // namespace tf

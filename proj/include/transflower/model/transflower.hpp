// Full model assembly: cross-modal context encoder feeding a conditional
// normalizing flow over the next N poses, plus teacher-forced NLL, the
// autoregressive rollout loop, and the deterministic regression head used
// as an ablation baseline.
#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "transflower/features/standardizer.hpp"
#include "transflower/features/windowing.hpp"
#include "transflower/flow/flow.hpp"

namespace tf {

struct TransflowerConfig {
    EncoderSetConfig encoder;
    FlowConfig flow;
    std::string preset = "custom";
    std::string dtype = "f32";  // f32 | f64

    std::size_t n_pred() const { return flow.seq_len; }

    void validate() const {
        encoder.validate();
        flow.validate();
        if (encoder.prefix_len != flow.seq_len)
            throw data_error("config: context prefix length (" +
                             std::to_string(encoder.prefix_len) +
                             ") must equal the predicted block N (" +
                             std::to_string(flow.seq_len) + ")");
        if (flow.blocks > 0 && flow.cond_dim != 0 &&
            flow.cond_dim != encoder.cross.d_model)
            throw data_error("config: flow conditioning width (" +
                             std::to_string(flow.cond_dim) +
                             ") must equal encoder d_model (" +
                             std::to_string(encoder.cross.d_model) + ")");
        if (flow.channels != kPoseDim)
            throw data_error("config: flow channels must be " + std::to_string(kPoseDim));
        if (dtype != "f32" && dtype != "f64")
            throw data_error("config: dtype must be f32 or f64");
    }

    WindowParams window_params() const {
        WindowParams p;
        p.k_x = encoder.k_x;
        p.k_m = encoder.k_m;
        p.l_m = encoder.l_m;
        p.n_pred = flow.seq_len;
        return p;
    }

    static TransflowerConfig desk() {
        TransflowerConfig c;
        c.preset = "desk";
        TransformerConfig enc;
        enc.layers = 2;
        enc.heads = 4;
        enc.d_model = 64;
        enc.d_ff = 128;
        c.encoder.motion = enc;
        c.encoder.music = enc;
        c.encoder.cross = enc;
        c.encoder.cross.layers = 4;
        c.encoder.k_x = 40;
        c.encoder.k_m = 40;
        c.encoder.l_m = 8;
        c.encoder.prefix_len = 4;
        c.flow.blocks = 4;
        c.flow.channels = kPoseDim;
        c.flow.seq_len = 4;
        c.flow.cond_dim = 64;
        c.flow.coupling.layers = 2;
        c.flow.coupling.heads = 4;
        c.flow.coupling.d_model = 64;
        c.flow.coupling.d_ff = 128;
        return c;
    }

    static TransflowerConfig paper() {
        TransflowerConfig c;
        c.preset = "paper";
        TransformerConfig enc;
        enc.layers = 2;
        enc.heads = 10;
        enc.d_model = 800;
        enc.d_ff = 3200;
        c.encoder.motion = enc;
        c.encoder.music = enc;
        c.encoder.cross = enc;
        c.encoder.cross.layers = 12;
        c.encoder.k_x = 120;
        c.encoder.k_m = 120;
        c.encoder.l_m = 20;
        c.encoder.prefix_len = 20;
        c.flow.blocks = 16;
        c.flow.channels = kPoseDim;
        c.flow.seq_len = 20;
        c.flow.cond_dim = 800;
        c.flow.coupling.layers = 2;
        c.flow.coupling.heads = 4;
        c.flow.coupling.d_model = 128;
        c.flow.coupling.d_ff = 512;
        return c;
    }

    static TransflowerConfig from_preset(const std::string& name) {
        if (name == "desk") return desk();
        if (name == "paper") return paper();
        throw data_error("unknown preset '" + name + "' (expected desk or paper)");
    }

    nlohmann::json to_json() const {
        auto tj = [](const TransformerConfig& t) {
            return nlohmann::json{{"layers", t.layers},       {"heads", t.heads},
                                  {"d_model", t.d_model},     {"d_ff", t.d_ff},
                                  {"dropout", t.dropout},     {"relbias_buckets", t.relbias_buckets},
                                  {"relbias_max_distance", t.relbias_max_distance}};
        };
        return {{"preset", preset},
                {"dtype", dtype},
                {"encoder",
                 {{"motion", tj(encoder.motion)},
                  {"music", tj(encoder.music)},
                  {"cross", tj(encoder.cross)},
                  {"k_x", encoder.k_x},
                  {"k_m", encoder.k_m},
                  {"l_m", encoder.l_m},
                  {"prefix_len", encoder.prefix_len}}},
                {"flow",
                 {{"blocks", flow.blocks},
                  {"channels", flow.channels},
                  {"seq_len", flow.seq_len},
                  {"cond_dim", flow.cond_dim},
                  {"norm_mode", flow.norm_mode == NormMode::actnorm ? "actnorm" : "batchnorm"},
                  {"scale_clamp", flow.scale_clamp},
                  {"coupling", tj(flow.coupling)}}}};
    }

    static TransflowerConfig from_json(const nlohmann::json& j) {
        auto tf_ = [](const nlohmann::json& t) {
            TransformerConfig c;
            c.layers = t.at("layers").get<std::size_t>();
            c.heads = t.at("heads").get<std::size_t>();
            c.d_model = t.at("d_model").get<std::size_t>();
            c.d_ff = t.at("d_ff").get<std::size_t>();
            c.dropout = t.value("dropout", 0.0);
            c.relbias_buckets = t.value("relbias_buckets", std::size_t(32));
            c.relbias_max_distance = t.value("relbias_max_distance", std::size_t(128));
            return c;
        };
        TransflowerConfig c;
        c.preset = j.value("preset", "custom");
        c.dtype = j.value("dtype", "f32");
        const auto& e = j.at("encoder");
        c.encoder.motion = tf_(e.at("motion"));
        c.encoder.music = tf_(e.at("music"));
        c.encoder.cross = tf_(e.at("cross"));
        c.encoder.k_x = e.at("k_x").get<std::size_t>();
        c.encoder.k_m = e.at("k_m").get<std::size_t>();
        c.encoder.l_m = e.at("l_m").get<std::size_t>();
        c.encoder.prefix_len = e.at("prefix_len").get<std::size_t>();
        const auto& f = j.at("flow");
        c.flow.blocks = f.at("blocks").get<std::size_t>();
        c.flow.channels = f.at("channels").get<std::size_t>();
        c.flow.seq_len = f.at("seq_len").get<std::size_t>();
        c.flow.cond_dim = f.at("cond_dim").get<std::size_t>();
        c.flow.norm_mode = f.value("norm_mode", "actnorm") == std::string("batchnorm")
                               ? NormMode::batchnorm
                               : NormMode::actnorm;
        c.flow.scale_clamp = f.value("scale_clamp", 5.0);
        c.flow.coupling = tf_(f.at("coupling"));
        c.validate();
        return c;
    }
};

// All parameters from one seeded stream: encoder first, then the flow, then
// the deterministic ablation head (zero-initialized).
template <class T>
ParameterStore<T> build_model(const TransflowerConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ParameterStore<T> store;
    RngStream rng(seed);
    init_encoder_params(store, cfg.encoder, rng);
    if (cfg.flow.blocks > 0) init_flow_params(store, cfg.flow, rng);
    store.params["det.w"] = Tensor<T>({cfg.encoder.cross.d_model, kPoseDim});
    store.params["det.b"] = Tensor<T>({kPoseDim});
    return store;
}

// Context encoding + flow log prob for one example, on the caller's tape.
template <class T>
typename Tape<T>::Var example_log_prob(ModelCtx<T>& ctx, const TransflowerConfig& cfg,
                                       const TrainingExample& ex) {
    auto& tape = ctx.tape;
    auto target = tape.leaf(cast_tensor<T>(ex.target));
    if (cfg.flow.blocks == 0 || cfg.flow.cond_dim == 0) {
        // unconditional flow (or pure standard-normal head when B=0)
        return flow_log_prob(ctx, cfg.flow, target, 0, false);
    }
    auto motion = tape.leaf(cast_tensor<T>(ex.window.motion));
    auto audio = tape.leaf(cast_tensor<T>(ex.window.audio));
    auto h = encode_context(ctx, cfg.encoder, motion, audio);
    return flow_log_prob(ctx, cfg.flow, target, h, true);
}

// Mean NLL over the batch; shares one tape so a single backward pass yields
// all gradients.
template <class T>
typename Tape<T>::Var nll_loss_var(ModelCtx<T>& ctx, const TransflowerConfig& cfg,
                                   const std::vector<TrainingExample>& batch) {
    if (batch.empty()) throw data_error("nll_loss: empty batch");
    auto& tape = ctx.tape;
    typename Tape<T>::Var acc = 0;
    for (std::size_t e = 0; e < batch.size(); ++e) {
        auto lp = example_log_prob(ctx, cfg, batch[e]);
        if (!tape.val(lp).all_finite())
            throw numeric_error("nll_loss: non-finite log prob at batch index " +
                                std::to_string(e));
        acc = (e == 0) ? lp : tape.add(acc, lp);
    }
    return tape.scale(acc, T(-1) / T(batch.size()));
}

template <class T>
double nll_loss(const ParameterStore<T>& store, const TransflowerConfig& cfg,
                const std::vector<TrainingExample>& batch) {
    Tape<T> tape;
    ModelCtx<T> ctx{tape, store};
    return static_cast<double>(tape.val(nll_loss_var(ctx, cfg, batch))(0));
}

// Encoded prefix h for one window, as plain values (for rollout/sampling).
template <class T>
Tensor<T> encode_window_value(const ParameterStore<T>& store,
                              const TransflowerConfig& cfg, const ContextWindow& w) {
    Tape<T> tape;
    ModelCtx<T> ctx{tape, store};
    auto h = encode_context(ctx, cfg.encoder, tape.leaf(cast_tensor<T>(w.motion)),
                            tape.leaf(cast_tensor<T>(w.audio)));
    return tape.val(h);
}

// Autoregressive rollout: encode the context, sample N poses from the flow,
// feed back the first `stride`, slide. Inputs raw; output de-standardized.
template <class T>
MotionSequence rollout(const ParameterStore<T>& store, const TransflowerConfig& cfg,
                       const Standardizer& std_, const Tensor<double>& seed_motion,
                       const AudioFeatureSequence& audio, std::size_t length,
                       double tau, RngStream& rng, std::size_t stride = 1) {
    cfg.validate();
    if (stride < 1 || stride > cfg.n_pred())
        throw data_error("rollout: stride must be in [1, N]");
    MotionSequence out;
    out.fps = kFps;
    out.frames = Tensor<double>({length, kPoseDim});
    if (length == 0) return out;
    if (seed_motion.shape.empty() || seed_motion.shape[0] < 1)
        throw data_error("rollout: need at least one seed pose");

    const Tensor<double> seed_std = std_.apply_motion(seed_motion);
    const Tensor<double> audio_std = std_.apply_audio(audio.frames);
    const std::size_t n_seed = seed_std.shape[0];

    // timeline: frames [0, n_seed) are the seed, generated frames follow
    std::vector<std::array<double, kPoseDim>> hist(n_seed);
    for (std::size_t i = 0; i < n_seed; ++i)
        for (std::size_t j = 0; j < kPoseDim; ++j) hist[i][j] = seed_std(i, j);

    const WindowParams wp = cfg.window_params();
    std::size_t produced = 0;
    while (produced < length) {
        const long long i = static_cast<long long>(n_seed + produced);
        ContextWindow w;
        Tensor<double> hist_t({hist.size(), kPoseDim});
        for (std::size_t r = 0; r < hist.size(); ++r)
            for (std::size_t j = 0; j < kPoseDim; ++j) hist_t(r, j) = hist[r][j];
        w.motion = padded_rows(hist_t, i - static_cast<long long>(wp.k_x), wp.k_x);
        w.audio = padded_rows(audio_std,
                              i + static_cast<long long>(wp.n_pred) -
                                  static_cast<long long>(wp.k_m),
                              wp.k_m + wp.l_m);

        Tape<T> tape;
        ModelCtx<T> ctx{tape, store};
        typename Tape<T>::Var h = 0;
        bool has_h = false;
        if (cfg.flow.blocks > 0 && cfg.flow.cond_dim > 0) {
            h = encode_context(ctx, cfg.encoder, tape.leaf(cast_tensor<T>(w.motion)),
                               tape.leaf(cast_tensor<T>(w.audio)));
            has_h = true;
        }
        auto sample = flow_sample(ctx, cfg.flow, h, has_h, rng, tau);
        const auto& sv = tape.val(sample);
        const std::size_t take = std::min<std::size_t>(stride, length - produced);
        for (std::size_t r = 0; r < take; ++r) {
            std::array<double, kPoseDim> row;
            for (std::size_t j = 0; j < kPoseDim; ++j)
                row[j] = static_cast<double>(sv(r, j));
            hist.push_back(row);
            for (std::size_t j = 0; j < kPoseDim; ++j)
                out.frames(produced + r, j) = row[j];
        }
        produced += take;
    }
    out.frames = std_.invert_motion(out.frames);
    out.provenance = "rollout";
    return out;
}

// ---- deterministic regression head (ablation baseline) ----

// Per-prefix-row linear projection of h to pose space.
template <class T>
typename Tape<T>::Var det_head_var(ModelCtx<T>& ctx, const TransflowerConfig& cfg,
                                   const ContextWindow& w) {
    auto& tape = ctx.tape;
    auto h = encode_context(ctx, cfg.encoder, tape.leaf(cast_tensor<T>(w.motion)),
                            tape.leaf(cast_tensor<T>(w.audio)));
    return tape.add_rowvec(tape.matmul(h, ctx.p("det.w")), ctx.p("det.b"));
}

template <class T>
Tensor<double> det_head_predict(const ParameterStore<T>& store,
                                const TransflowerConfig& cfg, const ContextWindow& w) {
    Tape<T> tape;
    ModelCtx<T> ctx{tape, store};
    return to_double(tape.val(det_head_var(ctx, cfg, w)));
}

// Mean squared error over the batch, on one shared tape.
template <class T>
typename Tape<T>::Var det_mse_var(ModelCtx<T>& ctx, const TransflowerConfig& cfg,
                                  const std::vector<TrainingExample>& batch) {
    if (batch.empty()) throw data_error("det_mse: empty batch");
    auto& tape = ctx.tape;
    typename Tape<T>::Var acc = 0;
    for (std::size_t e = 0; e < batch.size(); ++e) {
        auto pred = det_head_var(ctx, cfg, batch[e].window);
        auto diff = tape.sub(pred, tape.leaf(cast_tensor<T>(batch[e].target)));
        auto mse = tape.mean_all(tape.mul(diff, diff));
        acc = (e == 0) ? mse : tape.add(acc, mse);
    }
    return tape.scale(acc, T(1) / T(batch.size()));
}

// Deterministic rollout with the regression head in place of the flow.
template <class T>
MotionSequence det_rollout(const ParameterStore<T>& store, const TransflowerConfig& cfg,
                           const Standardizer& std_, const Tensor<double>& seed_motion,
                           const AudioFeatureSequence& audio, std::size_t length,
                           std::size_t stride = 1) {
    cfg.validate();
    MotionSequence out;
    out.fps = kFps;
    out.frames = Tensor<double>({length, kPoseDim});
    if (length == 0) return out;

    const Tensor<double> seed_std = std_.apply_motion(seed_motion);
    const Tensor<double> audio_std = std_.apply_audio(audio.frames);
    const std::size_t n_seed = seed_std.shape[0];
    std::vector<std::array<double, kPoseDim>> hist(n_seed);
    for (std::size_t i = 0; i < n_seed; ++i)
        for (std::size_t j = 0; j < kPoseDim; ++j) hist[i][j] = seed_std(i, j);

    const WindowParams wp = cfg.window_params();
    std::size_t produced = 0;
    while (produced < length) {
        const long long i = static_cast<long long>(n_seed + produced);
        Tensor<double> hist_t({hist.size(), kPoseDim});
        for (std::size_t r = 0; r < hist.size(); ++r)
            for (std::size_t j = 0; j < kPoseDim; ++j) hist_t(r, j) = hist[r][j];
        ContextWindow w;
        w.motion = padded_rows(hist_t, i - static_cast<long long>(wp.k_x), wp.k_x);
        w.audio = padded_rows(audio_std,
                              i + static_cast<long long>(wp.n_pred) -
                                  static_cast<long long>(wp.k_m),
                              wp.k_m + wp.l_m);
        const Tensor<double> pred = det_head_predict(store, cfg, w);
        const std::size_t take = std::min<std::size_t>(stride, length - produced);
        for (std::size_t r = 0; r < take; ++r) {
            std::array<double, kPoseDim> row;
            for (std::size_t j = 0; j < kPoseDim; ++j) row[j] = pred(r, j);
            hist.push_back(row);
            for (std::size_t j = 0; j < kPoseDim; ++j)
                out.frames(produced + r, j) = row[j];
        }
        produced += take;
    }
    out.frames = std_.invert_motion(out.frames);
    out.provenance = "det_rollout";
    return out;
}

// Parameter count across the store (trainable tensors only).
template <class T>
std::size_t model_param_count(const ParameterStore<T>& store) {
    return store.param_count();
}

}  // namespace tf

// Conditional normalizing flow over the N x d_x future-pose tensor:
// blocks of {normalization, invertible 1x1 convolution, attention affine
// coupling}, with exact log-determinant accounting on the autodiff tape.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "transflower/core/linalg.hpp"
#include "transflower/encoder/transformer.hpp"

namespace tf {

enum class NormMode { actnorm, batchnorm };

struct FlowConfig {
    std::size_t blocks = 4;     // B
    std::size_t channels = 67;  // d_x
    std::size_t seq_len = 4;    // N
    std::size_t cond_dim = 64;  // d_h; 0 = unconditional
    TransformerConfig coupling; // f_ct (L_ac layers)
    NormMode norm_mode = NormMode::actnorm;
    double scale_clamp = 5.0;

    std::size_t split_lo() const { return channels / 2; }          // z' width
    std::size_t split_hi() const { return channels - channels / 2; }  // z'' width

    void validate() const {
        if (channels < 2) throw data_error("flow: channels must be >= 2");
        if (seq_len < 1) throw data_error("flow: seq_len must be >= 1");
        coupling.validate("f_ct");
    }
};

template <class T>
struct FlowStateVar {
    typename Tape<T>::Var z;       // N x d_x
    typename Tape<T>::Var logdet;  // scalar
};

namespace flow_detail {
inline std::string bp(std::size_t b) { return "flow.b" + std::to_string(b); }
}  // namespace flow_detail

// ---- parameter initialization ----

template <class T>
void init_flow_params(ParameterStore<T>& store, const FlowConfig& cfg, RngStream& rng) {
    cfg.validate();
    const std::size_t d = cfg.channels;
    using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        const std::string p = flow_detail::bp(b);

        if (cfg.norm_mode == NormMode::actnorm) {
            store.params[p + ".an.logs"] = Tensor<T>({d});
            store.params[p + ".an.bias"] = Tensor<T>({d});
            store.state[p + ".an.init"] = Tensor<T>({1});
        } else {
            store.state[p + ".bn.mean"] = Tensor<T>({d});
            store.state[p + ".bn.var"] = Tensor<T>({d}, T(1));
        }

        // invconv: W = P * L * (U + diag(sign .* exp(logdiag))), seeded from
        // a random orthogonal matrix so the initial logdet is ~0.
        Mat g(d, d);
        for (std::size_t i = 0; i < d * d; ++i) g(i / d, i % d) = rng.normal();
        Mat q = Eigen::HouseholderQR<Mat>(g).householderQ();
        Eigen::PartialPivLU<Mat> lu(q);
        Mat pmat = lu.permutationP().transpose();  // q = pmat * L * U
        Mat lum = lu.matrixLU();

        Tensor<T> pt({d, d}), lt({d, d}), ut({d, d}), sign({d}), logdiag({d});
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) {
                pt(i, j) = static_cast<T>(pmat(i, j));
                if (i > j) lt(i, j) = static_cast<T>(lum(i, j));
                if (i < j) ut(i, j) = static_cast<T>(lum(i, j));
            }
        for (std::size_t i = 0; i < d; ++i) {
            const double u = lum(i, i);
            sign(i) = static_cast<T>(u >= 0 ? 1 : -1);
            logdiag(i) = static_cast<T>(std::log(std::max(1e-12, std::abs(u))));
        }
        store.state[p + ".pc.P"] = pt;
        store.state[p + ".pc.sign"] = sign;
        store.params[p + ".pc.L"] = lt;
        store.params[p + ".pc.U"] = ut;
        store.params[p + ".pc.logdiag"] = logdiag;

        // coupling transformer over (z', h); final projection zero-initialized
        // so every coupling starts as the identity map.
        init_transformer_params(store, p + ".ct", cfg.coupling,
                                cfg.split_lo() + cfg.cond_dim, rng);
        store.params[p + ".ct.out.w"] =
            Tensor<T>({cfg.coupling.d_model, 2 * cfg.split_hi()});
        store.params[p + ".ct.out.b"] = Tensor<T>({2 * cfg.split_hi()});
    }
}

// ---- layer applications ----

namespace flow_detail {

template <class T>
Tensor<T> invconv_weight_value(const ParameterStore<T>& store, const std::string& p,
                               std::size_t d) {
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
    Mat pm(d, d), lm = Mat::Identity(d, d), um = Mat::Zero(d, d);
    const auto& pt = store.s(p + ".pc.P");
    const auto& lt = store.p(p + ".pc.L");
    const auto& ut = store.p(p + ".pc.U");
    const auto& sign = store.s(p + ".pc.sign");
    const auto& logdiag = store.p(p + ".pc.logdiag");
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            pm(i, j) = pt(i, j);
            if (i > j) lm(i, j) = lt(i, j);
            if (i < j) um(i, j) = ut(i, j);
        }
    for (std::size_t i = 0; i < d; ++i)
        um(i, i) = sign(i) * std::exp(logdiag(i));
    Mat w = pm * lm * um;
    Tensor<T> out({d, d});
    out.mat() = w;
    return out;
}

// Differentiable W assembly on the tape.
template <class T>
typename Tape<T>::Var invconv_weight_var(ModelCtx<T>& ctx, const std::string& p,
                                         std::size_t d) {
    auto& tape = ctx.tape;
    Tensor<T> lmask({d, d}), umask({d, d}), eye({d, d});
    for (std::size_t i = 0; i < d; ++i) {
        eye(i, i) = T(1);
        for (std::size_t j = 0; j < d; ++j) {
            if (i > j) lmask(i, j) = T(1);
            if (i < j) umask(i, j) = T(1);
        }
    }
    auto lfull = tape.add(tape.mul(ctx.p(p + ".pc.L"), tape.leaf(lmask)), tape.leaf(eye));
    auto dvec = tape.mul(tape.leaf(ctx.store.s(p + ".pc.sign")),
                         tape.exp_(ctx.p(p + ".pc.logdiag")));
    auto ufull = tape.add(tape.mul(ctx.p(p + ".pc.U"), tape.leaf(umask)), tape.diag(dvec));
    auto pleaf = tape.leaf(ctx.store.s(p + ".pc.P"));
    return tape.matmul(pleaf, tape.matmul(lfull, ufull));
}

}  // namespace flow_detail

template <class T>
FlowStateVar<T> norm_layer_apply(ModelCtx<T>& ctx, const FlowConfig& cfg, std::size_t b,
                                 FlowStateVar<T> st, bool inverse) {
    auto& tape = ctx.tape;
    const std::string p = flow_detail::bp(b);
    const T n = T(cfg.seq_len);
    if (cfg.norm_mode == NormMode::actnorm) {
        if (ctx.store.s(p + ".an.init")(0) == T(0))
            throw numeric_error("actnorm block " + std::to_string(b) +
                                " applied before data-dependent initialization");
        auto logs = ctx.p(p + ".an.logs");
        auto bias = ctx.p(p + ".an.bias");
        if (!inverse) {
            auto centered = tape.add_rowvec(st.z, tape.neg(bias));
            st.z = tape.mul_rowvec(centered, tape.exp_(logs));
            st.logdet = tape.add(st.logdet, tape.scale(tape.sum_all(logs), n));
        } else {
            auto scaled = tape.mul_rowvec(st.z, tape.exp_(tape.neg(logs)));
            st.z = tape.add_rowvec(scaled, bias);
            st.logdet = tape.add(st.logdet, tape.scale(tape.sum_all(logs), -n));
        }
    } else {
        // Running-stat batchnorm, stats entering the tape as constants; the
        // log-determinant uses the statistics actually applied.
        const auto& mean = ctx.store.s(p + ".bn.mean");
        const auto& var = ctx.store.s(p + ".bn.var");
        const std::size_t d = cfg.channels;
        Tensor<T> scale_v({d}), logsum = Tensor<T>::scalar(T(0));
        Tensor<T> mean_v = mean;
        for (std::size_t j = 0; j < d; ++j) {
            const T sd = std::sqrt(var(j) + T(1e-6));
            scale_v(j) = T(1) / sd;
            logsum.data[0] -= std::log(sd);
        }
        auto ld = tape.leaf(Tensor<T>::scalar(n * logsum.data[0]));
        if (!inverse) {
            auto centered = tape.add_rowvec(st.z, tape.neg(tape.leaf(mean_v)));
            st.z = tape.mul_rowvec(centered, tape.leaf(scale_v));
            st.logdet = tape.add(st.logdet, ld);
        } else {
            for (std::size_t j = 0; j < d; ++j) scale_v(j) = T(1) / scale_v(j);
            st.z = tape.add_rowvec(tape.mul_rowvec(st.z, tape.leaf(scale_v)),
                                   tape.leaf(mean_v));
            st.logdet = tape.sub(st.logdet, ld);
        }
    }
    return st;
}

template <class T>
FlowStateVar<T> invconv_apply(ModelCtx<T>& ctx, const FlowConfig& cfg, std::size_t b,
                              FlowStateVar<T> st, bool inverse) {
    auto& tape = ctx.tape;
    const std::string p = flow_detail::bp(b);
    const T n = T(cfg.seq_len);
    auto ld_term = tape.scale(tape.sum_all(ctx.p(p + ".pc.logdiag")), n);
    if (!inverse) {
        auto w = flow_detail::invconv_weight_var(ctx, p, cfg.channels);
        st.z = tape.matmul_nt(st.z, w);  // each row z_t <- W z_t
        st.logdet = tape.add(st.logdet, ld_term);
    } else {
        // inference path: dense solve on values
        Tensor<T> w = flow_detail::invconv_weight_value(ctx.store, p, cfg.channels);
        using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
        Mat wm = w.mat();
        Eigen::PartialPivLU<Mat> lu(wm);
        const auto& zv = tape.val(st.z);
        Tensor<T> out(zv.shape);
        for (std::size_t r = 0; r < zv.shape[0]; ++r) {
            Eigen::Matrix<T, Eigen::Dynamic, 1> row(cfg.channels);
            for (std::size_t j = 0; j < cfg.channels; ++j) row(j) = zv(r, j);
            Eigen::Matrix<T, Eigen::Dynamic, 1> x = lu.solve(row);
            for (std::size_t j = 0; j < cfg.channels; ++j) out(r, j) = x(j);
        }
        st.z = tape.leaf(std::move(out));
        st.logdet = tape.sub(st.logdet, ld_term);
    }
    return st;
}

template <class T>
FlowStateVar<T> coupling_apply(ModelCtx<T>& ctx, const FlowConfig& cfg, std::size_t b,
                               FlowStateVar<T> st, typename Tape<T>::Var h,
                               bool has_h, bool inverse) {
    auto& tape = ctx.tape;
    const std::string p = flow_detail::bp(b);
    const std::size_t d1 = cfg.split_lo(), d2 = cfg.split_hi();
    if (cfg.cond_dim > 0) {
        if (!has_h) throw data_error("coupling: conditioning tensor required");
        if (tape.val(h).shape[0] != cfg.seq_len)
            throw data_error("coupling: h row count " +
                             std::to_string(tape.val(h).shape[0]) + " != N " +
                             std::to_string(cfg.seq_len));
    }
    auto z1 = tape.slice_cols(st.z, 0, d1);
    auto z2 = tape.slice_cols(st.z, d1, d2);
    auto ct_in = (cfg.cond_dim > 0) ? tape.concat_cols(z1, h) : z1;
    auto enc = transformer_encode(ctx, p + ".ct", cfg.coupling, ct_in);
    auto proj = tape.add_rowvec(tape.matmul(enc, ctx.p(p + ".ct.out.w")),
                                ctx.p(p + ".ct.out.b"));
    auto raw_a = tape.clamp(tape.slice_cols(proj, 0, d2), T(-cfg.scale_clamp),
                            T(cfg.scale_clamp));
    auto shift = tape.slice_cols(proj, d2, d2);
    if (!inverse) {
        auto z2n = tape.add(tape.mul(tape.exp_(raw_a), z2), shift);
        st.z = tape.concat_cols(z1, z2n);
        st.logdet = tape.add(st.logdet, tape.sum_all(raw_a));
    } else {
        auto z2n = tape.mul(tape.sub(z2, shift), tape.exp_(tape.neg(raw_a)));
        st.z = tape.concat_cols(z1, z2n);
        st.logdet = tape.sub(st.logdet, tape.sum_all(raw_a));
    }
    return st;
}

// ---- whole-flow operations ----

template <class T>
FlowStateVar<T> flow_forward(ModelCtx<T>& ctx, const FlowConfig& cfg,
                             typename Tape<T>::Var x, typename Tape<T>::Var h,
                             bool has_h) {
    FlowStateVar<T> st{x, ctx.tape.leaf(Tensor<T>::scalar(T(0)))};
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        st = norm_layer_apply(ctx, cfg, b, st, false);
        st = invconv_apply(ctx, cfg, b, st, false);
        st = coupling_apply(ctx, cfg, b, st, h, has_h, false);
        if (!ctx.tape.val(st.z).all_finite())
            throw numeric_error("flow_forward: non-finite values after block " +
                                std::to_string(b));
    }
    return st;
}

template <class T>
typename Tape<T>::Var flow_inverse(ModelCtx<T>& ctx, const FlowConfig& cfg,
                                   typename Tape<T>::Var z, typename Tape<T>::Var h,
                                   bool has_h) {
    FlowStateVar<T> st{z, ctx.tape.leaf(Tensor<T>::scalar(T(0)))};
    for (std::size_t b = cfg.blocks; b-- > 0;) {
        st = coupling_apply(ctx, cfg, b, st, h, has_h, true);
        st = invconv_apply(ctx, cfg, b, st, true);
        st = norm_layer_apply(ctx, cfg, b, st, true);
        if (!ctx.tape.val(st.z).all_finite())
            throw numeric_error("flow_inverse: non-finite values after block " +
                                std::to_string(b));
    }
    return st.z;
}

// log N(z; 0, I) + logdet, summed over all N*d_x dimensions.
template <class T>
typename Tape<T>::Var flow_log_prob(ModelCtx<T>& ctx, const FlowConfig& cfg,
                                    typename Tape<T>::Var x, typename Tape<T>::Var h,
                                    bool has_h) {
    auto st = flow_forward(ctx, cfg, x, h, has_h);
    auto& tape = ctx.tape;
    auto quad = tape.scale(tape.sum_all(tape.mul(st.z, st.z)), T(-0.5));
    const T c = T(-0.5) * T(cfg.seq_len * cfg.channels) *
                T(1.8378770664093454836);  // log(2*pi)
    return tape.add_const(tape.add(quad, st.logdet), c);
}

// z ~ N(0, tau^2 I) through the stream, then the inverse flow.
template <class T>
typename Tape<T>::Var flow_sample(ModelCtx<T>& ctx, const FlowConfig& cfg,
                                  typename Tape<T>::Var h, bool has_h, RngStream& rng,
                                  double tau) {
    if (tau < 0.0) throw data_error("flow_sample: temperature must be >= 0");
    Tensor<T> z({cfg.seq_len, cfg.channels});
    for (auto& v : z.data) v = static_cast<T>(tau * rng.normal());
    return flow_inverse(ctx, cfg, ctx.tape.leaf(std::move(z)), h, has_h);
}

// Data-dependent actnorm initialization: per block, run the batch through
// the preceding blocks and set scale/shift so the block's input is
// per-channel zero-mean unit-std. Mutates the store.
template <class T>
void actnorm_initialize(ParameterStore<T>& store, const FlowConfig& cfg,
                        const std::vector<Tensor<T>>& xs,
                        const std::vector<Tensor<T>>& hs) {
    if (cfg.norm_mode != NormMode::actnorm) return;
    if (xs.empty()) throw data_error("actnorm_initialize: empty batch");
    const std::size_t d = cfg.channels;
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        std::vector<double> sum(d, 0.0), sumsq(d, 0.0);
        std::size_t n = 0;
        for (std::size_t e = 0; e < xs.size(); ++e) {
            Tape<T> tape;
            ModelCtx<T> ctx{tape, store};
            FlowStateVar<T> st{tape.leaf(xs[e]), tape.leaf(Tensor<T>::scalar(T(0)))};
            typename Tape<T>::Var h = hs.empty() ? 0 : tape.leaf(hs[e % hs.size()]);
            for (std::size_t k = 0; k < b; ++k) {
                st = norm_layer_apply(ctx, cfg, k, st, false);
                st = invconv_apply(ctx, cfg, k, st, false);
                st = coupling_apply(ctx, cfg, k, st, h, cfg.cond_dim > 0, false);
            }
            const auto& zv = tape.val(st.z);
            for (std::size_t r = 0; r < zv.shape[0]; ++r)
                for (std::size_t j = 0; j < d; ++j) {
                    sum[j] += zv(r, j);
                    sumsq[j] += zv(r, j) * zv(r, j);
                }
            n += zv.shape[0];
        }
        const std::string p = flow_detail::bp(b);
        Tensor<T>& logs = store.p(p + ".an.logs");
        Tensor<T>& bias = store.p(p + ".an.bias");
        for (std::size_t j = 0; j < d; ++j) {
            const double mu = sum[j] / double(n);
            const double var = std::max(1e-12, sumsq[j] / double(n) - mu * mu);
            bias(j) = static_cast<T>(mu);
            logs(j) = static_cast<T>(-0.5 * std::log(var));
        }
        store.s(p + ".an.init")(0) = T(1);
    }
}

// EMA update of batchnorm running stats from the inputs each norm layer
// actually sees. Called once per training batch in batchnorm mode.
template <class T>
void batchnorm_update_stats(ParameterStore<T>& store, const FlowConfig& cfg,
                            const std::vector<Tensor<T>>& xs,
                            const std::vector<Tensor<T>>& hs, double momentum = 0.1) {
    if (cfg.norm_mode != NormMode::batchnorm || xs.empty()) return;
    const std::size_t d = cfg.channels;
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        std::vector<double> sum(d, 0.0), sumsq(d, 0.0);
        std::size_t n = 0;
        for (std::size_t e = 0; e < xs.size(); ++e) {
            Tape<T> tape;
            ModelCtx<T> ctx{tape, store};
            FlowStateVar<T> st{tape.leaf(xs[e]), tape.leaf(Tensor<T>::scalar(T(0)))};
            typename Tape<T>::Var h = hs.empty() ? 0 : tape.leaf(hs[e % hs.size()]);
            for (std::size_t k = 0; k < b; ++k) {
                st = norm_layer_apply(ctx, cfg, k, st, false);
                st = invconv_apply(ctx, cfg, k, st, false);
                st = coupling_apply(ctx, cfg, k, st, h, cfg.cond_dim > 0, false);
            }
            const auto& zv = tape.val(st.z);
            for (std::size_t r = 0; r < zv.shape[0]; ++r)
                for (std::size_t j = 0; j < d; ++j) {
                    sum[j] += zv(r, j);
                    sumsq[j] += zv(r, j) * zv(r, j);
                }
            n += zv.shape[0];
        }
        const std::string p = flow_detail::bp(b);
        Tensor<T>& mean = store.s(p + ".bn.mean");
        Tensor<T>& var = store.s(p + ".bn.var");
        for (std::size_t j = 0; j < d; ++j) {
            const double mu = sum[j] / double(n);
            const double v = std::max(1e-12, sumsq[j] / double(n) - mu * mu);
            mean(j) = static_cast<T>((1.0 - momentum) * mean(j) + momentum * mu);
            var(j) = static_cast<T>((1.0 - momentum) * var(j) + momentum * v);
        }
    }
}

}  // namespace tf

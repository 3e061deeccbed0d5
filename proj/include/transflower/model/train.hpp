// Training loop: seeded shuffled mini-batches, Adam with milestone lr decay,
// global gradient-norm clipping, per-step loss trace. Also covers the
// deterministic-head MSE baseline and subset fine-tuning.
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "transflower/model/transflower.hpp"

namespace tf {

struct TrainSchedule {
    double lr = 7e-5;
    std::vector<std::size_t> milestones = {200000, 400000};  // step -> x0.1
    std::size_t total_steps = 600000;
    std::size_t batch_size = 4;
    std::uint64_t seed = 0;
    double grad_clip = 100.0;

    void validate() const {
        if (batch_size < 1) throw data_error("schedule: batch size must be >= 1");
        for (std::size_t i = 1; i < milestones.size(); ++i)
            if (milestones[i] <= milestones[i - 1])
                throw data_error("schedule: milestones must be strictly increasing");
    }

    double lr_at(std::size_t step) const {
        double v = lr;
        for (std::size_t m : milestones)
            if (step >= m) v *= 0.1;
        return v;
    }
};

struct TraceRow {
    std::size_t step;
    double lr;
    double nll;
};

inline void write_loss_trace(const std::string& path, const std::vector<TraceRow>& trace) {
    std::ofstream f(path);
    if (!f) throw data_error("write_loss_trace: cannot open " + path);
    f << "step,lr,nll\n";
    f.precision(17);
    for (const auto& r : trace) f << r.step << "," << r.lr << "," << r.nll << "\n";
}

namespace train_detail {

// Seed-determined batch order: reshuffle the index pool each epoch.
struct BatchSampler {
    std::vector<std::size_t> idx;
    std::size_t pos = 0;
    RngStream rng;

    BatchSampler(std::size_t n, std::uint64_t seed) : idx(n), rng(seed) {
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        shuffle();
    }
    void shuffle() {
        for (std::size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[rng.randint(i)]);
        pos = 0;
    }
    std::vector<std::size_t> next(std::size_t count) {
        std::vector<std::size_t> out;
        out.reserve(count);
        while (out.size() < count) {
            if (pos >= idx.size()) shuffle();
            out.push_back(idx[pos++]);
        }
        return out;
    }
};

template <class T>
void clip_gradients(std::map<std::string, Tensor<T>>& grads, double clip) {
    if (clip <= 0.0) return;
    double sq = 0.0;
    for (const auto& [n, g] : grads)
        for (T v : g.data) sq += double(v) * double(v);
    const double norm = std::sqrt(sq);
    if (norm > clip) {
        const T s = T(clip / norm);
        for (auto& [n, g] : grads)
            for (auto& v : g.data) v *= s;
    }
}

// Encoded conditioning values for a batch, used by actnorm initialization.
template <class T>
std::vector<Tensor<T>> encode_batch_h(const ParameterStore<T>& store,
                                      const TransflowerConfig& cfg,
                                      const std::vector<TrainingExample>& batch) {
    std::vector<Tensor<T>> hs;
    if (cfg.flow.blocks == 0 || cfg.flow.cond_dim == 0) return hs;
    for (const auto& ex : batch)
        hs.push_back(encode_window_value(store, cfg, ex.window));
    return hs;
}

}  // namespace train_detail

// Actnorm layers are data-initialized from the first batch the model sees.
template <class T>
void maybe_init_actnorm(ParameterStore<T>& store, const TransflowerConfig& cfg,
                        const std::vector<TrainingExample>& batch) {
    if (cfg.flow.blocks == 0 || cfg.flow.norm_mode != NormMode::actnorm) return;
    if (store.s("flow.b0.an.init")(0) != T(0)) return;
    std::vector<Tensor<T>> xs;
    for (const auto& ex : batch) xs.push_back(cast_tensor<T>(ex.target));
    actnorm_initialize(store, cfg.flow, xs,
                       train_detail::encode_batch_h(store, cfg, batch));
}

// NLL training with teacher forcing. `start_step` continues a resumed run;
// the trace records every optimizer step.
template <class T>
std::vector<TraceRow> train_loop(ParameterStore<T>& store, const TransflowerConfig& cfg,
                                 const std::vector<TrainingExample>& dataset,
                                 const TrainSchedule& sched, std::size_t steps,
                                 std::size_t start_step = 0) {
    sched.validate();
    if (dataset.empty()) throw data_error("train_loop: empty dataset");
    std::vector<TraceRow> trace;
    train_detail::BatchSampler sampler(dataset.size(), sched.seed);
    // keep the sampler stream aligned with the uninterrupted run on resume
    for (std::size_t s = 0; s < start_step; ++s) sampler.next(sched.batch_size);

    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t step = start_step + s + 1;
        std::vector<TrainingExample> batch;
        for (std::size_t i : sampler.next(sched.batch_size)) batch.push_back(dataset[i]);
        if (step == 1) maybe_init_actnorm(store, cfg, batch);

        Tape<T> tape;
        ModelCtx<T> ctx{tape, store};
        auto loss = nll_loss_var(ctx, cfg, batch);
        const double nll = double(tape.val(loss)(0));
        if (!std::isfinite(nll))
            throw numeric_error("train_loop: loss diverged at step " +
                                std::to_string(step));
        tape.backward(loss);
        auto grads = ctx.collect_grads();
        train_detail::clip_gradients(grads, sched.grad_clip);

        AdamConfig ac;
        ac.lr = sched.lr_at(step);
        adam_step(store, grads, ac);

        if (cfg.flow.norm_mode == NormMode::batchnorm && cfg.flow.blocks > 0) {
            std::vector<Tensor<T>> xs;
            for (const auto& ex : batch) xs.push_back(cast_tensor<T>(ex.target));
            batchnorm_update_stats(store, cfg.flow, xs,
                                   train_detail::encode_batch_h(store, cfg, batch));
        }
        trace.push_back({step, ac.lr, nll});
    }
    return trace;
}

// Same loop with the deterministic head's mean-squared-error objective;
// flow parameters are left untouched.
template <class T>
std::vector<TraceRow> train_deterministic(ParameterStore<T>& store,
                                          const TransflowerConfig& cfg,
                                          const std::vector<TrainingExample>& dataset,
                                          const TrainSchedule& sched, std::size_t steps) {
    sched.validate();
    if (dataset.empty()) throw data_error("train_deterministic: empty dataset");
    std::vector<TraceRow> trace;
    train_detail::BatchSampler sampler(dataset.size(), sched.seed);
    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t step = s + 1;
        std::vector<TrainingExample> batch;
        for (std::size_t i : sampler.next(sched.batch_size)) batch.push_back(dataset[i]);

        Tape<T> tape;
        ModelCtx<T> ctx{tape, store};
        auto loss = det_mse_var(ctx, cfg, batch);
        const double v = double(tape.val(loss)(0));
        if (!std::isfinite(v))
            throw numeric_error("train_deterministic: loss diverged at step " +
                                std::to_string(step));
        tape.backward(loss);
        auto grads = ctx.collect_grads();
        // only encoder + head parameters move under the MSE objective
        for (auto it = grads.begin(); it != grads.end();)
            it = (it->first.rfind("flow.", 0) == 0) ? grads.erase(it) : std::next(it);
        train_detail::clip_gradients(grads, sched.grad_clip);
        AdamConfig ac;
        ac.lr = sched.lr_at(step);
        adam_step(store, grads, ac);
        trace.push_back({step, ac.lr, v});
    }
    return trace;
}

// Continued training on a subset: same mechanics, fresh step counter for
// the lr schedule unless the caller passes the run's current step.
template <class T>
std::vector<TraceRow> fine_tune(ParameterStore<T>& store, const TransflowerConfig& cfg,
                                const std::vector<TrainingExample>& subset,
                                std::size_t steps, double lr, std::uint64_t seed) {
    if (steps == 0) return {};
    TrainSchedule sched;
    sched.lr = lr;
    sched.milestones.clear();
    sched.total_steps = steps;
    sched.seed = seed;
    return train_loop(store, cfg, subset, sched, steps);
}

}  // namespace tf

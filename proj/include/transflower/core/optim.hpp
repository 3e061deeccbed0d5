// Named parameter/state storage and the Adam update.
#pragma once

#include <cmath>
#include <map>
#include <string>

#include "transflower/core/error.hpp"
#include "transflower/core/tensor.hpp"

namespace tf {

template <class T>
struct AdamSlot {
    Tensor<T> m;
    Tensor<T> v;
    std::uint64_t step = 0;
};

// Trainable parameters plus non-trainable state (running stats, init flags,
// fixed permutations). Both participate in checkpoints; only `params` gets
// optimizer slots.
template <class T>
struct ParameterStore {
    std::map<std::string, Tensor<T>> params;
    std::map<std::string, Tensor<T>> state;
    std::map<std::string, AdamSlot<T>> adam;

    Tensor<T>& p(const std::string& name) {
        auto it = params.find(name);
        if (it == params.end()) throw data_error("unknown parameter: " + name);
        return it->second;
    }
    const Tensor<T>& p(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw data_error("unknown parameter: " + name);
        return it->second;
    }
    Tensor<T>& s(const std::string& name) {
        auto it = state.find(name);
        if (it == state.end()) throw data_error("unknown state tensor: " + name);
        return it->second;
    }
    const Tensor<T>& s(const std::string& name) const {
        auto it = state.find(name);
        if (it == state.end()) throw data_error("unknown state tensor: " + name);
        return it->second;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& [k, t] : params) n += t.size();
        return n;
    }
};

struct AdamConfig {
    double lr = 7e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction. Parameters without a gradient entry
// are left untouched.
template <class T>
void adam_step(ParameterStore<T>& store,
               const std::map<std::string, Tensor<T>>& grads,
               const AdamConfig& cfg) {
    for (const auto& [name, g] : grads) {
        auto it = store.params.find(name);
        if (it == store.params.end())
            throw data_error("adam_step: gradient for unknown parameter " + name);
        Tensor<T>& w = it->second;
        if (!w.same_shape(g))
            throw data_error("adam_step: shape mismatch for " + name + " " +
                             shape_str(w.shape) + " vs " + shape_str(g.shape));
        if (!g.all_finite())
            throw numeric_error("adam_step: non-finite gradient for " + name);

        AdamSlot<T>& slot = store.adam[name];
        if (slot.m.size() != w.size()) {
            slot.m = Tensor<T>(w.shape);
            slot.v = Tensor<T>(w.shape);
            slot.step = 0;
        }
        slot.step += 1;
        const T b1 = T(cfg.beta1), b2 = T(cfg.beta2);
        const T bc1 = T(1) - std::pow(b1, T(slot.step));
        const T bc2 = T(1) - std::pow(b2, T(slot.step));
        for (std::size_t i = 0; i < w.size(); ++i) {
            slot.m.data[i] = b1 * slot.m.data[i] + (T(1) - b1) * g.data[i];
            slot.v.data[i] = b2 * slot.v.data[i] + (T(1) - b2) * g.data[i] * g.data[i];
            const T mhat = slot.m.data[i] / bc1;
            const T vhat = slot.v.data[i] / bc2;
            w.data[i] -= T(cfg.lr) * mhat / (std::sqrt(vhat) + T(cfg.eps));
        }
    }
}

}  // namespace tf

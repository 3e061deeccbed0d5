// Reverse-mode autodiff over Tensor<T>, tape style. One tape per forward
// pass; parameters are registered as named leaves and their gradients are
// read back after backward(). Scoped to what the model needs, not a
// general-purpose autodiff system.
#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "transflower/core/error.hpp"
#include "transflower/core/rng.hpp"
#include "transflower/core/tensor.hpp"

namespace tf {

template <class T>
class Tape {
  public:
    using Var = std::size_t;

    Var leaf(Tensor<T> v) { return push(std::move(v)); }

    Var param(const std::string& name, const Tensor<T>& v) {
        Var id = push(v);
        nodes_[id].param_name = name;
        param_vars_.push_back(id);
        return id;
    }

    const Tensor<T>& val(Var v) const { return nodes_[v].val; }
    const Tensor<T>& grad(Var v) const { return nodes_[v].grad; }
    const std::vector<Var>& params() const { return param_vars_; }
    const std::string& param_name(Var v) const { return nodes_[v].param_name; }

    std::size_t size() const { return nodes_.size(); }

    // ---- elementwise ----

    Var add(Var a, Var b) {
        check_same(a, b, "add");
        Tensor<T> out = nodes_[a].val;
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += nodes_[b].val.data[i];
        Var id = push(std::move(out));
        nodes_[id].back = [this, id, a, b] {
            axpy(nodes_[a].grad, nodes_[id].grad, T(1));
            axpy(nodes_[b].grad, nodes_[id].grad, T(1));
        };
        return id;
    }

    Var sub(Var a, Var b) {
        check_same(a, b, "sub");
        Tensor<T> out = nodes_[a].val;
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] -= nodes_[b].val.data[i];
        Var id = push(std::move(out));
        nodes_[id].back = [this, id, a, b] {
            axpy(nodes_[a].grad, nodes_[id].grad, T(1));
            axpy(nodes_[b].grad, nodes_[id].grad, T(-1));
        };
        return id;
    }

    Var mul(Var a, Var b) {
        check_same(a, b, "mul");
        Tensor<T> out = nodes_[a].val;
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= nodes_[b].val.data[i];
        Var id = push(std::move(out));
        nodes_[id].back = [this, id, a, b] {
            const auto& g = nodes_[id].grad;
            for (std::size_t i = 0; i < g.size(); ++i) {
                nodes_[a].grad.data[i] += g.data[i] * nodes_[b].val.data[i];
                nodes_[b].grad.data[i] += g.data[i] * nodes_[a].val.data[i];
            }
        };
        return id;
    }

    Var scale(Var a, T c) {
        Tensor<T> out = nodes_[a].val;
        for (auto& v : out.data) v *= c;
        Var id = push(std::move(out));
        nodes_[id].back = [this, id, a, c] { axpy(nodes_[a].grad, nodes_[id].grad, c); };
        return id;
    }

    Var add_const(Var a, T c) {
        Tensor<T> out = nodes_[a].val;
        for (auto& v : out.data) v += c;
        Var id = push(std::move(out));
        nodes_[id].back = [this, id, a] { axpy(nodes_[a].grad, nodes_[id].grad, T(1)); };
        return id;
    }

    Var neg(Var a) { return scale(a, T(-1)); }

    Var exp_(Var a) {
        Tensor<T> out = nodes_[a].val;
        for (auto& v : out.data) v = std::exp(v);
        Var id = push(std::move(out));
        nodes_[id].back = [this, id, a] {
            const auto& g = nodes_[id].grad;
            for (std::size_t i = 0; i < g.size(); ++i)
                nodes_[a].grad.data[i] += g.data[i] * nodes_[id].val.data[i];
        };
        return id;
    }

    Var reciprocal(Var a) {
        Tensor<T> out = nodes_[a].val;
        for (auto& v : out.data) v = T(1) / v;
        Var id = push(std::move(out));
        nodes_[id].back = [this, id, a] {
            const auto& g = nodes_[id].grad;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const T y = nodes_[id].val.data[i];
                nodes_[a].grad.data[i] -= g.data[i] * y * y;
            }
        };
        return id;
    }

    Var clamp(Var a, T lo, T hi) {
        Tensor<T> out = nodes_[a].val;
        for (auto& v : out.data) v = std::min(hi, std::max(lo, v));
        Var id = push(std::move(out));
        nodes_[id].back = [this, id, a, lo, hi] {
            const auto& g = nodes_[id].grad;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const T x = nodes_[a].val.data[i];
                if (x > lo && x < hi) nodes_[a].grad.data[i] += g.data[i];
            }
        };
        return id;
    }

    Var gelu(Var a) {
        Tensor<T> out = nodes_[a].val;
        for (auto& v : out.data) {
            const T u = k * (v + T(0.044715) * v * v * v);
            v = T(0.5) * v * (T(1) + std::tanh(u));
        }
        Var id = push(std::move(out));
        nodes_[id].back = [this, id, a] {
            const auto& g = nodes_[id].grad;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const T x = nodes_[a].val.data[i];
                const T u = k * (x + T(0.044715) * x * x * x);
                const T t = std::tanh(u);
                const T du = k * (T(1) + T(3) * T(0.044715) * x * x);
                const T d = T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
                nodes_[a].grad.data[i] += g.data[i] * d;
            }
        };
        return id;
    }

    // Inverted dropout; identity when p == 0 or in eval mode.
    Var dropout(Var a, T p, RngStream& rng, bool training) {
        if (!training || p <= T(0)) return a;
        Tensor<T> mask(nodes_[a].val.shape);
        const T keep = T(1) - p;
        for (auto& m : mask.data) m = (rng.uniform() < static_cast<double>(keep)) ? T(1) / keep : T(0);
        Var mv = leaf(std::move(mask));
        return mul(a, mv);
    }

    // ---- row broadcast (bias / per-channel affine over rows) ----

    Var add_rowvec(Var a, Var b) {
        const auto& av = nodes_[a].val;
        const auto& bv = nodes_[b].val;
        const std::size_t c = av.shape.back();
        if (bv.size() != c) throw numeric_error("add_rowvec: width mismatch");
        Tensor<T> out = av;
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i % c];
        Var id = push(std::move(out));
        nodes_[id].back = [this, id, a, b, c] {
            const auto& g = nodes_[id].grad;
            axpy(nodes_[a].grad, g, T(1));
            for (std::size_t i = 0; i < g.size(); ++i)
                nodes_[b].grad.data[i % c] += g.data[i];
        };
        return id;
    }

    Var mul_rowvec(Var a, Var b) {
        const auto& av = nodes_[a].val;
        const auto& bv = nodes_[b].val;
        const std::size_t c = av.shape.back();
        if (bv.size() != c) throw numeric_error("mul_rowvec: width mismatch");
        Tensor<T> out = av;
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i % c];
        Var id = push(std::move(out));
        nodes_[id].back = [this, id, a, b, c] {
            const auto& g = nodes_[id].grad;
            for (std::size_t i = 0; i < g.size(); ++i) {
                nodes_[a].grad.data[i] += g.data[i] * nodes_[b].val.data[i % c];
                nodes_[b].grad.data[i % c] += g.data[i] * nodes_[a].val.data[i];
            }
        };
        return id;
    }

    // ---- matrix products ----

    Var matmul(Var a, Var b) {
        const auto& av = nodes_[a].val;
        const auto& bv = nodes_[b].val;
        if (av.shape[1] != bv.shape[0]) throw numeric_error("matmul: inner dim mismatch");
        Tensor<T> out({av.shape[0], bv.shape[1]});
        out.mat().noalias() = av.mat() * bv.mat();
        Var id = push(std::move(out));
        nodes_[id].back = [this, id, a, b] {
            const auto& g = nodes_[id].grad;
            nodes_[a].grad.mat().noalias() += g.mat() * nodes_[b].val.mat().transpose();
            nodes_[b].grad.mat().noalias() += nodes_[a].val.mat().transpose() * g.mat();
        };
        return id;
    }

    // a * b^T
    Var matmul_nt(Var a, Var b) {
        const auto& av = nodes_[a].val;
        const auto& bv = nodes_[b].val;
        if (av.shape[1] != bv.shape[1]) throw numeric_error("matmul_nt: inner dim mismatch");
        Tensor<T> out({av.shape[0], bv.shape[0]});
        out.mat().noalias() = av.mat() * bv.mat().transpose();
        Var id = push(std::move(out));
        nodes_[id].back = [this, id, a, b] {
            const auto& g = nodes_[id].grad;
            nodes_[a].grad.mat().noalias() += g.mat() * nodes_[b].val.mat();
            nodes_[b].grad.mat().noalias() += g.mat().transpose() * nodes_[a].val.mat();
        };
        return id;
    }

    // ---- reshaping / slicing ----

    Var slice_cols(Var a, std::size_t start, std::size_t len) {
        const auto& av = nodes_[a].val;
        const std::size_t r = av.shape[0];
        Tensor<T> out({r, len});
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < len; ++j) out(i, j) = av(i, start + j);
        Var id = push(std::move(out));
        nodes_[id].back = [this, id, a, start, len, r] {
            const auto& g = nodes_[id].grad;
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < len; ++j)
                    nodes_[a].grad(i, start + j) += g(i, j);
        };
        return id;
    }

    Var slice_rows(Var a, std::size_t start, std::size_t len) {
        const auto& av = nodes_[a].val;
        const std::size_t c = av.shape[1];
        Tensor<T> out({len, c});
        for (std::size_t i = 0; i < len; ++i)
            for (std::size_t j = 0; j < c; ++j) out(i, j) = av(start + i, j);
        Var id = push(std::move(out));
        nodes_[id].back = [this, id, a, start, len, c] {
            const auto& g = nodes_[id].grad;
            for (std::size_t i = 0; i < len; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    nodes_[a].grad(start + i, j) += g(i, j);
        };
        return id;
    }

    Var concat_cols(Var a, Var b) {
        const auto& av = nodes_[a].val;
        const auto& bv = nodes_[b].val;
        if (av.shape[0] != bv.shape[0]) throw numeric_error("concat_cols: row mismatch");
        const std::size_t r = av.shape[0], ca = av.shape[1], cb = bv.shape[1];
        Tensor<T> out({r, ca + cb});
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < ca; ++j) out(i, j) = av(i, j);
            for (std::size_t j = 0; j < cb; ++j) out(i, ca + j) = bv(i, j);
        }
        Var id = push(std::move(out));
        nodes_[id].back = [this, id, a, b, r, ca, cb] {
            const auto& g = nodes_[id].grad;
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < ca; ++j) nodes_[a].grad(i, j) += g(i, j);
                for (std::size_t j = 0; j < cb; ++j) nodes_[b].grad(i, j) += g(i, ca + j);
            }
        };
        return id;
    }

    Var concat_rows(Var a, Var b) {
        const auto& av = nodes_[a].val;
        const auto& bv = nodes_[b].val;
        if (av.shape[1] != bv.shape[1]) throw numeric_error("concat_rows: col mismatch");
        const std::size_t ra = av.shape[0], rb = bv.shape[0], c = av.shape[1];
        Tensor<T> out({ra + rb, c});
        for (std::size_t i = 0; i < ra * c; ++i) out.data[i] = av.data[i];
        for (std::size_t i = 0; i < rb * c; ++i) out.data[ra * c + i] = bv.data[i];
        Var id = push(std::move(out));
        nodes_[id].back = [this, id, a, b, ra, rb, c] {
            const auto& g = nodes_[id].grad;
            for (std::size_t i = 0; i < ra * c; ++i) nodes_[a].grad.data[i] += g.data[i];
            for (std::size_t i = 0; i < rb * c; ++i) nodes_[b].grad.data[i] += g.data[ra * c + i];
        };
        return id;
    }

    // Embed a vector as a diagonal matrix.
    Var diag(Var a) {
        const auto& av = nodes_[a].val;
        const std::size_t n = av.size();
        Tensor<T> out({n, n});
        for (std::size_t i = 0; i < n; ++i) out(i, i) = av.data[i];
        Var id = push(std::move(out));
        nodes_[id].back = [this, id, a, n] {
            for (std::size_t i = 0; i < n; ++i)
                nodes_[a].grad.data[i] += nodes_[id].grad(i, i);
        };
        return id;
    }

    // out[i] = table(row, idx[i]); scatter-add on backward. Used for the
    // relative-position bias lookup.
    Var gather_row(Var table, std::size_t row, std::vector<std::size_t> idx,
                   std::vector<std::size_t> out_shape) {
        const auto& tv = nodes_[table].val;
        Tensor<T> out(out_shape);
        for (std::size_t i = 0; i < idx.size(); ++i) out.data[i] = tv(row, idx[i]);
        Var id = push(std::move(out));
        nodes_[id].back = [this, id, table, row, idx = std::move(idx)] {
            const auto& g = nodes_[id].grad;
            for (std::size_t i = 0; i < idx.size(); ++i)
                nodes_[table].grad(row, idx[i]) += g.data[i];
        };
        return id;
    }

    // ---- row reductions / normalizations ----

    Var softmax_rows(Var a) {
        const auto& av = nodes_[a].val;
        const std::size_t r = av.shape[0], c = av.shape[1];
        Tensor<T> out = av;
        for (std::size_t i = 0; i < r; ++i) {
            T mx = out(i, 0);
            for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, out(i, j));
            T s = T(0);
            for (std::size_t j = 0; j < c; ++j) {
                out(i, j) = std::exp(out(i, j) - mx);
                s += out(i, j);
            }
            for (std::size_t j = 0; j < c; ++j) out(i, j) /= s;
        }
        Var id = push(std::move(out));
        nodes_[id].back = [this, id, a, r, c] {
            const auto& g = nodes_[id].grad;
            const auto& y = nodes_[id].val;
            for (std::size_t i = 0; i < r; ++i) {
                T dot = T(0);
                for (std::size_t j = 0; j < c; ++j) dot += g(i, j) * y(i, j);
                for (std::size_t j = 0; j < c; ++j)
                    nodes_[a].grad(i, j) += y(i, j) * (g(i, j) - dot);
            }
        };
        return id;
    }

    Var layernorm_rows(Var a, Var gamma, Var beta, T eps = T(1e-5)) {
        const auto& av = nodes_[a].val;
        const std::size_t r = av.shape[0], c = av.shape[1];
        Tensor<T> xhat({r, c});
        Tensor<T> inv_std({r});
        for (std::size_t i = 0; i < r; ++i) {
            T mu = T(0);
            for (std::size_t j = 0; j < c; ++j) mu += av(i, j);
            mu /= T(c);
            T var = T(0);
            for (std::size_t j = 0; j < c; ++j) {
                const T d = av(i, j) - mu;
                var += d * d;
            }
            var /= T(c);
            const T is = T(1) / std::sqrt(var + eps);
            inv_std.data[i] = is;
            for (std::size_t j = 0; j < c; ++j) xhat(i, j) = (av(i, j) - mu) * is;
        }
        Tensor<T> out({r, c});
        const auto& gv = nodes_[gamma].val;
        const auto& bv = nodes_[beta].val;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
                out(i, j) = gv.data[j] * xhat(i, j) + bv.data[j];
        Var id = push(std::move(out));
        nodes_[id].back = [this, id, a, gamma, beta, r, c,
                           xhat = std::move(xhat), inv_std = std::move(inv_std)] {
            const auto& g = nodes_[id].grad;
            const auto& gv = nodes_[gamma].val;
            for (std::size_t i = 0; i < r; ++i) {
                T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
                for (std::size_t j = 0; j < c; ++j) {
                    const T dxh = g(i, j) * gv.data[j];
                    sum_dxhat += dxh;
                    sum_dxhat_xhat += dxh * xhat(i, j);
                    nodes_[gamma].grad.data[j] += g(i, j) * xhat(i, j);
                    nodes_[beta].grad.data[j] += g(i, j);
                }
                const T m1 = sum_dxhat / T(c);
                const T m2 = sum_dxhat_xhat / T(c);
                for (std::size_t j = 0; j < c; ++j) {
                    const T dxh = g(i, j) * gv.data[j];
                    nodes_[a].grad(i, j) += inv_std.data[i] * (dxh - m1 - xhat(i, j) * m2);
                }
            }
        };
        return id;
    }

    Var sum_all(Var a) {
        T s = T(0);
        for (T v : nodes_[a].val.data) s += v;
        Var id = push(Tensor<T>::scalar(s));
        nodes_[id].back = [this, id, a] {
            const T g = nodes_[id].grad.data[0];
            for (auto& v : nodes_[a].grad.data) v += g;
        };
        return id;
    }

    Var mean_all(Var a) {
        return scale(sum_all(a), T(1) / T(nodes_[a].val.size()));
    }

    // ---- backward ----

    void backward(Var root) {
        if (nodes_[root].val.size() != 1)
            throw numeric_error("backward: root must be scalar");
        for (auto& n : nodes_) {
            n.grad = Tensor<T>(n.val.shape);
        }
        nodes_[root].grad.data[0] = T(1);
        for (std::size_t i = nodes_.size(); i-- > 0;)
            if (nodes_[i].back) nodes_[i].back();
    }

    void clear() {
        nodes_.clear();
        param_vars_.clear();
    }

  private:
    struct Node {
        Tensor<T> val;
        Tensor<T> grad;
        std::function<void()> back;
        std::string param_name;
    };

    std::vector<Node> nodes_;
    std::vector<Var> param_vars_;

    Var push(Tensor<T> v) {
        nodes_.push_back(Node{std::move(v), {}, nullptr, {}});
        return nodes_.size() - 1;
    }

    void check_same(Var a, Var b, const char* op) const {
        if (!nodes_[a].val.same_shape(nodes_[b].val))
            throw numeric_error(std::string(op) + ": shape mismatch " +
                                shape_str(nodes_[a].val.shape) + " vs " +
                                shape_str(nodes_[b].val.shape));
    }

    static void axpy(Tensor<T>& dst, const Tensor<T>& src, T c) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += c * src.data[i];
    }

    static constexpr T k = T(0.7978845608028653559);  // sqrt(2/pi), for gelu
};

}  // namespace tf

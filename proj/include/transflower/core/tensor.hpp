// Dense row-major n-d tensor used throughout the library.
#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tf {

template <class T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s, T fill = T(0))
        : shape(std::move(s)), data(count(shape), fill) {}

    static std::size_t count(const std::vector<std::size_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t(1),
                               std::multiplies<>());
    }

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<std::size_t> s, T v) { return Tensor(std::move(s), v); }
    static Tensor scalar(T v) {
        Tensor t({1});
        t.data[0] = v;
        return t;
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    // 2-d accessors (most of the model lives in matrices)
    std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
    std::size_t cols() const { return shape.size() == 2 ? shape[1] : size(); }

    T& operator()(std::size_t i) { return data[i]; }
    T operator()(std::size_t i) const { return data[i]; }
    T& operator()(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    T operator()(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    using EigenMap = Eigen::Map<
        Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    using ConstEigenMap = Eigen::Map<
        const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

    EigenMap mat() {
        assert(shape.size() == 2);
        return EigenMap(data.data(), static_cast<Eigen::Index>(shape[0]),
                        static_cast<Eigen::Index>(shape[1]));
    }
    ConstEigenMap mat() const {
        assert(shape.size() == 2);
        return ConstEigenMap(data.data(), static_cast<Eigen::Index>(shape[0]),
                             static_cast<Eigen::Index>(shape[1]));
    }
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace tf

// Linear-algebra helpers on top of Eigen: symmetric PSD square root,
// dense log|det|, and the central-difference gradient oracle.
#pragma once

#include <cmath>
#include <functional>

#include "transflower/core/error.hpp"
#include "transflower/core/tensor.hpp"

namespace tf {

// S with S*S ~= M, via symmetric eigendecomposition. Eigenvalues below zero
// are clamped to zero before the square root.
template <class T>
Tensor<T> sym_psd_sqrt(const Tensor<T>& m, T sym_tol = T(1e-8)) {
    if (m.rank() != 2 || m.shape[0] != m.shape[1])
        throw data_error("sym_psd_sqrt: input not square " + shape_str(m.shape));
    const std::size_t n = m.shape[0];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(m(i, j) - m(j, i)) > sym_tol)
                throw data_error("sym_psd_sqrt: input not symmetric at (" +
                                 std::to_string(i) + "," + std::to_string(j) + ")");

    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
    Mat a = m.mat().template cast<T>();
    a = T(0.5) * (a + a.transpose().eval());
    Eigen::SelfAdjointEigenSolver<Mat> es(a);
    Eigen::Matrix<T, Eigen::Dynamic, 1> d = es.eigenvalues();
    for (Eigen::Index i = 0; i < d.size(); ++i)
        d(i) = d(i) > T(0) ? std::sqrt(d(i)) : T(0);
    Mat s = es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();

    Tensor<T> out({n, n});
    out.mat() = s;
    return out;
}

// log|det M| via LU, used as the determinant oracle for the 1x1 convolutions.
template <class T>
T dense_log_abs_det(const Tensor<T>& m) {
    if (m.rank() != 2 || m.shape[0] != m.shape[1])
        throw data_error("dense_log_abs_det: input not square");
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
    Mat a = m.mat();
    Eigen::PartialPivLU<Mat> lu(a);
    T log_det = T(0);
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        log_det += std::log(std::abs(lu.matrixLU()(i, i)));
    return log_det;
}

// Central differences (f(x+h e_i) - f(x-h e_i)) / (2h) per coordinate.
template <class T>
Tensor<T> finite_diff_gradient(const std::function<T(const Tensor<T>&)>& f,
                               const Tensor<T>& x, T h) {
    Tensor<T> g(x.shape);
    Tensor<T> xp = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T xi = x.data[i];
        xp.data[i] = xi + h;
        const T fp = f(xp);
        xp.data[i] = xi - h;
        const T fm = f(xp);
        xp.data[i] = xi;
        if (!std::isfinite(static_cast<double>(fp)) ||
            !std::isfinite(static_cast<double>(fm)))
            throw numeric_error("finite_diff_gradient: non-finite evaluation at coord " +
                                std::to_string(i));
        g.data[i] = (fp - fm) / (T(2) * h);
    }
    return g;
}

}  // namespace tf

// Frechet distances between Gaussian moment fits: FPD on raw 67-dim poses,
// FMD on 201-dim stacks of three consecutive poses.
#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "transflower/core/linalg.hpp"
#include "transflower/features/types.hpp"

namespace tf {

struct GaussianMoments {
    Tensor<double> mean;  // d
    Tensor<double> cov;   // d x d, symmetric
};

// Sample mean and 1/n covariance, symmetrized.
inline GaussianMoments gaussian_moments(const Tensor<double>& samples) {
    if (samples.shape.size() != 2)
        throw data_error("gaussian_moments: expected an n x d matrix");
    const std::size_t n = samples.shape[0], d = samples.shape[1];
    if (n < 2) throw data_error("gaussian_moments: need at least 2 samples, got " +
                                std::to_string(n));
    GaussianMoments m;
    m.mean = Tensor<double>({d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) m.mean(j) += samples(i, j);
    for (std::size_t j = 0; j < d; ++j) m.mean(j) /= double(n);

    m.cov = Tensor<double>({d, d});
    Eigen::MatrixXd x(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) x(i, j) = samples(i, j) - m.mean(j);
    Eigen::MatrixXd c = (x.transpose() * x) / double(n);
    m.cov.mat() = 0.5 * (c + c.transpose());
    return m;
}

// ||mu_a - mu_b||^2 + tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2), clamped at 0.
inline double frechet_distance(const GaussianMoments& a, const GaussianMoments& b) {
    const std::size_t d = a.mean.size();
    if (b.mean.size() != d)
        throw data_error("frechet_distance: dimension mismatch (" + std::to_string(d) +
                         " vs " + std::to_string(b.mean.size()) + ")");
    double mean_term = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double diff = a.mean(j) - b.mean(j);
        mean_term += diff * diff;
    }
    const Tensor<double> sa = sym_psd_sqrt(a.cov);
    Tensor<double> inner({d, d});
    inner.mat() = sa.mat() * b.cov.mat() * sa.mat();
    inner.mat() = 0.5 * (inner.mat() + inner.mat().transpose().eval());
    const Tensor<double> cross = sym_psd_sqrt(inner);
    const double tr = a.cov.mat().trace() + b.cov.mat().trace() - 2.0 * cross.mat().trace();
    return std::max(0.0, mean_term + tr);
}

// All poses of a sequence set stacked into one n x 67 matrix.
inline Tensor<double> pose_matrix(const std::vector<MotionSequence>& set) {
    std::size_t n = 0;
    for (const auto& s : set) n += s.length();
    Tensor<double> out({n, kPoseDim});
    std::size_t r = 0;
    for (const auto& s : set)
        for (std::size_t i = 0; i < s.length(); ++i, ++r)
            for (std::size_t j = 0; j < kPoseDim; ++j) out(r, j) = s.frames(i, j);
    return out;
}

// 201-dim stacks (p_{i-1}, p_i, p_{i+1}) built per sequence, never across
// sequence boundaries.
inline Tensor<double> movement_matrix(const std::vector<MotionSequence>& set) {
    std::size_t n = 0;
    for (const auto& s : set)
        if (s.length() >= 3) n += s.length() - 2;
    Tensor<double> out({n, 3 * kPoseDim});
    std::size_t r = 0;
    for (const auto& s : set)
        for (std::size_t i = 1; i + 1 < s.length(); ++i, ++r)
            for (std::size_t k = 0; k < 3; ++k)
                for (std::size_t j = 0; j < kPoseDim; ++j)
                    out(r, k * kPoseDim + j) = s.frames(i - 1 + k, j);
    return out;
}

// FPD and FMD between two sequence sets on raw (de-standardized) features.
// Warns to `warning` when the sample count is below 5x the dimension.
inline std::pair<double, double> fpd_fmd(const std::vector<MotionSequence>& generated,
                                         const std::vector<MotionSequence>& reference,
                                         std::string* warning = nullptr) {
    const std::size_t min_frames = 3 * kPoseDim + 1;  // movement moments need n > d
    for (const auto* set : {&generated, &reference}) {
        std::size_t n = 0;
        for (const auto& s : *set) n += s.length();
        if (n < min_frames)
            throw data_error("fpd_fmd: set has " + std::to_string(n) + " frames, need >= " +
                             std::to_string(min_frames));
    }
    const auto gp = pose_matrix(generated), rp = pose_matrix(reference);
    const auto gm = movement_matrix(generated), rm = movement_matrix(reference);
    if (warning && (gm.shape[0] < 5 * 3 * kPoseDim || rm.shape[0] < 5 * 3 * kPoseDim))
        *warning = "movement moment estimate from fewer than 5x201 stacks; "
                   "FMD values are noisy";
    const double fpd = frechet_distance(gaussian_moments(gp), gaussian_moments(rp));
    const double fmd = frechet_distance(gaussian_moments(gm), gaussian_moments(rm));
    return {fpd, fmd};
}

}  // namespace tf

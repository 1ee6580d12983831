// Copyright 2026 tsdkit authors
// Licensed under the Apache License, Version 2.0 http://www.apache.org/licenses/LICENSE-2.0

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <new>
#include <numeric>
#include <string>
#include <vector>

namespace tsd::nn {

/// 64-byte-aligned allocator. Tensor buffers always carry the same alignment
/// so vectorized kernels take identical code paths run after run; without
/// this, heap-layout differences can flip last-ulp rounding and break the
/// bitwise reproducibility contracts.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    AlignedAllocator() noexcept = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{64}));
    }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, std::align_val_t{64}); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept {
        return true;
    }
    template <typename U>
    bool operator!=(const AlignedAllocator<U>&) const noexcept {
        return false;
    }
};

using AlignedDoubles = std::vector<double, AlignedAllocator<double>>;

/// Dense row-major tensor of doubles. Training runs entirely in 64-bit so
/// analytic gradients can be checked against central differences tightly.
struct Tensor {
    std::vector<int64_t> shape;
    AlignedDoubles v;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s) { resize(std::move(s)); }

    void resize(std::vector<int64_t> s) {
        shape = std::move(s);
        v.assign(static_cast<size_t>(numel()), 0.0);
    }

    int64_t numel() const {
        if (shape.empty()) return 0;
        return std::accumulate(shape.begin(), shape.end(), int64_t{1}, std::multiplies<>());
    }
    int64_t dim(size_t i) const { return shape[i]; }
    double* data() { return v.data(); }
    const double* data() const { return v.data(); }
    void zero() { std::fill(v.begin(), v.end(), 0.0); }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }
};

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

inline MatMap as_mat(Tensor& t, int64_t rows, int64_t cols) {
    return MatMap(t.data(), rows, cols);
}
inline ConstMatMap as_mat(const Tensor& t, int64_t rows, int64_t cols) {
    return ConstMatMap(t.data(), rows, cols);
}
inline VecMap as_vec(Tensor& t) { return VecMap(t.data(), t.numel()); }
inline ConstVecMap as_vec(const Tensor& t) { return ConstVecMap(t.data(), t.numel()); }

/// A named trainable value with its gradient accumulator.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    void init(std::string n, std::vector<int64_t> shape) {
        name = std::move(n);
        value.resize(shape);
        grad.resize(std::move(shape));
    }
};

} // namespace tsd::nn

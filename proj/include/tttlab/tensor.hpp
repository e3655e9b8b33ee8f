#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "tttlab/common.hpp"

namespace tttlab {

// Dense row-major tensor. Values are plain data; differentiation happens on
// the Tape, not here. Arithmetic entry points validate finiteness of their
// results; pure data-movement (patchify, gather, ...) does not, so poisoned
// inputs stay inert until they reach arithmetic.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    AlignedVec<T> data;

    Tensor() = default;

    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), T(0));
    }

    Tensor(std::vector<int> s, AlignedVec<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<size_t>(numel_of(shape)) != data.size())
            throw ShapeError("tensor: shape/data size mismatch");
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int e : s) {
            if (e <= 0) throw ShapeError("tensor: non-positive extent");
            n *= e;
        }
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }

    int rows() const { return shape.size() == 2 ? shape[0] : throw ShapeError("rows(): not 2-d"); }
    int cols() const { return shape.size() == 2 ? shape[1] : throw ShapeError("cols(): not 2-d"); }

    T& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
    const T& at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (const T& v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    void require_finite(const char* what) const {
        if (!all_finite()) throw NumericError(std::string("non-finite value in ") + what);
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<int> s, T v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    std::string shape_str() const {
        std::string r = "[";
        for (size_t i = 0; i < shape.size(); ++i)
            r += (i ? "," : "") + std::to_string(shape[i]);
        return r + "]";
    }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// ---- raw matmul kernels (row-major) -------------------------------------
// mm_nn: C[m,n] += A[m,k] * B[k,n]. ikj order: the j loop is a pure fused
// multiply-add over independent lanes, so it vectorizes under strict FP.
template <typename T>
void mm_nn_acc(const T* A, const T* B, T* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* a = A + static_cast<size_t>(i) * k;
        T* c = C + static_cast<size_t>(i) * n;
        for (int l = 0; l < k; ++l) {
            const T av = a[l];
            const T* b = B + static_cast<size_t>(l) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// mm_tn: C[m,n] += A[k,m]^T * B[k,n].
template <typename T>
void mm_tn_acc(const T* A, const T* B, T* C, int m, int k, int n) {
    for (int l = 0; l < k; ++l) {
        const T* a = A + static_cast<size_t>(l) * m;
        const T* b = B + static_cast<size_t>(l) * n;
        for (int i = 0; i < m; ++i) {
            const T av = a[i];
            T* c = C + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

template <typename T>
Tensor<T> matmul_val(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
        throw ShapeError("matmul: incompatible shapes " + a.shape_str() + " x " + b.shape_str());
    Tensor<T> c({a.shape[0], b.shape[1]});
    mm_nn_acc(a.data.data(), b.data.data(), c.data.data(), a.shape[0], a.shape[1], b.shape[1]);
    return c;
}

template <typename T>
Tensor<T> transpose_val(const Tensor<T>& a) {
    if (a.rank() != 2) throw ShapeError("transpose: not 2-d");
    Tensor<T> t({a.shape[1], a.shape[0]});
    for (int i = 0; i < a.shape[0]; ++i)
        for (int j = 0; j < a.shape[1]; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

}  // namespace tttlab

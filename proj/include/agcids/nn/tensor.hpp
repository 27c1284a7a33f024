#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "agcids/common.hpp"

namespace agcids::nn {

/// Dense row-major tensor of up to four dimensions: (N,C,H,W) or (N,D).
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s, T fill = T(0)) : shape(std::move(s)), data(count(shape), fill) {}

    static std::size_t count(const std::vector<std::size_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
    }

    std::size_t size() const { return data.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    std::size_t rank() const { return shape.size(); }
    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }
    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    /// Same data viewed with a new shape of equal element count.
    Tensor reshaped(std::vector<std::size_t> s) const {
        if (count(s) != size()) throw DataError("reshape: element count mismatch");
        Tensor t;
        t.shape = std::move(s);
        t.data = data;
        return t;
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool operator==(const Tensor&) const = default;
};

inline std::string shape_string(const std::vector<std::size_t>& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + ")";
}

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* who) {
    if (t.rank() != rank)
        throw DataError(std::string(who) + ": shape mismatch, got " + shape_string(t.shape) + ", expected rank " +
                        std::to_string(rank));
}

// ---------------------------------------------------------------------------
// Row-major GEMM kernels accumulating into C. The innermost loop always walks
// contiguous memory so the compiler can vectorize it.

/// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
    for (std::size_t i = 0; i < M; ++i) {
        T* c = C + i * N;
        for (std::size_t k = 0; k < K; ++k) {
            const T a = A[i * K + k];
            if (a == T(0)) continue;
            const T* b = B + k * N;
            for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
        }
    }
}

/// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
    for (std::size_t i = 0; i < M; ++i) {
        const T* a = A + i * K;
        for (std::size_t j = 0; j < N; ++j) {
            const T* b = B + j * K;
            T acc = T(0);
            for (std::size_t k = 0; k < K; ++k) acc += a[k] * b[k];
            C[i * N + j] += acc;
        }
    }
}

/// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C) {
    for (std::size_t k = 0; k < K; ++k) {
        const T* b = B + k * N;
        for (std::size_t i = 0; i < M; ++i) {
            const T a = A[k * M + i];
            if (a == T(0)) continue;
            T* c = C + i * N;
            for (std::size_t j = 0; j < N; ++j) c[j] += a * b[j];
        }
    }
}

} // namespace agcids::nn

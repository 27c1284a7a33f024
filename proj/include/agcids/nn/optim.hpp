#pragma once

#include <cmath>
#include <vector>

#include "agcids/nn/layers.hpp"

namespace agcids::nn {

template <typename T>
struct LossResult {
    T loss = T(0);
    Tensor<T> dlogits;
};

/// Mean over the batch of -ln softmax(logits)[label]; dlogits = (softmax - onehot) / N.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
    require_rank(logits, 2, "softmax_cross_entropy");
    const std::size_t N = logits.dim(0), K = logits.dim(1);
    if (labels.size() != N) throw DataError("softmax_cross_entropy: label count mismatch");
    LossResult<T> r{T(0), Tensor<T>(logits.shape)};
    double total = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        const int y = labels[n];
        if (y < 0 || static_cast<std::size_t>(y) >= K) throw DataError("softmax_cross_entropy: label out of range");
        const T* z = logits.ptr() + n * K;
        T* g = r.dlogits.ptr() + n * K;
        T m = z[0];
        for (std::size_t k = 1; k < K; ++k) m = std::max(m, z[k]);
        T sum = T(0);
        for (std::size_t k = 0; k < K; ++k) sum += g[k] = std::exp(z[k] - m);
        const T log_sum = std::log(sum);
        total += static_cast<double>(log_sum - (z[y] - m));
        for (std::size_t k = 0; k < K; ++k) g[k] = (g[k] / sum - (static_cast<int>(k) == y ? T(1) : T(0))) / static_cast<T>(N);
    }
    r.loss = static_cast<T>(total / static_cast<double>(N));
    return r;
}

struct SgdConfig {
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 1e-4;
};

/// v <- momentum*v + grad + weight_decay*param ; param <- param - lr*v
template <typename T>
void sgd_step(const std::vector<Param<T>*>& params, const SgdConfig& cfg) {
    const T lr = static_cast<T>(cfg.lr), mu = static_cast<T>(cfg.momentum), wd = static_cast<T>(cfg.weight_decay);
    for (auto* p : params) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            T& v = p->velocity[i];
            v = mu * v + p->grad[i] + wd * p->value[i];
            p->value[i] -= lr * v;
        }
    }
}

} // namespace agcids::nn

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "agcids/nn/tensor.hpp"

namespace agcids::nn {

template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> velocity;

    explicit Param(std::string n, std::vector<std::size_t> shape)
        : name(std::move(n)), value(shape), grad(shape), velocity(shape) {}
};

/// Activations a layer keeps from forward for its backward pass. Composite
/// layers nest their children's tapes.
template <typename T>
struct Tape {
    std::vector<Tensor<T>> saved;
    std::vector<Tape> children;
};

/// Layer contract: forward is const (safe for concurrent inference), backward
/// accumulates exact analytic parameter gradients and returns dL/dx when asked.
template <typename T>
class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor<T> forward(const Tensor<T>& x, Tape<T>& tape) const = 0;
    virtual Tensor<T> backward(const Tensor<T>& dy, const Tape<T>& tape, bool need_dx) = 0;
    virtual std::vector<Param<T>*> params() { return {}; }

    Tensor<T> infer(const Tensor<T>& x) const {
        Tape<T> t;
        return forward(x, t);
    }

    std::vector<const Param<T>*> params() const {
        auto ps = const_cast<Layer*>(this)->params();
        return {ps.begin(), ps.end()};
    }

    void zero_grad() {
        for (auto* p : params()) p->grad.fill(T(0));
    }
};

/// Kaiming-uniform fan-in initialization; biases start at zero.
template <typename T>
void kaiming_uniform(Tensor<T>& w, std::size_t fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : w.data) v = static_cast<T>(u(rng));
}

// ---------------------------------------------------------------------------

/// Cross-correlation with per-filter bias, weights (F,C,k,k).
template <typename T>
class Conv2d final : public Layer<T> {
public:
    Conv2d(std::size_t in, std::size_t out, std::size_t k, std::size_t stride, std::size_t pad)
        : in_(in), out_(out), k_(k), stride_(stride), pad_(pad), weight_("weight", {out, in, k, k}),
          bias_("bias", {out}) {}

    void init(Rng& rng) { kaiming_uniform(weight_.value, in_ * k_ * k_, rng); }

    std::size_t out_size(std::size_t n) const {
        if (n + 2 * pad_ < k_)
            throw DataError("conv2d: shape mismatch, input size " + std::to_string(n) + " smaller than kernel");
        return (n + 2 * pad_ - k_) / stride_ + 1;
    }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>& tape) const override {
        require_rank(x, 4, "conv2d");
        if (x.dim(1) != in_)
            throw DataError("conv2d: shape mismatch, input has " + std::to_string(x.dim(1)) + " channels, expected " +
                            std::to_string(in_));
        const std::size_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
        const std::size_t Ho = out_size(H), Wo = out_size(W);
        const std::size_t ckk = in_ * k_ * k_, hw = Ho * Wo;

        Tensor<T> cols({N, ckk, hw});
        Tensor<T> y({N, out_, Ho, Wo});
        for (std::size_t n = 0; n < N; ++n) {
            T* col = cols.ptr() + n * ckk * hw;
            im2col(x.ptr() + n * in_ * H * W, H, W, Ho, Wo, col);
            T* out = y.ptr() + n * out_ * hw;
            for (std::size_t f = 0; f < out_; ++f)
                std::fill(out + f * hw, out + (f + 1) * hw, bias_.value[f]);
            gemm_nn(out_, hw, ckk, weight_.value.ptr(), col, out);
        }
        tape.saved = {std::move(cols), Tensor<T>({N, in_, H, W})};
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, const Tape<T>& tape, bool need_dx) override {
        const auto& cols = tape.saved[0];
        const auto& in_shape = tape.saved[1].shape;
        const std::size_t N = in_shape[0], H = in_shape[2], W = in_shape[3];
        const std::size_t Ho = dy.dim(2), Wo = dy.dim(3);
        const std::size_t ckk = in_ * k_ * k_, hw = Ho * Wo;

        Tensor<T> dx;
        if (need_dx) dx = Tensor<T>(in_shape);
        std::vector<T> dcol(need_dx ? ckk * hw : 0);
        for (std::size_t n = 0; n < N; ++n) {
            const T* g = dy.ptr() + n * out_ * hw;
            for (std::size_t f = 0; f < out_; ++f) {
                T acc = T(0);
                for (std::size_t i = 0; i < hw; ++i) acc += g[f * hw + i];
                bias_.grad[f] += acc;
            }
            gemm_nt(out_, ckk, hw, g, cols.ptr() + n * ckk * hw, weight_.grad.ptr());
            if (need_dx) {
                std::fill(dcol.begin(), dcol.end(), T(0));
                gemm_tn(ckk, hw, out_, weight_.value.ptr(), g, dcol.data());
                col2im(dcol.data(), H, W, Ho, Wo, dx.ptr() + n * in_ * H * W);
            }
        }
        return dx;
    }

    std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }
    using Layer<T>::params;

    Param<T>& weight() { return weight_; }
    Param<T>& bias() { return bias_; }

private:
    void im2col(const T* x, std::size_t H, std::size_t W, std::size_t Ho, std::size_t Wo, T* col) const {
        const std::size_t hw = Ho * Wo;
        for (std::size_t c = 0; c < in_; ++c)
            for (std::size_t ki = 0; ki < k_; ++ki)
                for (std::size_t kj = 0; kj < k_; ++kj) {
                    T* row = col + ((c * k_ + ki) * k_ + kj) * hw;
                    for (std::size_t oh = 0; oh < Ho; ++oh) {
                        const auto ih = static_cast<std::ptrdiff_t>(oh * stride_ + ki) - static_cast<std::ptrdiff_t>(pad_);
                        for (std::size_t ow = 0; ow < Wo; ++ow) {
                            const auto iw =
                                static_cast<std::ptrdiff_t>(ow * stride_ + kj) - static_cast<std::ptrdiff_t>(pad_);
                            const bool inside = ih >= 0 && iw >= 0 && ih < static_cast<std::ptrdiff_t>(H) &&
                                                iw < static_cast<std::ptrdiff_t>(W);
                            row[oh * Wo + ow] =
                                inside ? x[(c * H + static_cast<std::size_t>(ih)) * W + static_cast<std::size_t>(iw)]
                                       : T(0);
                        }
                    }
                }
    }

    void col2im(const T* col, std::size_t H, std::size_t W, std::size_t Ho, std::size_t Wo, T* dx) const {
        const std::size_t hw = Ho * Wo;
        for (std::size_t c = 0; c < in_; ++c)
            for (std::size_t ki = 0; ki < k_; ++ki)
                for (std::size_t kj = 0; kj < k_; ++kj) {
                    const T* row = col + ((c * k_ + ki) * k_ + kj) * hw;
                    for (std::size_t oh = 0; oh < Ho; ++oh) {
                        const auto ih = static_cast<std::ptrdiff_t>(oh * stride_ + ki) - static_cast<std::ptrdiff_t>(pad_);
                        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                        for (std::size_t ow = 0; ow < Wo; ++ow) {
                            const auto iw =
                                static_cast<std::ptrdiff_t>(ow * stride_ + kj) - static_cast<std::ptrdiff_t>(pad_);
                            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
                            dx[(c * H + static_cast<std::size_t>(ih)) * W + static_cast<std::size_t>(iw)] +=
                                row[oh * Wo + ow];
                        }
                    }
                }
    }

    std::size_t in_, out_, k_, stride_, pad_;
    Param<T> weight_, bias_;
};

/// Affine map y = x W + b with W of shape (D,M).
template <typename T>
class Dense final : public Layer<T> {
public:
    Dense(std::size_t in, std::size_t out) : in_(in), out_(out), weight_("weight", {in, out}), bias_("bias", {out}) {}

    void init(Rng& rng) { kaiming_uniform(weight_.value, in_, rng); }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>& tape) const override {
        require_rank(x, 2, "dense");
        if (x.dim(1) != in_)
            throw DataError("dense: shape mismatch, input width " + std::to_string(x.dim(1)) + ", expected " +
                            std::to_string(in_));
        const std::size_t N = x.dim(0);
        Tensor<T> y({N, out_});
        for (std::size_t n = 0; n < N; ++n)
            std::copy(bias_.value.data.begin(), bias_.value.data.end(), y.data.begin() + static_cast<std::ptrdiff_t>(n * out_));
        gemm_nn(N, out_, in_, x.ptr(), weight_.value.ptr(), y.ptr());
        tape.saved = {x};
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, const Tape<T>& tape, bool need_dx) override {
        const auto& x = tape.saved[0];
        const std::size_t N = x.dim(0);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t m = 0; m < out_; ++m) bias_.grad[m] += dy[n * out_ + m];
        gemm_tn(in_, out_, N, x.ptr(), dy.ptr(), weight_.grad.ptr());
        Tensor<T> dx;
        if (need_dx) {
            dx = Tensor<T>({N, in_});
            gemm_nt(N, in_, out_, dy.ptr(), weight_.value.ptr(), dx.ptr());
        }
        return dx;
    }

    std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }
    using Layer<T>::params;

    Param<T>& weight() { return weight_; }
    Param<T>& bias() { return bias_; }

private:
    std::size_t in_, out_;
    Param<T> weight_, bias_;
};

template <typename T>
class ReLU final : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, Tape<T>& tape) const override {
        Tensor<T> y = x;
        for (auto& v : y.data) v = v > T(0) ? v : T(0);
        tape.saved = {y};
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy, const Tape<T>& tape, bool) override {
        Tensor<T> dx = dy;
        const auto& y = tape.saved[0];
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (!(y[i] > T(0))) dx[i] = T(0);
        return dx;
    }
};

/// (N,C,H,W) -> (N,C) spatial mean.
template <typename T>
class GlobalAvgPool final : public Layer<T> {
public:
    Tensor<T> forward(const Tensor<T>& x, Tape<T>& tape) const override {
        require_rank(x, 4, "global_avg_pool");
        const std::size_t N = x.dim(0), C = x.dim(1), hw = x.dim(2) * x.dim(3);
        Tensor<T> y({N, C});
        for (std::size_t i = 0; i < N * C; ++i) {
            T acc = T(0);
            for (std::size_t j = 0; j < hw; ++j) acc += x[i * hw + j];
            y[i] = acc / static_cast<T>(hw);
        }
        tape.saved = {Tensor<T>(x.shape)};
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy, const Tape<T>& tape, bool) override {
        const auto& shape = tape.saved[0].shape;
        const std::size_t hw = shape[2] * shape[3];
        Tensor<T> dx(shape);
        for (std::size_t i = 0; i < dy.size(); ++i) {
            const T g = dy[i] / static_cast<T>(hw);
            for (std::size_t j = 0; j < hw; ++j) dx[i * hw + j] = g;
        }
        return dx;
    }
};

/// Runs children in order.
template <typename T>
class Chain final : public Layer<T> {
public:
    Chain() = default;
    void add(std::unique_ptr<Layer<T>> l) { layers_.push_back(std::move(l)); }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>& tape) const override {
        tape.children.assign(layers_.size(), Tape<T>{});
        Tensor<T> h = x;
        for (std::size_t i = 0; i < layers_.size(); ++i) h = layers_[i]->forward(h, tape.children[i]);
        return h;
    }
    Tensor<T> backward(const Tensor<T>& dy, const Tape<T>& tape, bool need_dx) override {
        Tensor<T> g = dy;
        for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g, tape.children[i], need_dx || i > 0);
        return g;
    }
    std::vector<Param<T>*> params() override {
        std::vector<Param<T>*> out;
        for (auto& l : layers_)
            for (auto* p : l->params()) out.push_back(p);
        return out;
    }
    using Layer<T>::params;

    Layer<T>& at(std::size_t i) { return *layers_.at(i); }

private:
    std::vector<std::unique_ptr<Layer<T>>> layers_;
};

} // namespace agcids::nn

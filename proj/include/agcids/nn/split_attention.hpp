#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "agcids/nn/layers.hpp"

namespace agcids::nn {

/// Radix-wise attention normalization on (N, r*C) logits laid out radix-major
/// (index r_i*C + c). Softmax across radix for r > 1, sigmoid for r = 1.
template <typename T>
class RSoftmax final : public Layer<T> {
public:
    RSoftmax(std::size_t radix, std::size_t channels) : radix_(radix), channels_(channels) {
        if (radix_ < 1) throw PreconditionError("rsoftmax: radix must be >= 1");
    }

    Tensor<T> forward(const Tensor<T>& x, Tape<T>& tape) const override {
        require_rank(x, 2, "rsoftmax");
        if (x.dim(1) != radix_ * channels_) throw DataError("rsoftmax: shape mismatch, got " + shape_string(x.shape));
        Tensor<T> y(x.shape);
        const std::size_t N = x.dim(0), C = channels_, R = radix_;
        for (std::size_t n = 0; n < N; ++n) {
            const T* in = x.ptr() + n * R * C;
            T* out = y.ptr() + n * R * C;
            for (std::size_t c = 0; c < C; ++c) {
                if (R == 1) {
                    out[c] = T(1) / (T(1) + std::exp(-in[c]));
                    continue;
                }
                T m = in[c];
                for (std::size_t r = 1; r < R; ++r) m = std::max(m, in[r * C + c]);
                T z = T(0);
                for (std::size_t r = 0; r < R; ++r) z += out[r * C + c] = std::exp(in[r * C + c] - m);
                for (std::size_t r = 0; r < R; ++r) out[r * C + c] /= z;
            }
        }
        tape.saved = {y};
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, const Tape<T>& tape, bool) override {
        const auto& y = tape.saved[0];
        Tensor<T> dx(y.shape);
        const std::size_t N = y.dim(0), C = channels_, R = radix_;
        for (std::size_t n = 0; n < N; ++n) {
            const std::size_t o = n * R * C;
            for (std::size_t c = 0; c < C; ++c) {
                if (R == 1) {
                    const T s = y[o + c];
                    dx[o + c] = dy[o + c] * s * (T(1) - s);
                    continue;
                }
                T dot = T(0);
                for (std::size_t r = 0; r < R; ++r) dot += y[o + r * C + c] * dy[o + r * C + c];
                for (std::size_t r = 0; r < R; ++r) {
                    const std::size_t i = o + r * C + c;
                    dx[i] = y[i] * (dy[i] - dot);
                }
            }
        }
        return dx;
    }

private:
    std::size_t radix_, channels_;
};

/// Split-attention block, cardinality 1:
///   a_i = ReLU(conv3x3_i(x))            i = 0..r-1
///   U = sum a_i ; s = GAP(U) ; z = ReLU(fc1(s)) ; w = rsoftmax(fc2(z))
///   y = ReLU(sum_i w_i * a_i + shortcut(x))
template <typename T>
class SplitAttention final : public Layer<T> {
public:
    SplitAttention(std::size_t in, std::size_t out, std::size_t radix, std::size_t stride)
        : in_(in), out_(out), radix_(radix), stride_(stride), fc1_(out, std::max<std::size_t>(1, out / 4)),
          fc2_(std::max<std::size_t>(1, out / 4), radix * out), rsoftmax_(radix, out) {
        for (std::size_t i = 0; i < radix_; ++i) convs_.push_back(std::make_unique<Conv2d<T>>(in, out, 3, stride, 1));
        if (in != out || stride != 1) shortcut_ = std::make_unique<Conv2d<T>>(in, out, 1, stride, 0);
    }

    void init(Rng& rng) {
        for (auto& c : convs_) c->init(rng);
        fc1_.init(rng);
        fc2_.init(rng);
        if (shortcut_) shortcut_->init(rng);
    }

    // Tape children: [conv_i, relu_i]*r, gap, fc1, relu, fc2, rsoftmax, shortcut?
    Tensor<T> forward(const Tensor<T>& x, Tape<T>& tape) const override {
        require_rank(x, 4, "split_attention");
        if (x.dim(1) != in_) throw DataError("split_attention: shape mismatch, got " + shape_string(x.shape));
        tape.children.assign(2 * radix_ + 6, Tape<T>{});
        auto* ch = tape.children.data();

        std::vector<const Tensor<T>*> splits;
        Tensor<T> u;
        for (std::size_t i = 0; i < radix_; ++i) {
            relu_.forward(convs_[i]->forward(x, ch[2 * i]), ch[2 * i + 1]);
            const auto& a = ch[2 * i + 1].saved[0];
            splits.push_back(&a);
            if (i == 0) u = a;
            else
                for (std::size_t j = 0; j < u.size(); ++j) u[j] += a[j];
        }
        const std::size_t b = 2 * radix_;
        auto s = gap_.forward(u, ch[b]);
        auto z = relu_.forward(fc1_.forward(s, ch[b + 1]), ch[b + 2]);
        auto w = rsoftmax_.forward(fc2_.forward(z, ch[b + 3]), ch[b + 4]);

        Tensor<T> y = shortcut_ ? shortcut_->forward(x, ch[b + 5]) : x;
        const std::size_t N = u.dim(0), C = out_, hw = u.dim(2) * u.dim(3);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t i = 0; i < radix_; ++i)
                for (std::size_t c = 0; c < C; ++c) {
                    const T wi = w[n * radix_ * C + i * C + c];
                    const T* a = splits[i]->ptr() + (n * C + c) * hw;
                    T* o = y.ptr() + (n * C + c) * hw;
                    for (std::size_t p = 0; p < hw; ++p) o[p] += wi * a[p];
                }
        for (auto& v : y.data) v = v > T(0) ? v : T(0);
        tape.saved = {y};
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, const Tape<T>& tape, bool need_dx) override {
        const auto* ch = tape.children.data();
        const auto& y = tape.saved[0];
        const std::size_t b = 2 * radix_;
        const auto& w = ch[b + 4].saved[0];
        const std::size_t N = y.dim(0), C = out_, hw = y.dim(2) * y.dim(3);

        Tensor<T> ds = dy;
        for (std::size_t j = 0; j < ds.size(); ++j)
            if (!(y[j] > T(0))) ds[j] = T(0);

        Tensor<T> dw(w.shape);
        std::vector<Tensor<T>> da(radix_, Tensor<T>(y.shape));
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t i = 0; i < radix_; ++i)
                for (std::size_t c = 0; c < C; ++c) {
                    const std::size_t wi = n * radix_ * C + i * C + c;
                    const std::size_t off = (n * C + c) * hw;
                    const T* a = ch[2 * i + 1].saved[0].ptr() + off;
                    const T* g = ds.ptr() + off;
                    T* d = da[i].ptr() + off;
                    T acc = T(0);
                    for (std::size_t p = 0; p < hw; ++p) {
                        acc += a[p] * g[p];
                        d[p] = w[wi] * g[p];
                    }
                    dw[wi] = acc;
                }

        auto dl = rsoftmax_.backward(dw, ch[b + 4], true);
        auto dz = fc2_.backward(dl, ch[b + 3], true);
        dz = relu_.backward(dz, ch[b + 2], true);
        auto dsq = fc1_.backward(dz, ch[b + 1], true);
        auto du = gap_.backward(dsq, ch[b], true);

        Tensor<T> dx;
        if (shortcut_) dx = shortcut_->backward(ds, ch[b + 5], need_dx);
        else if (need_dx) dx = ds;
        for (std::size_t i = 0; i < radix_; ++i) {
            for (std::size_t j = 0; j < du.size(); ++j) da[i][j] += du[j];
            auto g = relu_.backward(da[i], ch[2 * i + 1], true);
            auto gx = convs_[i]->backward(g, ch[2 * i], need_dx);
            if (need_dx)
                for (std::size_t j = 0; j < dx.size(); ++j) dx[j] += gx[j];
        }
        return dx;
    }

    std::vector<Param<T>*> params() override {
        std::vector<Param<T>*> out;
        for (auto& c : convs_)
            for (auto* p : c->params()) out.push_back(p);
        for (auto* p : fc1_.params()) out.push_back(p);
        for (auto* p : fc2_.params()) out.push_back(p);
        if (shortcut_)
            for (auto* p : shortcut_->params()) out.push_back(p);
        return out;
    }
    using Layer<T>::params;

    Conv2d<T>& conv(std::size_t i) { return *convs_.at(i); }
    Dense<T>& fc2() { return fc2_; }
    bool has_projection() const { return shortcut_ != nullptr; }

    /// Attention weights (N, r*C) for input x.
    Tensor<T> attention(const Tensor<T>& x) const {
        Tape<T> t;
        forward(x, t);
        return t.children[2 * radix_ + 4].saved[0];
    }

private:
    std::size_t in_, out_, radix_, stride_;
    std::vector<std::unique_ptr<Conv2d<T>>> convs_;
    Dense<T> fc1_, fc2_;
    RSoftmax<T> rsoftmax_;
    ReLU<T> relu_;
    GlobalAvgPool<T> gap_;
    std::unique_ptr<Conv2d<T>> shortcut_;
};

} // namespace agcids::nn

#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "agcids/nn/layers.hpp"

namespace agcids::nn {

inline double relative_error(double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

struct GradCheckResult {
    double max_param_error = 0.0;
    double max_input_error = 0.0;
    double max_error() const { return std::max(max_param_error, max_input_error); }
};

/// Central finite differences against the analytic backward, over every
/// parameter and input element. The scalar objective is a fixed random
/// projection of the layer output.
inline GradCheckResult finite_diff_check(Layer<double>& layer, const Tensor<double>& input, double eps = 1e-5,
                                         std::uint64_t seed = 7) {
    Rng rng(seed);
    Tensor<double> proj(layer.infer(input).shape);
    for (auto& v : proj.data) v = uniform(rng, -1.0, 1.0);

    auto objective = [&](const Tensor<double>& x) {
        const auto y = layer.infer(x);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += proj[i] * y[i];
        return s;
    };

    layer.zero_grad();
    Tape<double> tape;
    layer.forward(input, tape);
    const auto dx = layer.backward(proj, tape, true);

    GradCheckResult r;
    for (auto* p : layer.params()) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double keep = p->value[i];
            p->value[i] = keep + eps;
            const double up = objective(input);
            p->value[i] = keep - eps;
            const double down = objective(input);
            p->value[i] = keep;
            r.max_param_error = std::max(r.max_param_error, relative_error(p->grad[i], (up - down) / (2 * eps)));
        }
    }
    Tensor<double> x = input;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + eps;
        const double up = objective(x);
        x[i] = keep - eps;
        const double down = objective(x);
        x[i] = keep;
        r.max_input_error = std::max(r.max_input_error, relative_error(dx[i], (up - down) / (2 * eps)));
    }
    return r;
}

} // namespace agcids::nn

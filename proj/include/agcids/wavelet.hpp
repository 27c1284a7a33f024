#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "agcids/common.hpp"

namespace agcids::wavelet {

/// Full Haar wavelet packet tree. nodes[d][k] is the k-th node (natural,
/// Paley order) at depth d; nodes[0][0] is the input.
struct WaveletPacketTree {
    int level = 0;
    std::vector<std::vector<std::vector<double>>> nodes;

    const std::vector<double>& node(int depth, int index) const { return nodes.at(depth).at(index); }
    const std::vector<std::vector<double>>& leaves() const { return nodes.back(); }
};

inline constexpr double kHaar = std::numbers::sqrt2 / 2.0;

/// One orthonormal Haar analysis step: low = (x0+x1)/sqrt2, high = (x0-x1)/sqrt2.
inline void haar_split(std::span<const double> x, std::vector<double>& low, std::vector<double>& high) {
    const std::size_t half = x.size() / 2;
    low.resize(half);
    high.resize(half);
    for (std::size_t i = 0; i < half; ++i) {
        low[i] = kHaar * (x[2 * i] + x[2 * i + 1]);
        high[i] = kHaar * (x[2 * i] - x[2 * i + 1]);
    }
}

inline WaveletPacketTree wp_decompose(std::span<const double> series, int level) {
    if (level < 1) throw PreconditionError("wavelet packet level must be >= 1");
    const std::size_t block = std::size_t{1} << level;
    if (series.empty() || series.size() % block != 0)
        throw DataError("shape error: series length " + std::to_string(series.size()) + " not divisible by 2^" +
                        std::to_string(level));

    WaveletPacketTree tree;
    tree.level = level;
    tree.nodes.resize(static_cast<std::size_t>(level) + 1);
    tree.nodes[0].emplace_back(series.begin(), series.end());
    for (int d = 0; d < level; ++d) {
        auto& next = tree.nodes[static_cast<std::size_t>(d) + 1];
        next.resize(std::size_t{2} << d);
        for (std::size_t k = 0; k < tree.nodes[static_cast<std::size_t>(d)].size(); ++k)
            haar_split(tree.nodes[static_cast<std::size_t>(d)][k], next[2 * k], next[2 * k + 1]);
    }
    return tree;
}

/// Frequency-ordered position -> natural (Paley) leaf index.
inline std::size_t gray_code(std::size_t n) { return n ^ (n >> 1); }

/// Leaf energies in natural tree order.
inline std::vector<double> leaf_energies_natural(const WaveletPacketTree& tree) {
    std::vector<double> e;
    e.reserve(tree.leaves().size());
    for (const auto& leaf : tree.leaves()) {
        double s = 0.0;
        for (double c : leaf) s += c * c;
        e.push_back(s);
    }
    return e;
}

/// Leaf energies ordered from lowest to highest frequency band.
inline std::vector<double> subband_energies(const WaveletPacketTree& tree) {
    const auto natural = leaf_energies_natural(tree);
    std::vector<double> freq(natural.size(), 0.0);
    for (std::size_t f = 0; f < natural.size(); ++f) freq[f] = natural[gray_code(f)];
    return freq;
}

inline constexpr int kFrequencyLevel = 3;
inline constexpr std::size_t kFrequencyFeatureCount = 11;

/// Features 14..24: eight band ratios, log(1+E), normalized spectral entropy,
/// and the upper-half band ratio.
inline std::array<double, kFrequencyFeatureCount> frequency_features(std::span<const double> series) {
    const auto tree = wp_decompose(series, kFrequencyLevel);
    const auto energies = subband_energies(tree);
    double total = 0.0;
    for (double e : energies) total += e;

    std::array<double, kFrequencyFeatureCount> f{};
    f[8] = std::log1p(total);
    if (!(total > 0.0)) return f;

    double entropy = 0.0;
    double high = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
        const double p = energies[i] / total;
        f[i] = p;
        if (p > 0.0) entropy -= p * std::log(p);
        if (i >= 4) high += energies[i];
    }
    f[9] = std::clamp(entropy / std::log(8.0), 0.0, 1.0);
    f[10] = high / total;
    return f;
}

} // namespace agcids::wavelet

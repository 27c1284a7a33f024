#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "agcids/common.hpp"
#include "agcids/packet.hpp"

namespace agcids::metrics {

/// Binary confusion counts, anomalous = positive.
struct ConfusionMatrix {
    std::uint64_t tp = 0, fn = 0, fp = 0, tn = 0;
    std::uint64_t total() const { return tp + fn + fp + tn; }
    bool operator==(const ConfusionMatrix&) const = default;
};

template <typename P, typename L>
ConfusionMatrix confusion(const std::vector<P>& predictions, const std::vector<L>& labels) {
    if (predictions.size() != labels.size())
        throw DataError("confusion: length mismatch, " + std::to_string(predictions.size()) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
    if (predictions.empty()) throw DataError("confusion: empty input");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto p = static_cast<int>(predictions[i]), l = static_cast<int>(labels[i]);
        if (p < 0 || p > 1 || l < 0 || l > 1) throw DataError("confusion: non-binary value at index " + std::to_string(i));
        if (l == 1) ++(p == 1 ? cm.tp : cm.fn);
        else ++(p == 1 ? cm.fp : cm.tn);
    }
    return cm;
}

/// A percentage held as an exact count of tenths.
struct Percent {
    std::int64_t tenths = 0;
    double value() const { return static_cast<double>(tenths) / 10.0; }
    std::string str() const {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%lld.%lld", static_cast<long long>(tenths / 10),
                      static_cast<long long>(tenths % 10));
        return buf;
    }
    auto operator<=>(const Percent&) const = default;
};

/// 100*num/den rounded to one decimal, half to even, in integer arithmetic.
inline Percent percent(std::uint64_t num, std::uint64_t den) {
    const unsigned __int128 scaled = static_cast<unsigned __int128>(num) * 1000u;
    auto q = static_cast<std::uint64_t>(scaled / den);
    const auto r = static_cast<std::uint64_t>(scaled % den);
    const unsigned __int128 twice = static_cast<unsigned __int128>(r) * 2u;
    if (twice > den || (twice == den && q % 2 == 1)) ++q;
    return {static_cast<std::int64_t>(q)};
}

struct Metrics {
    Percent acc, fpr, dr;
};

/// Undefined when either class is absent from the evaluated set.
struct UndefinedMetricError : DataError {
    explicit UndefinedMetricError(const std::string& what) : DataError("undefined metric: " + what) {}
};

inline Metrics metrics(const ConfusionMatrix& cm) {
    if (cm.tp + cm.fn == 0) throw UndefinedMetricError("no anomalous samples, DR undefined");
    if (cm.fp + cm.tn == 0) throw UndefinedMetricError("no normal samples, FPR undefined");
    return {percent(cm.tp + cm.tn, cm.total()), percent(cm.fp, cm.fp + cm.tn), percent(cm.tp, cm.tp + cm.fn)};
}

/// ACC must lie between DR and 100 - FPR since it is their class-weighted mean.
inline bool convex_consistent(double acc, double fpr, double dr, double slack = 0.0) {
    const double tnr = 100.0 - fpr;
    return acc >= std::min(dr, tnr) - slack && acc <= std::max(dr, tnr) + slack;
}

inline bool convex_consistent(const Metrics& m) {
    // Each figure carries up to 0.05 of rounding.
    return convex_consistent(m.acc.value(), m.fpr.value(), m.dr.value(), 0.1);
}

// ---------------------------------------------------------------------------

struct ReportRow {
    std::string arch;
    ConfusionMatrix cm;
    Metrics m;
};

inline ReportRow make_row(std::string arch, const ConfusionMatrix& cm) {
    ReportRow r{std::move(arch), cm, metrics(cm)};
    if (!convex_consistent(r.m)) throw NumericError("report row " + r.arch + " violates acc convexity");
    return r;
}

inline std::string report_csv(const std::vector<ReportRow>& rows) {
    std::string out = "arch,acc_pct,fpr_pct,dr_pct\n";
    for (const auto& r : rows) out += r.arch + "," + r.m.acc.str() + "," + r.m.fpr.str() + "," + r.m.dr.str() + "\n";
    return out;
}

inline std::string report_text(const std::vector<ReportRow>& rows) {
    std::size_t w = 9;
    for (const auto& r : rows) w = std::max(w, r.arch.size());
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-*s %7s %7s %7s\n", static_cast<int>(w), "Algorithm", "ACC%", "FPR%", "DR%");
    std::string out = buf;
    for (const auto& r : rows) {
        std::string name = r.arch;
        std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::toupper(c); });
        std::snprintf(buf, sizeof buf, "%-*s %7s %7s %7s\n", static_cast<int>(w), name.c_str(), r.m.acc.str().c_str(),
                      r.m.fpr.str().c_str(), r.m.dr.str().c_str());
        out += buf;
    }
    return out;
}

} // namespace agcids::metrics

#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "agcids/common.hpp"
#include "agcids/flow.hpp"
#include "agcids/packet.hpp"
#include "agcids/wavelet.hpp"

namespace agcids::flow {

inline constexpr std::size_t kFeatureCount = 39;

/// The 39 flow attributes. Symbolic features f2/f3/f4 live in the string
/// members; their slots in `values` stay 0.
struct FeatureVector39 {
    std::array<double, kFeatureCount> values{};
    std::string protocol = "other";
    std::string service = "other";
    std::string state = "oth";
    Label label = Label::normal;

    /// 1-based accessor matching the attribute numbering f1..f39.
    double f(std::size_t i) const { return values.at(i - 1); }
    double& f(std::size_t i) { return values.at(i - 1); }

    static bool is_symbolic(std::size_t i) { return i >= 2 && i <= 4; }
    bool operator==(const FeatureVector39&) const = default;
};

namespace detail {

inline double population_variance(const std::vector<std::uint32_t>& xs) {
    if (xs.size() <= 1) return 0.0;
    double mean = 0.0;
    for (auto x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double acc = 0.0;
    for (auto x : xs) acc += (x - mean) * (x - mean);
    return acc / static_cast<double>(xs.size());
}

} // namespace detail

/// f1..f13 written into `fv`.
inline void intrinsic_features(const FlowRecord& flow, FeatureVector39& fv) {
    fv.f(1) = flow.duration();
    fv.protocol = std::string(to_string(flow.key.proto));
    fv.service = flow.service;
    fv.state = std::string(to_token(flow.state_flag));
    fv.f(5) = static_cast<double>(flow.up_bytes);
    fv.f(6) = static_cast<double>(flow.down_bytes);
    fv.f(7) = static_cast<double>(flow.up_pkts);
    fv.f(8) = static_cast<double>(flow.down_pkts);
    fv.f(9) = flow.initiator == flow.responder ? 1.0 : 0.0;
    fv.f(10) = flow.flag_counters[4];  // URG
    fv.f(11) = flow.total_pkts() ? static_cast<double>(flow.total_bytes()) / static_cast<double>(flow.total_pkts()) : 0.0;
    fv.f(12) = detail::population_variance(flow.up_sizes);
    fv.f(13) = detail::population_variance(flow.down_sizes);
}

inline FeatureVector39 intrinsic_features(const FlowRecord& flow) {
    FeatureVector39 fv;
    intrinsic_features(flow, fv);
    return fv;
}

/// What the window statistics need to remember about a closed flow.
struct FlowSummary {
    double last_ts = 0.0;
    Ipv4 dst_host = 0;
    std::string service;
    StateFlag state = StateFlag::OTH;

    static FlowSummary of(const FlowRecord& f) { return {f.last_ts, f.responder.ip, f.service, f.state_flag}; }
};

struct WindowConfig {
    double slot = 2.0;
    int slots = 2;
    double width() const { return slot * slots; }
};

/// Previously closed flows, in emission order. Entries older than any future
/// query can reach are pruned.
class FlowHistory {
public:
    explicit FlowHistory(WindowConfig w = {}, double idle_timeout = AssemblerConfig{}.idle_timeout)
        : window_(w), idle_timeout_(idle_timeout) {}

    void add(const FlowSummary& s) {
        entries_.push_back(s);
        max_last_ = std::max(max_last_, s.last_ts);
        // A later query flow has last_ts >= max_last - idle_timeout.
        const double horizon = max_last_ - idle_timeout_ - window_.width();
        while (!entries_.empty() && entries_.front().last_ts < horizon) entries_.pop_front();
    }
    void add(const FlowRecord& f) { add(FlowSummary::of(f)); }

    /// Flows with last_ts in [t - W, t].
    template <typename Fn>
    void for_each_in_window(double t, Fn&& fn) const {
        const double lo = t - window_.width();
        for (const auto& e : entries_)
            if (e.last_ts >= lo && e.last_ts <= t) fn(e);
    }

    const WindowConfig& window() const { return window_; }
    std::size_t size() const { return entries_.size(); }

private:
    WindowConfig window_;
    double idle_timeout_;
    double max_last_ = -1e300;
    std::deque<FlowSummary> entries_;
};

/// f25..f39 from the history window preceding the flow's last_ts.
inline void statistic_features(const FlowRecord& flow, const FlowHistory& history, FeatureVector39& fv) {
    const Ipv4 host = flow.responder.ip;
    const std::string& service = flow.service;

    double n_all = 0, n_host = 0, n_host_srv = 0, n_srv = 0;
    double host_serr = 0, host_rerr = 0, srv_serr = 0, srv_rerr = 0, all_serr = 0, all_rerr = 0;
    std::set<Ipv4> hosts, srv_hosts;
    std::set<std::pair<Ipv4, std::string>> host_services;

    history.for_each_in_window(flow.last_ts, [&](const FlowSummary& e) {
        n_all += 1;
        hosts.insert(e.dst_host);
        host_services.emplace(e.dst_host, e.service);
        const bool serr = is_syn_error(e.state);
        const bool rerr = is_rej_error(e.state);
        all_serr += serr;
        all_rerr += rerr;
        if (e.dst_host == host) {
            n_host += 1;
            host_serr += serr;
            host_rerr += rerr;
            if (e.service == service) n_host_srv += 1;
        }
        if (e.service == service) {
            n_srv += 1;
            srv_serr += serr;
            srv_rerr += rerr;
            srv_hosts.insert(e.dst_host);
        }
    });

    auto rate = [](double num, double den) { return den > 0 ? num / den : 0.0; };
    fv.f(25) = n_host;
    fv.f(26) = n_host_srv;
    fv.f(27) = rate(host_serr, n_host);
    fv.f(28) = rate(host_rerr, n_host);
    fv.f(29) = rate(n_host_srv, n_host);
    fv.f(30) = n_host > 0 ? 1.0 - fv.f(29) : 0.0;
    fv.f(31) = n_srv;
    fv.f(32) = rate(srv_serr, n_srv);
    fv.f(33) = rate(srv_rerr, n_srv);
    fv.f(34) = rate(static_cast<double>(srv_hosts.size()), n_srv);
    fv.f(35) = static_cast<double>(hosts.size());
    fv.f(36) = static_cast<double>(host_services.size());
    fv.f(37) = rate(n_srv, n_all);
    fv.f(38) = rate(all_serr, n_all);
    fv.f(39) = rate(all_rerr, n_all);
}

inline FeatureVector39 statistic_features(const FlowRecord& flow, const FlowHistory& history) {
    FeatureVector39 fv;
    statistic_features(flow, history, fv);
    return fv;
}

inline FeatureVector39 extract_features(const FlowRecord& flow, const FlowHistory& history) {
    FeatureVector39 fv;
    intrinsic_features(flow, fv);
    const auto freq = wavelet::frequency_features(flow.rate_series);
    for (std::size_t i = 0; i < freq.size(); ++i) fv.f(14 + i) = freq[i];
    statistic_features(flow, history, fv);
    fv.label = flow.label;
    return fv;
}

/// A featurized flow plus the identity needed for verdicts and breakdowns.
struct FlowSample {
    FlowKey key;
    double first_ts = 0.0, last_ts = 0.0;
    AttackKind attack_kind = AttackKind::none;
    FeatureVector39 features;
};

/// Packets in, featurized flows out: assembly, then extraction against the
/// history of flows closed before, then the flow joins the history.
class FeatureExtractor {
public:
    using Sink = std::function<void(FlowSample&&)>;

    explicit FeatureExtractor(AssemblerConfig acfg = {}, WindowConfig wcfg = {})
        : assembler_(acfg), history_(wcfg, acfg.idle_timeout) {}

    void push(const PacketRecord& p, const Sink& sink) {
        assembler_.push(p, [&](FlowRecord&& f) { emit(f, sink); });
    }
    void flush(const Sink& sink) {
        assembler_.flush([&](FlowRecord&& f) { emit(f, sink); });
    }

private:
    void emit(const FlowRecord& f, const Sink& sink) {
        FlowSample s{f.key, f.first_ts, f.last_ts, f.attack_kind, extract_features(f, history_)};
        history_.add(f);
        sink(std::move(s));
    }

    FlowAssembler assembler_;
    FlowHistory history_;
};

inline std::vector<FlowSample> extract_all(const std::vector<PacketRecord>& packets, AssemblerConfig acfg = {},
                                           WindowConfig wcfg = {}) {
    std::vector<FlowSample> out;
    FeatureExtractor fx(acfg, wcfg);
    auto sink = [&](FlowSample&& s) { out.push_back(std::move(s)); };
    for (const auto& p : packets) fx.push(p, sink);
    fx.flush(sink);
    return out;
}

// ---------------------------------------------------------------------------
// 40-column feature CSV

inline std::string feature_csv_header() {
    std::string h;
    for (std::size_t i = 1; i <= kFeatureCount; ++i) h += "f" + std::to_string(i) + ",";
    return h + "label";
}

inline std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

inline std::string feature_csv_row(const FeatureVector39& fv) {
    std::string row;
    for (std::size_t i = 1; i <= kFeatureCount; ++i) {
        if (i == 2) row += fv.protocol;
        else if (i == 3) row += fv.service;
        else if (i == 4) row += fv.state;
        else row += format_number(fv.f(i));
        row += ',';
    }
    return row + std::string(to_string(fv.label));
}

inline FeatureVector39 parse_feature_row(const std::string& line, std::size_t lineno) {
    const auto cols = split(line, ',');
    if (cols.size() != kFeatureCount + 1)
        throw DataError("feature csv line " + std::to_string(lineno) + ": expected 40 columns, got " +
                        std::to_string(cols.size()));
    FeatureVector39 fv;
    for (std::size_t i = 1; i <= kFeatureCount; ++i) {
        const auto& c = cols[i - 1];
        if (i == 2) fv.protocol = c;
        else if (i == 3) fv.service = c;
        else if (i == 4) fv.state = c;
        else {
            char* end = nullptr;
            const double v = std::strtod(c.c_str(), &end);
            if (c.empty() || end != c.c_str() + c.size() || !std::isfinite(v))
                throw DataError("feature csv line " + std::to_string(lineno) + ": bad number '" + c + "' in f" +
                                std::to_string(i));
            fv.f(i) = v;
        }
    }
    fv.label = parse_enum<Label>(cols.back(), kLabelNames, "label");
    return fv;
}

inline void write_feature_csv(std::ostream& os, const std::vector<FeatureVector39>& rows) {
    os << feature_csv_header() << '\n';
    for (const auto& r : rows) os << feature_csv_row(r) << '\n';
}

inline void write_feature_csv(const std::string& path, const std::vector<FeatureVector39>& rows) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write '" + path + "'");
    write_feature_csv(os, rows);
}

inline std::vector<FeatureVector39> read_feature_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != feature_csv_header()) throw DataError("feature csv: bad or missing header");
    std::vector<FeatureVector39> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        rows.push_back(parse_feature_row(line, lineno));
    }
    return rows;
}

inline std::vector<FeatureVector39> read_feature_csv(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot read '" + path + "'");
    return read_feature_csv(is);
}

} // namespace agcids::flow

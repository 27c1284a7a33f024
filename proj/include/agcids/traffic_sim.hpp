#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "agcids/agc_model.hpp"
#include "agcids/common.hpp"
#include "agcids/packet.hpp"

namespace agcids::sim {

// Addressing plan of the AGC network. The control centre talks to RTUs at
// 10.0.<area+1>.<10+rtu>.
inline constexpr Ipv4 kControlCentre = make_ip(10, 0, 0, 1);
inline constexpr std::uint16_t kIec104Port = 2404;

inline Ipv4 rtu_ip(int area, int rtu) { return make_ip(10, 0, static_cast<unsigned>(area + 1), static_cast<unsigned>(10 + rtu)); }

struct NetProfile {
    double meas_period = 0.1;      // s, per RTU
    double setpoint_period = 4.0;  // s, AGC dispatch cycle
    double jitter = 0.0;           // s, uniform transmit delay in [0, jitter)
    int rtus_per_area = 1;
    std::uint32_t meas_base_len = 120;
    double size_quantum = 1e-4;    // Hz of |df| per extra byte
    std::uint32_t meas_max_extra = 60;
    std::uint32_t setpoint_len = 80;
    double rtt = 0.002;            // s, setpoint connection round trip

    void validate() const {
        if (!(meas_period > 0) || !(setpoint_period > 0))
            throw PreconditionError("NetProfile periods must be positive");
        if (jitter < 0 || rtus_per_area < 1 || !(size_quantum > 0) || rtt < 0)
            throw PreconditionError("invalid NetProfile");
    }
};

namespace detail {

inline void sort_by_ts(std::vector<PacketRecord>& v) {
    std::stable_sort(v.begin(), v.end(), [](const PacketRecord& a, const PacketRecord& b) { return a.ts < b.ts; });
}

inline bool is_sorted_by_ts(const std::vector<PacketRecord>& v) {
    return std::is_sorted(v.begin(), v.end(), [](const PacketRecord& a, const PacketRecord& b) { return a.ts < b.ts; });
}

inline PacketRecord make_packet(double ts, Ipv4 src, std::uint16_t sport, Ipv4 dst, std::uint16_t dport, Proto proto,
                                std::uint32_t len, std::uint8_t flags, PayloadClass pc) {
    PacketRecord p;
    p.ts = ts;
    p.src_ip = src;
    p.dst_ip = dst;
    p.src_port = sport;
    p.dst_port = dport;
    p.proto = proto;
    p.length = len;
    p.tcp_flags = flags;
    p.payload_class = pc;
    return p;
}

enum class TcpClose { fin, rst_orig, rst_resp, none };

/// Appends one TCP conversation: handshake, alternating request/response data,
/// then the chosen teardown. Returns the timestamp of the last packet.
inline double tcp_session(std::vector<PacketRecord>& out, double t, Ipv4 cli, std::uint16_t cport, Ipv4 srv,
                          std::uint16_t sport, const std::vector<std::uint32_t>& requests,
                          const std::vector<std::vector<std::uint32_t>>& responses, TcpClose close, double rtt,
                          double seg_gap, PayloadClass pc) {
    using namespace tcp;
    const double half = rtt / 2.0;
    out.push_back(make_packet(t, cli, cport, srv, sport, Proto::tcp, 60, SYN, pc));
    t += half;
    out.push_back(make_packet(t, srv, sport, cli, cport, Proto::tcp, 60, SYN | ACK, pc));
    t += half;
    out.push_back(make_packet(t, cli, cport, srv, sport, Proto::tcp, 54, ACK, pc));
    for (std::size_t i = 0; i < requests.size(); ++i) {
        t += seg_gap;
        out.push_back(make_packet(t, cli, cport, srv, sport, Proto::tcp, 54 + requests[i], ACK | PSH, pc));
        t += half;
        if (i < responses.size()) {
            for (auto seg : responses[i]) {
                out.push_back(make_packet(t, srv, sport, cli, cport, Proto::tcp, 54 + seg, ACK | PSH, pc));
                t += seg_gap;
            }
        }
        t += half;
        out.push_back(make_packet(t, cli, cport, srv, sport, Proto::tcp, 54, ACK, pc));
    }
    t += seg_gap;
    switch (close) {
    case TcpClose::fin:
        out.push_back(make_packet(t, cli, cport, srv, sport, Proto::tcp, 54, FIN | ACK, pc));
        t += half;
        out.push_back(make_packet(t, srv, sport, cli, cport, Proto::tcp, 54, FIN | ACK, pc));
        t += half;
        out.push_back(make_packet(t, cli, cport, srv, sport, Proto::tcp, 54, ACK, pc));
        break;
    case TcpClose::rst_orig:
        out.push_back(make_packet(t, cli, cport, srv, sport, Proto::tcp, 54, RST | ACK, pc));
        break;
    case TcpClose::rst_resp:
        out.push_back(make_packet(t, srv, sport, cli, cport, Proto::tcp, 54, RST | ACK, pc));
        break;
    case TcpClose::none:
        break;
    }
    return t;
}

} // namespace detail

/// Periodic measurement packets from every RTU plus one setpoint connection
/// per area per AGC cycle. Output is sorted by ts and labeled normal.
inline std::vector<PacketRecord> emit_telemetry(const std::vector<AgcState>& states, const NetProfile& net,
                                                std::uint64_t seed) {
    if (states.empty()) throw PreconditionError("emit_telemetry requires a non-empty state sequence");
    net.validate();

    Rng rng(seed);
    const double t0 = states.front().t;
    const double horizon = states.back().t - t0;
    const double dt = states.size() > 1 ? states[1].t - states[0].t : 1.0;
    auto state_at = [&](double t) -> const AgcState& {
        auto idx = static_cast<long long>(std::llround((t - t0) / dt));
        idx = std::clamp<long long>(idx, 0, static_cast<long long>(states.size()) - 1);
        return states[static_cast<std::size_t>(idx)];
    };
    auto delay = [&] { return net.jitter > 0 ? uniform(rng, 0.0, net.jitter) : 0.0; };

    std::vector<PacketRecord> out;
    const auto n_meas = static_cast<long long>(std::floor(horizon / net.meas_period + 1e-9));
    for (int area = 0; area < 2; ++area) {
        for (int r = 0; r < net.rtus_per_area; ++r) {
            const double phase = net.meas_period * r / net.rtus_per_area;
            for (long long k = 0; k < n_meas; ++k) {
                const double nominal = t0 + static_cast<double>(k) * net.meas_period + phase;
                if (nominal - t0 >= horizon) break;
                const auto& s = state_at(nominal);
                const double df = area == 0 ? s.df1 : s.df2;
                const auto extra = static_cast<std::uint32_t>(
                    std::min<double>(net.meas_max_extra, std::round(std::abs(df) / net.size_quantum)));
                out.push_back(detail::make_packet(nominal + delay(), rtu_ip(area, r),
                                                  static_cast<std::uint16_t>(50000 + r), kControlCentre, kIec104Port,
                                                  Proto::udp, net.meas_base_len + extra, 0, PayloadClass::measurement));
            }
        }
    }

    const auto n_cycles = static_cast<long long>(std::floor(horizon / net.setpoint_period + 1e-9));
    for (long long c = 1; c <= n_cycles; ++c) {
        const double nominal = t0 + static_cast<double>(c) * net.setpoint_period;
        if (nominal - t0 >= horizon) break;
        for (int area = 0; area < 2; ++area) {
            const auto& s = state_at(nominal);
            const double ace = area == 0 ? s.ace1 : s.ace2;
            const auto extra = static_cast<std::uint32_t>(std::min(20.0, std::round(std::abs(ace) / 1e-3)));
            const auto cport = static_cast<std::uint16_t>(40000 + (c * 2 + area) % 20000);
            detail::tcp_session(out, nominal + delay(), kControlCentre, cport, rtu_ip(area, 0), kIec104Port,
                                {net.setpoint_len - 54 + extra}, {{16}}, detail::TcpClose::fin, net.rtt, 0.0005,
                                PayloadClass::setpoint);
        }
    }
    detail::sort_by_ts(out);
    return out;
}

// ---------------------------------------------------------------------------
// attack injection

/// Optional 5-tuple selector; unset fields are wildcards. Matching is
/// direction-independent.
struct FlowSelector {
    std::optional<Ipv4> src_ip, dst_ip;
    std::optional<std::uint16_t> src_port, dst_port;
    std::optional<Proto> proto;

    bool matches_forward(const PacketRecord& p) const {
        return (!src_ip || *src_ip == p.src_ip) && (!dst_ip || *dst_ip == p.dst_ip) &&
               (!src_port || *src_port == p.src_port) && (!dst_port || *dst_port == p.dst_port) &&
               (!proto || *proto == p.proto);
    }
    bool matches_reverse(const PacketRecord& p) const {
        return (!src_ip || *src_ip == p.dst_ip) && (!dst_ip || *dst_ip == p.src_ip) &&
               (!src_port || *src_port == p.dst_port) && (!dst_port || *dst_port == p.src_port) &&
               (!proto || *proto == p.proto);
    }
    bool matches(const PacketRecord& p) const { return matches_forward(p) || matches_reverse(p); }
};

struct AttackSpec {
    AttackKind kind = AttackKind::none;
    double start = 0.0;
    double end = 0.0;
    double intensity = 1.0;
    std::optional<FlowSelector> target_flow;

    void validate() const {
        if (kind == AttackKind::none) throw PreconditionError("attack kind must not be none");
        if (!(start < end)) throw PreconditionError("attack window requires start < end");
        if (!(intensity > 0)) throw PreconditionError("attack intensity must be > 0");
    }
};

struct InjectionResult {
    std::vector<PacketRecord> packets;
    std::size_t added = 0;
    std::size_t modified = 0;
    std::optional<std::string> warning;
};

namespace detail {

inline constexpr Ipv4 kFloodBotBase = make_ip(198, 51, 100, 10);
inline constexpr Ipv4 kScanner = make_ip(198, 51, 100, 66);
inline constexpr int kFloodBots = 4;

inline void mark(PacketRecord& p, AttackKind k) {
    p.label = Label::anomalous;
    p.attack_kind = k;
}

/// Most frequent (dst_ip, dst_port, proto) among packets inside [lo, hi].
inline std::tuple<Ipv4, std::uint16_t, Proto> busiest_destination(const std::vector<PacketRecord>& pk, double lo,
                                                                   double hi) {
    std::map<std::tuple<Ipv4, std::uint16_t, Proto>, std::size_t> counts;
    for (const auto& p : pk)
        if (p.ts >= lo && p.ts <= hi) ++counts[{p.dst_ip, p.dst_port, p.proto}];
    if (counts.empty())
        for (const auto& p : pk) ++counts[{p.dst_ip, p.dst_port, p.proto}];
    auto best = std::max_element(counts.begin(), counts.end(),
                                 [](const auto& a, const auto& b) { return a.second < b.second; });
    return best->first;
}

inline FlowSelector busiest_flow(const std::vector<PacketRecord>& pk, double lo, double hi) {
    std::map<std::tuple<Ipv4, std::uint16_t, Ipv4, std::uint16_t, Proto>, std::size_t> counts;
    for (const auto& p : pk)
        if (p.ts >= lo && p.ts <= hi) ++counts[{p.src_ip, p.src_port, p.dst_ip, p.dst_port, p.proto}];
    auto best = std::max_element(counts.begin(), counts.end(),
                                 [](const auto& a, const auto& b) { return a.second < b.second; });
    FlowSelector sel;
    const auto& [sip, sport, dip, dport, proto] = best->first;
    sel.src_ip = sip;
    sel.src_port = sport;
    sel.dst_ip = dip;
    sel.dst_port = dport;
    sel.proto = proto;
    return sel;
}

} // namespace detail

/// Adds or modifies packets per `spec`. Every touched packet is relabeled
/// anomalous with attack_kind = spec.kind; the output stays sorted by ts.
inline InjectionResult inject_attack(const std::vector<PacketRecord>& packets, const AttackSpec& spec,
                                     std::uint64_t seed) {
    spec.validate();
    if (!detail::is_sorted_by_ts(packets)) throw DataError("inject_attack requires a time-sorted packet log");

    InjectionResult res;
    res.packets = packets;
    if (packets.empty() || spec.end < packets.front().ts || spec.start > packets.back().ts) {
        res.warning = "attack window [" + std::to_string(spec.start) + ", " + std::to_string(spec.end) +
                      "] lies outside the log time range; nothing injected";
        return res;
    }

    Rng rng(seed);
    const double lo = spec.start;
    const double hi = spec.end;
    std::vector<PacketRecord> added;

    switch (spec.kind) {
    case AttackKind::dos_flood: {
        Ipv4 dst;
        std::uint16_t dport;
        Proto proto;
        std::tie(dst, dport, proto) = detail::busiest_destination(packets, lo, hi);
        if (spec.target_flow && spec.target_flow->dst_ip) dst = *spec.target_flow->dst_ip;
        if (spec.target_flow && spec.target_flow->dst_port) dport = *spec.target_flow->dst_port;
        // Bursts of 0.5 s every 2 s at 50*intensity packets/s; each bot opens a
        // fresh source port per burst.
        const double rate = 50.0 * spec.intensity;
        for (double burst = lo; burst < hi; burst += 2.0) {
            const double burst_end = std::min(hi, burst + 0.5);
            std::uint16_t sports[detail::kFloodBots];
            for (auto& sp : sports) sp = static_cast<std::uint16_t>(uniform_int(rng, 1024, 65535));
            std::size_t i = 0;
            for (double t = burst; t < burst_end; t = burst + static_cast<double>(++i) / rate) {
                const int bot = static_cast<int>(i % detail::kFloodBots);
                auto p = detail::make_packet(t, detail::kFloodBotBase + static_cast<Ipv4>(bot), sports[bot], dst, dport,
                                             Proto::udp, static_cast<std::uint32_t>(uniform_int(rng, 400, 1400)), 0,
                                             PayloadClass::bulk);
                added.push_back(p);
            }
        }
        break;
    }
    case AttackKind::fdia: {
        // Forged measurements: the reported-deviation bytes follow an attacker
        // ramp and the injecting relay adds processing delay.
        for (auto& p : res.packets) {
            if (p.ts < lo || p.ts > hi) continue;
            // Without a selector every measurement packet in the window is forged.
            if (spec.target_flow ? !spec.target_flow->matches(p) : p.payload_class != PayloadClass::measurement)
                continue;
            const double progress = (p.ts - lo) / (hi - lo);
            const double forged = spec.intensity * (10.0 + 30.0 * progress) + uniform(rng, 0.0, 6.0 * spec.intensity);
            p.length += static_cast<std::uint32_t>(std::round(forged));
            p.ts += uniform(rng, 0.0, 0.01 * spec.intensity);
            detail::mark(p, AttackKind::fdia);
            ++res.modified;
        }
        break;
    }
    case AttackKind::scan: {
        Ipv4 dst = std::get<0>(detail::busiest_destination(packets, lo, hi));
        if (spec.target_flow && spec.target_flow->dst_ip) dst = *spec.target_flow->dst_ip;
        const auto n = static_cast<std::size_t>(std::ceil(spec.intensity * (hi - lo)));
        const auto base = static_cast<std::uint32_t>(uniform_int(rng, 0, 65534));
        const auto sport = static_cast<std::uint16_t>(uniform_int(rng, 32768, 60000));
        for (std::size_t i = 0; i < n; ++i) {
            const double t = lo + static_cast<double>(i) / spec.intensity;
            // 7919 is coprime with 65535, so the first 65535 probes hit distinct ports.
            const auto dport = static_cast<std::uint16_t>(1 + (base + i * 7919u) % 65535u);
            added.push_back(detail::make_packet(t, detail::kScanner, sport, dst, dport, Proto::tcp, 60, tcp::SYN,
                                                PayloadClass::probe));
            if (uniform01(rng) < 0.5)
                added.push_back(detail::make_packet(t + 0.001, dst, dport, detail::kScanner, sport, Proto::tcp, 54,
                                                    tcp::RST | tcp::ACK, PayloadClass::probe));
        }
        break;
    }
    case AttackKind::spoof_mitm: {
        const FlowSelector sel = spec.target_flow ? *spec.target_flow : detail::busiest_flow(packets, lo, hi);
        // The impersonated endpoint is the selector's source side.
        std::optional<Ipv4> victim = sel.src_ip;
        for (const auto& p : packets) {
            if (p.ts < lo || p.ts > hi || !sel.matches(p)) continue;
            if (!victim) victim = p.src_ip;
            PacketRecord dup = p;
            const Ipv4 spoofed = (*victim & 0xffffff00u) | ((*victim + 100u) & 0xffu);
            if (dup.src_ip == *victim) dup.src_ip = spoofed;
            else if (dup.dst_ip == *victim) dup.dst_ip = spoofed;
            dup.ts += 0.005 + uniform(rng, 0.0, 0.02 * spec.intensity);
            added.push_back(dup);
        }
        break;
    }
    case AttackKind::none:
        break;
    }

    for (auto& p : added) detail::mark(p, spec.kind);
    res.added = added.size();
    res.packets.insert(res.packets.end(), added.begin(), added.end());
    detail::sort_by_ts(res.packets);
    if (res.added == 0 && res.modified == 0) res.warning = "attack matched no traffic; nothing injected";
    return res;
}

/// Applies each spec in order with per-attack derived seeds.
inline std::vector<PacketRecord> inject_attacks(std::vector<PacketRecord> packets, const std::vector<AttackSpec>& specs,
                                                std::uint64_t seed) {
    for (std::size_t i = 0; i < specs.size(); ++i)
        packets = inject_attack(packets, specs[i], derive_seed(seed, "attack" + std::to_string(i))).packets;
    return packets;
}

} // namespace agcids::sim

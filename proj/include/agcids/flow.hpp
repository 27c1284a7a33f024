#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "agcids/common.hpp"
#include "agcids/packet.hpp"
#include "agcids/services.hpp"

namespace agcids::flow {

enum class StateFlag : std::uint8_t { SF, S0, REJ, RSTO, RSTR, SH, S1, S2, S3, OTH, SHR };

inline std::string_view to_token(StateFlag s) { return kStateTokens[static_cast<std::size_t>(s)]; }

/// SYN-error states (handshake never completed cleanly or half-open).
inline bool is_syn_error(StateFlag s) {
    return s == StateFlag::S0 || s == StateFlag::S1 || s == StateFlag::S2 || s == StateFlag::S3;
}
inline bool is_rej_error(StateFlag s) { return s == StateFlag::REJ; }

struct Endpoint {
    Ipv4 ip = 0;
    std::uint16_t port = 0;
    auto operator<=>(const Endpoint&) const = default;
};

/// Canonicalized 5-tuple: the lower (ip, port) endpoint first, so both
/// directions of a conversation share one key.
struct FlowKey {
    Ipv4 ip_lo = 0, ip_hi = 0;
    std::uint16_t port_lo = 0, port_hi = 0;
    Proto proto = Proto::udp;

    static FlowKey of(const PacketRecord& p) {
        Endpoint a{p.src_ip, p.src_port}, b{p.dst_ip, p.dst_port};
        if (b < a) std::swap(a, b);
        return FlowKey{a.ip, b.ip, a.port, b.port, p.proto};
    }
    bool operator==(const FlowKey&) const = default;

    std::string to_string() const {
        return std::string(agcids::to_string(proto)) + " " + ip_to_string(ip_lo) + ":" + std::to_string(port_lo) +
               " <-> " + ip_to_string(ip_hi) + ":" + std::to_string(port_hi);
    }
};

struct FlowKeyHash {
    std::size_t operator()(const FlowKey& k) const noexcept {
        std::uint64_t h = (std::uint64_t{k.ip_lo} << 32) | k.ip_hi;
        h = splitmix64(h ^ ((std::uint64_t{k.port_lo} << 24) | (std::uint64_t{k.port_hi} << 8) |
                            static_cast<std::uint64_t>(k.proto)));
        return static_cast<std::size_t>(h);
    }
};

inline constexpr std::size_t kRateSlots = 64;

struct PacketObs {
    double ts;
    std::uint32_t length;
    bool upstream;
};

/// TCP flag bookkeeping per direction, feeding the state_flag machine.
struct TcpTracker {
    bool orig_syn = false;     // SYN without ACK from the initiator
    bool resp_synack = false;  // SYN+ACK from the responder
    bool resp_any = false;
    bool orig_fin = false, resp_fin = false;
    bool orig_rst = false, resp_rst = false;
    bool first_rst_orig = false;

    void observe(const PacketRecord& p, bool upstream) {
        if (!upstream) resp_any = true;
        if (p.has(tcp::SYN)) {
            if (upstream && !p.has(tcp::ACK)) orig_syn = true;
            if (!upstream && p.has(tcp::ACK)) resp_synack = true;
        }
        if (p.has(tcp::FIN)) (upstream ? orig_fin : resp_fin) = true;
        if (p.has(tcp::RST)) {
            if (!orig_rst && !resp_rst) first_rst_orig = upstream;
            (upstream ? orig_rst : resp_rst) = true;
        }
    }

    StateFlag classify(Proto proto) const {
        if (proto != Proto::tcp) return StateFlag::SF;
        if (orig_syn) {
            if (!resp_any) {
                if (orig_rst) return StateFlag::RSTO;
                return orig_fin ? StateFlag::SH : StateFlag::S0;
            }
            if (resp_synack) {
                if (orig_rst || resp_rst) return first_rst_orig ? StateFlag::RSTO : StateFlag::RSTR;
                if (orig_fin && resp_fin) return StateFlag::SF;
                if (orig_fin) return StateFlag::S2;
                if (resp_fin) return StateFlag::S3;
                return StateFlag::S1;
            }
            if (resp_rst) return StateFlag::REJ;
            return StateFlag::OTH;
        }
        if (resp_synack && resp_fin) return StateFlag::SHR;
        return StateFlag::OTH;
    }
};

struct FlowRecord {
    FlowKey key;
    double first_ts = 0.0, last_ts = 0.0;
    Endpoint initiator, responder;
    std::uint64_t up_bytes = 0, down_bytes = 0;
    std::uint64_t up_pkts = 0, down_pkts = 0;
    std::vector<std::uint32_t> up_sizes, down_sizes;
    std::array<std::uint32_t, 6> flag_counters{};  // indexed like tcp::kFlagNames
    std::string service;
    StateFlag state_flag = StateFlag::OTH;
    std::array<double, kRateSlots> rate_series{};
    Label label = Label::normal;
    AttackKind attack_kind = AttackKind::none;
    std::vector<PacketObs> packets;
    TcpTracker tcp_state;
    std::uint64_t anomalous_pkts = 0;
    std::array<std::uint64_t, 5> attack_pkts{};

    double duration() const { return last_ts - first_ts; }
    std::uint64_t total_pkts() const { return up_pkts + down_pkts; }
    std::uint64_t total_bytes() const { return up_bytes + down_bytes; }
};

struct AssemblerConfig {
    double idle_timeout = 2.0;
    double max_duration = 64.0;
    double min_span = 0.64;
};

/// Bins total bytes per slot over [first_ts, max(first_ts + min_span, last_ts)].
inline std::array<double, kRateSlots> rate_series(const FlowRecord& f, double min_span = AssemblerConfig{}.min_span) {
    std::array<double, kRateSlots> s{};
    const double span = std::max(min_span, f.last_ts - f.first_ts);
    const double width = span / static_cast<double>(kRateSlots);
    for (const auto& p : f.packets) {
        // the epsilon absorbs rounding for packets sitting exactly on a slot edge
        auto idx = static_cast<long long>(std::floor((p.ts - f.first_ts) / width + 1e-9));
        idx = std::clamp<long long>(idx, 0, static_cast<long long>(kRateSlots) - 1);
        s[static_cast<std::size_t>(idx)] += static_cast<double>(p.length);
    }
    return s;
}

namespace detail {

inline void append_packet(FlowRecord& f, const PacketRecord& p) {
    const bool up = Endpoint{p.src_ip, p.src_port} == f.initiator;
    if (f.packets.empty()) f.first_ts = p.ts;
    f.last_ts = p.ts;
    if (up) {
        f.up_bytes += p.length;
        ++f.up_pkts;
        f.up_sizes.push_back(p.length);
    } else {
        f.down_bytes += p.length;
        ++f.down_pkts;
        f.down_sizes.push_back(p.length);
    }
    for (std::size_t i = 0; i < 6; ++i)
        if (p.tcp_flags & (1u << i)) ++f.flag_counters[i];
    f.packets.push_back({p.ts, p.length, up});
    if (p.proto == Proto::tcp) f.tcp_state.observe(p, up);
    if (p.label == Label::anomalous) ++f.anomalous_pkts;
    ++f.attack_pkts[static_cast<std::size_t>(p.attack_kind)];
}

inline void finalize(FlowRecord& f, const AssemblerConfig& cfg) {
    f.state_flag = f.tcp_state.classify(f.key.proto);
    f.service = std::string(service_for(f.key.proto, f.key.port_lo, f.key.port_hi));
    f.rate_series = rate_series(f, cfg.min_span);
    // Majority vote; a tie counts as anomalous.
    f.label = 2 * f.anomalous_pkts >= f.total_pkts() && f.anomalous_pkts > 0 ? Label::anomalous : Label::normal;
    f.attack_kind = AttackKind::none;
    if (f.label == Label::anomalous) {
        std::size_t best = 1;
        for (std::size_t k = 2; k < f.attack_pkts.size(); ++k)
            if (f.attack_pkts[k] > f.attack_pkts[best]) best = k;
        f.attack_kind = static_cast<AttackKind>(best);
    }
}

} // namespace detail

/// Streaming bidirectional flow table. Flows close on RST, on the final ACK
/// after both FINs, on idle timeout or on max duration, and are handed to
/// the sink in closing-time order.
class FlowAssembler {
public:
    using Sink = std::function<void(FlowRecord&&)>;

    explicit FlowAssembler(AssemblerConfig cfg = {}) : cfg_(cfg) {
        if (!(cfg_.idle_timeout > 0) || !(cfg_.max_duration > 0) || !(cfg_.min_span > 0))
            throw PreconditionError("flow timeouts must be positive");
    }

    void push(const PacketRecord& p, const Sink& sink) {
        if (seen_any_ && p.ts < last_ts_)
            throw DataError("ordering error: packet at ts=" + std::to_string(p.ts) + " follows ts=" +
                            std::to_string(last_ts_));
        seen_any_ = true;
        last_ts_ = p.ts;

        while (!deadlines_.empty() && deadlines_.begin()->first < p.ts) close(deadlines_.begin()->second, sink);

        const auto key = FlowKey::of(p);
        auto it = table_.find(key);
        if (it != table_.end() && it->second.closing) {
            if (p.tcp_flags == tcp::ACK) {
                touch(it->second, p);
                close(it->second.id, sink);
                return;
            }
            close(it->second.id, sink);
            it = table_.end();
        }
        if (it == table_.end()) {
            Active a;
            a.id = next_id_++;
            a.rec.key = key;
            a.rec.initiator = {p.src_ip, p.src_port};
            a.rec.responder = {p.dst_ip, p.dst_port};
            it = table_.emplace(key, std::move(a)).first;
            ids_.emplace(it->second.id, key);
        } else {
            deadlines_.erase({it->second.deadline, it->second.id});
        }
        touch(it->second, p);

        auto& st = it->second.rec.tcp_state;
        if (p.proto == Proto::tcp && p.has(tcp::RST)) {
            close(it->second.id, sink);
            return;
        }
        if (p.proto == Proto::tcp && st.orig_fin && st.resp_fin) it->second.closing = true;
        schedule(it->second);
    }

    /// Closes every open flow in deadline order.
    void flush(const Sink& sink) {
        while (!deadlines_.empty()) close(deadlines_.begin()->second, sink);
    }

    std::size_t open_flows() const { return table_.size(); }
    const AssemblerConfig& config() const { return cfg_; }

private:
    struct Active {
        FlowRecord rec;
        std::uint64_t id = 0;
        double deadline = 0.0;
        bool closing = false;
    };

    void touch(Active& a, const PacketRecord& p) { detail::append_packet(a.rec, p); }

    void schedule(Active& a) {
        a.deadline = std::min(a.rec.last_ts + cfg_.idle_timeout, a.rec.first_ts + cfg_.max_duration);
        deadlines_.emplace(a.deadline, a.id);
    }

    void close(std::uint64_t id, const Sink& sink) {
        auto kit = ids_.find(id);
        auto it = table_.find(kit->second);
        deadlines_.erase({it->second.deadline, id});
        FlowRecord rec = std::move(it->second.rec);
        table_.erase(it);
        ids_.erase(kit);
        detail::finalize(rec, cfg_);
        sink(std::move(rec));
    }

    AssemblerConfig cfg_;
    std::unordered_map<FlowKey, Active, FlowKeyHash> table_;
    std::unordered_map<std::uint64_t, FlowKey> ids_;
    std::set<std::pair<double, std::uint64_t>> deadlines_;
    std::uint64_t next_id_ = 0;
    double last_ts_ = 0.0;
    bool seen_any_ = false;
};

inline std::vector<FlowRecord> assemble_flows(const std::vector<PacketRecord>& packets,
                                              const AssemblerConfig& cfg = {}) {
    std::vector<FlowRecord> out;
    FlowAssembler fa(cfg);
    auto sink = [&](FlowRecord&& f) { out.push_back(std::move(f)); };
    for (const auto& p : packets) fa.push(p, sink);
    fa.flush(sink);
    return out;
}

inline std::vector<FlowRecord> assemble_flows(const std::vector<PacketRecord>& packets, double idle_timeout,
                                              double max_duration) {
    AssemblerConfig cfg;
    cfg.idle_timeout = idle_timeout;
    cfg.max_duration = max_duration;
    return assemble_flows(packets, cfg);
}

} // namespace agcids::flow

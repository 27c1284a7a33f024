#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "agcids/common.hpp"
#include "agcids/packet.hpp"
#include "agcids/traffic_sim.hpp"

namespace agcids::sim {

/// Generation parameters for the paired source (internet) and target (AGC)
/// corpora. Attacks are scheduled per fixed-length segment: each segment is
/// attacked with probability `attack_fraction`.
struct DatasetConfig {
    std::uint64_t seed = 42;
    double target_horizon = 7200.0;
    double source_horizon = 1200.0;
    int rtus_per_area = 4;
    double meas_jitter = 0.002;
    double load_noise_std = 0.002;
    double session_rate = 2.0;       // internet sessions per second
    double attack_fraction = 0.5;
    double attack_segment = 120.0;
    std::map<std::string, double> attack_mix{{"dos_flood", 1.0}, {"fdia", 1.0}, {"scan", 1.0}, {"spoof_mitm", 1.0}};
    double intensity = 1.0;

    std::string source_path = "source.jsonl";
    std::string target_path = "target.jsonl";
    std::string manifest_path = "manifest.json";

    void validate() const {
        if (!(target_horizon > 0) || !(source_horizon > 0))
            throw PreconditionError("dataset horizons must be positive (zero requested samples)");
        if (attack_fraction < 0 || attack_fraction > 1) throw PreconditionError("attack_fraction must lie in [0,1]");
        if (!(attack_segment > 20) || !(intensity > 0) || rtus_per_area < 1 || !(session_rate > 0))
            throw PreconditionError("invalid dataset configuration");
        double total = 0;
        for (const auto& [k, w] : attack_mix) {
            parse_enum<AttackKind>(k, kAttackNames, "attack kind");
            if (k == "none" || w < 0) throw PreconditionError("invalid attack mix entry '" + k + "'");
            total += w;
        }
        if (attack_fraction > 0 && !(total > 0)) throw PreconditionError("attack mix has no positive weight");
    }

    /// Content fields only; output paths do not affect the hash.
    nlohmann::ordered_json content_json() const {
        nlohmann::ordered_json j;
        j["seed"] = seed;
        j["target_horizon"] = target_horizon;
        j["source_horizon"] = source_horizon;
        j["rtus_per_area"] = rtus_per_area;
        j["meas_jitter"] = meas_jitter;
        j["load_noise_std"] = load_noise_std;
        j["session_rate"] = session_rate;
        j["attack_fraction"] = attack_fraction;
        j["attack_segment"] = attack_segment;
        j["attack_mix"] = attack_mix;
        j["intensity"] = intensity;
        return j;
    }

    std::string hash() const { return sha256_hex(content_json().dump()); }
};

struct LabelCounts {
    std::size_t normal = 0;
    std::size_t anomalous = 0;
    std::map<std::string, std::size_t> per_attack_kind;

    void add(const PacketRecord& p) {
        (p.label == Label::normal ? normal : anomalous)++;
        if (p.attack_kind != AttackKind::none) ++per_attack_kind[std::string(to_string(p.attack_kind))];
    }
    LabelCounts& operator+=(const LabelCounts& o) {
        normal += o.normal;
        anomalous += o.anomalous;
        for (const auto& [k, v] : o.per_attack_kind) per_attack_kind[k] += v;
        return *this;
    }
    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["normal"] = normal;
        j["anomalous"] = anomalous;
        nlohmann::ordered_json kinds = nlohmann::ordered_json::object();
        for (std::size_t i = 1; i < kAttackNames.size(); ++i) {
            auto it = per_attack_kind.find(std::string(kAttackNames[i]));
            kinds[std::string(kAttackNames[i])] = it == per_attack_kind.end() ? 0 : it->second;
        }
        j["per_attack_kind"] = std::move(kinds);
        return j;
    }
};

inline LabelCounts count_labels(const std::vector<PacketRecord>& packets) {
    LabelCounts c;
    for (const auto& p : packets) c.add(p);
    return c;
}

struct Corpora {
    std::vector<PacketRecord> source;
    std::vector<PacketRecord> target;
    nlohmann::ordered_json manifest;
};

namespace detail {

inline constexpr Ipv4 kDnsServer = make_ip(203, 0, 113, 53);

inline Ipv4 client_ip(int i) { return make_ip(192, 168, 1, static_cast<unsigned>(20 + i)); }
inline Ipv4 server_ip(int i) { return make_ip(203, 0, 113, static_cast<unsigned>(10 + i)); }

inline std::vector<std::uint32_t> segments(std::uint32_t total) {
    std::vector<std::uint32_t> s;
    while (total > 1460) {
        s.push_back(1460);
        total -= 1460;
    }
    s.push_back(std::max<std::uint32_t>(total, 1));
    return s;
}

/// Internet-style background: web, DNS, ssh, mail, bulk transfer, NTP and a
/// trickle of failed connection attempts.
inline std::vector<PacketRecord> internet_traffic(double horizon, double session_rate, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<PacketRecord> out;
    std::exponential_distribution<double> gap(session_rate);
    for (double t = gap(rng); t < horizon; t += gap(rng)) {
        const Ipv4 cli = client_ip(uniform_int(rng, 0, 49));
        const auto cport = static_cast<std::uint16_t>(uniform_int(rng, 32768, 60999));
        const double rtt = uniform(rng, 0.01, 0.08);
        const double seg_gap = uniform(rng, 0.0005, 0.005);
        const double u = uniform01(rng);
        if (u < 0.30 || (u >= 0.30 && u < 0.55)) {
            const std::uint16_t port = u < 0.30 ? 80 : 443;
            const int nreq = uniform_int(rng, 1, 3);
            std::vector<std::uint32_t> req;
            std::vector<std::vector<std::uint32_t>> resp;
            for (int i = 0; i < nreq; ++i) {
                req.push_back(static_cast<std::uint32_t>(uniform_int(rng, 200, 600)));
                resp.push_back(segments(static_cast<std::uint32_t>(uniform_int(rng, 300, 25000))));
            }
            const auto close = uniform01(rng) < 0.05 ? TcpClose::rst_resp : TcpClose::fin;
            tcp_session(out, t, cli, cport, server_ip(uniform_int(rng, 0, 9)), port, req, resp, close, rtt, seg_gap,
                        PayloadClass::bulk);
        } else if (u < 0.80) {
            out.push_back(make_packet(t, cli, cport, kDnsServer, 53, Proto::udp,
                                      static_cast<std::uint32_t>(uniform_int(rng, 60, 90)), 0, PayloadClass::other));
            out.push_back(make_packet(t + uniform(rng, 0.01, 0.04), kDnsServer, 53, cli, cport, Proto::udp,
                                      static_cast<std::uint32_t>(uniform_int(rng, 90, 300)), 0, PayloadClass::other));
        } else if (u < 0.85) {
            // interactive ssh: many small exchanges, sub-second think time
            const int n = uniform_int(rng, 20, 80);
            std::vector<std::uint32_t> req;
            std::vector<std::vector<std::uint32_t>> resp;
            for (int i = 0; i < n; ++i) {
                req.push_back(static_cast<std::uint32_t>(uniform_int(rng, 36, 120)));
                resp.push_back({static_cast<std::uint32_t>(uniform_int(rng, 36, 400))});
            }
            tcp_session(out, t, cli, cport, server_ip(uniform_int(rng, 0, 9)), 22, req, resp, TcpClose::fin, rtt,
                        uniform(rng, 0.05, 0.4), PayloadClass::other);
        } else if (u < 0.90) {
            std::vector<std::uint32_t> req{static_cast<std::uint32_t>(uniform_int(rng, 500, 8000))};
            tcp_session(out, t, cli, cport, server_ip(uniform_int(rng, 0, 9)), 25, req, {{40}}, TcpClose::fin, rtt,
                        seg_gap, PayloadClass::bulk);
        } else if (u < 0.95) {
            std::vector<std::uint32_t> req{40};
            std::vector<std::vector<std::uint32_t>> resp{
                segments(static_cast<std::uint32_t>(uniform_int(rng, 50000, 400000)))};
            tcp_session(out, t, cli, cport, server_ip(uniform_int(rng, 0, 9)), 20, req, resp, TcpClose::fin, rtt,
                        0.001, PayloadClass::bulk);
        } else if (u < 0.98) {
            const Ipv4 srv = server_ip(uniform_int(rng, 0, 9));
            out.push_back(make_packet(t, cli, 123, srv, 123, Proto::udp, 90, 0, PayloadClass::other));
            out.push_back(make_packet(t + rtt, srv, 123, cli, 123, Proto::udp, 90, 0, PayloadClass::other));
        } else {
            // failed attempt: unanswered SYN or refused port
            const Ipv4 srv = server_ip(uniform_int(rng, 0, 9));
            out.push_back(make_packet(t, cli, cport, srv, 8080, Proto::tcp, 60, tcp::SYN, PayloadClass::other));
            if (uniform01(rng) < 0.5)
                out.push_back(make_packet(t + rtt, srv, 8080, cli, cport, Proto::tcp, 54, tcp::RST | tcp::ACK,
                                          PayloadClass::other));
        }
    }
    sort_by_ts(out);
    return out;
}

inline AttackKind draw_kind(Rng& rng, const std::map<std::string, double>& mix) {
    double total = 0;
    for (const auto& [k, w] : mix) total += w;
    double u = uniform(rng, 0.0, total);
    for (const auto& [k, w] : mix) {
        if (u < w) return parse_enum<AttackKind>(k, kAttackNames, "attack kind");
        u -= w;
    }
    return parse_enum<AttackKind>(mix.rbegin()->first, kAttackNames, "attack kind");
}

enum class Domain { source, target };

inline std::vector<AttackSpec> schedule_attacks(const DatasetConfig& cfg, Domain domain, double horizon,
                                                std::uint64_t seed) {
    std::vector<AttackSpec> specs;
    if (cfg.attack_fraction <= 0) return specs;
    Rng rng(seed);
    const auto n_seg = static_cast<long long>(std::floor(horizon / cfg.attack_segment));
    for (long long s = 0; s < n_seg; ++s) {
        if (uniform01(rng) >= cfg.attack_fraction) continue;
        AttackSpec a;
        a.kind = draw_kind(rng, cfg.attack_mix);
        a.start = static_cast<double>(s) * cfg.attack_segment + 5.0;
        a.end = static_cast<double>(s + 1) * cfg.attack_segment - 5.0;
        a.intensity = cfg.intensity;
        FlowSelector sel;
        if (domain == Domain::target) {
            const int area = uniform_int(rng, 0, 1);
            const int rtu = uniform_int(rng, 0, cfg.rtus_per_area - 1);
            switch (a.kind) {
            case AttackKind::dos_flood:
                sel.dst_ip = kControlCentre;
                sel.dst_port = kIec104Port;
                a.target_flow = sel;
                break;
            case AttackKind::scan:
                sel.dst_ip = rtu_ip(area, rtu);
                a.target_flow = sel;
                break;
            case AttackKind::spoof_mitm:
                sel.src_ip = rtu_ip(area, rtu);
                sel.src_port = static_cast<std::uint16_t>(50000 + rtu);
                sel.proto = Proto::udp;
                a.target_flow = sel;
                break;
            default:
                break; // fdia: every measurement stream in the window
            }
        } else {
            switch (a.kind) {
            case AttackKind::fdia:
                // forged DNS answers
                sel.src_ip = kDnsServer;
                sel.proto = Proto::udp;
                a.target_flow = sel;
                break;
            case AttackKind::spoof_mitm:
                sel.dst_ip = kDnsServer;
                sel.proto = Proto::udp;
                a.target_flow = sel;
                break;
            default:
                sel.dst_ip = server_ip(uniform_int(rng, 0, 9));
                sel.dst_port = 80;
                a.target_flow = sel;
                break;
            }
        }
        specs.push_back(a);
    }
    return specs;
}

} // namespace detail

inline Corpora generate_corpora(const DatasetConfig& cfg) {
    cfg.validate();
    Corpora c;

    // target: AGC plant -> telemetry -> attacks
    AgcConfig agc;
    agc.load_noise_std = cfg.load_noise_std;
    {
        Rng rng(derive_seed(cfg.seed, "load-steps"));
        for (double t = 30.0; t < cfg.target_horizon; t += 60.0)
            agc.load_steps.push_back({t, uniform_int(rng, 0, 1), uniform(rng, -0.01, 0.01)});
    }
    const auto states = simulate_agc(agc, cfg.target_horizon, 0.01, derive_seed(cfg.seed, "agc"));
    NetProfile net;
    net.rtus_per_area = cfg.rtus_per_area;
    net.jitter = cfg.meas_jitter;
    auto target = emit_telemetry(states, net, derive_seed(cfg.seed, "telemetry"));
    const auto target_specs =
        detail::schedule_attacks(cfg, detail::Domain::target, cfg.target_horizon, derive_seed(cfg.seed, "target-schedule"));
    c.target = inject_attacks(std::move(target), target_specs, derive_seed(cfg.seed, "target-attacks"));

    auto source = detail::internet_traffic(cfg.source_horizon, cfg.session_rate, derive_seed(cfg.seed, "internet"));
    const auto source_specs =
        detail::schedule_attacks(cfg, detail::Domain::source, cfg.source_horizon, derive_seed(cfg.seed, "source-schedule"));
    c.source = inject_attacks(std::move(source), source_specs, derive_seed(cfg.seed, "source-attacks"));

    const auto sc = count_labels(c.source);
    const auto tc = count_labels(c.target);
    LabelCounts total = sc;
    total += tc;

    nlohmann::ordered_json m;
    m["schema_version"] = 1;
    m["seed"] = cfg.seed;
    m["config_hash"] = cfg.hash();
    m["counts"] = total.to_json();
    m["logs"]["source"] = {{"path", cfg.source_path}, {"packets", c.source.size()}, {"counts", sc.to_json()},
                           {"attacks", source_specs.size()}};
    m["logs"]["target"] = {{"path", cfg.target_path}, {"packets", c.target.size()}, {"counts", tc.to_json()},
                           {"attacks", target_specs.size()}};
    m["config"] = cfg.content_json();
    c.manifest = std::move(m);
    return c;
}

/// Writes both JSONL logs and the manifest to the paths named in `cfg`.
inline Corpora build_dataset(const DatasetConfig& cfg) {
    auto c = generate_corpora(cfg);
    for (const auto* path : {&cfg.source_path, &cfg.target_path, &cfg.manifest_path}) {
        const auto parent = std::filesystem::path(*path).parent_path();
        if (!parent.empty()) {
            std::error_code ec;
            std::filesystem::create_directories(parent, ec);
        }
    }
    write_packet_log(cfg.source_path, c.source);
    write_packet_log(cfg.target_path, c.target);
    std::ofstream os(cfg.manifest_path, std::ios::binary);
    if (!os) throw DataError("cannot write '" + cfg.manifest_path + "'");
    os << c.manifest.dump(2) << '\n';
    return c;
}

} // namespace agcids::sim

#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "agcids/common.hpp"

namespace agcids {

enum class Proto : std::uint8_t { tcp, udp, icmp, other };
enum class PayloadClass : std::uint8_t { measurement, setpoint, bulk, probe, other };
enum class Label : std::uint8_t { normal = 0, anomalous = 1 };
enum class AttackKind : std::uint8_t { none, dos_flood, fdia, scan, spoof_mitm };

inline constexpr std::array<std::string_view, 4> kProtoNames{"tcp", "udp", "icmp", "other"};
inline constexpr std::array<std::string_view, 5> kPayloadNames{"measurement", "setpoint", "bulk", "probe", "other"};
inline constexpr std::array<std::string_view, 2> kLabelNames{"normal", "anomalous"};
inline constexpr std::array<std::string_view, 5> kAttackNames{"none", "dos_flood", "fdia", "scan", "spoof_mitm"};

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::string_view, N>& names, const char* what) {
    for (std::size_t i = 0; i < N; ++i)
        if (names[i] == s) return static_cast<E>(i);
    throw DataError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

inline std::string_view to_string(Proto p) { return kProtoNames[static_cast<int>(p)]; }
inline std::string_view to_string(PayloadClass p) { return kPayloadNames[static_cast<int>(p)]; }
inline std::string_view to_string(Label l) { return kLabelNames[static_cast<int>(l)]; }
inline std::string_view to_string(AttackKind a) { return kAttackNames[static_cast<int>(a)]; }

/// TCP flag bits as carried in PacketRecord::tcp_flags.
namespace tcp {
inline constexpr std::uint8_t SYN = 1 << 0;
inline constexpr std::uint8_t ACK = 1 << 1;
inline constexpr std::uint8_t FIN = 1 << 2;
inline constexpr std::uint8_t RST = 1 << 3;
inline constexpr std::uint8_t URG = 1 << 4;
inline constexpr std::uint8_t PSH = 1 << 5;
inline constexpr std::array<std::string_view, 6> kFlagNames{"SYN", "ACK", "FIN", "RST", "URG", "PSH"};
} // namespace tcp

using Ipv4 = std::uint32_t;

inline constexpr Ipv4 make_ip(unsigned a, unsigned b, unsigned c, unsigned d) {
    return (Ipv4{a} << 24) | (Ipv4{b} << 16) | (Ipv4{c} << 8) | Ipv4{d};
}

inline std::string ip_to_string(Ipv4 ip) {
    return std::to_string(ip >> 24) + "." + std::to_string((ip >> 16) & 0xff) + "." +
           std::to_string((ip >> 8) & 0xff) + "." + std::to_string(ip & 0xff);
}

inline Ipv4 parse_ip(std::string_view s) {
    Ipv4 ip = 0;
    int parts = 0;
    const char* p = s.data();
    const char* end = s.data() + s.size();
    while (parts < 4) {
        unsigned v = 0;
        auto [next, ec] = std::from_chars(p, end, v);
        if (ec != std::errc{} || v > 255) throw DataError("bad IPv4 address '" + std::string(s) + "'");
        ip = (ip << 8) | v;
        ++parts;
        p = next;
        if (parts < 4) {
            if (p == end || *p != '.') throw DataError("bad IPv4 address '" + std::string(s) + "'");
            ++p;
        }
    }
    if (p != end) throw DataError("bad IPv4 address '" + std::string(s) + "'");
    return ip;
}

struct PacketRecord {
    double ts = 0.0;
    Ipv4 src_ip = 0;
    Ipv4 dst_ip = 0;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    Proto proto = Proto::udp;
    std::uint32_t length = 0;
    std::uint8_t tcp_flags = 0;
    PayloadClass payload_class = PayloadClass::other;
    Label label = Label::normal;
    AttackKind attack_kind = AttackKind::none;

    bool has(std::uint8_t flag) const { return (tcp_flags & flag) != 0; }
    bool operator==(const PacketRecord&) const = default;
};

// ---------------------------------------------------------------------------
// JSONL packet logs

inline nlohmann::ordered_json to_json(const PacketRecord& p) {
    nlohmann::ordered_json j;
    j["ts"] = p.ts;
    j["src_ip"] = ip_to_string(p.src_ip);
    j["dst_ip"] = ip_to_string(p.dst_ip);
    j["src_port"] = p.src_port;
    j["dst_port"] = p.dst_port;
    j["proto"] = to_string(p.proto);
    j["length"] = p.length;
    auto flags = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < tcp::kFlagNames.size(); ++i)
        if (p.tcp_flags & (1u << i)) flags.push_back(tcp::kFlagNames[i]);
    j["tcp_flags"] = std::move(flags);
    j["payload_class"] = to_string(p.payload_class);
    j["label"] = to_string(p.label);
    j["attack_kind"] = to_string(p.attack_kind);
    return j;
}

inline PacketRecord packet_from_json(const nlohmann::json& j) {
    PacketRecord p;
    try {
        p.ts = j.at("ts").get<double>();
        p.src_ip = parse_ip(j.at("src_ip").get<std::string>());
        p.dst_ip = parse_ip(j.at("dst_ip").get<std::string>());
        auto sport = j.at("src_port").get<long long>();
        auto dport = j.at("dst_port").get<long long>();
        if (sport < 0 || sport > 65535 || dport < 0 || dport > 65535) throw DataError("port out of range");
        p.src_port = static_cast<std::uint16_t>(sport);
        p.dst_port = static_cast<std::uint16_t>(dport);
        p.proto = parse_enum<Proto>(j.at("proto").get<std::string>(), kProtoNames, "proto");
        auto len = j.at("length").get<long long>();
        if (len < 0) throw DataError("negative packet length");
        p.length = static_cast<std::uint32_t>(len);
        for (const auto& f : j.at("tcp_flags")) {
            auto name = f.get<std::string>();
            bool found = false;
            for (std::size_t i = 0; i < tcp::kFlagNames.size(); ++i)
                if (tcp::kFlagNames[i] == name) {
                    p.tcp_flags |= static_cast<std::uint8_t>(1u << i);
                    found = true;
                }
            if (!found) throw DataError("unknown tcp flag '" + name + "'");
        }
        p.payload_class =
            parse_enum<PayloadClass>(j.at("payload_class").get<std::string>(), kPayloadNames, "payload_class");
        p.label = parse_enum<Label>(j.at("label").get<std::string>(), kLabelNames, "label");
        p.attack_kind = AttackKind::none;
        if (j.contains("attack_kind") && !j["attack_kind"].is_null())
            p.attack_kind = parse_enum<AttackKind>(j["attack_kind"].get<std::string>(), kAttackNames, "attack_kind");
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed packet record: ") + e.what());
    }
    if ((p.label == Label::anomalous) != (p.attack_kind != AttackKind::none))
        throw DataError("packet label and attack_kind disagree");
    return p;
}

inline void write_packet_log(std::ostream& os, const std::vector<PacketRecord>& packets) {
    for (const auto& p : packets) os << to_json(p).dump() << '\n';
}

inline void write_packet_log(const std::string& path, const std::vector<PacketRecord>& packets) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write '" + path + "'");
    write_packet_log(os, packets);
    if (!os) throw DataError("write failed for '" + path + "'");
}

/// Streams records from a JSONL log; invokes `sink` per record in file order.
template <typename Sink>
void read_packet_log(std::istream& is, Sink&& sink) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("line " + std::to_string(lineno) + ": " + e.what());
        }
        sink(packet_from_json(j));
    }
}

inline std::vector<PacketRecord> read_packet_log(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot read '" + path + "'");
    std::vector<PacketRecord> out;
    read_packet_log(is, [&](PacketRecord p) { out.push_back(p); });
    return out;
}

} // namespace agcids

#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include "agcids/packet.hpp"

namespace agcids {

/// The 79 service tokens, in schema order: the classic intrusion-detection
/// service list followed by industrial-control protocols.
inline constexpr std::array<std::string_view, 79> kServiceTokens{
    "aol",         "auth",        "bgp",        "courier",   "csnet_ns",    "ctf",       "daytime",    "discard",
    "domain",      "domain_u",    "echo",       "eco_i",     "ecr_i",       "efs",       "exec",       "finger",
    "ftp",         "ftp_data",    "gopher",     "harvest",   "hostnames",   "http",      "http_2784",  "http_443",
    "http_8001",   "imap4",       "irc",        "iso_tsap",  "klogin",      "kshell",    "ldap",       "link",
    "login",       "mtp",         "name",       "netbios_dgm", "netbios_ns", "netbios_ssn", "netstat",  "nnsp",
    "nntp",        "ntp_u",       "other",      "pm_dump",   "pop_2",       "pop_3",     "printer",    "private",
    "red_i",       "remote_job",  "rje",        "shell",     "smtp",        "sql_net",   "ssh",        "sunrpc",
    "supdup",      "systat",      "telnet",     "tftp_u",    "tim_i",       "time",      "urh_i",      "urp_i",
    "uucp",        "uucp_path",   "vmnet",      "whois",     "x11",         "z39_50",    "iec104",     "dnp3",
    "modbus",      "opcua",       "bacnet",     "enip",      "mqtt",        "coap",      "snmp"};

inline constexpr std::array<std::string_view, 4> kProtocolTokens{"tcp", "udp", "icmp", "other"};

inline constexpr std::array<std::string_view, 11> kStateTokens{"sf",   "s0", "rej", "rsto", "rstr", "sh",
                                                                "s1",   "s2", "s3",  "oth",  "shr"};

struct PortService {
    std::uint16_t port;
    Proto proto;  // Proto::other = any transport
    std::string_view name;
};

inline constexpr std::array<PortService, 70> kPortServices{{
    {5190, Proto::other, "aol"},       {113, Proto::other, "auth"},       {179, Proto::other, "bgp"},
    {530, Proto::other, "courier"},    {105, Proto::other, "csnet_ns"},   {84, Proto::other, "ctf"},
    {13, Proto::other, "daytime"},     {9, Proto::other, "discard"},      {53, Proto::tcp, "domain"},
    {53, Proto::udp, "domain_u"},      {7, Proto::other, "echo"},         {520, Proto::tcp, "efs"},
    {512, Proto::other, "exec"},       {79, Proto::other, "finger"},      {21, Proto::other, "ftp"},
    {20, Proto::other, "ftp_data"},    {70, Proto::other, "gopher"},      {101, Proto::other, "hostnames"},
    {80, Proto::other, "http"},        {2784, Proto::other, "http_2784"}, {443, Proto::other, "http_443"},
    {8001, Proto::other, "http_8001"}, {143, Proto::other, "imap4"},      {194, Proto::other, "irc"},
    {6667, Proto::other, "irc"},       {102, Proto::other, "iso_tsap"},   {543, Proto::other, "klogin"},
    {544, Proto::other, "kshell"},     {389, Proto::other, "ldap"},       {245, Proto::other, "link"},
    {513, Proto::other, "login"},      {57, Proto::other, "mtp"},         {42, Proto::other, "name"},
    {138, Proto::other, "netbios_dgm"}, {137, Proto::other, "netbios_ns"}, {139, Proto::other, "netbios_ssn"},
    {15, Proto::other, "netstat"},     {433, Proto::other, "nnsp"},       {119, Proto::other, "nntp"},
    {123, Proto::udp, "ntp_u"},        {109, Proto::other, "pop_2"},      {110, Proto::other, "pop_3"},
    {515, Proto::other, "printer"},    {71, Proto::other, "remote_job"},  {77, Proto::other, "rje"},
    {514, Proto::other, "shell"},      {25, Proto::other, "smtp"},        {150, Proto::other, "sql_net"},
    {22, Proto::other, "ssh"},         {111, Proto::other, "sunrpc"},     {95, Proto::other, "supdup"},
    {11, Proto::other, "systat"},      {23, Proto::other, "telnet"},      {69, Proto::udp, "tftp_u"},
    {37, Proto::other, "time"},        {540, Proto::other, "uucp"},       {117, Proto::other, "uucp_path"},
    {175, Proto::other, "vmnet"},      {43, Proto::other, "whois"},       {6000, Proto::other, "x11"},
    {210, Proto::other, "z39_50"},     {2404, Proto::other, "iec104"},    {20000, Proto::other, "dnp3"},
    {502, Proto::other, "modbus"},     {4840, Proto::other, "opcua"},     {47808, Proto::other, "bacnet"},
    {44818, Proto::other, "enip"},     {1883, Proto::other, "mqtt"},      {5683, Proto::other, "coap"},
    {161, Proto::other, "snmp"},
}};

inline const PortService* lookup_port(std::uint16_t port, Proto proto) {
    for (const auto& ps : kPortServices)
        if (ps.port == port && (ps.proto == Proto::other || ps.proto == proto)) return &ps;
    return nullptr;
}

/// Direction-independent service: the well-known port of either endpoint
/// (lower port wins when both are known); icmp maps to eco_i.
inline std::string_view service_for(Proto proto, std::uint16_t port_a, std::uint16_t port_b) {
    if (proto == Proto::icmp) return "eco_i";
    const auto* a = lookup_port(port_a, proto);
    const auto* b = lookup_port(port_b, proto);
    if (a && b) return port_a <= port_b ? a->name : b->name;
    if (a) return a->name;
    if (b) return b->name;
    if (port_a >= 1024 && port_b >= 1024) return "private";
    return "other";
}

} // namespace agcids

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "agcids/dataset.hpp"
#include "agcids/features.hpp"
#include "agcids/kdd.hpp"

using namespace agcids;
using namespace agcids::flow;

namespace {

const Ipv4 A = make_ip(10, 0, 0, 1), B = make_ip(10, 0, 0, 2);

PacketRecord pkt(double ts, Ipv4 src, std::uint16_t sp, Ipv4 dst, std::uint16_t dp, std::uint32_t len,
                 Proto proto = Proto::udp, std::uint8_t flags = 0) {
    PacketRecord p;
    p.ts = ts;
    p.src_ip = src;
    p.src_port = sp;
    p.dst_ip = dst;
    p.dst_port = dp;
    p.length = len;
    p.proto = proto;
    p.tcp_flags = flags;
    return p;
}

PacketRecord reversed(PacketRecord p) {
    std::swap(p.src_ip, p.dst_ip);
    std::swap(p.src_port, p.dst_port);
    return p;
}

std::vector<PacketRecord> corpus(std::uint64_t seed, double horizon = 120.0) {
    sim::DatasetConfig cfg;
    cfg.seed = seed;
    cfg.target_horizon = horizon;
    cfg.source_horizon = horizon;
    return sim::generate_corpora(cfg).target;
}

FlowRecord flow_of(std::vector<PacketRecord> pk) {
    auto flows = assemble_flows(pk);
    EXPECT_EQ(flows.size(), 1u);
    return flows.front();
}

} // namespace

// --- assembly ----------------------------------------------------------------

TEST(FlowKey, DirectionIndependent) {
    const auto p = pkt(0, A, 1000, B, 502, 10);
    EXPECT_EQ(FlowKey::of(p), FlowKey::of(reversed(p)));
    EXPECT_EQ(FlowKeyHash{}(FlowKey::of(p)), FlowKeyHash{}(FlowKey::of(reversed(p))));
}

TEST(Assembly, SingleUdpPacket) {
    const auto f = flow_of({pkt(1.0, A, 1000, B, 502, 100)});
    EXPECT_EQ(f.up_pkts, 1u);
    EXPECT_EQ(f.down_pkts, 0u);
    EXPECT_EQ(f.duration(), 0.0);
    EXPECT_EQ(f.state_flag, StateFlag::SF);
}

TEST(Assembly, IdleGapSplits) {
    const auto flows = assemble_flows({pkt(0.0, A, 1000, B, 502, 10), pkt(2.5, A, 1000, B, 502, 10)});
    EXPECT_EQ(flows.size(), 2u);
    EXPECT_EQ(assemble_flows({pkt(0.0, A, 1000, B, 502, 10), pkt(1.5, A, 1000, B, 502, 10)}).size(), 1u);
}

TEST(Assembly, MaxDurationSplits) {
    std::vector<PacketRecord> pk;
    for (int i = 0; i < 100; ++i) pk.push_back(pkt(i * 1.0, A, 1000, B, 502, 10));
    const auto flows = assemble_flows(pk);
    ASSERT_EQ(flows.size(), 2u);
    EXPECT_EQ(flows[0].total_pkts(), 65u);
    EXPECT_LE(flows[0].duration(), 64.0);
}

TEST(Assembly, HandshakeAndCloseIsSf) {
    using namespace tcp;
    const auto f = flow_of({pkt(0.00, A, 40000, B, 502, 60, Proto::tcp, SYN),
                            pkt(0.01, B, 502, A, 40000, 60, Proto::tcp, SYN | ACK),
                            pkt(0.02, A, 40000, B, 502, 60, Proto::tcp, ACK),
                            pkt(0.03, A, 40000, B, 502, 60, Proto::tcp, FIN | ACK),
                            pkt(0.04, B, 502, A, 40000, 60, Proto::tcp, FIN | ACK),
                            pkt(0.05, A, 40000, B, 502, 60, Proto::tcp, ACK)});
    EXPECT_EQ(f.state_flag, StateFlag::SF);
    EXPECT_EQ(f.up_pkts, 4u);
    EXPECT_EQ(f.down_pkts, 2u);
    EXPECT_EQ(f.initiator, (Endpoint{A, 40000}));
}

TEST(Assembly, StateFlagMachine) {
    using namespace tcp;
    auto state = [](std::vector<PacketRecord> pk) { return flow_of(std::move(pk)).state_flag; };
    const auto syn = pkt(0, A, 40000, B, 80, 60, Proto::tcp, SYN);
    auto reply = [](double ts, std::uint8_t flags) { return pkt(ts, B, 80, A, 40000, 60, Proto::tcp, flags); };
    auto orig = [](double ts, std::uint8_t flags) { return pkt(ts, A, 40000, B, 80, 60, Proto::tcp, flags); };
    EXPECT_EQ(state({syn}), StateFlag::S0);
    EXPECT_EQ(state({syn, reply(0.1, RST)}), StateFlag::REJ);
    EXPECT_EQ(state({syn, orig(0.1, FIN)}), StateFlag::SH);
    EXPECT_EQ(state({syn, reply(0.1, SYN | ACK), orig(0.2, RST)}), StateFlag::RSTO);
    EXPECT_EQ(state({syn, reply(0.1, SYN | ACK), reply(0.2, RST)}), StateFlag::RSTR);
    EXPECT_EQ(state({syn, reply(0.1, SYN | ACK), orig(0.2, ACK)}), StateFlag::S1);
    EXPECT_EQ(state({orig(0.0, ACK), reply(0.1, ACK)}), StateFlag::OTH);
}

TEST(Assembly, UnsortedInputRejected) {
    try {
        assemble_flows({pkt(1.0, A, 1, B, 2, 10), pkt(0.5, A, 1, B, 2, 10)});
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("ordering"), std::string::npos);
    }
}

TEST(Assembly, PartitionsEveryPacket) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto pk = corpus(seed);
        const auto flows = assemble_flows(pk);
        std::uint64_t bytes = 0, pkts = 0;
        for (const auto& f : flows) {
            bytes += f.total_bytes();
            pkts += f.total_pkts();
            ASSERT_GE(f.total_pkts(), 1u);
            ASSERT_GE(f.last_ts, f.first_ts);
            const double sum = std::accumulate(f.rate_series.begin(), f.rate_series.end(), 0.0);
            ASSERT_EQ(sum, static_cast<double>(f.total_bytes()));
        }
        std::uint64_t log_bytes = 0;
        for (const auto& p : pk) log_bytes += p.length;
        EXPECT_EQ(pkts, pk.size());
        EXPECT_EQ(bytes, log_bytes);
    }
}

TEST(Assembly, LabelIsMajorityOfPackets) {
    auto a = pkt(0.0, A, 1, B, 2, 10);
    auto b = a, c = a;
    b.ts = 0.1;
    c.ts = 0.2;
    b.label = c.label = Label::anomalous;
    b.attack_kind = c.attack_kind = AttackKind::fdia;
    const auto f = flow_of({a, b, c});
    EXPECT_EQ(f.label, Label::anomalous);
    EXPECT_EQ(f.attack_kind, AttackKind::fdia);
    EXPECT_EQ(flow_of({a}).label, Label::normal);
}

// --- rate series -------------------------------------------------------------

TEST(RateSeries, PointMass) {
    const auto f = flow_of({pkt(3.0, A, 1, B, 2, 100)});
    EXPECT_EQ(f.rate_series[0], 100.0);
    for (std::size_t i = 1; i < kRateSlots; ++i) EXPECT_EQ(f.rate_series[i], 0.0);
}

TEST(RateSeries, UniformOnePerSlot) {
    std::vector<PacketRecord> pk;
    for (int i = 0; i < 64; ++i) pk.push_back(pkt(i * 0.015625, A, 1, B, 2, 10));
    const auto f = flow_of(pk);
    for (double v : f.rate_series) EXPECT_EQ(v, 10.0);
}

// --- intrinsic features ------------------------------------------------------

TEST(Intrinsic, SingletonUdp) {
    const auto fv = intrinsic_features(flow_of({pkt(1.0, A, 1000, B, 502, 100)}));
    EXPECT_EQ(fv.f(5), 100);
    EXPECT_EQ(fv.f(6), 0);
    EXPECT_EQ(fv.f(7), 1);
    EXPECT_EQ(fv.f(8), 0);
    EXPECT_EQ(fv.f(11), 100);
    EXPECT_EQ(fv.f(12), 0);
    EXPECT_EQ(fv.f(13), 0);
    EXPECT_EQ(fv.protocol, "udp");
    EXPECT_EQ(fv.state, "sf");
}

TEST(Intrinsic, UpstreamPopulationVariance) {
    const auto fv = intrinsic_features(flow_of({pkt(0.0, A, 1000, B, 502, 100), pkt(0.1, A, 1000, B, 502, 200)}));
    EXPECT_EQ(fv.f(12), 2500.0);
    EXPECT_EQ(fv.f(11), 150.0);
}

TEST(Intrinsic, LandAndUrgent) {
    auto p = pkt(0.0, A, 7, A, 7, 40, Proto::tcp, tcp::URG | tcp::ACK);
    const auto fv = intrinsic_features(flow_of({p}));
    EXPECT_EQ(fv.f(9), 1.0);
    EXPECT_EQ(fv.f(10), 1.0);
    EXPECT_EQ(intrinsic_features(flow_of({pkt(0.0, A, 7, B, 7, 40)})).f(9), 0.0);
}

TEST(Intrinsic, ReversedDirectionKeepsInitiatorRoles) {
    const std::vector<PacketRecord> pk{pkt(0.0, A, 1000, B, 502, 100), pkt(0.1, B, 502, A, 1000, 300),
                                       pkt(0.2, B, 502, A, 1000, 500)};
    std::vector<PacketRecord> rev;
    for (const auto& p : pk) rev.push_back(reversed(p));
    const auto a = intrinsic_features(flow_of(pk)), b = intrinsic_features(flow_of(rev));
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.f(5), 100);
    EXPECT_EQ(a.f(6), 800);
}

TEST(Intrinsic, OtherSideInitiatingSwapsUpAndDown) {
    const auto a = intrinsic_features(flow_of({pkt(0.0, A, 1000, B, 502, 100), pkt(0.1, B, 502, A, 1000, 300),
                                               pkt(0.2, B, 502, A, 1000, 500)}));
    const auto b = intrinsic_features(flow_of({pkt(0.0, B, 502, A, 1000, 300), pkt(0.1, B, 502, A, 1000, 500),
                                               pkt(0.2, A, 1000, B, 502, 100)}));
    EXPECT_EQ(a.f(5), b.f(6));
    EXPECT_EQ(a.f(6), b.f(5));
    EXPECT_EQ(a.f(7), b.f(8));
    EXPECT_EQ(a.f(8), b.f(7));
    EXPECT_EQ(a.f(12), b.f(13));
    EXPECT_EQ(a.f(13), b.f(12));
    for (int i : {1, 9, 10, 11}) EXPECT_EQ(a.f(i), b.f(i)) << i;
    EXPECT_EQ(a.service, b.service);
}

// --- statistics --------------------------------------------------------------

namespace {

FlowSummary summary(double t, Ipv4 host, std::string service, StateFlag st = StateFlag::SF) {
    return {t, host, std::move(service), st};
}

FlowRecord probe_flow(double t, Ipv4 host, const std::string& service) {
    auto f = flow_of({pkt(t, A, 40000, host, 80, 60)});
    f.service = service;
    return f;
}

} // namespace

TEST(Statistic, EmptyHistoryAllZero) {
    FlowHistory h;
    const auto fv = statistic_features(probe_flow(10.0, B, "http"), h);
    for (std::size_t i = 25; i <= 39; ++i) EXPECT_EQ(fv.f(i), 0.0) << i;
}

TEST(Statistic, SynErrorRateAmongSameHost) {
    FlowHistory h;
    h.add(summary(9.0, B, "http", StateFlag::S0));
    h.add(summary(9.1, B, "http", StateFlag::S0));
    h.add(summary(9.2, B, "http"));
    h.add(summary(9.3, B, "http"));
    const auto fv = statistic_features(probe_flow(10.0, B, "http"), h);
    EXPECT_EQ(fv.f(25), 4.0);
    EXPECT_EQ(fv.f(27), 0.5);
    EXPECT_EQ(fv.f(29), 1.0);
    EXPECT_EQ(fv.f(30), 0.0);
    EXPECT_EQ(fv.f(38), 0.5);
}

TEST(Statistic, WindowExcludesOldFlows) {
    FlowHistory h;
    h.add(summary(5.9, B, "http"));
    h.add(summary(6.0, B, "http"));
    const auto fv = statistic_features(probe_flow(10.0, B, "http"), h);
    EXPECT_EQ(fv.f(25), 1.0);
}

namespace {

// Independent count of the window statistics straight from the definitions.
std::map<int, double> oracle_stats(const std::vector<FlowSummary>& window, Ipv4 host, const std::string& service) {
    double n_all = window.size(), n_host = 0, n_host_srv = 0, n_srv = 0, host_serr = 0, host_rerr = 0, srv_serr = 0,
           srv_rerr = 0, serr = 0, rerr = 0;
    std::set<Ipv4> hosts, srv_hosts;
    std::set<std::pair<Ipv4, std::string>> pairs;
    for (const auto& e : window) {
        const bool s = e.state == StateFlag::S0 || e.state == StateFlag::S1 || e.state == StateFlag::S2 ||
                       e.state == StateFlag::S3;
        const bool r = e.state == StateFlag::REJ;
        hosts.insert(e.dst_host);
        pairs.emplace(e.dst_host, e.service);
        serr += s;
        rerr += r;
        if (e.dst_host == host) n_host++, host_serr += s, host_rerr += r, n_host_srv += e.service == service;
        if (e.service == service) n_srv++, srv_serr += s, srv_rerr += r, srv_hosts.insert(e.dst_host);
    }
    auto q = [](double a, double b) { return b > 0 ? a / b : 0.0; };
    return {{25, n_host},
            {26, n_host_srv},
            {27, q(host_serr, n_host)},
            {28, q(host_rerr, n_host)},
            {29, q(n_host_srv, n_host)},
            {30, n_host > 0 ? 1 - q(n_host_srv, n_host) : 0.0},
            {31, n_srv},
            {32, q(srv_serr, n_srv)},
            {33, q(srv_rerr, n_srv)},
            {34, q(static_cast<double>(srv_hosts.size()), n_srv)},
            {35, static_cast<double>(hosts.size())},
            {36, static_cast<double>(pairs.size())},
            {37, q(n_srv, n_all)},
            {38, q(serr, n_all)},
            {39, q(rerr, n_all)}};
}

} // namespace

TEST(Statistic, MatchesOracleOnRandomHistories) {
    Rng rng(5);
    const std::vector<std::string> services{"http", "modbus", "dnp3", "ftp"};
    const std::vector<StateFlag> states{StateFlag::SF, StateFlag::S0, StateFlag::REJ, StateFlag::S2, StateFlag::OTH};
    for (int trial = 0; trial < 200; ++trial) {
        FlowHistory h;
        std::vector<FlowSummary> window;
        const double t = 50.0;
        double ts = 40.0;
        const int n = uniform_int(rng, 0, 30);
        for (int i = 0; i < n; ++i) {
            ts += uniform(rng, 0.0, 0.4);
            const auto s = summary(std::min(ts, t), make_ip(10, 0, 0, uniform_int(rng, 1, 4)),
                                   services[uniform_int(rng, 0, 3)], states[uniform_int(rng, 0, 4)]);
            h.add(s);
            if (s.last_ts >= t - 4.0) window.push_back(s);
        }
        const Ipv4 host = make_ip(10, 0, 0, uniform_int(rng, 1, 4));
        const auto service = services[uniform_int(rng, 0, 3)];
        const auto fv = statistic_features(probe_flow(t, host, service), h);
        for (const auto& [i, v] : oracle_stats(window, host, service)) {
            ASSERT_NEAR(fv.f(i), v, 1e-12) << "f" << i << " trial " << trial;
            if (i != 25 && i != 26 && i != 31 && i != 35 && i != 36) {
                ASSERT_GE(fv.f(i), 0.0);
                ASSERT_LE(fv.f(i), 1.0);
            }
        }
    }
}

TEST(Statistic, WiderWindowNeverLowersCounts) {
    const auto pk = corpus(4);
    WindowConfig narrow, wide;
    wide.slot = 4.0;
    const auto a = extract_all(pk, {}, narrow), b = extract_all(pk, {}, wide);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (int k : {25, 26, 31, 35, 36}) ASSERT_GE(b[i].features.f(k), a[i].features.f(k)) << k;
}

// --- full vectors ------------------------------------------------------------

TEST(Features, FiniteAndPure) {
    const auto pk = corpus(9);
    const auto a = extract_all(pk), b = extract_all(pk);
    ASSERT_FALSE(a.empty());
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].features, b[i].features);
        for (std::size_t k = 1; k <= kFeatureCount; ++k) {
            if (FeatureVector39::is_symbolic(k)) continue;
            ASSERT_TRUE(std::isfinite(a[i].features.f(k))) << "f" << k;
        }
    }
}

TEST(Features, CsvRoundTrip) {
    std::vector<FeatureVector39> rows;
    for (const auto& s : extract_all(corpus(2, 60.0))) rows.push_back(s.features);
    std::stringstream ss;
    write_feature_csv(ss, rows);
    std::string header;
    std::getline(ss, header);
    EXPECT_EQ(split(header, ',').size(), 40u);
    ss.seekg(0);
    const auto back = read_feature_csv(ss);
    ASSERT_EQ(back.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(back[i].protocol, rows[i].protocol);
        EXPECT_EQ(back[i].label, rows[i].label);
        for (std::size_t k = 1; k <= kFeatureCount; ++k)
            ASSERT_NEAR(back[i].f(k), rows[i].f(k), 1e-8 * std::max(1.0, std::abs(rows[i].f(k))));
    }
}

TEST(Features, CsvRejectsWrongArity) {
    std::stringstream ss(feature_csv_header() + "\n1,2,3\n");
    EXPECT_THROW(read_feature_csv(ss), DataError);
}

// --- KDD-style records -------------------------------------------------------

TEST(Kdd, MapsNamedColumns) {
    const std::string rec =
        "2,tcp,http,SF,181,5450,0,0,1,0,0,1,0,0,0,0,0,0,0,0,0,0,8,9,0.25,0.5,0.125,0.75,0.5,0.1,0.2,9,19,0.3,0.01,0.11,0.02,"
        "0.4,0.03,0.6,0.04,normal,21";
    const auto fv = flow::parse_kdd_row(rec, 1);
    EXPECT_EQ(fv.f(1), 2.0);
    EXPECT_EQ(fv.protocol, "tcp");
    EXPECT_EQ(fv.service, "http");
    EXPECT_EQ(fv.state, "sf");
    EXPECT_EQ(fv.f(5), 181.0);
    EXPECT_EQ(fv.f(6), 5450.0);
    EXPECT_EQ(fv.f(10), 1.0);
    EXPECT_EQ(fv.f(25), 8.0);
    EXPECT_EQ(fv.f(26), 4.0);
    EXPECT_EQ(fv.f(27), 0.25);
    EXPECT_EQ(fv.f(28), 0.125);
    EXPECT_EQ(fv.f(31), 9.0);
    EXPECT_EQ(fv.f(32), 0.5);
    EXPECT_EQ(fv.f(35), 9.0);
    EXPECT_EQ(fv.f(36), 19.0);
    EXPECT_EQ(fv.f(38), 0.4);
    EXPECT_EQ(fv.f(39), 0.6);
    for (std::size_t i : {7, 8, 11, 12, 13, 14, 20, 24}) EXPECT_EQ(fv.f(i), 0.0) << i;
    EXPECT_EQ(fv.label, Label::normal);
}

TEST(Kdd, LabelsHeaderAndErrors) {
    std::string base = "0,icmp,ecr_i,SF,1032,0,0,0,0";
    for (int i = 9; i < 41; ++i) base += ",0";
    std::istringstream is("duration,protocol_type,...\n" + base + ",smurf.\n" + base + ",normal.\n");
    flow::KddStats st;
    const auto rows = flow::read_kdd_csv(is, &st);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(st.skipped_header, 1u);
    EXPECT_EQ(rows[0].label, Label::anomalous);
    EXPECT_EQ(rows[1].label, Label::normal);
    EXPECT_EQ(rows[0].protocol, "icmp");
    EXPECT_THROW(flow::parse_kdd_row("1,tcp,http,SF", 3), DataError);
    EXPECT_THROW(flow::parse_kdd_row("x" + base.substr(1) + ",normal", 4), DataError);
    EXPECT_EQ(flow::parse_kdd_row("0,gre" + base.substr(6) + ",normal", 5).protocol, "other");
}

TEST(Kdd, RoundTripsThroughFeatureCsv) {
    std::string base = "3,udp,domain_u,SF,44,120,0,0,0";
    for (int i = 9; i < 41; ++i) base += ",0.5";
    const auto fv = flow::parse_kdd_row(base + ",neptune", 1);
    std::stringstream ss;
    flow::write_feature_csv(ss, {fv});
    EXPECT_EQ(flow::read_feature_csv(ss).front(), fv);
}

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "agcids/dataset.hpp"
#include "agcids/encoding.hpp"

using namespace agcids;
using namespace agcids::encoding;

namespace {

std::vector<flow::FeatureVector39> sample_rows(std::uint64_t seed) {
    sim::DatasetConfig cfg;
    cfg.seed = seed;
    cfg.target_horizon = 300;
    cfg.source_horizon = 300;
    const auto c = sim::generate_corpora(cfg);
    std::vector<flow::FeatureVector39> rows;
    for (const auto* log : {&c.source, &c.target})
        for (const auto& s : flow::extract_all(*log)) rows.push_back(s.features);
    return rows;
}

std::string tmp(const std::string& name) { return (std::filesystem::temp_directory_path() / name).string(); }

} // namespace

TEST(Schema, DefaultTotals130) {
    const auto s = default_schema();
    EXPECT_EQ(s.total_dims(), 130u);
    EXPECT_EQ(s.protocol, (std::vector<std::string>{"tcp", "udp", "icmp", "other"}));
    EXPECT_EQ(s.service.size(), 79u);
    EXPECT_EQ(s.flag.size(), 11u);
    EXPECT_EQ(s.hash().size(), 64u);
}

TEST(Schema, BundledFileMatchesDefault) {
    const auto s = load_schema(AGCIDS_SOURCE_DIR "/data/schema_v1.json");
    EXPECT_EQ(s.to_json(), default_schema().to_json());
    EXPECT_EQ(s.hash(), default_schema().hash());
}

TEST(Schema, ShortServiceListRejected) {
    auto j = default_schema().to_json();
    j["service"].erase(j["service"].size() - 2);
    try {
        schema_from_json(j);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("129"), std::string::npos);
    }
}

TEST(Schema, DuplicateTokenRejected) {
    auto j = default_schema().to_json();
    auto& svc = j["service"];
    for (auto& t : svc)
        if (t != "http") {
            t = "http";
            break;
        }
    EXPECT_THROW(schema_from_json(j), DataError);
}

TEST(Schema, UnknownVersionRejected) {
    auto j = default_schema().to_json();
    j["version"] = 2;
    EXPECT_THROW(schema_from_json(j), DataError);
}

TEST(Schema, HashTracksContent) {
    auto a = default_schema().to_json(), b = a;
    std::swap(b["protocol"][0], b["protocol"][1]);
    EXPECT_NE(schema_from_json(a).hash(), schema_from_json(b).hash());
}

TEST(Normalizer, SingleVectorDegenerates) {
    const auto rows = sample_rows(1);
    const std::vector<flow::FeatureVector39> one{rows.front()};
    const auto schema = default_schema();
    const auto calib = fit_normalizer(one, schema);
    const auto v = encode_vector(one.front(), schema, calib);
    for (std::size_t k = 0; k < kNumericCount; ++k) EXPECT_EQ(v[k], 0.0f);
}

TEST(Normalizer, MinMaxOfTraining) {
    flow::FeatureVector39 a, b;
    a.f(1) = 0;
    b.f(1) = 10;
    const std::vector<flow::FeatureVector39> rows{a, b};
    const auto calib = fit_normalizer(rows, default_schema());
    EXPECT_EQ(calib.min[0], 0.0);
    EXPECT_EQ(calib.max[0], 10.0);
    EXPECT_THROW(fit_normalizer(std::vector<flow::FeatureVector39>{}, default_schema()), DataError);
}

TEST(Encode, NumericScaleAndClamp) {
    Calibration c;
    c.min.assign(kNumericCount, 0.0);
    c.max.assign(kNumericCount, 10.0);
    flow::FeatureVector39 fv;
    fv.f(1) = 5;
    fv.f(5) = 15;
    fv.f(6) = -3;
    const auto v = encode_vector(fv, default_schema(), c);
    EXPECT_EQ(v[0], 0.5f);
    EXPECT_EQ(v[1], 1.0f);
    EXPECT_EQ(v[2], 0.0f);
}

TEST(Encode, ProtocolOneHot) {
    Calibration c;
    c.min.assign(kNumericCount, 0.0);
    c.max.assign(kNumericCount, 1.0);
    flow::FeatureVector39 fv;
    fv.protocol = "tcp";
    const auto v = encode_vector(fv, default_schema(), c);
    EXPECT_EQ(v[36], 1.0f);
    EXPECT_EQ(v[37], 0.0f);
    EXPECT_EQ(v[38], 0.0f);
    EXPECT_EQ(v[39], 0.0f);
}

TEST(Encode, UnknownTokenFallsBackAndCounts) {
    const auto schema = default_schema();
    Calibration c;
    c.min.assign(kNumericCount, 0.0);
    c.max.assign(kNumericCount, 1.0);
    flow::FeatureVector39 fv;
    fv.protocol = "sctp";
    fv.service = "gopher-plus";
    EncodeStats st;
    const auto v = encode_vector(fv, schema, c, &st);
    EXPECT_EQ(st.unknown_tokens, 2u);
    EXPECT_EQ(v[36 + 3], 1.0f);
    const auto other = std::find(schema.service.begin(), schema.service.end(), "other") - schema.service.begin();
    EXPECT_EQ(v[40 + other], 1.0f);
}

TEST(Encode, EveryVectorIsWellFormed) {
    const auto rows = sample_rows(2);
    const auto schema = default_schema();
    const auto calib = fit_normalizer(rows, schema);
    for (const auto& fv : rows) {
        const auto v = encode_vector(fv, schema, calib);
        ASSERT_EQ(v.size(), 130u);
        for (std::size_t k = 0; k < kNumericCount; ++k) {
            ASSERT_GE(v[k], 0.0f);
            ASSERT_LE(v[k], 1.0f);
        }
        auto block_sum = [&](std::size_t from, std::size_t n) {
            float s = 0;
            for (std::size_t i = from; i < from + n; ++i) {
                EXPECT_TRUE(v[i] == 0.0f || v[i] == 1.0f);
                s += v[i];
            }
            return s;
        };
        ASSERT_EQ(block_sum(36, 4), 1.0f);
        ASSERT_EQ(block_sum(40, 79), 1.0f);
        ASSERT_EQ(block_sum(119, 11), 1.0f);
        ASSERT_EQ(from_image(to_image(v)), v);
    }
}

TEST(Image, LayoutAndPadding) {
    EncodedVector v{};
    EXPECT_EQ(to_image(v), Image{});
    v[0] = 1.0f;
    v[129] = 0.25f;
    const auto img = to_image(v);
    EXPECT_EQ(img[0], 1.0f);
    EXPECT_EQ(img[10 * 12 + 9], 0.25f);
    for (std::size_t i = 130; i < 144; ++i) EXPECT_EQ(img[i], 0.0f);
    const std::vector<float> short_vec(129, 0.0f);
    EXPECT_THROW(to_image(short_vec), DataError);
}

TEST(Image, PngSignatureAndDimensions) {
    Image img{};
    img[5] = 1.0f;
    const auto png = png_bytes(img);
    ASSERT_GT(png.size(), 33u);
    EXPECT_EQ(png.substr(0, 8), std::string("\x89PNG\r\n\x1a\n", 8));
    EXPECT_EQ(png.substr(12, 4), "IHDR");
    EXPECT_EQ(static_cast<unsigned char>(png[19]), 12u);
    EXPECT_EQ(static_cast<unsigned char>(png[23]), 12u);
}

// --- FSDS dataset files ------------------------------------------------------

TEST(Fsds, RoundTripIsByteIdentical) {
    const auto rows = sample_rows(3);
    const auto schema = default_schema();
    const auto calib = fit_normalizer(rows, schema);
    EncodedDataset ds;
    ds.schema_hash = schema.hash();
    for (const auto& fv : rows) ds.push_back(encode_vector(fv, schema, calib), fv.label);
    const auto path = tmp("agcids_fsds_roundtrip.fsds");
    save_dataset(path, ds);
    const auto back = load_dataset(path);
    EXPECT_EQ(back.vectors, ds.vectors);
    EXPECT_EQ(back.labels, ds.labels);
    EXPECT_EQ(back.schema_hash, ds.schema_hash);
    EXPECT_EQ(serialize_dataset(back), serialize_dataset(ds));
}

TEST(Fsds, CorruptionRejected) {
    EncodedDataset ds;
    ds.push_back(EncodedVector{}, Label::anomalous);
    const auto bytes = serialize_dataset(ds);
    EXPECT_EQ(bytes.size(), 12u + 521u);
    EXPECT_THROW(deserialize_dataset("XXXX" + bytes.substr(4)), DataError);
    EXPECT_THROW(deserialize_dataset(bytes.substr(0, bytes.size() - 4)), DataError);
    auto bad_label = bytes;
    bad_label.back() = 7;
    EXPECT_THROW(deserialize_dataset(bad_label), DataError);
    auto bad_version = bytes;
    bad_version[4] = 9;
    EXPECT_THROW(deserialize_dataset(bad_version), DataError);
}

TEST(Calibration, JsonRoundTrip) {
    const auto rows = sample_rows(4);
    const auto calib = fit_normalizer(rows, default_schema());
    const auto path = tmp("agcids_calib.json");
    save_calibration(path, calib);
    const auto back = load_calibration(path);
    EXPECT_EQ(back.min, calib.min);
    EXPECT_EQ(back.max, calib.max);
    EXPECT_EQ(back.schema_hash, calib.schema_hash);
    std::ofstream(path) << "{\"min\": [1]}";
    EXPECT_THROW(load_calibration(path), DataError);
}

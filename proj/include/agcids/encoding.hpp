#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <zlib.h>

#include "agcids/common.hpp"
#include "agcids/features.hpp"
#include "agcids/services.hpp"

namespace agcids::encoding {

inline constexpr std::size_t kEncodedDims = 130;
inline constexpr std::size_t kNumericCount = 36;
inline constexpr std::size_t kImageSide = 12;
inline constexpr std::size_t kImagePixels = kImageSide * kImageSide;
inline constexpr int kSchemaVersion = 1;

using EncodedVector = std::array<float, kEncodedDims>;
using Image = std::array<float, kImagePixels>;

/// Numeric feature names and their attribute numbers, in default order.
struct NumericName {
    std::string_view name;
    std::size_t feature;
};

inline constexpr std::array<NumericName, kNumericCount> kNumericFeatures{{
    {"duration", 1},          {"up_bytes", 5},           {"down_bytes", 6},         {"up_pkts", 7},
    {"down_pkts", 8},         {"land", 9},               {"urgent", 10},            {"mean_pkt_size", 11},
    {"up_size_var", 12},      {"down_size_var", 13},     {"band_0", 14},            {"band_1", 15},
    {"band_2", 16},           {"band_3", 17},            {"band_4", 18},            {"band_5", 19},
    {"band_6", 20},           {"band_7", 21},            {"log_energy", 22},        {"spectral_entropy", 23},
    {"high_band_ratio", 24},  {"host_count", 25},        {"host_srv_count", 26},    {"host_serror_rate", 27},
    {"host_rerror_rate", 28}, {"host_same_srv_rate", 29}, {"host_diff_srv_rate", 30}, {"srv_count", 31},
    {"srv_serror_rate", 32},  {"srv_rerror_rate", 33},   {"srv_diff_host_rate", 34}, {"distinct_hosts", 35},
    {"distinct_host_srv", 36}, {"same_srv_rate", 37},    {"serror_rate", 38},       {"rerror_rate", 39},
}};

struct FeatureSchema {
    int version = kSchemaVersion;
    std::vector<std::string> numeric;
    std::vector<std::string> protocol;
    std::vector<std::string> service;
    std::vector<std::string> flag;

    /// Attribute number (1..39) of each numeric slot; filled by validate().
    std::vector<std::size_t> numeric_features;

    std::size_t total_dims() const { return numeric.size() + protocol.size() + service.size() + flag.size(); }

    nlohmann::json to_json() const {
        return nlohmann::json{{"version", version}, {"numeric", numeric}, {"protocol", protocol},
                              {"service", service}, {"flag", flag}};
    }

    /// Hash of the canonical (sorted-key, compact) JSON form.
    std::string hash() const { return sha256_hex(to_json().dump()); }

    void validate() {
        if (version != kSchemaVersion) throw DataError("unknown schema version " + std::to_string(version));
        if (numeric.size() != kNumericCount)
            throw DataError("schema declares " + std::to_string(numeric.size()) + " numeric slots, expected 36");
        if (total_dims() != kEncodedDims)
            throw DataError("dimension mismatch: schema totals " + std::to_string(total_dims()) + ", expected 130");
        auto unique = [](const std::vector<std::string>& v, const char* what) {
            std::set<std::string> seen;
            for (const auto& t : v)
                if (!seen.insert(t).second) throw DataError(std::string("duplicate token '") + t + "' in " + what);
        };
        unique(numeric, "numeric");
        unique(protocol, "protocol");
        unique(service, "service");
        unique(flag, "flag");
        auto must_have = [](const std::vector<std::string>& v, std::string_view tok, const char* what) {
            if (std::find(v.begin(), v.end(), tok) == v.end())
                throw DataError(std::string(what) + " vocabulary lacks its fallback token '" + std::string(tok) + "'");
        };
        must_have(protocol, "other", "protocol");
        must_have(service, "other", "service");
        must_have(flag, "oth", "flag");
        numeric_features.clear();
        for (const auto& n : numeric) {
            auto it = std::find_if(kNumericFeatures.begin(), kNumericFeatures.end(),
                                   [&](const NumericName& nn) { return nn.name == n; });
            if (it == kNumericFeatures.end()) throw DataError("unknown numeric feature '" + n + "'");
            numeric_features.push_back(it->feature);
        }
    }
};

inline FeatureSchema schema_from_json(const nlohmann::json& j) {
    FeatureSchema s;
    try {
        s.version = j.at("version").get<int>();
        s.numeric = j.at("numeric").get<std::vector<std::string>>();
        s.protocol = j.at("protocol").get<std::vector<std::string>>();
        s.service = j.at("service").get<std::vector<std::string>>();
        s.flag = j.at("flag").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed schema: ") + e.what());
    }
    s.validate();
    return s;
}

inline FeatureSchema default_schema() {
    FeatureSchema s;
    for (const auto& n : kNumericFeatures) s.numeric.emplace_back(n.name);
    for (auto t : kProtocolTokens) s.protocol.emplace_back(t);
    for (auto t : kServiceTokens) s.service.emplace_back(t);
    for (auto t : kStateTokens) s.flag.emplace_back(t);
    s.validate();
    return s;
}

inline FeatureSchema load_schema(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot read schema '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("schema '" + path + "': " + e.what());
    }
    return schema_from_json(j);
}

// ---------------------------------------------------------------------------
// calibration

/// Per-numeric-slot min/max fitted on training rows only.
struct Calibration {
    std::string schema_hash;
    std::vector<double> min, max;

    nlohmann::json to_json() const { return {{"schema_hash", schema_hash}, {"min", min}, {"max", max}}; }

    static Calibration from_json(const nlohmann::json& j) {
        Calibration c;
        try {
            c.schema_hash = j.at("schema_hash").get<std::string>();
            c.min = j.at("min").get<std::vector<double>>();
            c.max = j.at("max").get<std::vector<double>>();
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("malformed calibration: ") + e.what());
        }
        if (c.min.size() != kNumericCount || c.max.size() != kNumericCount)
            throw DataError("calibration must have 36 min/max entries");
        return c;
    }
};

inline Calibration fit_normalizer(std::span<const flow::FeatureVector39> training, const FeatureSchema& schema) {
    if (training.empty()) throw DataError("fit_normalizer needs at least one training vector");
    Calibration c;
    c.schema_hash = schema.hash();
    c.min.assign(kNumericCount, 0.0);
    c.max.assign(kNumericCount, 0.0);
    for (std::size_t k = 0; k < kNumericCount; ++k) {
        const std::size_t fi = schema.numeric_features[k];
        double lo = training[0].f(fi), hi = lo;
        for (const auto& fv : training) {
            lo = std::min(lo, fv.f(fi));
            hi = std::max(hi, fv.f(fi));
        }
        if (!(hi > lo)) hi = lo + 1.0;
        c.min[k] = lo;
        c.max[k] = hi;
    }
    return c;
}

inline void save_calibration(const std::string& path, const Calibration& c) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write '" + path + "'");
    os << c.to_json().dump(2) << '\n';
}

inline Calibration load_calibration(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot read calibration '" + path + "'");
    try {
        return Calibration::from_json(nlohmann::json::parse(is));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("calibration '" + path + "': " + e.what());
    }
}

// ---------------------------------------------------------------------------
// vector and image encoding

/// Counts symbolic tokens that fell back to the schema's "other" entry.
struct EncodeStats {
    std::size_t unknown_tokens = 0;
};

namespace detail {

inline std::size_t token_index(const std::vector<std::string>& vocab, const std::string& tok, std::string_view fallback,
                               EncodeStats* stats) {
    auto it = std::find(vocab.begin(), vocab.end(), tok);
    if (it == vocab.end()) {
        if (stats) ++stats->unknown_tokens;
        it = std::find(vocab.begin(), vocab.end(), fallback);
    }
    return static_cast<std::size_t>(it - vocab.begin());
}

} // namespace detail

inline double normalize(double x, double lo, double hi) { return std::clamp((x - lo) / (hi - lo), 0.0, 1.0); }

/// [36 normalized numerics] ++ one-hot protocol ++ one-hot service ++ one-hot flag.
inline EncodedVector encode_vector(const flow::FeatureVector39& fv, const FeatureSchema& schema,
                                   const Calibration& calib, EncodeStats* stats = nullptr) {
    if (schema.total_dims() != kEncodedDims) throw DataError("schema does not total 130 dimensions");
    if (calib.min.size() != kNumericCount) throw DataError("calibration does not match schema");
    EncodedVector v{};
    std::size_t pos = 0;
    for (std::size_t k = 0; k < kNumericCount; ++k)
        v[pos++] = static_cast<float>(normalize(fv.f(schema.numeric_features[k]), calib.min[k], calib.max[k]));
    v[pos + detail::token_index(schema.protocol, fv.protocol, "other", stats)] = 1.0f;
    pos += schema.protocol.size();
    v[pos + detail::token_index(schema.service, fv.service, "other", stats)] = 1.0f;
    pos += schema.service.size();
    v[pos + detail::token_index(schema.flag, fv.state, "oth", stats)] = 1.0f;
    return v;
}

/// Zero-pads to 144 values and reads them as a row-major 12x12 grid.
inline Image to_image(std::span<const float> vec) {
    if (vec.size() != kEncodedDims)
        throw DataError("to_image expects 130 values, got " + std::to_string(vec.size()));
    Image img{};
    std::copy(vec.begin(), vec.end(), img.begin());
    return img;
}

/// Flattening plus truncation; the inverse of to_image on its range.
inline EncodedVector from_image(const Image& img) {
    EncodedVector v{};
    std::copy_n(img.begin(), kEncodedDims, v.begin());
    return v;
}

// ---------------------------------------------------------------------------
// FSDS encoded dataset: "FSDS", u16 version, u32 count, u16 vec length, then
// per sample 130 little-endian f32 and a u8 label. Schema provenance lives in
// the "<path>.meta.json" sidecar.

struct EncodedDataset {
    std::vector<EncodedVector> vectors;
    std::vector<std::uint8_t> labels;
    std::string schema_hash;

    std::size_t size() const { return vectors.size(); }
    void push_back(const EncodedVector& v, Label l) {
        vectors.push_back(v);
        labels.push_back(static_cast<std::uint8_t>(l));
    }
};

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const unsigned char* p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(p[i]) << (8 * i));
    return v;
}

inline void put_f32(std::string& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_le<std::uint32_t>(out, bits);
}

inline float get_f32(const unsigned char* p) {
    const auto bits = get_le<std::uint32_t>(p);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

inline std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot read '" + path + "'");
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write '" + path + "'");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw DataError("write failed for '" + path + "'");
}

} // namespace detail

inline std::string serialize_dataset(const EncodedDataset& ds) {
    std::string out = "FSDS";
    detail::put_le<std::uint16_t>(out, 1);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.size()));
    detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(kEncodedDims));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (float f : ds.vectors[i]) detail::put_f32(out, f);
        out.push_back(static_cast<char>(ds.labels[i]));
    }
    return out;
}

inline EncodedDataset deserialize_dataset(const std::string& bytes) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    constexpr std::size_t header = 4 + 2 + 4 + 2;
    if (bytes.size() < header || bytes.compare(0, 4, "FSDS") != 0) throw DataError("not an FSDS dataset (bad magic)");
    const auto version = detail::get_le<std::uint16_t>(p + 4);
    if (version != 1) throw DataError("unsupported FSDS version " + std::to_string(version));
    const auto count = detail::get_le<std::uint32_t>(p + 6);
    const auto len = detail::get_le<std::uint16_t>(p + 10);
    if (len != kEncodedDims) throw DataError("FSDS vector length " + std::to_string(len) + ", expected 130");
    const std::size_t rec = kEncodedDims * 4 + 1;
    const std::size_t expected = header + rec * count;
    if (bytes.size() != expected)
        throw DataError("FSDS size mismatch: expected " + std::to_string(expected) + " bytes, got " +
                        std::to_string(bytes.size()));
    EncodedDataset ds;
    ds.vectors.resize(count);
    ds.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const unsigned char* r = p + header + i * rec;
        for (std::size_t k = 0; k < kEncodedDims; ++k) ds.vectors[i][k] = detail::get_f32(r + 4 * k);
        ds.labels[i] = r[kEncodedDims * 4];
        if (ds.labels[i] > 1) throw DataError("FSDS label out of range at sample " + std::to_string(i));
    }
    return ds;
}

inline void save_dataset(const std::string& path, const EncodedDataset& ds) {
    detail::write_file(path, serialize_dataset(ds));
    nlohmann::json meta{{"schema_hash", ds.schema_hash}, {"count", ds.size()}};
    detail::write_file(path + ".meta.json", meta.dump(2) + "\n");
}

inline EncodedDataset load_dataset(const std::string& path) {
    auto ds = deserialize_dataset(detail::read_file(path));
    try {
        const auto meta = nlohmann::json::parse(detail::read_file(path + ".meta.json"));
        ds.schema_hash = meta.at("schema_hash").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError("dataset sidecar '" + path + ".meta.json': " + e.what());
    }
    return ds;
}

// ---------------------------------------------------------------------------
// 8-bit grayscale PNG, for inspection only

inline std::string png_bytes(const Image& img) {
    auto put_be32 = [](std::string& out, std::uint32_t v) {
        for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xff));
    };
    auto chunk = [&](std::string& out, const char* type, const std::string& data) {
        std::string body(type, 4);
        body += data;
        put_be32(out, static_cast<std::uint32_t>(data.size()));
        out += body;
        put_be32(out, static_cast<std::uint32_t>(
                          crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
    };
    std::string raw;
    for (std::size_t r = 0; r < kImageSide; ++r) {
        raw.push_back(0);
        for (std::size_t c = 0; c < kImageSide; ++c)
            raw.push_back(static_cast<char>(std::lround(255.0 * std::clamp(img[r * kImageSide + c], 0.0f, 1.0f))));
    }
    uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
    std::string z(zlen, '\0');
    compress(reinterpret_cast<Bytef*>(z.data()), &zlen, reinterpret_cast<const Bytef*>(raw.data()),
             static_cast<uLong>(raw.size()));
    z.resize(zlen);

    std::string ihdr;
    put_be32(ihdr, static_cast<std::uint32_t>(kImageSide));
    put_be32(ihdr, static_cast<std::uint32_t>(kImageSide));
    ihdr += std::string("\x08\x00\x00\x00\x00", 5);  // depth 8, grayscale, deflate, no filter, no interlace

    std::string png("\x89PNG\r\n\x1a\n", 8);
    chunk(png, "IHDR", ihdr);
    chunk(png, "IDAT", z);
    chunk(png, "IEND", "");
    return png;
}

inline void write_png(const std::string& path, const Image& img) { detail::write_file(path, png_bytes(img)); }

} // namespace agcids::encoding

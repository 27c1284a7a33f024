#pragma once

// Adapter from KDD'99 / NSL-KDD style connection records to the 39-attribute
// flow vector. Packet counts, size variances and the frequency block have no
// counterpart in those records and are left at 0.

#include <algorithm>
#include <cctype>

#include "agcids/features.hpp"

namespace agcids::flow {

inline constexpr std::size_t kKddColumns = 41;

/// Record column (0-based) feeding each attribute; -1 = not available.
inline constexpr std::array<int, kFeatureCount> kKddSource{
    0,                                // f1 duration
    -1, -1, -1,                       // f2..f4 symbolic, handled separately
    4, 5,                             // f5 up bytes <- src_bytes, f6 down bytes <- dst_bytes
    -1, -1,                           // f7, f8 packet counts
    6, 8,                             // f9 land, f10 urgent
    -1, -1, -1,                       // f11..f13 size statistics
    -1, -1, -1, -1, -1, -1, -1, -1, -1, -1, -1,  // f14..f24 frequency block
    22,                               // f25 count
    -1,                               // f26 derived: count * same_srv_rate
    24, 26, 28, 29,                   // f27 serror_rate, f28 rerror_rate, f29 same_srv_rate, f30 diff_srv_rate
    23, 25, 27, 30,                   // f31 srv_count, f32 srv_serror_rate, f33 srv_rerror_rate, f34 srv_diff_host_rate
    31, 32, 33, 37, 39,               // f35..f39 dst_host_{count,srv_count,same_srv_rate,serror_rate,rerror_rate}
};

struct KddStats {
    std::size_t rows = 0;
    std::size_t skipped_header = 0;
};

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

/// Parses one record (41 attributes, label, optional difficulty column).
/// Any label other than "normal" is anomalous.
inline FeatureVector39 parse_kdd_row(const std::string& line, std::size_t lineno) {
    auto cols = split(line, ',');
    if (!cols.empty() && !cols.back().empty() && cols.back().back() == '\r') cols.back().pop_back();
    if (cols.size() != kKddColumns + 1 && cols.size() != kKddColumns + 2)
        throw DataError("kdd line " + std::to_string(lineno) + ": expected 42 or 43 columns, got " +
                        std::to_string(cols.size()));
    auto number = [&](std::size_t c) {
        char* end = nullptr;
        const double v = std::strtod(cols[c].c_str(), &end);
        if (cols[c].empty() || end != cols[c].c_str() + cols[c].size() || !std::isfinite(v))
            throw DataError("kdd line " + std::to_string(lineno) + ": bad number '" + cols[c] + "' in column " +
                            std::to_string(c + 1));
        return v;
    };

    FeatureVector39 fv;
    for (std::size_t i = 1; i <= kFeatureCount; ++i)
        if (kKddSource[i - 1] >= 0) fv.f(i) = number(static_cast<std::size_t>(kKddSource[i - 1]));
    fv.f(26) = number(22) * number(28);

    fv.protocol = lower(cols[1]);
    if (std::find(kProtocolTokens.begin(), kProtocolTokens.end(), fv.protocol) == kProtocolTokens.end()) fv.protocol = "other";
    fv.service = lower(cols[2]);
    fv.state = lower(cols[3]);

    auto label = lower(cols[kKddColumns]);
    if (!label.empty() && label.back() == '.') label.pop_back();
    fv.label = label == "normal" ? Label::normal : Label::anomalous;
    return fv;
}

/// Reads a whole record file. A leading header line (first field not numeric) is skipped.
inline std::vector<FeatureVector39> read_kdd_csv(std::istream& is, KddStats* stats = nullptr) {
    std::vector<FeatureVector39> rows;
    std::string line;
    std::size_t lineno = 0;
    KddStats st;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        if (lineno == 1 && !(std::isdigit(static_cast<unsigned char>(line[0])) || line[0] == '.')) {
            ++st.skipped_header;
            continue;
        }
        rows.push_back(parse_kdd_row(line, lineno));
    }
    st.rows = rows.size();
    if (stats) *stats = st;
    return rows;
}

inline std::vector<FeatureVector39> read_kdd_csv(const std::string& path, KddStats* stats = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot read '" + path + "'");
    return read_kdd_csv(is, stats);
}

} // namespace agcids::flow

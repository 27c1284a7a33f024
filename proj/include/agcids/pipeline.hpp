#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "agcids/common.hpp"
#include "agcids/dataset.hpp"
#include "agcids/detector.hpp"
#include "agcids/encoding.hpp"
#include "agcids/features.hpp"
#include "agcids/metrics.hpp"

namespace agcids::pipeline {

using detector::Arch;
using encoding::EncodedDataset;

inline EncodedDataset encode_samples(const std::vector<flow::FeatureVector39>& rows, const encoding::FeatureSchema& schema,
                                     const encoding::Calibration& calib, encoding::EncodeStats* stats = nullptr) {
    EncodedDataset ds;
    ds.schema_hash = schema.hash();
    for (const auto& fv : rows) ds.push_back(encoding::encode_vector(fv, schema, calib, stats), fv.label);
    return ds;
}

inline std::vector<flow::FeatureVector39> feature_rows(const std::vector<flow::FlowSample>& samples,
                                                      const std::vector<std::size_t>& idx) {
    std::vector<flow::FeatureVector39> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(samples[i].features);
    return out;
}

struct Split {
    std::vector<std::size_t> train, test;
};

/// Draws up to `per_class` flows of each label, shuffled, then splits each
/// class by `train_fraction` so both halves stay balanced.
inline Split balanced_split(const std::vector<flow::FlowSample>& samples, std::size_t per_class, double train_fraction,
                            std::uint64_t seed) {
    std::vector<std::size_t> by_label[2];
    for (std::size_t i = 0; i < samples.size(); ++i)
        by_label[static_cast<int>(samples[i].features.label)].push_back(i);
    const std::size_t n = std::min({per_class, by_label[0].size(), by_label[1].size()});
    if (n < 2) throw DataError("balanced split: need at least 2 flows of each class, have " +
                               std::to_string(by_label[0].size()) + " normal and " + std::to_string(by_label[1].size()) +
                               " anomalous");
    Rng rng(seed);
    Split s;
    const auto n_train = std::clamp<std::size_t>(static_cast<std::size_t>(static_cast<double>(n) * train_fraction), 1, n - 1);
    for (auto& pool : by_label) {
        std::shuffle(pool.begin(), pool.end(), rng);
        s.train.insert(s.train.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_train));
        s.test.insert(s.test.end(), pool.begin() + static_cast<std::ptrdiff_t>(n_train),
                      pool.begin() + static_cast<std::ptrdiff_t>(n));
    }
    std::shuffle(s.train.begin(), s.train.end(), rng);
    std::shuffle(s.test.begin(), s.test.end(), rng);
    return s;
}

/// Up to `per_class` flows of each label, shuffled together.
inline std::vector<std::size_t> balanced_sample(const std::vector<flow::FlowSample>& samples, std::size_t per_class,
                                                std::uint64_t seed) {
    std::vector<std::size_t> by_label[2];
    for (std::size_t i = 0; i < samples.size(); ++i)
        by_label[static_cast<int>(samples[i].features.label)].push_back(i);
    const std::size_t n = std::min({per_class, by_label[0].size(), by_label[1].size()});
    if (n == 0) throw DataError("balanced sample: a class is missing");
    Rng rng(seed);
    std::vector<std::size_t> out;
    for (auto& pool : by_label) {
        std::shuffle(pool.begin(), pool.end(), rng);
        out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n));
    }
    std::shuffle(out.begin(), out.end(), rng);
    return out;
}

/// One row per model, all scored against the same test set.
inline std::vector<metrics::ReportRow> benchmark_report(const std::vector<std::pair<std::string, const detector::Model*>>& models,
                                                       const EncodedDataset& test) {
    std::vector<metrics::ReportRow> rows;
    for (const auto& [name, m] : models) {
        if (m->schema_hash != test.schema_hash)
            throw detector::HomogeneityError("model " + name + " was trained on a different schema");
        const auto preds = detector::predict(*m, test);
        std::vector<int> cls(preds.size());
        for (std::size_t i = 0; i < preds.size(); ++i) cls[i] = preds[i].cls;
        rows.push_back(metrics::make_row(name, metrics::confusion(cls, test.labels)));
    }
    return rows;
}

// ---------------------------------------------------------------------------

struct BenchmarkConfig {
    sim::DatasetConfig data;
    std::size_t target_per_class = 1200;
    std::size_t source_per_class = 600;
    double train_fraction = 0.5;
    detector::Hyper hyper;
    std::vector<Arch> archs{Arch::dnn, Arch::cnn, Arch::resnest};
};

struct ArchResult {
    Arch arch;
    metrics::ReportRow transfer;
    std::vector<detector::EpochStats> pretrain_history, finetune_history;
    double seconds = 0.0;
};

struct BenchmarkResult {
    std::vector<ArchResult> archs;
    metrics::ReportRow target_only;  // resnest trained on the target split alone
    std::size_t source_train = 0, target_train = 0, target_test = 0;
    std::string schema_hash;
    double seconds = 0.0;
    nlohmann::ordered_json manifest;

    std::vector<metrics::ReportRow> rows() const {
        std::vector<metrics::ReportRow> r;
        for (const auto& a : archs) r.push_back(a.transfer);
        return r;
    }
};

using Progress = std::function<void(const std::string&)>;

namespace detail {

inline nlohmann::ordered_json row_json(const metrics::ReportRow& r) {
    return {{"arch", r.arch},
            {"acc_pct", r.m.acc.value()},
            {"fpr_pct", r.m.fpr.value()},
            {"dr_pct", r.m.dr.value()},
            {"confusion", {{"tp", r.cm.tp}, {"fn", r.cm.fn}, {"fp", r.cm.fp}, {"tn", r.cm.tn}}}};
}

} // namespace detail

/// Generate both corpora, featurize, encode under one calibration, then for
/// each arch pretrain on source and finetune on target; a resnest trained on
/// the target alone with the finetune epoch budget is the transfer baseline.
inline BenchmarkResult run_benchmark(const BenchmarkConfig& cfg, const Progress& progress = {}) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    auto log = [&](const std::string& s) {
        if (progress) progress(s);
    };
    const std::uint64_t seed = cfg.data.seed;

    log("generating corpora");
    const auto corpora = sim::generate_corpora(cfg.data);
    const auto source = flow::extract_all(corpora.source);
    const auto target = flow::extract_all(corpora.target);
    log("flows: source " + std::to_string(source.size()) + ", target " + std::to_string(target.size()));

    const auto ssplit = balanced_sample(source, cfg.source_per_class, derive_seed(seed, "source-split"));
    const auto tsplit = balanced_split(target, cfg.target_per_class, cfg.train_fraction, derive_seed(seed, "target-split"));

    const auto schema = encoding::default_schema();
    auto fit_rows = feature_rows(source, ssplit);
    const auto target_train_rows = feature_rows(target, tsplit.train);
    fit_rows.insert(fit_rows.end(), target_train_rows.begin(), target_train_rows.end());
    const auto calib = encoding::fit_normalizer(fit_rows, schema);

    const auto source_ds = encode_samples(feature_rows(source, ssplit), schema, calib);
    const auto target_train = encode_samples(target_train_rows, schema, calib);
    const auto target_test = encode_samples(feature_rows(target, tsplit.test), schema, calib);

    BenchmarkResult res;
    res.source_train = source_ds.size();
    res.target_train = target_train.size();
    res.target_test = target_test.size();
    res.schema_hash = schema.hash();

    for (const auto arch : cfg.archs) {
        const auto ta = clock::now();
        auto spec = detector::ModelSpec::defaults(arch, derive_seed(seed, std::string("model-") + std::string(detector::to_string(arch))));
        spec.hyper = cfg.hyper;
        auto tr = detector::pretrain_then_finetune(spec, source_ds, target_train);
        auto row = benchmark_report({{std::string(detector::to_string(arch)), &tr.model}}, target_test).front();
        ArchResult ar{arch, row, std::move(tr.pretrain_history), std::move(tr.finetune_history),
                      std::chrono::duration<double>(clock::now() - ta).count()};
        log(std::string(detector::to_string(arch)) + ": acc " + row.m.acc.str() + " fpr " + row.m.fpr.str() + " dr " +
            row.m.dr.str());
        res.archs.push_back(std::move(ar));
    }

    {
        auto spec = detector::ModelSpec::defaults(Arch::resnest, derive_seed(seed, "model-resnest"));
        spec.hyper = cfg.hyper;
        auto m = detector::build_model(spec);
        auto opt = detector::pretrain_options(spec);
        opt.epochs = spec.hyper.finetune_epochs;
        detector::train(m, target_train, opt);
        res.target_only = benchmark_report({{"resnest_target_only", &m}}, target_test).front();
        log("resnest target-only: acc " + res.target_only.m.acc.str());
    }
    res.seconds = std::chrono::duration<double>(clock::now() - t0).count();

    nlohmann::ordered_json m;
    m["seed"] = seed;
    m["dataset_config_hash"] = cfg.data.hash();
    m["schema_hash"] = res.schema_hash;
    m["flows"] = {{"source_total", source.size()}, {"target_total", target.size()}};
    m["splits"] = {{"source_train", res.source_train}, {"target_train", res.target_train}, {"target_test", res.target_test}};
    m["hyper"] = {{"lr", cfg.hyper.lr},
                  {"momentum", cfg.hyper.momentum},
                  {"weight_decay", cfg.hyper.weight_decay},
                  {"batch_size", cfg.hyper.batch_size},
                  {"epochs", cfg.hyper.epochs},
                  {"finetune_epochs", cfg.hyper.finetune_epochs},
                  {"finetune_lr_scale", cfg.hyper.finetune_lr_scale}};
    m["rows"] = nlohmann::ordered_json::array();
    for (const auto& a : res.archs) m["rows"].push_back(detail::row_json(a.transfer));
    m["target_only"] = detail::row_json(res.target_only);
    m["calibration_fit"] = "source_train+target_train";
    res.manifest = std::move(m);
    return res;
}

} // namespace agcids::pipeline

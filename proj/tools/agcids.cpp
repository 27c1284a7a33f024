// agcids: simulate -> features -> encode -> train -> finetune -> evaluate -> detect

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "agcids/kdd.hpp"
#include "agcids/pipeline.hpp"

using namespace agcids;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    for (auto& part : split(s, ','))
        if (!part.empty()) out.push_back(part);
    return out;
}

void log(const std::string& s) { std::cerr << "[agcids] " << s << '\n'; }

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write '" + path + "'");
    os << text;
}

void ensure_parent(const std::string& path) {
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

struct Options {
    std::uint64_t seed = 42;
    sim::DatasetConfig data;
    detector::Hyper hyper;

    std::string out, in, schema, calib, data_path, arch = "resnest", ckpt, ckpts, freeze = "default", history;
    bool fit_calib = false;
    std::size_t balance = 0;
    double holdout = 0.0;
    std::string holdout_out;
    std::size_t target_per_class = 1200, source_per_class = 600;
};

void add_hyper(CLI::App* sub, detector::Hyper& h) {
    sub->add_option("--lr", h.lr, "base learning rate")->capture_default_str();
    sub->add_option("--momentum", h.momentum)->capture_default_str();
    sub->add_option("--weight-decay", h.weight_decay)->capture_default_str();
    sub->add_option("--batch-size", h.batch_size)->capture_default_str();
    sub->add_option("--epochs", h.epochs, "source-domain epochs")->capture_default_str();
    sub->add_option("--finetune-epochs", h.finetune_epochs)->capture_default_str();
    sub->add_option("--finetune-lr-scale", h.finetune_lr_scale)->capture_default_str();
}

void add_dataset(CLI::App* sub, sim::DatasetConfig& d) {
    sub->add_option("--target-horizon", d.target_horizon, "seconds of AGC traffic")->capture_default_str();
    sub->add_option("--source-horizon", d.source_horizon, "seconds of internet traffic")->capture_default_str();
    sub->add_option("--rtus-per-area", d.rtus_per_area)->capture_default_str();
    sub->add_option("--meas-jitter", d.meas_jitter)->capture_default_str();
    sub->add_option("--load-noise-std", d.load_noise_std)->capture_default_str();
    sub->add_option("--session-rate", d.session_rate)->capture_default_str();
    sub->add_option("--attack-fraction", d.attack_fraction)->capture_default_str();
    sub->add_option("--attack-segment", d.attack_segment)->capture_default_str();
    sub->add_option("--intensity", d.intensity)->capture_default_str();
    for (const auto* kind : {"dos_flood", "fdia", "scan", "spoof_mitm"})
        sub->add_option(std::string("--mix-") + kind, d.attack_mix[kind], std::string("relative weight of ") + kind)
            ->capture_default_str();
}

std::uint64_t model_seed(std::uint64_t seed, detector::Arch a) {
    return derive_seed(seed, std::string("model-") + std::string(detector::to_string(a)));
}

encoding::FeatureSchema schema_or_default(const std::string& path) {
    return path.empty() ? encoding::default_schema() : encoding::load_schema(path);
}

void log_seeds(const Options& o) {
    nlohmann::ordered_json s;
    s["seed"] = o.seed;
    for (auto a : {detector::Arch::dnn, detector::Arch::cnn, detector::Arch::resnest}) {
        const auto ms = model_seed(o.seed, a);
        s[std::string(detector::to_string(a))] = {{"init", derive_seed(ms, "init")},
                                                  {"pretrain", derive_seed(ms, "pretrain")},
                                                  {"finetune", derive_seed(ms, "finetune")}};
    }
    s["encode"] = derive_seed(o.seed, "encode");
    log("seeds " + s.dump());
}

// --- subcommands --------------------------------------------------------------

void cmd_simulate(Options& o) {
    fs::create_directories(o.out);
    auto cfg = o.data;
    cfg.seed = o.seed;
    cfg.source_path = (fs::path(o.out) / "source.jsonl").string();
    cfg.target_path = (fs::path(o.out) / "target.jsonl").string();
    cfg.manifest_path = (fs::path(o.out) / "manifest.json").string();
    const auto c = sim::build_dataset(cfg);
    if (c.manifest.contains("warnings"))
        for (const auto& w : c.manifest["warnings"]) log("warning: " + w.get<std::string>());
    log("wrote " + std::to_string(c.source.size()) + " source and " + std::to_string(c.target.size()) +
        " target packets to " + o.out);
}

void cmd_features(Options& o) {
    const auto schema = schema_or_default(o.schema);
    ensure_parent(o.out);
    std::ofstream os(o.out, std::ios::binary);
    if (!os) throw DataError("cannot write '" + o.out + "'");
    os << flow::feature_csv_header() << '\n';
    flow::FeatureExtractor fx;
    std::size_t n = 0;
    auto sink = [&](flow::FlowSample&& s) {
        os << flow::feature_csv_row(s.features) << '\n';
        ++n;
    };
    std::ifstream is(o.in, std::ios::binary);
    if (!is) throw DataError("cannot read '" + o.in + "'");
    read_packet_log(is, [&](PacketRecord&& p) { fx.push(p, sink); });
    fx.flush(sink);
    log("wrote " + std::to_string(n) + " flows, schema " + schema.hash().substr(0, 12));
}

void cmd_import_kdd(Options& o) {
    flow::KddStats st;
    const auto rows = flow::read_kdd_csv(o.in, &st);
    ensure_parent(o.out);
    flow::write_feature_csv(o.out, rows);
    std::size_t pos = 0;
    for (const auto& r : rows) pos += r.label == Label::anomalous;
    log("mapped " + std::to_string(st.rows) + " records (" + std::to_string(pos) + " anomalous) -> " + o.out);
}

void cmd_encode(Options& o) {
    const auto schema = schema_or_default(o.schema);
    if (!o.fit_calib && !fs::exists(o.calib))
        throw UsageError("no calibration at '" + o.calib + "'; pass --fit-calib on the training CSV first");
    auto rows = flow::read_feature_csv(o.in);
    if (rows.empty()) throw DataError("feature csv '" + o.in + "' has no rows");

    std::vector<std::size_t> keep(rows.size()), held;
    std::iota(keep.begin(), keep.end(), std::size_t{0});
    if (o.balance > 0 || o.holdout > 0) {
        std::vector<flow::FlowSample> samples(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) samples[i].features = rows[i];
        const std::size_t cap = o.balance > 0 ? o.balance : rows.size();
        if (o.holdout > 0) {
            if (o.holdout_out.empty()) throw UsageError("--holdout needs --holdout-out");
            auto sp = pipeline::balanced_split(samples, cap, 1.0 - o.holdout, derive_seed(o.seed, "encode"));
            keep = std::move(sp.train);
            held = std::move(sp.test);
        } else {
            keep = pipeline::balanced_sample(samples, cap, derive_seed(o.seed, "encode"));
        }
    }

    std::vector<flow::FeatureVector39> kept;
    for (auto i : keep) kept.push_back(rows[i]);

    encoding::Calibration calib;
    if (o.fit_calib) {
        calib = encoding::fit_normalizer(kept, schema);
        ensure_parent(o.calib);
        encoding::save_calibration(o.calib, calib);
        log("fitted calibration on " + std::to_string(kept.size()) + " rows -> " + o.calib);
    } else {
        calib = encoding::load_calibration(o.calib);
        if (calib.schema_hash != schema.hash())
            throw detector::HomogeneityError("calibration " + calib.schema_hash.substr(0, 12) + " vs schema " +
                                             schema.hash().substr(0, 12));
    }

    auto write = [&](const std::vector<flow::FeatureVector39>& part, const std::string& path) {
        encoding::EncodeStats st;
        const auto ds = pipeline::encode_samples(part, schema, calib, &st);
        if (st.unknown_tokens) log("warning: " + std::to_string(st.unknown_tokens) + " unknown symbolic tokens mapped to other");
        ensure_parent(path);
        encoding::save_dataset(path, ds);
        std::size_t pos = 0;
        for (auto l : ds.labels) pos += l;
        log("wrote " + path + ": " + std::to_string(ds.size()) + " vectors, " + std::to_string(pos) + " anomalous");
    };
    write(kept, o.out);
    if (!held.empty()) {
        std::vector<flow::FeatureVector39> rest;
        for (auto i : held) rest.push_back(rows[i]);
        write(rest, o.holdout_out);
    }
}

void save_model(detector::Model& m, const std::vector<detector::EpochStats>& h, const Options& o) {
    ensure_parent(o.out);
    detector::save_checkpoint(m, o.out);
    const auto hist = o.history.empty() ? o.out + ".history.csv" : o.history;
    write_text(hist, detector::history_csv(h));
    if (!h.empty())
        log("epoch " + std::to_string(h.back().epoch) + " loss " + std::to_string(h.back().loss) + " train_acc " +
            std::to_string(h.back().train_acc));
    log("wrote " + o.out + " and " + hist);
}

void cmd_train(Options& o) {
    const auto arch = detector::parse_arch(o.arch);
    auto spec = detector::ModelSpec::defaults(arch, model_seed(o.seed, arch));
    spec.hyper = o.hyper;
    spec.validate();
    const auto ds = encoding::load_dataset(o.data_path);
    auto m = detector::build_model(spec);
    m.train_seed = spec.seed;
    const auto h = detector::train(m, ds, detector::pretrain_options(spec));
    save_model(m, h, o);
}

void cmd_finetune(Options& o) {
    auto m = detector::load_checkpoint(o.ckpt);
    auto spec = detector::ModelSpec::defaults(m.arch, model_seed(o.seed, m.arch));
    spec.hyper = o.hyper;
    if (o.freeze == "none") spec.freeze = {};
    else if (o.freeze == "all") spec.freeze = detector::stage_names(m.arch);
    else if (o.freeze != "default") spec.freeze = split_list(o.freeze);
    log("freezing [" + [&] { std::string j; for (const auto& f : spec.freeze) j += (j.empty() ? "" : ",") + f; return j; }() + "]");
    const auto ds = encoding::load_dataset(o.data_path);
    const auto h = detector::finetune(m, ds, spec);
    save_model(m, h, o);
}

void cmd_evaluate(Options& o) {
    const auto ds = encoding::load_dataset(o.data_path);
    std::vector<detector::Model> models;
    for (const auto& path : split_list(o.ckpts)) models.push_back(detector::load_checkpoint(path));
    if (models.empty()) throw UsageError("--ckpts lists no checkpoints");
    std::vector<std::pair<std::string, const detector::Model*>> named;
    for (const auto& m : models) named.emplace_back(std::string(detector::to_string(m.arch)), &m);
    const auto rows = pipeline::benchmark_report(named, ds);
    ensure_parent(o.out);
    write_text(o.out, metrics::report_csv(rows));
    std::cout << metrics::report_text(rows);
    log("wrote " + o.out);
}

void cmd_detect(Options& o) {
    const auto schema = schema_or_default(o.schema);
    const auto calib = encoding::load_calibration(o.calib);
    auto m = detector::load_checkpoint(o.ckpt);
    if (calib.schema_hash != schema.hash() || m.schema_hash != schema.hash())
        throw detector::HomogeneityError("checkpoint " + m.schema_hash.substr(0, 12) + ", calibration " +
                                         calib.schema_hash.substr(0, 12) + ", schema " + schema.hash().substr(0, 12));
    ensure_parent(o.out);
    std::ofstream os(o.out, std::ios::binary);
    if (!os) throw DataError("cannot write '" + o.out + "'");

    flow::FeatureExtractor fx;
    std::size_t n = 0, flagged = 0;
    encoding::EncodeStats st;
    auto sink = [&](flow::FlowSample&& s) {
        encoding::EncodedDataset one;
        one.schema_hash = schema.hash();
        one.push_back(encoding::encode_vector(s.features, schema, calib, &st), s.features.label);
        const auto p = detector::predict(m, one).front();
        nlohmann::ordered_json v{{"flow", s.key.to_string()},
                                 {"first_ts", s.first_ts},
                                 {"last_ts", s.last_ts},
                                 {"class", p.cls ? "anomalous" : "normal"},
                                 {"probability", p.probability}};
        os << v.dump() << '\n';
        ++n;
        flagged += p.cls;
    };
    std::ifstream is(o.in, std::ios::binary);
    if (!is) throw DataError("cannot read '" + o.in + "'");
    read_packet_log(is, [&](PacketRecord&& p) { fx.push(p, sink); });
    fx.flush(sink);
    if (st.unknown_tokens) log("warning: " + std::to_string(st.unknown_tokens) + " unknown symbolic tokens mapped to other");
    log(std::to_string(n) + " flows, " + std::to_string(flagged) + " flagged anomalous -> " + o.out);
}

void cmd_benchmark(Options& o) {
    pipeline::BenchmarkConfig cfg;
    cfg.data = o.data;
    cfg.data.seed = o.seed;
    cfg.hyper = o.hyper;
    cfg.target_per_class = o.target_per_class;
    cfg.source_per_class = o.source_per_class;
    const auto r = pipeline::run_benchmark(cfg, log);
    fs::create_directories(o.out);
    write_text((fs::path(o.out) / "report.csv").string(), metrics::report_csv(r.rows()));
    auto manifest = r.manifest;
    manifest["seconds"] = r.seconds;
    write_text((fs::path(o.out) / "benchmark_manifest.json").string(), manifest.dump(2) + "\n");
    std::cout << metrics::report_text(r.rows());
    std::cout << "resnest target-only ACC " << r.target_only.m.acc.str() << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"AGC network anomaly detection with transfer-learned split-attention CNNs"};
    app.require_subcommand(1);
    app.set_config("--config", "", "INI file mirroring the command-line flags; flags override it");
    app.allow_config_extras(CLI::config_extras_mode::error);
    Options o;
    app.add_option("--seed", o.seed, "master seed; every stage seed is derived from it")->capture_default_str();

    auto* sim_cmd = app.add_subcommand("simulate", "generate source and target packet logs");
    sim_cmd->add_option("--out", o.out, "output directory")->required();
    add_dataset(sim_cmd, o.data);

    auto* feat = app.add_subcommand("features", "packet log to 40-column feature CSV");
    feat->add_option("--in", o.in, "packet log (JSONL)")->required();
    feat->add_option("--schema", o.schema, "schema JSON");
    feat->add_option("--out", o.out, "feature CSV")->required();

    auto* kdd = app.add_subcommand("import-kdd", "KDD-style connection records to 40-column feature CSV");
    kdd->add_option("--in", o.in, "KDD'99 / NSL-KDD CSV")->required();
    kdd->add_option("--out", o.out, "feature CSV")->required();

    auto* enc = app.add_subcommand("encode", "feature CSV to FSDS dataset");
    enc->add_option("--in", o.in, "feature CSV")->required();
    enc->add_option("--schema", o.schema, "schema JSON");
    enc->add_option("--calib", o.calib, "calibration JSON")->required();
    enc->add_option("--out", o.out, "FSDS dataset")->required();
    enc->add_flag("--fit-calib", o.fit_calib, "fit the calibration on this CSV and write it");
    enc->add_option("--balance", o.balance, "keep at most N flows per class");
    enc->add_option("--holdout", o.holdout, "fraction of each class held out")->check(CLI::Range(0.0, 0.99));
    enc->add_option("--holdout-out", o.holdout_out, "FSDS dataset for the held-out flows");

    auto* tr = app.add_subcommand("train", "train a model from scratch");
    tr->add_option("--arch", o.arch, "dnn, cnn or resnest")->capture_default_str();
    tr->add_option("--data", o.data_path, "FSDS dataset")->required();
    tr->add_option("--out", o.out, "checkpoint")->required();
    tr->add_option("--history", o.history, "history CSV (default <out>.history.csv)");
    add_hyper(tr, o.hyper);

    auto* ft = app.add_subcommand("finetune", "continue training a checkpoint on target data");
    ft->add_option("--ckpt", o.ckpt, "pretrained checkpoint")->required();
    ft->add_option("--data", o.data_path, "FSDS dataset")->required();
    ft->add_option("--freeze", o.freeze, "default, none, all or a comma list of layers")->capture_default_str();
    ft->add_option("--out", o.out, "checkpoint")->required();
    ft->add_option("--history", o.history, "history CSV (default <out>.history.csv)");
    add_hyper(ft, o.hyper);

    auto* ev = app.add_subcommand("evaluate", "ACC/FPR/DR report for one or more checkpoints");
    ev->add_option("--ckpts", o.ckpts, "comma-separated checkpoints")->required();
    ev->add_option("--data", o.data_path, "FSDS test dataset")->required();
    ev->add_option("--out", o.out, "report CSV")->required();

    auto* det = app.add_subcommand("detect", "per-flow verdicts for a packet log");
    det->add_option("--ckpt", o.ckpt, "checkpoint")->required();
    det->add_option("--in", o.in, "packet log (JSONL)")->required();
    det->add_option("--schema", o.schema, "schema JSON");
    det->add_option("--calib", o.calib, "calibration JSON")->required();
    det->add_option("--out", o.out, "verdicts JSONL")->required();

    auto* bench = app.add_subcommand("benchmark", "end-to-end seeded benchmark of all three archs");
    bench->add_option("--out", o.out, "output directory")->capture_default_str();
    bench->add_option("--target-per-class", o.target_per_class)->capture_default_str();
    bench->add_option("--source-per-class", o.source_per_class)->capture_default_str();
    add_dataset(bench, o.data);
    add_hyper(bench, o.hyper);
    o.out = "benchmark_out";

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp& e) {
            return app.exit(e);
        } catch (const CLI::CallForAllHelp& e) {
            return app.exit(e);
        } catch (const CLI::ParseError& e) {
            throw UsageError(e.what());
        }
        const auto* active = app.get_subcommands().front();
        std::string resolved;
        std::istringstream all(app.config_to_str(true, false));
        for (std::string line; std::getline(all, line);)
            if (!line.empty() && (line.find('.') == std::string::npos || line.rfind(active->get_name() + ".", 0) == 0))
                resolved += "  " + line + "\n";
        log("config\n" + resolved);
        log_seeds(o);
        if (*sim_cmd) cmd_simulate(o);
        else if (*feat) cmd_features(o);
        else if (*kdd) cmd_import_kdd(o);
        else if (*enc) cmd_encode(o);
        else if (*tr) cmd_train(o);
        else if (*ft) cmd_finetune(o);
        else if (*ev) cmd_evaluate(o);
        else if (*det) cmd_detect(o);
        else if (*bench) cmd_benchmark(o);
    } catch (const Error& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        std::cerr << "error: kind=" << error_kind_name(e.kind()) << " msg=" << msg << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        std::cerr << "error: kind=data msg=" << msg << '\n';
        return 2;
    }
    return 0;
}

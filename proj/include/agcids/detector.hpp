#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "agcids/common.hpp"
#include "agcids/encoding.hpp"
#include "agcids/nn/layers.hpp"
#include "agcids/nn/optim.hpp"
#include "agcids/nn/split_attention.hpp"

namespace agcids::detector {

using nn::Tensor;

enum class Arch { dnn, cnn, resnest };
inline constexpr std::array<std::string_view, 3> kArchNames{"dnn", "cnn", "resnest"};

inline std::string_view to_string(Arch a) { return kArchNames[static_cast<std::size_t>(a)]; }

inline Arch parse_arch(std::string_view s) {
    for (std::size_t i = 0; i < kArchNames.size(); ++i)
        if (kArchNames[i] == s) return static_cast<Arch>(i);
    throw UsageError("unknown arch '" + std::string(s) + "' (expected dnn, cnn or resnest)");
}

/// Mismatched schema hashes between datasets or between model and data.
struct HomogeneityError : DataError {
    explicit HomogeneityError(const std::string& what) : DataError("schema hash mismatch: " + what) {}
};

struct Hyper {
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::size_t batch_size = 32;
    int epochs = 30;
    int finetune_epochs = 15;
    double finetune_lr_scale = 1.0;
};

inline std::vector<std::string> stage_names(Arch a) {
    if (a == Arch::dnn) return {"fc1", "fc2", "head"};
    return {"stem", "block1", "block2", "pool", "head"};
}

inline std::vector<std::string> default_freeze(Arch a) {
    if (a == Arch::dnn) return {"fc1"};
    return {"stem", "block1"};
}

struct ModelSpec {
    Arch arch = Arch::resnest;
    std::uint64_t seed = 42;
    Hyper hyper;
    std::vector<std::string> freeze = default_freeze(Arch::resnest);

    static ModelSpec defaults(Arch a, std::uint64_t seed = 42) {
        ModelSpec s;
        s.arch = a;
        s.seed = seed;
        s.freeze = default_freeze(a);
        return s;
    }

    void validate() const {
        const auto names = stage_names(arch);
        for (const auto& f : freeze)
            if (std::find(names.begin(), names.end(), f) == names.end())
                throw UsageError("freeze: no layer '" + f + "' in arch " + std::string(to_string(arch)));
        if (hyper.batch_size == 0) throw UsageError("batch_size must be positive");
        if (hyper.lr < 0 || !std::isfinite(hyper.lr)) throw UsageError("lr must be finite and >= 0");
        if (hyper.epochs < 0 || hyper.finetune_epochs < 0) throw UsageError("epochs must be >= 0");
    }
};

// ---------------------------------------------------------------------------

struct Stage {
    std::string name;
    std::unique_ptr<nn::Layer<float>> layer;
};

struct Prediction {
    int cls = 0;
    double probability = 0.5;
};

class Model {
public:
    Arch arch = Arch::resnest;
    std::vector<Stage> stages;
    std::string schema_hash;
    std::uint64_t train_seed = 0;
    int epochs_done = 0;

    std::vector<std::size_t> sample_shape() const {
        if (arch == Arch::dnn) return {encoding::kEncodedDims};
        return {1, encoding::kImageSide, encoding::kImageSide};
    }

    Stage& stage(const std::string& name) {
        for (auto& s : stages)
            if (s.name == name) return s;
        throw UsageError("no layer '" + name + "'");
    }

    /// Parameters with qualified names "<stage>.<index>.<weight|bias>".
    std::vector<std::pair<std::string, nn::Param<float>*>> named_params() {
        std::vector<std::pair<std::string, nn::Param<float>*>> out;
        for (auto& s : stages) {
            std::size_t i = 0;
            for (auto* p : s.layer->params()) {
                out.emplace_back(s.name + "." + std::to_string(i / 2) + "." + p->name, p);
                ++i;
            }
        }
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& s : stages)
            for (const auto* p : std::as_const(*s.layer).params()) n += p->value.size();
        return n;
    }

    Tensor<float> logits(const Tensor<float>& x) const {
        check_input(x);
        Tensor<float> h = x;
        for (const auto& s : stages) h = s.layer->infer(h);
        return h;
    }

    void check_input(const Tensor<float>& x) const {
        const auto want = sample_shape();
        if (x.rank() != want.size() + 1 || !std::equal(want.begin(), want.end(), x.shape.begin() + 1))
            throw DataError("model input shape mismatch: got " + nn::shape_string(x.shape) + ", " +
                            std::string(to_string(arch)) + " expects (N," +
                            nn::shape_string(want).substr(1));
    }
};

namespace detail {

template <typename L>
std::unique_ptr<L> init_layer(std::unique_ptr<L> l, Rng& rng) {
    l->init(rng);
    return l;
}

inline std::unique_ptr<nn::Layer<float>> conv_relu(std::size_t in, std::size_t out, std::size_t stride, Rng& rng) {
    auto c = std::make_unique<nn::Chain<float>>();
    c->add(init_layer(std::make_unique<nn::Conv2d<float>>(in, out, 3, stride, 1), rng));
    c->add(std::make_unique<nn::ReLU<float>>());
    return c;
}

inline std::unique_ptr<nn::Layer<float>> dense_relu(std::size_t in, std::size_t out, Rng& rng) {
    auto c = std::make_unique<nn::Chain<float>>();
    c->add(init_layer(std::make_unique<nn::Dense<float>>(in, out), rng));
    c->add(std::make_unique<nn::ReLU<float>>());
    return c;
}

} // namespace detail

inline Model build_model(Arch arch, std::uint64_t seed) {
    Model m;
    m.arch = arch;
    m.train_seed = seed;
    Rng rng(derive_seed(seed, "init"));
    auto add = [&](std::string name, std::unique_ptr<nn::Layer<float>> l) { m.stages.push_back({std::move(name), std::move(l)}); };
    switch (arch) {
    case Arch::dnn:
        add("fc1", detail::dense_relu(encoding::kEncodedDims, 64, rng));
        add("fc2", detail::dense_relu(64, 32, rng));
        add("head", detail::init_layer(std::make_unique<nn::Dense<float>>(32, 2), rng));
        break;
    case Arch::cnn:
        add("stem", detail::conv_relu(1, 16, 1, rng));
        add("block1", detail::conv_relu(16, 16, 1, rng));
        add("block2", detail::conv_relu(16, 32, 2, rng));
        add("pool", std::make_unique<nn::GlobalAvgPool<float>>());
        add("head", detail::init_layer(std::make_unique<nn::Dense<float>>(32, 2), rng));
        break;
    case Arch::resnest:
        add("stem", detail::conv_relu(1, 16, 1, rng));
        add("block1", detail::init_layer(std::make_unique<nn::SplitAttention<float>>(16, 16, 2, 1), rng));
        add("block2", detail::init_layer(std::make_unique<nn::SplitAttention<float>>(16, 32, 2, 2), rng));
        add("pool", std::make_unique<nn::GlobalAvgPool<float>>());
        add("head", detail::init_layer(std::make_unique<nn::Dense<float>>(32, 2), rng));
        break;
    }
    return m;
}

inline Model build_model(const ModelSpec& spec) {
    spec.validate();
    return build_model(spec.arch, spec.seed);
}

/// Samples `idx` of `ds` shaped for the model: (n,130) or (n,1,12,12).
inline Tensor<float> make_batch(Arch arch, const encoding::EncodedDataset& ds, std::span<const std::size_t> idx) {
    const std::size_t n = idx.size();
    if (arch == Arch::dnn) {
        Tensor<float> x({n, encoding::kEncodedDims});
        for (std::size_t i = 0; i < n; ++i)
            std::copy(ds.vectors[idx[i]].begin(), ds.vectors[idx[i]].end(), x.ptr() + i * encoding::kEncodedDims);
        return x;
    }
    Tensor<float> x({n, 1, encoding::kImageSide, encoding::kImageSide});
    for (std::size_t i = 0; i < n; ++i) {
        const auto img = encoding::to_image(ds.vectors[idx[i]]);
        std::copy(img.begin(), img.end(), x.ptr() + i * encoding::kImagePixels);
    }
    return x;
}

// ---------------------------------------------------------------------------
// Prediction

/// Argmax with ties resolved to the lower class index.
inline Prediction decide(float l0, float l1) {
    const int cls = l1 > l0 ? 1 : 0;
    const double a = l0, b = l1;
    const double m = std::max(a, b);
    const double e0 = std::exp(a - m), e1 = std::exp(b - m);
    return {cls, (cls == 1 ? e1 : e0) / (e0 + e1)};
}

inline std::vector<Prediction> predict(const Model& m, const Tensor<float>& x) {
    const auto z = m.logits(x);
    std::vector<Prediction> out(z.dim(0));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = decide(z[2 * i], z[2 * i + 1]);
    return out;
}

inline std::vector<Prediction> predict(const Model& m, const encoding::EncodedDataset& ds, std::size_t chunk = 256) {
    if (!m.schema_hash.empty() && !ds.schema_hash.empty() && m.schema_hash != ds.schema_hash)
        throw HomogeneityError("model " + m.schema_hash.substr(0, 12) + " vs data " + ds.schema_hash.substr(0, 12));
    std::vector<Prediction> out;
    out.reserve(ds.size());
    std::vector<std::size_t> idx;
    for (std::size_t lo = 0; lo < ds.size(); lo += chunk) {
        idx.resize(std::min(chunk, ds.size() - lo));
        std::iota(idx.begin(), idx.end(), lo);
        for (const auto& p : predict(m, make_batch(m.arch, ds, idx))) out.push_back(p);
    }
    return out;
}

inline double accuracy(const std::vector<Prediction>& preds, const std::vector<std::uint8_t>& labels) {
    if (preds.empty()) return 0.0;
    std::size_t ok = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) ok += preds[i].cls == labels[i];
    return static_cast<double>(ok) / static_cast<double>(preds.size());
}

// ---------------------------------------------------------------------------
// Training

struct EpochStats {
    int epoch = 0;
    double loss = 0.0;
    double train_acc = 0.0;
};

struct TrainOptions {
    nn::SgdConfig sgd;
    std::size_t batch_size = 32;
    int epochs = 30;
    std::uint64_t seed = 42;
    std::vector<std::string> freeze;
};

inline std::string history_csv(const std::vector<EpochStats>& h) {
    std::string out = "epoch,loss,train_acc\n";
    char buf[96];
    for (const auto& e : h) {
        std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g\n", e.epoch, e.loss, e.train_acc);
        out += buf;
    }
    return out;
}

/// Mini-batch SGD over a seeded per-epoch shuffle. Frozen stages are run
/// forward but never updated; backpropagation stops at the first trainable one.
inline std::vector<EpochStats> train(Model& m, const encoding::EncodedDataset& ds, const TrainOptions& opt) {
    if (ds.size() == 0) throw DataError("train: empty dataset");
    for (auto l : ds.labels)
        if (l > 1) throw DataError("train: labels must be binary");
    if (opt.batch_size == 0) throw UsageError("batch_size must be positive");
    if (!m.schema_hash.empty() && !ds.schema_hash.empty() && m.schema_hash != ds.schema_hash)
        throw HomogeneityError("model " + m.schema_hash.substr(0, 12) + " vs data " + ds.schema_hash.substr(0, 12));
    if (m.schema_hash.empty()) m.schema_hash = ds.schema_hash;

    const std::set<std::string> frozen(opt.freeze.begin(), opt.freeze.end());
    for (const auto& f : frozen) m.stage(f);
    std::size_t first_trainable = m.stages.size();
    std::vector<nn::Param<float>*> trainable;
    for (std::size_t i = 0; i < m.stages.size(); ++i) {
        if (frozen.count(m.stages[i].name)) continue;
        first_trainable = std::min(first_trainable, i);
        for (auto* p : m.stages[i].layer->params()) {
            p->velocity.fill(0.0f);
            trainable.push_back(p);
        }
    }

    Rng rng(derive_seed(opt.seed, "shuffle"));
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<nn::Tape<float>> tapes(m.stages.size());
    std::vector<int> labels;
    std::vector<EpochStats> history;

    for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t lo = 0; lo < order.size(); lo += opt.batch_size) {
            const std::span<const std::size_t> idx(order.data() + lo, std::min(opt.batch_size, order.size() - lo));
            Tensor<float> h = make_batch(m.arch, ds, idx);
            labels.assign(idx.size(), 0);
            for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = ds.labels[idx[i]];

            for (std::size_t s = 0; s < m.stages.size(); ++s) h = m.stages[s].layer->forward(h, tapes[s]);
            const auto res = nn::softmax_cross_entropy(h, labels);
            if (!std::isfinite(res.loss))
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                                   std::to_string(lo) + " (lr " + std::to_string(opt.sgd.lr) + ")");
            loss_sum += static_cast<double>(res.loss) * static_cast<double>(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) correct += decide(h[2 * i], h[2 * i + 1]).cls == labels[i];

            if (trainable.empty()) continue;
            for (auto* p : trainable) p->grad.fill(0.0f);
            Tensor<float> g = res.dlogits;
            for (std::size_t s = m.stages.size(); s-- > first_trainable;)
                g = m.stages[s].layer->backward(g, tapes[s], s > first_trainable);
            nn::sgd_step(trainable, opt.sgd);
        }
        history.push_back({m.epochs_done + 1, loss_sum / static_cast<double>(ds.size()),
                           static_cast<double>(correct) / static_cast<double>(ds.size())});
        ++m.epochs_done;
    }
    return history;
}

inline TrainOptions pretrain_options(const ModelSpec& spec) {
    return {{spec.hyper.lr, spec.hyper.momentum, spec.hyper.weight_decay},
            spec.hyper.batch_size,
            spec.hyper.epochs,
            derive_seed(spec.seed, "pretrain"),
            {}};
}

inline TrainOptions finetune_options(const ModelSpec& spec) {
    return {{spec.hyper.lr * spec.hyper.finetune_lr_scale, spec.hyper.momentum, spec.hyper.weight_decay},
            spec.hyper.batch_size,
            spec.hyper.finetune_epochs,
            derive_seed(spec.seed, "finetune"),
            spec.freeze};
}

struct TransferResult {
    Model model;
    std::vector<EpochStats> pretrain_history;
    std::vector<EpochStats> finetune_history;
};

inline std::vector<EpochStats> finetune(Model& m, const encoding::EncodedDataset& target, const ModelSpec& spec) {
    spec.validate();
    return train(m, target, finetune_options(spec));
}

inline TransferResult pretrain_then_finetune(const ModelSpec& spec, const encoding::EncodedDataset& source,
                                             const encoding::EncodedDataset& target) {
    if (source.schema_hash != target.schema_hash)
        throw HomogeneityError("source " + source.schema_hash.substr(0, 12) + " vs target " +
                               target.schema_hash.substr(0, 12));
    TransferResult r{build_model(spec), {}, {}};
    r.pretrain_history = train(r.model, source, pretrain_options(spec));
    r.finetune_history = finetune(r.model, target, spec);
    return r;
}

// ---------------------------------------------------------------------------
// Checkpoint: "FSNT", u16 version, u32 header length, JSON header, then all
// parameters as little-endian f32 in header order.

inline constexpr std::uint16_t kCheckpointVersion = 1;

inline std::string serialize_checkpoint(Model& m) {
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (auto& [name, p] : m.named_params()) layers.push_back({{"name", name}, {"shape", p->value.shape}});
    nlohmann::ordered_json header{{"arch", to_string(m.arch)},
                                  {"layers", layers},
                                  {"schema_hash", m.schema_hash},
                                  {"train_seed", m.train_seed},
                                  {"epochs_done", m.epochs_done}};
    const std::string h = header.dump();
    std::string out = "FSNT";
    encoding::detail::put_le<std::uint16_t>(out, kCheckpointVersion);
    encoding::detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h.size()));
    out += h;
    for (auto& [name, p] : m.named_params())
        for (float f : p->value.data) encoding::detail::put_f32(out, f);
    return out;
}

inline Model deserialize_checkpoint(const std::string& bytes) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 10 || bytes.compare(0, 4, "FSNT") != 0) throw DataError("checkpoint: bad magic");
    const auto version = encoding::detail::get_le<std::uint16_t>(p + 4);
    if (version != kCheckpointVersion)
        throw DataError("checkpoint: unsupported version " + std::to_string(version));
    const auto hlen = encoding::detail::get_le<std::uint32_t>(p + 6);
    if (bytes.size() < 10 + std::size_t{hlen})
        throw DataError("checkpoint: truncated header, expected " + std::to_string(10 + std::size_t{hlen}) +
                        " bytes, got " + std::to_string(bytes.size()));
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(10, hlen));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: bad header: ") + e.what());
    }

    Model m;
    try {
        m = build_model(parse_arch(header.at("arch").get<std::string>()), 0);
        m.schema_hash = header.at("schema_hash").get<std::string>();
        m.train_seed = header.at("train_seed").get<std::uint64_t>();
        m.epochs_done = header.at("epochs_done").get<int>();
    } catch (const UsageError& e) {
        throw DataError(std::string("checkpoint: ") + e.what());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: bad header: ") + e.what());
    }

    auto params = m.named_params();
    const auto& layers = header.at("layers");
    if (layers.size() != params.size())
        throw DataError("checkpoint: shape mismatch, header lists " + std::to_string(layers.size()) +
                        " tensors, arch has " + std::to_string(params.size()));
    std::size_t floats = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto shape = layers[i].at("shape").get<std::vector<std::size_t>>();
        if (layers[i].at("name").get<std::string>() != params[i].first || shape != params[i].second->value.shape)
            throw DataError("checkpoint: shape mismatch at " + params[i].first + ": file " + nn::shape_string(shape) +
                            ", arch " + nn::shape_string(params[i].second->value.shape));
        floats += Tensor<float>::count(shape);
    }
    const std::size_t expected = 10 + hlen + 4 * floats;
    if (bytes.size() != expected)
        throw DataError("checkpoint: payload length mismatch, expected " + std::to_string(expected) + " bytes, got " +
                        std::to_string(bytes.size()));
    const unsigned char* q = p + 10 + hlen;
    for (auto& [name, prm] : params)
        for (auto& f : prm->value.data) {
            f = encoding::detail::get_f32(q);
            q += 4;
        }
    return m;
}

inline void save_checkpoint(Model& m, const std::string& path) {
    encoding::detail::write_file(path, serialize_checkpoint(m));
}

inline Model load_checkpoint(const std::string& path) { return deserialize_checkpoint(encoding::detail::read_file(path)); }

inline Model clone(Model& m) { return deserialize_checkpoint(serialize_checkpoint(m)); }

} // namespace agcids::detector

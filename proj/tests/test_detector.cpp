#include <gtest/gtest.h>

#include <filesystem>

#include "agcids/detector.hpp"

using namespace agcids;
using namespace agcids::detector;
using encoding::EncodedDataset;
using encoding::EncodedVector;

namespace {

constexpr std::array<Arch, 3> kArchs{Arch::dnn, Arch::cnn, Arch::resnest};

// Separable by the mean of the numeric block; symbolic blocks are random one-hots.
EncodedDataset toy_set(std::size_t n, std::uint64_t seed, std::string hash = "toy") {
    Rng rng(seed);
    EncodedDataset ds;
    ds.schema_hash = std::move(hash);
    for (std::size_t i = 0; i < n; ++i) {
        const auto label = i % 2 ? Label::anomalous : Label::normal;
        EncodedVector v{};
        const double centre = label == Label::anomalous ? 0.75 : 0.25;
        for (std::size_t k = 0; k < 36; ++k) v[k] = static_cast<float>(std::clamp(centre + normal(rng, 0.0, 0.1), 0.0, 1.0));
        v[36 + uniform_int(rng, 0, 3)] = 1.0f;
        v[40 + uniform_int(rng, 0, 78)] = 1.0f;
        v[119 + uniform_int(rng, 0, 10)] = 1.0f;
        ds.push_back(v, label);
    }
    return ds;
}

std::vector<std::vector<float>> snapshot(Model& m, const std::string& stage = "") {
    std::vector<std::vector<float>> out;
    for (auto& [name, p] : m.named_params())
        if (stage.empty() || name.rfind(stage + ".", 0) == 0) out.push_back(p->value.data);
    return out;
}

TrainOptions quick(int epochs, double lr = 0.05, std::vector<std::string> freeze = {}) {
    TrainOptions o;
    o.sgd.lr = lr;
    o.epochs = epochs;
    o.seed = 5;
    o.freeze = std::move(freeze);
    return o;
}

std::string tmp(const std::string& name) { return (std::filesystem::temp_directory_path() / name).string(); }

} // namespace

// --- construction ------------------------------------------------------------

TEST(Build, ParameterCounts) {
    EXPECT_EQ(build_model(Arch::resnest, 1).parameter_count(), 15758u);
    EXPECT_EQ(build_model(Arch::cnn, 1).parameter_count(), 7186u);
    EXPECT_EQ(build_model(Arch::dnn, 1).parameter_count(), 10530u);
}

TEST(Build, ResnestCountFromDeclaredShapes) {
    auto conv = [](std::size_t in, std::size_t out, std::size_t k) { return in * out * k * k + out; };
    auto dense = [](std::size_t in, std::size_t out) { return in * out + out; };
    auto block = [&](std::size_t in, std::size_t out, bool proj) {
        return 2 * conv(in, out, 3) + dense(out, out / 4) + dense(out / 4, 2 * out) + (proj ? conv(in, out, 1) : 0);
    };
    const std::size_t want = conv(1, 16, 3) + block(16, 16, false) + block(16, 32, true) + dense(32, 2);
    EXPECT_EQ(build_model(Arch::resnest, 1).parameter_count(), want);
    EXPECT_EQ(build_model(Arch::dnn, 1).parameter_count(), dense(130, 64) + dense(64, 32) + dense(32, 2));
}

TEST(Build, SameSeedSameInit) {
    for (auto a : kArchs) {
        auto m1 = build_model(a, 9), m2 = build_model(a, 9), m3 = build_model(a, 10);
        EXPECT_EQ(snapshot(m1), snapshot(m2));
        EXPECT_NE(snapshot(m1), snapshot(m3));
    }
}

TEST(Build, InputContract) {
    const auto dnn = build_model(Arch::dnn, 1), res = build_model(Arch::resnest, 1);
    EXPECT_EQ(dnn.logits(Tensor<float>({3, 130})).shape, (std::vector<std::size_t>{3, 2}));
    EXPECT_EQ(res.logits(Tensor<float>({3, 1, 12, 12})).shape, (std::vector<std::size_t>{3, 2}));
    EXPECT_THROW(dnn.logits(Tensor<float>({3, 1, 12, 12})), DataError);
    EXPECT_THROW(res.logits(Tensor<float>({3, 130})), DataError);
    EXPECT_THROW(parse_arch("lstm"), UsageError);
}

TEST(Build, FreezeNamesValidated) {
    auto spec = ModelSpec::defaults(Arch::cnn);
    spec.freeze = {"fc1"};
    EXPECT_THROW(spec.validate(), UsageError);
    spec = ModelSpec::defaults(Arch::dnn);
    EXPECT_NO_THROW(spec.validate());
    spec.hyper.lr = -1;
    EXPECT_THROW(spec.validate(), UsageError);
}

// --- training ----------------------------------------------------------------

TEST(Train, OverfitsSmallSeparableSet) {
    const auto ds = toy_set(32, 3);
    for (auto a : kArchs) {
        auto m = build_model(a, 4);
        double acc = 0.0;
        int epochs = 0;
        while (acc < 1.0 && epochs < 200) {
            train(m, ds, quick(1));
            ++epochs;
            acc = accuracy(predict(m, ds), ds.labels);
        }
        EXPECT_EQ(acc, 1.0) << to_string(a) << " after " << epochs << " epochs";
    }
}

TEST(Train, ZeroLearningRateIsFixedPoint) {
    const auto ds = toy_set(40, 6);
    for (auto a : kArchs) {
        auto m = build_model(a, 2);
        const auto before = snapshot(m);
        train(m, ds, quick(3, 0.0));
        EXPECT_EQ(snapshot(m), before) << to_string(a);
    }
}

TEST(Train, DeterministicHistoryAndCheckpoint) {
    const auto ds = toy_set(64, 7);
    auto run = [&] {
        auto m = build_model(Arch::resnest, 3);
        auto h = train(m, ds, quick(3));
        return std::make_pair(history_csv(h), serialize_checkpoint(m));
    };
    const auto a = run(), b = run();
    EXPECT_EQ(a.first, b.first);
    EXPECT_EQ(a.second, b.second);
}

TEST(Train, HistoryCountsEpochs) {
    const auto ds = toy_set(16, 8);
    auto m = build_model(Arch::dnn, 3);
    const auto h1 = train(m, ds, quick(2));
    const auto h2 = train(m, ds, quick(3));
    ASSERT_EQ(h1.size(), 2u);
    ASSERT_EQ(h2.size(), 3u);
    EXPECT_EQ(h2.back().epoch, 5);
    EXPECT_EQ(m.epochs_done, 5);
}

TEST(Train, Errors) {
    auto m = build_model(Arch::dnn, 1);
    EncodedDataset empty;
    EXPECT_THROW(train(m, empty, quick(1)), DataError);
    auto ds = toy_set(4, 1);
    ds.labels[0] = 3;
    EXPECT_THROW(train(m, ds, quick(1)), DataError);
    EXPECT_THROW(train(m, toy_set(4, 1), quick(1, 0.05, {"stem"})), UsageError);
}

TEST(Train, DivergenceAbortsWithDiagnostics) {
    auto m = build_model(Arch::dnn, 1);
    try {
        train(m, toy_set(64, 1), quick(50, 1e6));
        FAIL() << "expected a numeric error";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    }
}

// --- transfer ----------------------------------------------------------------

TEST(Transfer, DefaultFreezeKeepsFrozenBitsExact) {
    const auto src = toy_set(64, 11), tgt = toy_set(64, 12);
    for (auto a : kArchs) {
        auto spec = ModelSpec::defaults(a, 1);
        spec.hyper.epochs = 2;
        spec.hyper.finetune_epochs = 2;
        auto m = build_model(spec);
        train(m, src, pretrain_options(spec));
        std::map<std::string, std::vector<std::vector<float>>> frozen, live;
        for (const auto& s : stage_names(a)) (std::count(spec.freeze.begin(), spec.freeze.end(), s) ? frozen : live)[s] = snapshot(m, s);
        finetune(m, tgt, spec);
        for (const auto& [s, v] : frozen) EXPECT_EQ(snapshot(m, s), v) << to_string(a) << " " << s;
        EXPECT_NE(snapshot(m, "head"), live["head"]) << to_string(a);
    }
}

TEST(Transfer, FreezeAllChangesNothing) {
    const auto src = toy_set(64, 13), tgt = toy_set(64, 14);
    auto spec = ModelSpec::defaults(Arch::cnn, 2);
    spec.hyper.epochs = 2;
    spec.hyper.finetune_epochs = 3;
    auto m = build_model(spec);
    train(m, src, pretrain_options(spec));
    const auto before = snapshot(m);
    const auto acc_before = accuracy(predict(m, tgt), tgt.labels);
    spec.freeze = stage_names(Arch::cnn);
    finetune(m, tgt, spec);
    EXPECT_EQ(snapshot(m), before);
    EXPECT_EQ(accuracy(predict(m, tgt), tgt.labels), acc_before);
}

TEST(Transfer, EmptyFreezeIsSequentialTraining) {
    const auto src = toy_set(64, 15), tgt = toy_set(64, 16);
    auto spec = ModelSpec::defaults(Arch::dnn, 3);
    spec.hyper.epochs = 2;
    spec.hyper.finetune_epochs = 2;
    spec.freeze = {};
    auto r = pretrain_then_finetune(spec, src, tgt);

    auto m = build_model(spec);
    train(m, src, pretrain_options(spec));
    auto opt = pretrain_options(spec);
    opt.sgd.lr *= spec.hyper.finetune_lr_scale;
    opt.epochs = spec.hyper.finetune_epochs;
    opt.seed = derive_seed(spec.seed, "finetune");
    train(m, tgt, opt);
    EXPECT_EQ(serialize_checkpoint(r.model), serialize_checkpoint(m));
}

TEST(Transfer, SchemaMismatchRefused) {
    const auto spec = ModelSpec::defaults(Arch::dnn);
    EXPECT_THROW(pretrain_then_finetune(spec, toy_set(8, 1, "a"), toy_set(8, 2, "b")), HomogeneityError);
}

// --- prediction --------------------------------------------------------------

TEST(Predict, TieGoesToNormal) {
    const auto p = decide(2.0f, 2.0f);
    EXPECT_EQ(p.cls, 0);
    EXPECT_EQ(p.probability, 0.5);
    EXPECT_EQ(decide(1.0f, 3.0f).cls, 1);
}

TEST(Predict, ProbabilityInUpperHalf) {
    const auto ds = toy_set(50, 17);
    auto m = build_model(Arch::resnest, 5);
    for (const auto& p : predict(m, ds)) {
        EXPECT_GE(p.probability, 0.5);
        EXPECT_LE(p.probability, 1.0);
    }
}

TEST(Predict, BatchPackingInvariant) {
    const auto ds = toy_set(37, 18);
    for (auto a : kArchs) {
        auto m = build_model(a, 6);
        const auto whole = predict(m, ds, 256);
        const auto ones = predict(m, ds, 1);
        const auto sevens = predict(m, ds, 7);
        ASSERT_EQ(whole.size(), ds.size());
        for (std::size_t i = 0; i < ds.size(); ++i) {
            EXPECT_EQ(whole[i].cls, ones[i].cls);
            EXPECT_EQ(whole[i].probability, ones[i].probability);
            EXPECT_EQ(whole[i].probability, sevens[i].probability);
        }
    }
}

TEST(Predict, SchemaMismatchRefused) {
    auto m = build_model(Arch::dnn, 1);
    train(m, toy_set(8, 1, "v1"), quick(1));
    EXPECT_THROW(predict(m, toy_set(8, 1, "v2")), HomogeneityError);
}

// --- checkpoints -------------------------------------------------------------

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
    for (auto a : kArchs) {
        auto m = build_model(a, 7);
        train(m, toy_set(32, 19), quick(1));
        const auto path = tmp("agcids_ckpt_" + std::string(to_string(a)) + ".fsnt");
        save_checkpoint(m, path);
        auto back = load_checkpoint(path);
        EXPECT_EQ(serialize_checkpoint(back), serialize_checkpoint(m));
        EXPECT_EQ(back.schema_hash, "toy");
        EXPECT_EQ(back.epochs_done, 1);
        const auto ds = toy_set(10, 20);
        const auto p1 = predict(m, ds), p2 = predict(back, ds);
        for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(p1[i].probability, p2[i].probability);
    }
}

TEST(Checkpoint, TruncationNamesLengths) {
    auto m = build_model(Arch::dnn, 1);
    const auto bytes = serialize_checkpoint(m);
    try {
        deserialize_checkpoint(bytes.substr(0, bytes.size() - 4));
        FAIL();
    } catch (const DataError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("expected " + std::to_string(bytes.size())), std::string::npos) << msg;
        EXPECT_NE(msg.find("got " + std::to_string(bytes.size() - 4)), std::string::npos) << msg;
    }
}

TEST(Checkpoint, CorruptionRejected) {
    auto m = build_model(Arch::cnn, 1);
    const auto bytes = serialize_checkpoint(m);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(deserialize_checkpoint(bad_magic), DataError);
    auto bad_version = bytes;
    bad_version[4] = 2;
    EXPECT_THROW(deserialize_checkpoint(bad_version), DataError);
    EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, 20)), DataError);
    EXPECT_THROW(deserialize_checkpoint(bytes + "xxxx"), DataError);

    // A resnest header over a cnn payload fails the shape arithmetic.
    auto res = build_model(Arch::resnest, 1);
    const auto rb = serialize_checkpoint(res);
    const auto hlen = static_cast<std::uint32_t>(static_cast<unsigned char>(rb[6]) | static_cast<unsigned char>(rb[7]) << 8 |
                                                 static_cast<unsigned char>(rb[8]) << 16 |
                                                 static_cast<unsigned char>(rb[9]) << 24);
    auto swapped = rb;
    const std::string needle = "\"arch\":\"resnest\"";
    swapped.replace(swapped.find(needle), needle.size(), "\"arch\":\"cnn\"    ");
    EXPECT_EQ(swapped.size(), 10 + hlen + (rb.size() - 10 - hlen));
    try {
        deserialize_checkpoint(swapped);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("shape mismatch"), std::string::npos) << e.what();
    }
}

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>

#include "saliflow/train.hpp"
#include "support/fixtures.hpp"

using namespace saliflow;
using namespace testsupport;

namespace {

// Small on-disk synthetic dataset: rigid clips of textured squares.
DatasetManifest make_toy_dataset(const std::filesystem::path& dir, int n_sources, int frames) {
    DatasetManifest manifest;
    manifest.name = "toy";
    manifest.root = dir;
    manifest.generator.backend = "rigid_oracle";
    for (int s = 0; s < n_sources; ++s) {
        SourceSample src = noise_source("s" + std::to_string(s), 64, 64,
                                        1000 + static_cast<std::uint64_t>(s) * 17,
                                        10 + 4 * s, 8 + 3 * s, 20, 20);
        MotionSpec spec;
        spec.displacement_schedule.assign(static_cast<std::size_t>(frames), {2.0, 1.0});
        GeneratedClip clip = rigid_object_clip(src, spec);
        auto records = write_synthetic_group(dir, src, *clip.gt_flows);
        manifest.records.insert(manifest.records.end(), records.begin(), records.end());
    }
    save_manifest(manifest, dir / "manifest.jsonl");
    return load_manifest(dir / "manifest.jsonl");
}

MixingSpec single_dataset_mix(const DatasetManifest& m, std::uint64_t seed) {
    MixingSpec mix;
    mix.datasets = {m};
    mix.ratios = {1};
    mix.seed = seed;
    return mix;
}

TrainConfig toy_train_config(int max_steps, double lr = 1e-2) {
    TrainConfig c;
    c.learning_rate = lr;
    c.batch_size = 2;
    c.max_steps = max_steps;
    c.resolution = 64;
    c.model = ModelConfig::toy();
    c.ratios = {1};
    return c;
}

}  // namespace

TEST_CASE("bce loss hits its definitional limits") {
    Tensor ones = Tensor::full({1, 1, 4, 4}, 1.0);
    Tensor zeros = Tensor::zeros({1, 1, 4, 4});

    // confident and correct: +100 on foreground, -100 on background
    Tensor logits = Tensor::zeros({1, 1, 4, 4});
    Tensor mask = Tensor::zeros({1, 1, 4, 4});
    for (int i = 0; i < 16; ++i) {
        bool fg = i % 3 == 0;
        mask.data()[static_cast<std::size_t>(i)] = fg ? 1.0 : 0.0;
        logits.data()[static_cast<std::size_t>(i)] = fg ? 100.0 : -100.0;
    }
    CHECK(bce_loss(logits, mask) < 1e-6);

    // all-zero logits: ln 2 everywhere
    CHECK(bce_loss(zeros, ones) == Catch::Approx(std::log(2.0)).margin(1e-12));

    // random case against the direct formula
    Rng rng(1);
    Tensor rl = Tensor::zeros({1, 1, 4, 4});
    Tensor rm = Tensor::zeros({1, 1, 4, 4});
    for (int i = 0; i < 16; ++i) {
        rl.data()[static_cast<std::size_t>(i)] = rng.uniform(-4, 4);
        rm.data()[static_cast<std::size_t>(i)] = rng.next_below(2) ? 1.0 : 0.0;
    }
    double direct = 0.0;
    for (int i = 0; i < 16; ++i) {
        double p = 1.0 / (1.0 + std::exp(-rl.data()[static_cast<std::size_t>(i)]));
        double y = rm.data()[static_cast<std::size_t>(i)];
        direct += -(y * std::log(p) + (1 - y) * std::log(1 - p));
    }
    CHECK(bce_loss(rl, rm) == Catch::Approx(direct / 16.0).margin(1e-9));

    CHECK_THROWS_AS(bce_loss(zeros, Tensor::zeros({1, 1, 2, 2})), DimensionError);
}

TEST_CASE("encode_triplet produces normalized planes and binary masks") {
    SourceSample src = noise_source("e", 32, 32, 3, 8, 8, 10, 10);
    Triplet t;
    t.image = src.image;
    t.mask = src.mask;
    t.flow = FlowField::constant(32, 32, 2.0f, 0.0f);
    Batch batch = make_batch({t}, 64, false);
    REQUIRE(batch.images.shape() == std::vector<int>{1, 3, 64, 64});
    REQUIRE(batch.flows.shape() == std::vector<int>{1, 3, 64, 64});
    REQUIRE(batch.masks.shape() == std::vector<int>{1, 1, 64, 64});
    for (double v : batch.images.data()) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
    }
    for (double v : batch.masks.data()) REQUIRE((v == 0.0 || v == 1.0));

    Batch raw = make_batch({t}, 64, true);
    REQUIRE(raw.flows.shape() == std::vector<int>{1, 2, 64, 64});
}

TEST_CASE("zero learning rate leaves parameters bit-unchanged") {
    auto dir = scratch_dir("train_lr0");
    DatasetManifest data = make_toy_dataset(dir, 1, 2);
    TrainConfig config = toy_train_config(1, /*lr=*/0.0);

    TrainState state;
    state.params = init_params(config.model, 1);
    std::map<std::string, std::vector<double>> before;
    for (const auto& [name, t] : state.params.params) before[name] = t.data();

    Triplet t0 = load_triplet(data, data.records[0]);
    Batch batch = make_batch({t0, t0}, 64, false);
    train_step(state, batch, config);
    for (const auto& [name, t] : state.params.params) REQUIRE(t.data() == before[name]);
}

TEST_CASE("loss decreases in windowed average on a fixed toy batch") {
    auto dir = scratch_dir("train_mono");
    DatasetManifest data = make_toy_dataset(dir, 2, 2);
    TrainConfig config = toy_train_config(200, /*lr=*/1e-5);

    TrainState state;
    state.params = init_params(config.model, 2);
    std::vector<Triplet> triplets;
    for (int i = 0; i < 2; ++i) triplets.push_back(load_triplet(data, data.records[i]));
    Batch batch = make_batch(triplets, 64, false);

    std::vector<double> losses;
    for (int step = 0; step < 200; ++step) losses.push_back(train_step(state, batch, config));

    auto window_mean = [&](int start) {
        double acc = 0.0;
        for (int i = start; i < start + 50; ++i) acc += losses[static_cast<std::size_t>(i)];
        return acc / 50.0;
    };
    double w0 = window_mean(0), w1 = window_mean(50), w2 = window_mean(100),
           w3 = window_mean(150);
    CHECK(w0 > w1);
    CHECK(w1 > w2);
    CHECK(w2 > w3);
}

TEST_CASE("identical seeds replay identical loss traces") {
    auto dir = scratch_dir("train_replay");
    DatasetManifest data = make_toy_dataset(dir, 2, 3);
    TrainConfig config = toy_train_config(6);
    config.seed = 77;

    auto run = [&](const std::filesystem::path& out) {
        return fit(config, single_dataset_mix(data, 55), std::nullopt, out);
    };
    FitResult a = run(dir / "runA");
    FitResult b = run(dir / "runB");
    REQUIRE(a.losses.size() == b.losses.size());
    for (std::size_t i = 0; i < a.losses.size(); ++i) REQUIRE(a.losses[i] == b.losses[i]);
}

TEST_CASE("checkpoint resume reproduces the uninterrupted trace bit-exactly") {
    auto dir = scratch_dir("train_resume");
    DatasetManifest data = make_toy_dataset(dir, 2, 3);

    TrainConfig full_config = toy_train_config(10);
    full_config.seed = 9;
    FitResult full = fit(full_config, single_dataset_mix(data, 3), std::nullopt, dir / "full");

    TrainConfig half_config = full_config;
    half_config.max_steps = 5;
    fit(half_config, single_dataset_mix(data, 3), std::nullopt, dir / "half");

    FitResult resumed = fit(full_config, single_dataset_mix(data, 3), std::nullopt,
                            dir / "resumed", dir / "half" / "final.ckpt");
    REQUIRE(resumed.losses.size() == 5);
    for (int i = 0; i < 5; ++i)
        REQUIRE(resumed.losses[static_cast<std::size_t>(i)] ==
                full.losses[static_cast<std::size_t>(i + 5)]);

    // final parameters agree bit-for-bit
    Checkpoint a = load_checkpoint(full.final_checkpoint);
    Checkpoint b = load_checkpoint(resumed.final_checkpoint);
    for (const auto& [name, t] : a.arrays) REQUIRE(b.arrays.at(name).data() == t.data());

    // resuming under a different model config fails closed
    TrainConfig other = full_config;
    other.model.widths = {16, 32};
    CHECK_THROWS_AS(fit(other, single_dataset_mix(data, 3), std::nullopt, dir / "bad",
                        dir / "half" / "final.ckpt"),
                    TrainError);
}

TEST_CASE("the trace records the mixing ratios verbatim") {
    auto dir = scratch_dir("train_trace");
    DatasetManifest data = make_toy_dataset(dir, 1, 2);
    TrainConfig config = toy_train_config(2);
    config.ratios = {2, 1, 1};

    MixingSpec mix = single_dataset_mix(data, 1);
    FitResult result = fit(config, mix, std::nullopt, dir / "run");

    std::ifstream trace(result.trace_path);
    std::string header_line;
    REQUIRE(std::getline(trace, header_line));
    nlohmann::json header = nlohmann::json::parse(header_line);
    CHECK(header.at("kind") == "header");
    CHECK(header.at("ratios") == nlohmann::json({2, 1, 1}));
    CHECK(header.at("learning_rate") == config.learning_rate);

    // every subsequent loss line parses and reproduces the recorded loss
    std::string line;
    std::size_t n_loss = 0;
    while (std::getline(trace, line)) {
        if (line.empty()) continue;
        nlohmann::json rec = nlohmann::json::parse(line);
        if (rec.contains("loss")) {
            REQUIRE(rec.at("loss").get<double>() == result.losses[n_loss]);
            ++n_loss;
        }
    }
    CHECK(n_loss == 2);
}

TEST_CASE("non-finite losses abort with diagnostics") {
    auto dir = scratch_dir("train_nan");
    DatasetManifest data = make_toy_dataset(dir, 1, 2);
    TrainConfig config = toy_train_config(1);
    TrainState state;
    state.params = init_params(config.model, 5);
    for (auto& v : state.params.at("head.b").data()) v = std::nan("");
    Triplet t0 = load_triplet(data, data.records[0]);
    Batch batch = make_batch({t0, t0}, 64, false);
    CHECK_THROWS_AS(train_step(state, batch, config), TrainError);
}

TEST_CASE("train config invariants") {
    TrainConfig config = toy_train_config(10);
    CHECK_NOTHROW(config.validate());
    config.eval_every = 11;
    CHECK_THROWS_AS(config.validate(), ConfigError);
    config.eval_every = 0;
    config.batch_size = 0;
    CHECK_THROWS_AS(config.validate(), ConfigError);
    config.batch_size = 2;
    config.learning_rate = 0.0;
    CHECK_THROWS_AS(config.validate(), ConfigError);
}

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "saliflow/adapter.hpp"
#include "saliflow/datagen.hpp"
#include "support/fixtures.hpp"

using namespace saliflow;
using namespace testsupport;

namespace {

SourceSample demo_source() { return noise_source("src0", 24, 32, 7, 8, 8, 8, 8); }

GeneratorConfig small_config(int frames = 3) {
    GeneratorConfig c;
    c.frames = frames;
    c.height = 12;
    c.width = 16;
    c.seed = 99;
    return c;
}

void write_adapter_script(const std::filesystem::path& path, const std::string& body) {
    {
        std::ofstream f(path);
        f << "#!/usr/bin/env python3\n" << body;
    }
    std::filesystem::permissions(path, std::filesystem::perms::owner_all |
                                           std::filesystem::perms::group_read |
                                           std::filesystem::perms::others_read);
}

const char* kGoodAdapter = R"PY(
import json, os, sys
req = json.load(open(sys.argv[1]))
required = ["source_id", "source_path", "seed", "frames", "resolution", "sampler_steps",
            "guidance_first", "guidance_last", "frame_rate", "decode_chunk", "output_dir"]
missing = [k for k in required if k not in req]
if missing:
    sys.exit("missing request fields: " + ",".join(missing))
assert os.path.exists(req["source_path"])
h, w = req["resolution"]["height"], req["resolution"]["width"]
os.makedirs(req["output_dir"], exist_ok=True)
for t in range(req["frames"]):
    with open(os.path.join(req["output_dir"], "frame_%03d.ppm" % t), "wb") as f:
        f.write(("P6\n%d %d\n255\n" % (w, h)).encode())
        f.write(bytes([t * 10 % 256, 100, 200]) * (h * w))
)PY";

}  // namespace

TEST_CASE("replicate backend yields byte-identical frames and zero flows") {
    GeneratorConfig config;
    config.frames = 14;
    SourceSample src = demo_source();
    ReplicateBackend backend;
    GeneratedClip clip = generate_clip(src, config, backend);
    REQUIRE(clip.frames.size() == 14);
    for (const auto& frame : clip.frames) REQUIRE(frame == src.image);
    REQUIRE(clip.gt_flows.has_value());
    for (const auto& flow : *clip.gt_flows)
        for (float v : flow.raw()) REQUIRE(v == 0.0f);
    CHECK(clip.backend == BackendKind::replicate);
}

TEST_CASE("generate_clip validates the config and source") {
    SourceSample src = demo_source();
    ReplicateBackend backend;
    GeneratorConfig bad = small_config(0);
    CHECK_THROWS_AS(generate_clip(src, bad, backend), ConfigError);
    bad = small_config();
    bad.sampler_steps = 0;
    CHECK_THROWS_AS(generate_clip(src, bad, backend), ConfigError);

    SourceSample mismatched = demo_source();
    mismatched.mask = ImageU8(5, 5, 1, 0);
    CHECK_THROWS_AS(generate_clip(mismatched, small_config(), backend), DimensionError);
}

TEST_CASE("generate_clip enforces the frame-count contract") {
    struct ShortBackend final : ClipBackend {
        std::string name() const override { return "short"; }
        BackendKind kind() const override { return BackendKind::replicate; }
        bool deterministic() const override { return true; }
        GeneratedClip generate(const SourceSample& s, const GeneratorConfig&) override {
            GeneratedClip clip;
            clip.source_id = s.id;
            clip.frames.push_back(s.image);
            return clip;
        }
    } backend;
    CHECK_THROWS_AS(generate_clip(demo_source(), small_config(3), backend), BackendFailure);
}

TEST_CASE("rigid oracle backend shifts the mask region by 3t per frame") {
    MotionSpec spec;
    spec.displacement_schedule = {{3, 0}, {3, 0}, {3, 0}};
    RigidOracleBackend backend(spec);
    SourceSample src = noise_source("rig", 20, 40, 12, 6, 4, 8, 8);
    GeneratedClip clip = generate_clip(src, small_config(3), backend);

    ImageU8 background = fill_nearest(src.image, src.mask);
    for (int t = 0; t < 3; ++t) {
        const int off = 3 * (t + 1);
        ImageU8 expected = background;
        for (int y = 0; y < 20; ++y)
            for (int x = 0; x < 40; ++x)
                if (src.mask.at(y, x) && x + off < 40)
                    for (int c = 0; c < 3; ++c)
                        expected.at(y, x + off, c) = src.image.at(y, x, c);
        REQUIRE(clip.frames[static_cast<std::size_t>(t)] == expected);
    }
}

TEST_CASE("deterministic backends are bit-reproducible for a fixed seed") {
    GeometricBackend backend;
    SourceSample src = demo_source();
    GeneratorConfig config = small_config(4);
    GeneratedClip a = generate_clip(src, config, backend);
    GeneratedClip b = generate_clip(src, config, backend);
    REQUIRE(a.frames.size() == b.frames.size());
    for (std::size_t i = 0; i < a.frames.size(); ++i) {
        REQUIRE(a.frames[i] == b.frames[i]);
        REQUIRE((*a.gt_flows)[i] == (*b.gt_flows)[i]);
    }

    GeneratorConfig other = config;
    other.seed = config.seed + 1;
    GeneratedClip c = generate_clip(src, other, backend);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.frames.size(); ++i)
        any_diff = any_diff || !(a.frames[i] == c.frames[i]);
    CHECK(any_diff);
}

TEST_CASE("backend registry resolves names and reports missing ones") {
    BackendRegistry registry = BackendRegistry::with_builtins();
    CHECK(registry.has("replicate"));
    CHECK(registry.has("geometric"));
    CHECK(registry.has("rigid_oracle"));
    CHECK_THROWS_AS(registry.get("diffusion"), UnavailableError);
}

TEST_CASE("diffusion adapter runs the external command with the full request") {
    auto dir = scratch_dir("adapter");
    write_adapter_script(dir / "adapter.py", kGoodAdapter);
    DiffusionAdapterBackend backend(dir / "adapter.py", dir / "work");

    SourceSample src = demo_source();
    GeneratorConfig config = small_config(3);  // generation at 12x16
    GeneratedClip clip = generate_clip(src, config, backend);
    REQUIRE(clip.frames.size() == 3);
    for (int t = 0; t < 3; ++t) {
        const auto& frame = clip.frames[static_cast<std::size_t>(t)];
        // resized back to source resolution
        REQUIRE(frame.height() == 24);
        REQUIRE(frame.width() == 32);
        // solid generated color survives the resize
        CHECK(frame.at(5, 5, 0) == t * 10);
        CHECK(frame.at(5, 5, 1) == 100);
        CHECK(frame.at(5, 5, 2) == 200);
    }
    CHECK(clip.backend == BackendKind::diffusion);

    // the request manifest carries every sampling field
    std::ifstream req_file(dir / "work" / "src0" / "request.json");
    REQUIRE(req_file.good());
    nlohmann::json req;
    req_file >> req;
    CHECK(req.at("frames") == 3);
    CHECK(req.at("sampler_steps") == 25);
    CHECK(req.at("guidance_first") == 3.0);
    CHECK(req.at("guidance_last") == 1.0);
    CHECK(req.at("frame_rate") == 7);
    CHECK(req.at("decode_chunk") == 8);
    CHECK(req.at("resolution").at("height") == 12);
    CHECK(req.at("seed") == derive_seed(99, "src0"));
}

TEST_CASE("adapter failure surfaces captured diagnostics") {
    auto dir = scratch_dir("adapter_fail");
    write_adapter_script(dir / "bad.py", "import sys\nprint('boom: no weights')\nsys.exit(3)\n");
    DiffusionAdapterBackend backend(dir / "bad.py", dir / "work");
    try {
        generate_clip(demo_source(), small_config(2), backend);
        FAIL("expected BackendFailure");
    } catch (const BackendFailure& e) {
        CHECK(e.diagnostics().find("boom: no weights") != std::string::npos);
    }
}

TEST_CASE("missing adapter executable reports backend-unavailable") {
    DiffusionAdapterBackend backend("/nonexistent/adapter", "/tmp/unused");
    CHECK_THROWS_AS(generate_clip(demo_source(), small_config(2), backend), UnavailableError);
    CHECK_THROWS_AS(make_diffusion_backend("/nonexistent/adapter", "/tmp/unused"),
                    UnavailableError);
}

TEST_CASE("recorded clips replay bit-exactly at source resolution") {
    auto dir = scratch_dir("recorded");
    SourceSample src = demo_source();
    std::filesystem::create_directories(dir / "src0");
    std::vector<ImageU8> truth;
    for (int t = 0; t < 14; ++t) {
        truth.push_back(noise_image(24, 32, 600 + static_cast<std::uint64_t>(t)));
        char buf[32];
        std::snprintf(buf, sizeof(buf), "frame_%03d.ppm", t);
        write_pnm(truth.back(), dir / "src0" / buf);
    }
    // default sampling config: 14 frames, returned at source resolution
    GeneratorConfig config;
    config.seed = 99;
    auto backend = make_diffusion_backend(dir, "/tmp/unused");
    GeneratedClip clip = generate_clip(src, config, *backend);
    REQUIRE(clip.frames.size() == 14);
    for (int t = 0; t < 14; ++t) {
        REQUIRE(clip.frames[static_cast<std::size_t>(t)] == truth[static_cast<std::size_t>(t)]);
        REQUIRE(clip.frames[static_cast<std::size_t>(t)].height() == src.image.height());
        REQUIRE(clip.frames[static_cast<std::size_t>(t)].width() == src.image.width());
    }
    CHECK(backend->deterministic());
}

TEST_CASE("the discovery environment variable resolves the diffusion backend") {
    auto dir = scratch_dir("env_discovery");
    std::filesystem::create_directories(dir / "srcX");
    for (int t = 0; t < 2; ++t) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "frame_%03d.ppm", t);
        write_pnm(noise_image(8, 8, 700 + static_cast<std::uint64_t>(t)), dir / "srcX" / buf);
    }
    ::setenv(kAdapterPathEnv, dir.c_str(), 1);
    auto backend = make_diffusion_backend_from_env("/tmp/unused");
    SourceSample src = noise_source("srcX", 8, 8, 5, 2, 2, 3, 3);
    GeneratedClip clip = generate_clip(src, small_config(2), *backend);
    CHECK(clip.frames.size() == 2);
    ::unsetenv(kAdapterPathEnv);
    CHECK_THROWS_AS(make_diffusion_backend_from_env("/tmp/unused"), UnavailableError);
}

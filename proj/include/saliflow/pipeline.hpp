#pragma once

// Run-file driven orchestration of the full pipeline. A run file is a JSON
// document with one section per command; it is schema-validated up front
// (unknown keys rejected) and archived beside outputs for reproducibility.
// All randomness derives from the single root seed.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saliflow/adapter.hpp"
#include "saliflow/datagen.hpp"
#include "saliflow/error.hpp"
#include "saliflow/estimator.hpp"
#include "saliflow/evaluate.hpp"
#include "saliflow/flow_stats.hpp"
#include "saliflow/manifest.hpp"
#include "saliflow/parallel.hpp"
#include "saliflow/pnm.hpp"
#include "saliflow/sampler.hpp"
#include "saliflow/train.hpp"
#include "saliflow/triplets.hpp"

namespace saliflow {

enum ExitCode : int {
    kOk = 0,
    kHardFailure = 1,
    kConfigError = 2,
    kPartialFailure = 3,
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where,
                       const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError("run file: " + where + " must be an object");
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key))
            throw ConfigError("run file: unknown key '" + key + "' in " + where);
}

inline std::filesystem::path resolve_path(const std::filesystem::path& base,
                                          const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

}  // namespace detail

struct GenerateSection {
    std::string backend = "replicate";
    std::filesystem::path sources;
    GeneratorConfig generator;
};

struct BuildSection {
    std::string estimator = "block_match";
    int search_radius = 6;
    int patch = 7;
    std::string dataset = "synthetic";
};

struct IngestSection {
    std::filesystem::path videos;
    std::filesystem::path masks;
    std::string dataset = "real";
    std::string estimator = "block_match";
    int search_radius = 6;
    int patch = 7;
};

struct TrainSection {
    TrainConfig config;
    std::vector<std::filesystem::path> datasets;
    std::optional<std::filesystem::path> eval_manifest;
    std::optional<std::filesystem::path> resume;
};

struct EvalSection {
    std::optional<std::filesystem::path> checkpoint;
    std::optional<std::filesystem::path> predictions;  // pre-rendered maps
    std::vector<std::filesystem::path> datasets;
    FProtocol protocol = FProtocol::max;
};

struct ReportSection {
    std::vector<std::filesystem::path> inputs;
};

struct InspectSection {
    std::vector<std::filesystem::path> inputs;
    double checkerboard_threshold = 0.2;
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    std::filesystem::path out = "runs/out";
    std::filesystem::path base_dir = ".";
    std::optional<GenerateSection> generate;
    std::optional<BuildSection> build;
    std::optional<IngestSection> ingest;
    std::optional<TrainSection> train;
    std::optional<EvalSection> eval;
    std::optional<ReportSection> report;
    std::optional<InspectSection> inspect;

    static PipelineConfig from_json(const nlohmann::json& j,
                                    const std::filesystem::path& base_dir);
    static PipelineConfig load(const std::filesystem::path& run_file) {
        std::ifstream in(run_file);
        if (!in) throw ConfigError("run file not found: " + run_file.string());
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("run file is not valid JSON: " + std::string(e.what()));
        }
        auto base = run_file.parent_path();
        if (base.empty()) base = ".";
        return from_json(j, base);
    }
};

inline FProtocol f_protocol_from_string(const std::string& s) {
    if (s == "max") return FProtocol::max;
    if (s == "mean") return FProtocol::mean;
    if (s == "adaptive") return FProtocol::adaptive;
    throw ConfigError("unknown F-measure protocol: " + s);
}

namespace detail {

inline ModelConfig parse_model(const nlohmann::json& j) {
    check_keys(j, "train.model",
               {"stages", "widths", "reduction", "spatial_kernel", "raw_flow"});
    ModelConfig m;
    m.stages = j.value("stages", m.stages);
    m.widths = j.value("widths", m.widths);
    m.fusion.reduction = j.value("reduction", m.fusion.reduction);
    m.fusion.spatial_kernel = j.value("spatial_kernel", m.fusion.spatial_kernel);
    m.raw_flow = j.value("raw_flow", false);
    return m;
}

}  // namespace detail

inline PipelineConfig PipelineConfig::from_json(const nlohmann::json& j,
                                                const std::filesystem::path& base_dir) {
    detail::check_keys(j, "root",
                       {"seed", "out", "generate", "build", "ingest", "train", "eval",
                        "report", "inspect"});
    PipelineConfig c;
    c.base_dir = base_dir;
    c.seed = j.value("seed", std::uint64_t{0});
    c.out = detail::resolve_path(base_dir, j.value("out", std::string("runs/out")));

    if (j.contains("generate")) {
        const auto& g = j.at("generate");
        detail::check_keys(g, "generate",
                           {"backend", "sources", "frames", "height", "width", "frame_rate",
                            "sampler_steps", "guidance_first", "guidance_last", "decode_chunk"});
        GenerateSection s;
        s.backend = g.value("backend", s.backend);
        if (!g.contains("sources"))
            throw ConfigError("run file: generate.sources is required");
        s.sources = detail::resolve_path(base_dir, g.at("sources").get<std::string>());
        s.generator.frames = g.value("frames", s.generator.frames);
        s.generator.height = g.value("height", s.generator.height);
        s.generator.width = g.value("width", s.generator.width);
        s.generator.frame_rate = g.value("frame_rate", s.generator.frame_rate);
        s.generator.sampler_steps = g.value("sampler_steps", s.generator.sampler_steps);
        s.generator.guidance_first = g.value("guidance_first", s.generator.guidance_first);
        s.generator.guidance_last = g.value("guidance_last", s.generator.guidance_last);
        s.generator.decode_chunk = g.value("decode_chunk", s.generator.decode_chunk);
        s.generator.validate();
        c.generate = std::move(s);
    }
    if (j.contains("build")) {
        const auto& b = j.at("build");
        detail::check_keys(b, "build", {"estimator", "search_radius", "patch", "dataset"});
        BuildSection s;
        s.estimator = b.value("estimator", s.estimator);
        s.search_radius = b.value("search_radius", s.search_radius);
        s.patch = b.value("patch", s.patch);
        s.dataset = b.value("dataset", s.dataset);
        c.build = std::move(s);
    }
    if (j.contains("ingest")) {
        const auto& g = j.at("ingest");
        detail::check_keys(g, "ingest",
                           {"videos", "masks", "dataset", "estimator", "search_radius", "patch"});
        IngestSection s;
        if (!g.contains("videos") || !g.contains("masks"))
            throw ConfigError("run file: ingest.videos and ingest.masks are required");
        s.videos = detail::resolve_path(base_dir, g.at("videos").get<std::string>());
        s.masks = detail::resolve_path(base_dir, g.at("masks").get<std::string>());
        s.dataset = g.value("dataset", s.dataset);
        s.estimator = g.value("estimator", s.estimator);
        s.search_radius = g.value("search_radius", s.search_radius);
        s.patch = g.value("patch", s.patch);
        c.ingest = std::move(s);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        detail::check_keys(t, "train",
                           {"learning_rate", "batch_size", "max_steps", "eval_every",
                            "checkpoint_every", "resolution", "datasets", "ratios",
                            "eval_manifest", "resume", "model"});
        TrainSection s;
        s.config.learning_rate = t.value("learning_rate", s.config.learning_rate);
        s.config.batch_size = t.value("batch_size", s.config.batch_size);
        s.config.max_steps = t.value("max_steps", s.config.max_steps);
        s.config.eval_every = t.value("eval_every", s.config.eval_every);
        s.config.checkpoint_every = t.value("checkpoint_every", s.config.checkpoint_every);
        s.config.resolution = t.value("resolution", s.config.resolution);
        if (t.contains("model")) s.config.model = detail::parse_model(t.at("model"));
        if (!t.contains("datasets") || !t.contains("ratios"))
            throw ConfigError("run file: train.datasets and train.ratios are required");
        for (const auto& d : t.at("datasets"))
            s.datasets.push_back(detail::resolve_path(base_dir, d.get<std::string>()));
        s.config.ratios = t.at("ratios").get<std::vector<int>>();
        if (t.contains("eval_manifest"))
            s.eval_manifest =
                detail::resolve_path(base_dir, t.at("eval_manifest").get<std::string>());
        if (t.contains("resume"))
            s.resume = detail::resolve_path(base_dir, t.at("resume").get<std::string>());
        c.train = std::move(s);
    }
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        detail::check_keys(e, "eval", {"checkpoint", "predictions", "datasets", "protocol"});
        EvalSection s;
        if (e.contains("checkpoint"))
            s.checkpoint = detail::resolve_path(base_dir, e.at("checkpoint").get<std::string>());
        if (e.contains("predictions"))
            s.predictions = detail::resolve_path(base_dir, e.at("predictions").get<std::string>());
        if (!s.checkpoint && !s.predictions)
            throw ConfigError("run file: eval needs a checkpoint or a predictions directory");
        if (!e.contains("datasets")) throw ConfigError("run file: eval.datasets is required");
        for (const auto& d : e.at("datasets"))
            s.datasets.push_back(detail::resolve_path(base_dir, d.get<std::string>()));
        s.protocol = f_protocol_from_string(e.value("protocol", std::string("max")));
        c.eval = std::move(s);
    }
    if (j.contains("report")) {
        const auto& r = j.at("report");
        detail::check_keys(r, "report", {"inputs"});
        ReportSection s;
        if (!r.contains("inputs")) throw ConfigError("run file: report.inputs is required");
        for (const auto& d : r.at("inputs"))
            s.inputs.push_back(detail::resolve_path(base_dir, d.get<std::string>()));
        c.report = std::move(s);
    }
    if (j.contains("inspect")) {
        const auto& i = j.at("inspect");
        detail::check_keys(i, "inspect", {"inputs", "checkerboard_threshold"});
        InspectSection s;
        if (!i.contains("inputs")) throw ConfigError("run file: inspect.inputs is required");
        for (const auto& d : i.at("inputs"))
            s.inputs.push_back(detail::resolve_path(base_dir, d.get<std::string>()));
        s.checkerboard_threshold = i.value("checkerboard_threshold", s.checkerboard_threshold);
        c.inspect = std::move(s);
    }
    return c;
}

// ---- generate -----------------------------------------------------------

namespace detail {

struct SourceEntry {
    std::string id;
    std::filesystem::path image_path;
    std::filesystem::path mask_path;
};

inline std::vector<SourceEntry> list_sources(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw ConfigError("sources directory not found: " + dir.string());
    std::vector<SourceEntry> sources;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".ppm") continue;
        SourceEntry s;
        s.id = e.path().stem().string();
        s.image_path = e.path();
        s.mask_path = e.path().parent_path() / (s.id + ".pgm");
        sources.push_back(std::move(s));
    }
    std::sort(sources.begin(), sources.end(),
              [](const SourceEntry& a, const SourceEntry& b) { return a.id < b.id; });
    return sources;
}

inline bool clip_complete(const std::filesystem::path& clip_dir, int frames) {
    if (!std::filesystem::exists(clip_dir / "clip.json")) return false;
    for (int t = 0; t < frames; ++t)
        if (!std::filesystem::exists(clip_dir / frame_name(t))) return false;
    return true;
}

inline std::string gt_flow_name(int t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "gt_flow_%03d.flo", t);
    return buf;
}

}  // namespace detail

// Generates clips for every source; skips sources whose clip directory is
// already complete, so reruns are cheap and interrupted runs resume.
inline int cmd_generate(const PipelineConfig& config, std::ostream& log) {
    if (!config.generate) throw ConfigError("run file has no generate section");
    const GenerateSection& section = *config.generate;
    namespace fs = std::filesystem;

    GeneratorConfig gen = section.generator;
    gen.seed = config.seed;

    BackendRegistry registry = BackendRegistry::with_builtins();
    std::shared_ptr<ClipBackend> diffusion;
    if (section.backend == "diffusion") {
        diffusion = make_diffusion_backend_from_env(config.out / "adapter_work");
        registry.add(diffusion);
    }
    ClipBackend& backend = registry.get(section.backend);

    const auto sources = detail::list_sources(section.sources);
    if (sources.empty()) throw ConfigError("no sources (*.ppm) found in " +
                                           section.sources.string());
    const fs::path clips_dir = config.out / "clips";
    fs::create_directories(clips_dir);

    struct Outcome {
        bool ok = false;
        bool skipped = false;
        std::string error;
    };
    std::vector<Outcome> outcomes(sources.size());

    // Diffusion adapters shell out; keep them serialized. In-process
    // backends are pure per-source and run in parallel.
    const unsigned threads = section.backend == "diffusion" ? 1u : 0u;
    parallel_for(sources.size(), [&](std::size_t i) {
        const auto& src = sources[i];
        const fs::path clip_dir = clips_dir / src.id;
        try {
            if (detail::clip_complete(clip_dir, gen.frames)) {
                outcomes[i].ok = outcomes[i].skipped = true;
                return;
            }
            SourceSample sample;
            sample.id = src.id;
            sample.image = read_pnm(src.image_path);
            sample.mask = read_mask(src.mask_path);
            GeneratedClip clip = generate_clip(sample, gen, backend);

            fs::create_directories(clip_dir);
            write_pnm(sample.image, clip_dir / "image.ppm");
            write_mask(sample.mask, clip_dir / "mask.pgm");
            for (int t = 0; t < gen.frames; ++t) {
                write_pnm(clip.frames[static_cast<std::size_t>(t)],
                          clip_dir / detail::frame_name(t));
                if (clip.gt_flows)
                    write_flo((*clip.gt_flows)[static_cast<std::size_t>(t)],
                              clip_dir / detail::gt_flow_name(t));
            }
            nlohmann::json meta = {{"source_id", src.id},
                                   {"backend", to_string(clip.backend)},
                                   {"frames", gen.frames},
                                   {"seed", derive_seed(gen.seed, src.id)},
                                   {"deterministic", backend.deterministic()},
                                   {"has_gt_flows", clip.gt_flows.has_value()}};
            std::ofstream meta_out(clip_dir / "clip.json");
            meta_out << meta.dump(2) << "\n";
            outcomes[i].ok = true;
        } catch (const std::exception& e) {
            outcomes[i].error = e.what();
        }
    }, threads);

    // Rebuild the clip index from completed directories (idempotent).
    std::ofstream index(clips_dir / "clips.jsonl");
    std::size_t generated = 0, skipped = 0, failed = 0;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        if (outcomes[i].ok) {
            outcomes[i].skipped ? ++skipped : ++generated;
            index << nlohmann::json{{"source_id", sources[i].id},
                                    {"dir", sources[i].id}}.dump()
                  << "\n";
        } else {
            ++failed;
            log << "generate: FAILED " << sources[i].id << ": " << outcomes[i].error << "\n";
        }
    }
    log << "generate: " << generated << " generated, " << skipped << " skipped, " << failed
        << " failed (backend=" << section.backend << ", T=" << gen.frames << ")\n";
    if (failed == 0) return kOk;
    return (generated + skipped) > 0 ? kPartialFailure : kHardFailure;
}

// ---- build --------------------------------------------------------------

// Estimates flow between the source image and every generated frame, then
// assembles and persists the triplets plus a manifest. "oracle" replays the
// analytic ground-truth flows recorded by analytic backends.
inline int cmd_build(const PipelineConfig& config, std::ostream& log) {
    if (!config.build) throw ConfigError("run file has no build section");
    const BuildSection& section = *config.build;
    namespace fs = std::filesystem;

    const fs::path clips_dir = config.out / "clips";
    if (!fs::is_directory(clips_dir))
        throw ConfigError("build: no clips directory at " + clips_dir.string() +
                          " (run generate first)");
    std::vector<fs::path> clip_dirs;
    for (const auto& e : fs::directory_iterator(clips_dir))
        if (e.is_directory() && fs::exists(e.path() / "clip.json")) clip_dirs.push_back(e.path());
    std::sort(clip_dirs.begin(), clip_dirs.end());
    if (clip_dirs.empty()) throw ConfigError("build: no completed clips under " +
                                             clips_dir.string());

    const fs::path dataset_dir = config.out / "dataset" / section.dataset;
    const fs::path manifest_path = dataset_dir / "manifest.jsonl";

    // Idempotence: an intact manifest covering every clip means no work.
    if (fs::exists(manifest_path)) {
        try {
            DatasetManifest existing = load_manifest(manifest_path);
            if (existing.counts.n_sources == static_cast<std::int64_t>(clip_dirs.size())) {
                log << "build: dataset '" << section.dataset << "' already complete ("
                    << existing.counts.n_triplets << " triplets)\n";
                return kOk;
            }
        } catch (const Error&) {
            // fall through and rebuild
        }
    }
    fs::create_directories(dataset_dir);

    const bool use_oracle = section.estimator == "oracle";
    struct Outcome {
        bool ok = false;
        std::vector<TripletRecord> records;
        double mean_epe = -1.0;  // vs recorded gt flows, when available
        std::string id, error;
    };
    std::vector<Outcome> outcomes(clip_dirs.size());

    parallel_for(clip_dirs.size(), [&](std::size_t i) {
        Outcome& out = outcomes[i];
        out.id = clip_dirs[i].filename().string();
        try {
            nlohmann::json meta;
            {
                std::ifstream f(clip_dirs[i] / "clip.json");
                f >> meta;
            }
            const int frames = meta.at("frames").get<int>();
            const bool has_gt = meta.value("has_gt_flows", false);
            if (use_oracle && !has_gt)
                throw ConfigError("build: clip " + out.id + " has no recorded gt flows");

            SourceSample source;
            source.id = out.id;
            source.image = read_pnm(clip_dirs[i] / "image.ppm");
            source.mask = read_mask(clip_dirs[i] / "mask.pgm");

            GeneratedClip clip;
            clip.source_id = out.id;
            for (int t = 0; t < frames; ++t)
                clip.frames.push_back(read_pnm(clip_dirs[i] / detail::frame_name(t)));

            std::vector<FlowField> gt;
            if (has_gt)
                for (int t = 0; t < frames; ++t)
                    gt.push_back(read_flo(clip_dirs[i] / detail::gt_flow_name(t)));

            std::vector<FlowField> flows;
            if (use_oracle) {
                flows = gt;
            } else {
                std::unique_ptr<FlowEstimator> estimator;
                if (section.estimator == "block_match")
                    estimator = std::make_unique<BlockMatchEstimator>(section.search_radius,
                                                                      section.patch);
                else if (section.estimator.rfind("fixture:", 0) == 0)
                    estimator = std::make_unique<FixtureEstimator>(
                        fs::path(section.estimator.substr(8)));
                else
                    throw ConfigError("build: unknown estimator: " + section.estimator);
                for (int t = 0; t < frames; ++t)
                    flows.push_back(estimate_flow(source.image,
                                                  clip.frames[static_cast<std::size_t>(t)],
                                                  *estimator));
            }

            std::vector<Triplet> triplets = build_triplets(source, clip, flows);
            (void)triplets;  // contract check; files below mirror them
            out.records = write_synthetic_group(dataset_dir, source, flows);

            if (has_gt && !use_oracle) {
                double acc = 0.0;
                for (int t = 0; t < frames; ++t) {
                    FlowStats fstats = flow_stats(flows[static_cast<std::size_t>(t)],
                                                  &gt[static_cast<std::size_t>(t)]);
                    acc += *fstats.mean_epe;
                }
                out.mean_epe = acc / frames;
            }
            out.ok = true;
        } catch (const std::exception& e) {
            out.error = e.what();
        }
    });

    DatasetManifest manifest;
    manifest.name = section.dataset;
    manifest.root = dataset_dir;
    manifest.generator.backend = section.estimator;
    manifest.generator.seed = config.seed;
    nlohmann::json epe_report = nlohmann::json::array();
    std::size_t failed = 0;
    double epe_acc = 0.0;
    int epe_n = 0;
    for (const auto& out : outcomes) {
        if (!out.ok) {
            ++failed;
            log << "build: FAILED " << out.id << ": " << out.error << "\n";
            continue;
        }
        manifest.records.insert(manifest.records.end(), out.records.begin(), out.records.end());
        if (out.mean_epe >= 0.0) {
            epe_report.push_back({{"source_id", out.id}, {"mean_epe", out.mean_epe}});
            epe_acc += out.mean_epe;
            ++epe_n;
        }
    }
    save_manifest(manifest, manifest_path);
    DatasetManifest reloaded = load_manifest(manifest_path);
    DatasetStats stats = dataset_stats(reloaded);

    nlohmann::json report = {{"dataset", section.dataset},
                             {"estimator", section.estimator},
                             {"n_sources", stats.n_sources},
                             {"n_triplets", stats.n_triplets},
                             {"per_source_epe", epe_report}};
    if (epe_n > 0) report["mean_epe"] = epe_acc / epe_n;
    {
        std::ofstream f(dataset_dir / "build_report.json");
        f << report.dump(2) << "\n";
    }
    log << "build: dataset '" << section.dataset << "': " << stats.n_sources << " sources, "
        << stats.n_triplets << " triplets";
    if (epe_n > 0) log << ", mean EPE vs oracle " << epe_acc / epe_n << " px";
    log << "\n";
    if (failed == 0) return kOk;
    return manifest.records.empty() ? kHardFailure : kPartialFailure;
}

// ---- ingest-video ----------------------------------------------------------

inline int cmd_ingest(const PipelineConfig& config, std::ostream& log) {
    if (!config.ingest) throw ConfigError("run file has no ingest section");
    const IngestSection& section = *config.ingest;
    namespace fs = std::filesystem;

    if (!fs::is_directory(section.videos))
        throw ConfigError("ingest: videos directory not found: " + section.videos.string());
    std::vector<std::string> video_ids;
    for (const auto& e : fs::directory_iterator(section.videos))
        if (e.is_directory()) video_ids.push_back(e.path().filename().string());
    std::sort(video_ids.begin(), video_ids.end());
    if (video_ids.empty())
        throw ConfigError("ingest: no video subdirectories in " + section.videos.string());

    const fs::path dataset_dir = config.out / "dataset" / section.dataset;
    const fs::path manifest_path = dataset_dir / "manifest.jsonl";
    if (fs::exists(manifest_path)) {
        try {
            DatasetManifest existing = load_manifest(manifest_path);
            if (existing.counts.n_sources == static_cast<std::int64_t>(video_ids.size())) {
                log << "ingest: dataset '" << section.dataset << "' already complete\n";
                return kOk;
            }
        } catch (const Error&) {
        }
    }
    fs::create_directories(dataset_dir);

    std::unique_ptr<FlowEstimator> estimator;
    if (section.estimator == "block_match")
        estimator = std::make_unique<BlockMatchEstimator>(section.search_radius, section.patch);
    else if (section.estimator.rfind("fixture:", 0) == 0)
        estimator = std::make_unique<FixtureEstimator>(fs::path(section.estimator.substr(8)));
    else
        throw ConfigError("ingest: unknown estimator: " + section.estimator);

    DatasetManifest manifest;
    manifest.name = section.dataset;
    manifest.root = dataset_dir;
    manifest.generator.backend = "ingest:" + section.estimator;
    manifest.generator.seed = config.seed;
    std::size_t failed = 0;
    for (const auto& id : video_ids) {
        try {
            auto records = ingest_video(section.videos / id, section.masks / id, *estimator,
                                        dataset_dir, id);
            manifest.records.insert(manifest.records.end(), records.begin(), records.end());
        } catch (const std::exception& e) {
            ++failed;
            log << "ingest: FAILED " << id << ": " << e.what() << "\n";
        }
    }
    save_manifest(manifest, manifest_path);
    log << "ingest: dataset '" << section.dataset << "': " << (video_ids.size() - failed)
        << " videos, " << manifest.records.size() << " triplets\n";
    if (failed == 0) return kOk;
    return manifest.records.empty() ? kHardFailure : kPartialFailure;
}

// ---- train ----------------------------------------------------------------

inline int cmd_train(const PipelineConfig& config, std::ostream& log) {
    if (!config.train) throw ConfigError("run file has no train section");
    const TrainSection& section = *config.train;

    // Completed runs are not retrained; resume handles interrupted ones.
    if (!section.resume && std::filesystem::exists(config.out / "train" / "final.ckpt")) {
        log << "train: final checkpoint already present at "
            << (config.out / "train" / "final.ckpt").string() << ", nothing to do\n";
        return kOk;
    }

    MixingSpec mixing;
    for (const auto& path : section.datasets) mixing.datasets.push_back(load_manifest(path));
    mixing.ratios = section.config.ratios;
    mixing.seed = derive_seed(config.seed, "sampler");
    mixing.validate();

    TrainConfig train_config = section.config;
    train_config.seed = config.seed;

    std::optional<DatasetManifest> eval_set;
    if (section.eval_manifest) eval_set = load_manifest(*section.eval_manifest);

    FitResult result = fit(train_config, mixing, eval_set, config.out / "train", section.resume);
    log << "train: " << train_config.max_steps << " steps, final loss "
        << (result.losses.empty() ? 0.0 : result.losses.back()) << ", checkpoint "
        << result.final_checkpoint.string() << "\n";
    if (result.evaluated)
        log << "train: final eval S=" << result.final_eval_s << " F=" << result.final_eval_f
            << " MAE=" << result.final_eval_mae << "\n";
    return kOk;
}

// ---- eval -----------------------------------------------------------------

namespace detail {

inline void predict_dataset(const DatasetManifest& manifest, const ParamStore& params,
                            const ModelConfig& model, const std::filesystem::path& pred_dir) {
    const int resolution = model.input_height;
    parallel_for(manifest.records.size(), [&](std::size_t i) {
        const TripletRecord& record = manifest.records[i];
        Triplet triplet = load_triplet(manifest, record);
        std::vector<Triplet> one{triplet};
        Batch batch = make_batch(one, resolution, model.raw_flow);
        ForwardResult fwd = forward(batch.images, batch.flows, params, model);
        ImageF pred(resolution, resolution, 1);
        for (int y = 0; y < resolution; ++y)
            for (int x = 0; x < resolution; ++x)
                pred.at(y, x) = static_cast<float>(
                    fwd.probs.data()[static_cast<std::size_t>(y) * resolution + x]);
        pred = resize_bilinear(pred, triplet.mask.height(), triplet.mask.width());
        const std::filesystem::path path = prediction_path(pred_dir, record);
        std::filesystem::create_directories(path.parent_path());
        write_gray01(pred, path);
    });
}

}  // namespace detail

inline int cmd_eval(const PipelineConfig& config, std::ostream& log) {
    if (!config.eval) throw ConfigError("run file has no eval section");
    const EvalSection& section = *config.eval;
    namespace fs = std::filesystem;

    std::optional<Checkpoint> ckpt;
    std::optional<ParamStore> params;
    if (!section.predictions) {
        ckpt = load_checkpoint(*section.checkpoint);
        params = params_from_checkpoint(*ckpt);
    }

    MetricReport report;
    report.f_protocol = to_string(section.protocol);
    for (const auto& manifest_path : section.datasets) {
        DatasetManifest manifest = load_manifest(manifest_path);
        fs::path pred_dir;
        if (section.predictions) {
            pred_dir = *section.predictions / manifest.name;
            if (!fs::is_directory(pred_dir)) pred_dir = *section.predictions;
        } else {
            pred_dir = config.out / "pred" / manifest.name;
            detail::predict_dataset(manifest, *params, ckpt->model, pred_dir);
        }
        report.datasets.push_back(evaluate_dataset(pred_dir, manifest, section.protocol));
    }
    report.refresh_average();

    const fs::path eval_dir = config.out / "eval";
    fs::create_directories(eval_dir);
    write_report(report, eval_dir / "report.jsonl");
    const std::string table = render_table(report);
    {
        std::ofstream f(eval_dir / "table.txt");
        f << table;
    }
    log << table;
    return kOk;
}

// ---- report ----------------------------------------------------------------

inline int cmd_report(const PipelineConfig& config, std::ostream& log) {
    if (!config.report) throw ConfigError("run file has no report section");
    MetricReport merged;
    for (const auto& input : config.report->inputs) {
        MetricReport r = read_report(input);
        merged.f_protocol = r.f_protocol;
        for (auto& d : r.datasets) merged.datasets.push_back(std::move(d));
    }
    merged.refresh_average();
    const std::filesystem::path report_dir = config.out / "report";
    std::filesystem::create_directories(report_dir);
    write_report(merged, report_dir / "merged.jsonl");
    const std::string table = render_table(merged);
    {
        std::ofstream f(report_dir / "table.txt");
        f << table;
    }
    log << table;
    return kOk;
}

// ---- inspect ---------------------------------------------------------------

namespace detail {

inline ImageU8 hstack(const ImageU8& a, const ImageU8& b) {
    if (a.height() != b.height() || a.channels() != b.channels())
        throw DimensionError("hstack: incompatible rasters");
    ImageU8 out(a.height(), a.width() + b.width(), a.channels());
    for (int y = 0; y < a.height(); ++y) {
        for (int x = 0; x < a.width(); ++x)
            for (int c = 0; c < a.channels(); ++c) out.at(y, x, c) = a.at(y, x, c);
        for (int x = 0; x < b.width(); ++x)
            for (int c = 0; c < b.channels(); ++c) out.at(y, a.width() + x, c) = b.at(y, x, c);
    }
    return out;
}

inline ImageU8 gray_to_rgb(const ImageU8& g) {
    ImageU8 out(g.height(), g.width(), 3);
    for (int y = 0; y < g.height(); ++y)
        for (int x = 0; x < g.width(); ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = g.at(y, x);
    return out;
}

}  // namespace detail

// Renders colorized panels and a statistics table for flow files (or
// directories of them). A flow whose checkerboard score exceeds the
// threshold is flagged as a generation artifact.
inline int cmd_inspect(const PipelineConfig& config, std::ostream& log) {
    if (!config.inspect) throw ConfigError("run file has no inspect section");
    const InspectSection& section = *config.inspect;
    namespace fs = std::filesystem;

    std::vector<fs::path> flow_files;
    for (const auto& input : section.inputs) {
        if (fs::is_directory(input)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::recursive_directory_iterator(input))
                if (e.is_regular_file() && e.path().extension() == ".flo")
                    found.push_back(e.path());
            std::sort(found.begin(), found.end());
            flow_files.insert(flow_files.end(), found.begin(), found.end());
        } else if (fs::exists(input)) {
            flow_files.push_back(input);
        } else {
            throw ConfigError("inspect: input not found: " + input.string());
        }
    }
    if (flow_files.empty()) throw ConfigError("inspect: no flow files found");

    const fs::path inspect_dir = config.out / "inspect";
    fs::create_directories(inspect_dir);

    std::ostringstream table;
    table << std::left << std::setw(40) << "flow" << std::right << std::setw(12) << "smooth"
          << std::setw(14) << "checkerboard" << std::setw(14) << "affine_resid"
          << std::setw(8) << "flag" << "\n";
    bool any_flagged = false;
    for (std::size_t i = 0; i < flow_files.size(); ++i) {
        const fs::path& path = flow_files[i];
        FlowField flow = read_flo(path);
        FlowStats stats = flow_stats(flow);
        const double residual = affine_fit_residual(flow);
        const bool flagged = stats.checkerboard_score > section.checkerboard_threshold;
        any_flagged = any_flagged || flagged;

        ImageU8 colorized = colorize_flow(flow);
        std::string stem = path.stem().string() + "_" + std::to_string(i);
        write_pnm(colorized, inspect_dir / (stem + "_flow.ppm"));
        // Side-by-side panel when a sibling frame exists.
        fs::path sibling = path.parent_path() / "image.ppm";
        if (!fs::exists(sibling)) {
            std::string name = path.stem().string();
            auto pos = name.rfind("flow");
            if (pos != std::string::npos) {
                std::string frame_stem = name;
                frame_stem.replace(pos, 4, "frame");
                sibling = path.parent_path() / (frame_stem + ".ppm");
            }
        }
        if (fs::exists(sibling)) {
            ImageU8 frame = read_pnm(sibling);
            if (frame.channels() == 1) frame = detail::gray_to_rgb(frame);
            if (frame.height() == colorized.height())
                write_pnm(detail::hstack(frame, colorized), inspect_dir / (stem + "_panel.ppm"));
        }

        table << std::left << std::setw(40) << path.filename().string() << std::right
              << std::setw(12) << std::fixed << std::setprecision(4) << stats.smoothness
              << std::setw(14) << stats.checkerboard_score << std::setw(14) << residual
              << std::setw(8) << (flagged ? "FLAG" : "-") << "\n";
    }
    {
        std::ofstream f(inspect_dir / "stats.txt");
        f << table.str();
    }
    log << table.str();
    if (any_flagged) log << "inspect: checkerboard artifacts flagged (threshold "
                         << section.checkerboard_threshold << ")\n";
    return kOk;
}

}  // namespace saliflow

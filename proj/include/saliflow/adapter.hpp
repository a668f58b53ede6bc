#pragma once

// Adapter for an external image-to-video generator. The heavy model is never
// linked in: the adapter hands a request manifest to an external executable
// and collects the numbered frame files it writes back. A directory of
// pre-recorded frames can stand in for the executable, which is how tests
// and offline runs consume recorded generations.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "saliflow/datagen.hpp"
#include "saliflow/error.hpp"
#include "saliflow/pnm.hpp"

namespace saliflow {

// Environment variable naming either the adapter executable or a directory
// of recorded clips.
inline constexpr const char* kAdapterPathEnv = "SALIFLOW_ADAPTER_PATH";

namespace detail {

inline std::string run_capture(const std::string& command, int& exit_code) {
    std::string output;
    FILE* pipe = ::popen((command + " 2>&1").c_str(), "r");
    if (!pipe) {
        exit_code = -1;
        return "popen failed";
    }
    char buf[512];
    while (std::fgets(buf, sizeof(buf), pipe)) output += buf;
    int status = ::pclose(pipe);
    exit_code = (status < 0) ? -1 : WEXITSTATUS(status);
    return output;
}

inline std::string frame_name(int t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%03d.ppm", t);
    return buf;
}

}  // namespace detail

// Invokes `command <request.json>`. The request carries the source path and
// every sampling field; the adapter must write frame_{t:03d}.ppm files,
// t = 0..T-1, into the requested output directory at generation resolution.
// Frames are resized back to source resolution here.
class DiffusionAdapterBackend final : public ClipBackend {
public:
    DiffusionAdapterBackend(std::filesystem::path command, std::filesystem::path workdir,
                            bool declares_deterministic = false)
        : command_(std::move(command)), workdir_(std::move(workdir)),
          deterministic_(declares_deterministic) {}

    std::string name() const override { return "diffusion"; }
    BackendKind kind() const override { return BackendKind::diffusion; }
    bool deterministic() const override { return deterministic_; }

    GeneratedClip generate(const SourceSample& source, const GeneratorConfig& config) override {
        namespace fs = std::filesystem;
        if (command_.empty() || !fs::exists(command_))
            throw UnavailableError("diffusion backend unavailable: adapter executable not found (" +
                                   command_.string() + "); set " + std::string(kAdapterPathEnv));

        const fs::path job = workdir_ / source.id;
        const fs::path out_dir = job / "frames";
        fs::create_directories(out_dir);
        const fs::path source_path = job / "source.ppm";
        write_pnm(source.image, source_path);

        nlohmann::json request = {
            {"source_id", source.id},
            {"source_path", source_path.string()},
            {"seed", derive_seed(config.seed, source.id)},
            {"frames", config.frames},
            {"resolution", {{"height", config.height}, {"width", config.width}}},
            {"sampler_steps", config.sampler_steps},
            {"guidance_first", config.guidance_first},
            {"guidance_last", config.guidance_last},
            {"frame_rate", config.frame_rate},
            {"decode_chunk", config.decode_chunk},
            {"output_dir", out_dir.string()},
        };
        const fs::path request_path = job / "request.json";
        {
            std::ofstream f(request_path);
            if (!f) throw IoError("adapter: cannot write request: " + request_path.string());
            f << request.dump(2) << "\n";
        }

        int exit_code = 0;
        std::string log = detail::run_capture(
            "'" + command_.string() + "' '" + request_path.string() + "'", exit_code);
        if (exit_code != 0)
            throw BackendFailure("diffusion adapter exited with code " + std::to_string(exit_code),
                                 log);

        GeneratedClip clip;
        clip.source_id = source.id;
        clip.backend = BackendKind::diffusion;
        for (int t = 0; t < config.frames; ++t) {
            const fs::path frame_path = out_dir / detail::frame_name(t);
            if (!fs::exists(frame_path))
                throw BackendFailure("diffusion adapter produced no frame " + frame_path.string(),
                                     log);
            clip.frames.push_back(resize_bilinear(read_pnm(frame_path),
                                                  source.image.height(), source.image.width()));
        }
        return clip;
    }

private:
    std::filesystem::path command_;
    std::filesystem::path workdir_;
    bool deterministic_;
};

// Serves recorded generations from <dir>/<source_id>/frame_{t:03d}.ppm.
class RecordedClipBackend final : public ClipBackend {
public:
    explicit RecordedClipBackend(std::filesystem::path dir) : dir_(std::move(dir)) {}
    std::string name() const override { return "diffusion"; }
    BackendKind kind() const override { return BackendKind::diffusion; }
    bool deterministic() const override { return true; }

    GeneratedClip generate(const SourceSample& source, const GeneratorConfig& config) override {
        namespace fs = std::filesystem;
        const fs::path clip_dir = dir_ / source.id;
        if (!fs::exists(clip_dir))
            throw UnavailableError("recorded backend: no clip for source " + source.id + " under " +
                                   dir_.string());
        GeneratedClip clip;
        clip.source_id = source.id;
        clip.backend = BackendKind::diffusion;
        for (int t = 0; t < config.frames; ++t) {
            const fs::path frame_path = clip_dir / detail::frame_name(t);
            if (!fs::exists(frame_path))
                throw BackendFailure("recorded backend: missing frame " + frame_path.string(), "");
            clip.frames.push_back(resize_bilinear(read_pnm(frame_path),
                                                  source.image.height(), source.image.width()));
        }
        return clip;
    }

private:
    std::filesystem::path dir_;
};

// Resolves the diffusion backend from the discovery path: an executable
// selects the process adapter, a directory selects recorded clips.
inline std::shared_ptr<ClipBackend> make_diffusion_backend(
    const std::filesystem::path& adapter_path, const std::filesystem::path& workdir) {
    namespace fs = std::filesystem;
    if (adapter_path.empty() || !fs::exists(adapter_path))
        throw UnavailableError("diffusion backend unavailable: adapter path not found: " +
                               adapter_path.string());
    if (fs::is_directory(adapter_path))
        return std::make_shared<RecordedClipBackend>(adapter_path);
    return std::make_shared<DiffusionAdapterBackend>(adapter_path, workdir);
}

inline std::shared_ptr<ClipBackend> make_diffusion_backend_from_env(
    const std::filesystem::path& workdir) {
    const char* env = std::getenv(kAdapterPathEnv);
    if (!env || !*env)
        throw UnavailableError(std::string("diffusion backend unavailable: ") + kAdapterPathEnv +
                               " is not set");
    return make_diffusion_backend(env, workdir);
}

}  // namespace saliflow

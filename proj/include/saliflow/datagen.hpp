#pragma once

// Target-frame generation from static saliency samples. Three in-process
// backends (replicate, geometric, rigid oracle) plus an adapter for an
// external image-to-video generator (adapter.hpp). The analytic backends
// emit exact ground-truth flows so downstream estimators can be scored.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "saliflow/error.hpp"
#include "saliflow/flow_field.hpp"
#include "saliflow/image.hpp"
#include "saliflow/rng.hpp"
#include "saliflow/warp.hpp"

namespace saliflow {

struct SourceSample {
    std::string id;
    ImageU8 image;  // H x W x 3
    ImageU8 mask;   // H x W, values {0,1}
    std::string origin;

    void validate() const {
        if (id.empty()) throw ValueError("source sample: empty id");
        if (image.channels() != 3) throw ValueError("source sample: image must be 3-channel");
        if (image.height() != mask.height() || image.width() != mask.width())
            throw DimensionError("source sample: image/mask size mismatch");
        validate_mask(mask);
    }
};

// Sampling configuration handed verbatim to generation backends.
struct GeneratorConfig {
    int frames = 14;
    int height = 576;
    int width = 1024;
    int frame_rate = 7;
    int sampler_steps = 25;
    double guidance_first = 3.0;
    double guidance_last = 1.0;
    int decode_chunk = 8;
    std::uint64_t seed = 0;

    void validate() const {
        if (frames < 1) throw ConfigError("generator config: frames must be >= 1");
        if (height < 1 || width < 1)
            throw ConfigError("generator config: resolution components must be positive");
        if (sampler_steps < 1) throw ConfigError("generator config: sampler_steps must be >= 1");
    }
};

enum class BackendKind { diffusion, geometric, rigid_oracle, replicate };

inline const char* to_string(BackendKind kind) {
    switch (kind) {
        case BackendKind::diffusion: return "diffusion";
        case BackendKind::geometric: return "geometric";
        case BackendKind::rigid_oracle: return "rigid_oracle";
        case BackendKind::replicate: return "replicate";
    }
    return "unknown";
}

struct GeneratedClip {
    std::string source_id;
    std::vector<ImageU8> frames;
    // Present only for backends whose motion is known in closed form.
    std::optional<std::vector<FlowField>> gt_flows;
    BackendKind backend = BackendKind::replicate;
};

// ---- geometric baseline --------------------------------------------------

struct TpsJitter {
    int grid = 4;          // grid x grid control points over the image
    double stddev = 0.0;   // per-point displacement stddev, pixels; 0 disables
};

struct GeometricParams {
    double rotation = 0.0;  // radians
    double scale = 1.0;
    double shear = 0.0;
    double tx = 0.0, ty = 0.0;  // pixels
    TpsJitter tps;
    // Sampled control-point displacements (grid*grid entries); filled by
    // sample() or lazily from `seed` when stddev > 0.
    std::vector<std::array<double, 2>> tps_displacements;
    // Per-frame interpolation factors; empty means t/T for t = 1..T.
    std::vector<double> schedule;
    std::uint64_t seed = 0;

    std::vector<double> resolved_schedule(int frames) const {
        if (!schedule.empty()) {
            if (static_cast<int>(schedule.size()) != frames)
                throw ValueError("geometric params: schedule length != frame count");
            double prev = -0.0;
            for (double a : schedule) {
                if (a < 0.0 || a > 1.0 || a < prev)
                    throw ValueError("geometric params: schedule must be monotone in [0,1]");
                prev = a;
            }
            return schedule;
        }
        std::vector<double> s(frames);
        for (int t = 0; t < frames; ++t) s[t] = static_cast<double>(t + 1) / frames;
        return s;
    }

    void validate() const {
        if (scale <= 0.0) throw ValueError("geometric params: scale must be > 0");
        if (tps.stddev < 0.0) throw ValueError("geometric params: tps stddev must be >= 0");
        if (tps.stddev > 0.0 && tps.grid < 2)
            throw ValueError("geometric params: tps grid must be >= 2");
    }

    // Default sampling ranges: rotation +-15 deg, scale [0.9, 1.1],
    // shear +-0.1, translation +-5% of the image size.
    static GeometricParams sample(Rng& rng, int width, int height) {
        GeometricParams p;
        constexpr double deg15 = 15.0 * 3.14159265358979323846 / 180.0;
        p.rotation = rng.uniform(-deg15, deg15);
        p.scale = rng.uniform(0.9, 1.1);
        p.shear = rng.uniform(-0.1, 0.1);
        p.tx = rng.uniform(-0.05, 0.05) * width;
        p.ty = rng.uniform(-0.05, 0.05) * height;
        p.tps.grid = 4;
        p.tps.stddev = 1.5;
        p.tps_displacements.resize(static_cast<std::size_t>(p.tps.grid) * p.tps.grid);
        for (auto& d : p.tps_displacements) {
            d[0] = rng.next_gaussian() * p.tps.stddev;
            d[1] = rng.next_gaussian() * p.tps.stddev;
        }
        return p;
    }
};

namespace detail {

inline Affine2D frame_affine(const GeometricParams& p, double alpha, int width, int height) {
    double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
    Affine2D a = Affine2D::compose(alpha * p.rotation,
                                   1.0 + alpha * (p.scale - 1.0),
                                   alpha * p.shear,
                                   alpha * p.tx, alpha * p.ty, cx, cy);
    if (std::fabs(a.det()) < 1e-6) throw ValueError("geometric params: singular affine");
    return a;
}

}  // namespace detail

// Warps the source under the interpolated affine (+ optional thin-plate
// jitter); ground-truth flow at source pixel x is A x + b - x plus the
// spline displacement. Frames render by backward mapping with one
// fixed-point refinement of the spline term.
inline GeneratedClip geometric_clip(const SourceSample& source,
                                    GeometricParams params, int frames) {
    source.validate();
    params.validate();
    if (frames < 1) throw ValueError("geometric_clip: frame count must be >= 1");
    const int h = source.image.height(), w = source.image.width();
    const auto schedule = params.resolved_schedule(frames);

    std::unique_ptr<ThinPlateSpline> tps;
    if (params.tps.stddev > 0.0) {
        auto points = ThinPlateSpline::grid_points(params.tps.grid, w, h);
        if (params.tps_displacements.empty()) {
            Rng rng(params.seed);
            params.tps_displacements.resize(points.size());
            for (auto& d : params.tps_displacements) {
                d[0] = rng.next_gaussian() * params.tps.stddev;
                d[1] = rng.next_gaussian() * params.tps.stddev;
            }
        }
        if (params.tps_displacements.size() != points.size())
            throw ValueError("geometric_clip: tps displacement count != grid points");
        tps = std::make_unique<ThinPlateSpline>(points, params.tps_displacements);
    }

    GeneratedClip clip;
    clip.source_id = source.id;
    clip.backend = BackendKind::geometric;
    clip.gt_flows.emplace();

    for (int t = 0; t < frames; ++t) {
        const double alpha = schedule[t];
        const Affine2D fwd = detail::frame_affine(params, alpha, w, h);
        const Affine2D inv = fwd.inverse();

        FlowField flow(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                auto [fx, fy] = fwd.apply(x, y);
                double du = fx - x, dv = fy - y;
                if (tps) {
                    auto d = tps->displacement(x, y);
                    du += alpha * d[0];
                    dv += alpha * d[1];
                }
                flow.u(y, x) = static_cast<float>(du);
                flow.v(y, x) = static_cast<float>(dv);
            }

        ImageU8 frame(h, w, 3);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                auto [sx, sy] = inv.apply(x, y);
                if (tps) {
                    auto d = tps->displacement(sx, sy);
                    sx = inv.a00 * (x - alpha * d[0]) + inv.a01 * (y - alpha * d[1]) + inv.bx;
                    sy = inv.a10 * (x - alpha * d[0]) + inv.a11 * (y - alpha * d[1]) + inv.by;
                }
                for (int c = 0; c < 3; ++c) {
                    double valf = sample_bilinear(source.image, sy, sx, c);
                    frame.at(y, x, c) = static_cast<std::uint8_t>(
                        std::clamp(std::lround(valf), 0l, 255l));
                }
            }

        clip.gt_flows->push_back(std::move(flow));
        clip.frames.push_back(std::move(frame));
    }
    return clip;
}

// ---- rigid-motion oracle ---------------------------------------------------

enum class BackgroundFill { hold, nearest };

struct MotionSpec {
    // Per-frame displacement deltas applied to the masked object; the
    // object's offset at frame t is the cumulative sum through t.
    std::vector<std::array<double, 2>> displacement_schedule;
    BackgroundFill background_fill = BackgroundFill::nearest;
};

// Composites the masked object at the commanded offset over a filled
// background. Flow is exactly the cumulative offset inside the mask and
// exactly zero outside: object-shaped motion by construction.
inline GeneratedClip rigid_object_clip(const SourceSample& source, const MotionSpec& spec) {
    source.validate();
    const std::size_t object_pixels = mask_count(source.mask);
    if (object_pixels == 0) throw ValueError("rigid_object_clip: empty mask");
    if (spec.displacement_schedule.empty())
        throw ValueError("rigid_object_clip: empty displacement schedule");

    const int h = source.image.height(), w = source.image.width();
    const ImageU8 background = (spec.background_fill == BackgroundFill::nearest)
                                   ? fill_nearest(source.image, source.mask)
                                   : source.image;

    GeneratedClip clip;
    clip.source_id = source.id;
    clip.backend = BackendKind::rigid_oracle;
    clip.gt_flows.emplace();

    double ox = 0.0, oy = 0.0;
    for (const auto& delta : spec.displacement_schedule) {
        ox += delta[0];
        oy += delta[1];
        const int ix = static_cast<int>(std::lround(ox));
        const int iy = static_cast<int>(std::lround(oy));

        std::size_t in_frame = 0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (source.mask.at(y, x)) {
                    int qx = x + ix, qy = y + iy;
                    if (qx >= 0 && qx < w && qy >= 0 && qy < h) ++in_frame;
                }
        if (in_frame * 2 < object_pixels)
            throw ValueError("rigid_object_clip: object out of frame");

        ImageU8 frame = background;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (source.mask.at(y, x)) {
                    int qx = x + ix, qy = y + iy;
                    if (qx < 0 || qx >= w || qy < 0 || qy >= h) continue;
                    for (int c = 0; c < 3; ++c) frame.at(qy, qx, c) = source.image.at(y, x, c);
                }

        FlowField flow(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (source.mask.at(y, x)) {
                    flow.u(y, x) = static_cast<float>(ox);
                    flow.v(y, x) = static_cast<float>(oy);
                }

        clip.frames.push_back(std::move(frame));
        clip.gt_flows->push_back(std::move(flow));
    }
    return clip;
}

// ---- backends --------------------------------------------------------------

class ClipBackend {
public:
    virtual ~ClipBackend() = default;
    virtual std::string name() const = 0;
    virtual BackendKind kind() const = 0;
    virtual bool deterministic() const = 0;
    virtual GeneratedClip generate(const SourceSample& source, const GeneratorConfig& config) = 0;
};

// Identity backend: every target frame is the source; flows are zero.
class ReplicateBackend final : public ClipBackend {
public:
    std::string name() const override { return "replicate"; }
    BackendKind kind() const override { return BackendKind::replicate; }
    bool deterministic() const override { return true; }
    GeneratedClip generate(const SourceSample& source, const GeneratorConfig& config) override {
        GeneratedClip clip;
        clip.source_id = source.id;
        clip.backend = BackendKind::replicate;
        clip.frames.assign(static_cast<std::size_t>(config.frames), source.image);
        clip.gt_flows.emplace(static_cast<std::size_t>(config.frames),
                              FlowField(source.image.height(), source.image.width()));
        return clip;
    }
};

class GeometricBackend final : public ClipBackend {
public:
    GeometricBackend() = default;
    explicit GeometricBackend(GeometricParams params) : fixed_params_(std::move(params)) {}
    std::string name() const override { return "geometric"; }
    BackendKind kind() const override { return BackendKind::geometric; }
    bool deterministic() const override { return true; }
    GeneratedClip generate(const SourceSample& source, const GeneratorConfig& config) override {
        GeometricParams params;
        if (fixed_params_) {
            params = *fixed_params_;
        } else {
            Rng rng(derive_seed(config.seed, source.id));
            params = GeometricParams::sample(rng, source.image.width(), source.image.height());
        }
        return geometric_clip(source, std::move(params), config.frames);
    }

private:
    std::optional<GeometricParams> fixed_params_;
};

class RigidOracleBackend final : public ClipBackend {
public:
    RigidOracleBackend() = default;
    explicit RigidOracleBackend(MotionSpec spec) : fixed_spec_(std::move(spec)) {}
    std::string name() const override { return "rigid_oracle"; }
    BackendKind kind() const override { return BackendKind::rigid_oracle; }
    bool deterministic() const override { return true; }
    GeneratedClip generate(const SourceSample& source, const GeneratorConfig& config) override {
        MotionSpec spec;
        if (fixed_spec_) {
            spec = *fixed_spec_;
            if (static_cast<int>(spec.displacement_schedule.size()) != config.frames)
                throw ConfigError("rigid oracle: displacement schedule length != frames");
        } else {
            Rng rng(derive_seed(config.seed, source.id));
            spec.displacement_schedule.resize(static_cast<std::size_t>(config.frames));
            for (auto& d : spec.displacement_schedule) {
                d[0] = std::floor(rng.uniform(-1.0, 2.0));
                d[1] = std::floor(rng.uniform(-1.0, 2.0));
            }
        }
        return rigid_object_clip(source, spec);
    }

private:
    std::optional<MotionSpec> fixed_spec_;
};

class BackendRegistry {
public:
    void add(std::shared_ptr<ClipBackend> backend) {
        entries_[backend->name()] = std::move(backend);
    }
    bool has(const std::string& name) const { return entries_.count(name) != 0; }
    ClipBackend& get(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw UnavailableError("backend not registered: " + name);
        return *it->second;
    }

    static BackendRegistry with_builtins() {
        BackendRegistry r;
        r.add(std::make_shared<ReplicateBackend>());
        r.add(std::make_shared<GeometricBackend>());
        r.add(std::make_shared<RigidOracleBackend>());
        return r;
    }

private:
    std::map<std::string, std::shared_ptr<ClipBackend>> entries_;
};

// Runs a backend and enforces the clip contract: exactly config.frames
// frames, uniform dimensions, and matching ground-truth flows when present.
inline GeneratedClip generate_clip(const SourceSample& source, const GeneratorConfig& config,
                                   ClipBackend& backend) {
    config.validate();
    source.validate();
    GeneratedClip clip = backend.generate(source, config);
    if (static_cast<int>(clip.frames.size()) != config.frames)
        throw BackendFailure("backend returned wrong frame count: " + backend.name(),
                             "expected " + std::to_string(config.frames) + ", got " +
                                 std::to_string(clip.frames.size()));
    for (const auto& f : clip.frames)
        if (f.height() != source.image.height() || f.width() != source.image.width() ||
            f.channels() != 3)
            throw BackendFailure("backend must return 3-channel frames at source resolution: " +
                                     backend.name(), "");
    if (clip.gt_flows) {
        if (clip.gt_flows->size() != clip.frames.size())
            throw BackendFailure("backend returned mismatched gt flow count: " + backend.name(), "");
        for (const auto& fl : *clip.gt_flows)
            if (fl.height() != clip.frames.front().height() ||
                fl.width() != clip.frames.front().width())
                throw BackendFailure("backend returned mismatched gt flow size: " + backend.name(), "");
    }
    return clip;
}

}  // namespace saliflow

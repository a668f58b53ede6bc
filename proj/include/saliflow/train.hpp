#pragma once

// Supervised training over mixed real + synthetic triplets: Adam on mean
// per-pixel binary cross-entropy, deterministic batch assembly through the
// counter-based sampler, line-delimited loss/metric traces, and checkpoints
// that resume bit-exactly.

#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saliflow/checkpoint.hpp"
#include "saliflow/colorize.hpp"
#include "saliflow/error.hpp"
#include "saliflow/image.hpp"
#include "saliflow/metrics.hpp"
#include "saliflow/sampler.hpp"
#include "saliflow/segnet.hpp"
#include "saliflow/tensor.hpp"
#include "saliflow/triplets.hpp"

namespace saliflow {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct TrainConfig {
    double learning_rate = 1e-5;
    int batch_size = 16;
    int max_steps = 100;
    int eval_every = 0;       // 0 disables periodic eval
    int checkpoint_every = 0; // 0 keeps only the final checkpoint
    int resolution = 512;     // square training resolution
    std::uint64_t seed = 0;
    ModelConfig model;
    AdamConfig adam;
    std::vector<int> ratios;  // mirrored verbatim into traces/checkpoints

    void validate() const {
        if (learning_rate <= 0.0) throw ConfigError("train config: learning_rate must be > 0");
        if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
        if (max_steps < 1) throw ConfigError("train config: max_steps must be >= 1");
        if (eval_every < 0 || eval_every > max_steps)
            throw ConfigError("train config: eval_every must lie in [0, max_steps]");
        if (checkpoint_every < 0)
            throw ConfigError("train config: checkpoint_every must be >= 0");
        if (resolution < 1) throw ConfigError("train config: resolution must be positive");
    }
};

struct TrainState {
    std::int64_t step = 0;
    ParamStore params;
    std::map<std::string, std::vector<double>> adam_m;
    std::map<std::string, std::vector<double>> adam_v;
    double last_loss = 0.0;
    std::uint64_t draw_cursor = 0;  // sampler position, = step * batch_size
};

// Mean per-pixel binary cross-entropy from logits; stable for |logit| far
// beyond 100.
inline double bce_loss(const Tensor& logits, const Tensor& targets) {
    return ops::bce_with_logits_mean(logits, targets).value();
}

// ---- batch assembly ------------------------------------------------------

struct Batch {
    Tensor images;  // [B,3,R,R]
    Tensor flows;   // [B,2|3,R,R]
    Tensor masks;   // [B,1,R,R]
};

namespace detail {

inline void fill_image01(std::vector<double>& dst, std::size_t offset, const ImageU8& img) {
    // HWC u8 -> CHW [0,1]
    const std::size_t plane = static_cast<std::size_t>(img.height()) * img.width();
    for (int c = 0; c < img.channels(); ++c)
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < img.width(); ++x)
                dst[offset + c * plane + static_cast<std::size_t>(y) * img.width() + x] =
                    img.at(y, x, c) / 255.0;
}

}  // namespace detail

// Resizes a triplet to the training resolution and encodes it: image to
// [0,1] planes, flow either colorized (3 channels) or raw (u, v) scaled by
// its 99th-percentile magnitude, mask to a {0,1} plane (nearest resize so
// it stays binary).
inline void encode_triplet(const Triplet& triplet, int resolution, bool raw_flow,
                           std::vector<double>& image_dst, std::size_t image_off,
                           std::vector<double>& flow_dst, std::size_t flow_off,
                           std::vector<double>& mask_dst, std::size_t mask_off) {
    const ImageU8 image = resize_bilinear(triplet.image, resolution, resolution);
    const ImageU8 mask = resize_nearest(triplet.mask, resolution, resolution);
    const FlowField flow = resize_flow(triplet.flow, resolution, resolution);
    detail::fill_image01(image_dst, image_off, image);
    const std::size_t plane = static_cast<std::size_t>(resolution) * resolution;
    if (raw_flow) {
        double norm = std::max(1.0, flow_magnitude_percentile(flow));
        for (int y = 0; y < resolution; ++y)
            for (int x = 0; x < resolution; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * resolution + x;
                flow_dst[flow_off + i] = flow.u(y, x) / norm;
                flow_dst[flow_off + plane + i] = flow.v(y, x) / norm;
            }
    } else {
        detail::fill_image01(flow_dst, flow_off, colorize_flow(flow));
    }
    for (int y = 0; y < resolution; ++y)
        for (int x = 0; x < resolution; ++x)
            mask_dst[mask_off + static_cast<std::size_t>(y) * resolution + x] =
                mask.at(y, x);
}

inline Batch make_batch(const std::vector<Triplet>& triplets, int resolution, bool raw_flow) {
    const int b = static_cast<int>(triplets.size());
    const int fc = raw_flow ? 2 : 3;
    const std::size_t plane = static_cast<std::size_t>(resolution) * resolution;
    std::vector<double> images(static_cast<std::size_t>(b) * 3 * plane);
    std::vector<double> flows(static_cast<std::size_t>(b) * fc * plane);
    std::vector<double> masks(static_cast<std::size_t>(b) * plane);
    for (int i = 0; i < b; ++i)
        encode_triplet(triplets[static_cast<std::size_t>(i)], resolution, raw_flow, images,
                       static_cast<std::size_t>(i) * 3 * plane, flows,
                       static_cast<std::size_t>(i) * fc * plane, masks,
                       static_cast<std::size_t>(i) * plane);
    Batch batch;
    batch.images = Tensor::from_vector({b, 3, resolution, resolution}, std::move(images));
    batch.flows = Tensor::from_vector({b, fc, resolution, resolution}, std::move(flows));
    batch.masks = Tensor::from_vector({b, 1, resolution, resolution}, std::move(masks));
    return batch;
}

// ---- optimizer -----------------------------------------------------------

// One forward/backward/Adam update. Deterministic given (state, batch).
inline double train_step(TrainState& state, const Batch& batch, const TrainConfig& config) {
    state.params.zero_grad();
    ForwardResult fwd = forward(batch.images, batch.flows, state.params, config.model);
    Tensor loss = ops::bce_with_logits_mean(fwd.logits, batch.masks);
    const double loss_value = loss.value();
    if (!std::isfinite(loss_value))
        throw TrainError("non-finite loss at step " + std::to_string(state.step + 1) +
                         " (loss=" + std::to_string(loss_value) + ")");
    loss.backward();

    const double b1 = config.adam.beta1, b2 = config.adam.beta2, eps = config.adam.epsilon;
    const double t = static_cast<double>(state.step + 1);
    const double bc1 = 1.0 - std::pow(b1, t);
    const double bc2 = 1.0 - std::pow(b2, t);
    for (auto& [name, param] : state.params.params) {
        auto& m = state.adam_m[name];
        auto& v = state.adam_v[name];
        if (m.size() != param.numel()) m.assign(param.numel(), 0.0);
        if (v.size() != param.numel()) v.assign(param.numel(), 0.0);
        auto& g = param.grad();
        auto& p = param.data();
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + eps);
        }
    }
    state.step += 1;
    state.draw_cursor += static_cast<std::uint64_t>(config.batch_size);
    state.last_loss = loss_value;
    return loss_value;
}

// ---- checkpoint plumbing ---------------------------------------------------

inline Checkpoint state_to_checkpoint(const TrainState& state, const TrainConfig& config) {
    Checkpoint ckpt;
    ckpt.model = config.model;
    for (const auto& [name, t] : state.params.params) ckpt.arrays[name] = t;
    for (const auto& [name, m] : state.adam_m)
        ckpt.arrays["opt.m." + name] =
            Tensor::from_vector(state.params.at(name).shape(), m);
    for (const auto& [name, v] : state.adam_v)
        ckpt.arrays["opt.v." + name] =
            Tensor::from_vector(state.params.at(name).shape(), v);
    ckpt.extra = {{"step", state.step},
                  {"draw_cursor", state.draw_cursor},
                  {"learning_rate", config.learning_rate},
                  {"batch_size", config.batch_size},
                  {"resolution", config.resolution},
                  {"seed", config.seed},
                  {"ratios", config.ratios}};
    return ckpt;
}

inline TrainState state_from_checkpoint(const Checkpoint& ckpt) {
    TrainState state;
    state.params = params_from_checkpoint(ckpt);
    for (const auto& [name, param] : state.params.params) {
        auto mi = ckpt.arrays.find("opt.m." + name);
        auto vi = ckpt.arrays.find("opt.v." + name);
        if (mi != ckpt.arrays.end()) state.adam_m[name] = mi->second.data();
        if (vi != ckpt.arrays.end()) state.adam_v[name] = vi->second.data();
    }
    state.step = ckpt.extra.value("step", std::int64_t{0});
    state.draw_cursor = ckpt.extra.value("draw_cursor", std::uint64_t{0});
    return state;
}

// ---- fit -------------------------------------------------------------------

struct FitResult {
    std::filesystem::path final_checkpoint;
    std::filesystem::path trace_path;
    std::vector<double> losses;     // per recorded step since (re)start
    double final_eval_s = 0.0;
    double final_eval_f = 0.0;
    double final_eval_mae = 0.0;
    bool evaluated = false;
};

namespace detail {

// %.17g round-trips doubles exactly through the text trace.
inline std::string loss_repr(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline MetricTriple eval_manifest(const DatasetManifest& manifest, const ParamStore& params,
                                  const ModelConfig& model, int resolution,
                                  FProtocol protocol) {
    MetricTriple sum;
    for (const auto& record : manifest.records) {
        Triplet triplet = load_triplet(manifest, record);
        std::vector<Triplet> one{triplet};
        Batch batch = make_batch(one, resolution, model.raw_flow);
        ForwardResult fwd = forward(batch.images, batch.flows, params, model);
        ImageF pred(resolution, resolution, 1);
        for (int y = 0; y < resolution; ++y)
            for (int x = 0; x < resolution; ++x)
                pred.at(y, x) = static_cast<float>(
                    fwd.probs.data()[static_cast<std::size_t>(y) * resolution + x]);
        if (pred.height() != triplet.mask.height() || pred.width() != triplet.mask.width())
            pred = resize_bilinear(pred, triplet.mask.height(), triplet.mask.width());
        MetricTriple m = frame_metrics(pred, triplet.mask, protocol);
        sum.s += m.s;
        sum.f += m.f;
        sum.m += m.m;
    }
    const double n = static_cast<double>(manifest.records.size());
    if (n > 0) {
        sum.s /= n;
        sum.f /= n;
        sum.m /= n;
    }
    return sum;
}

}  // namespace detail

// Full training loop. `mixing` supplies the triplet stream; `eval_set`, when
// given, is scored every eval_every steps and at the end. Passing a resume
// checkpoint continues mid-run and reproduces the uninterrupted trace
// exactly (single-threaded determinism).
inline FitResult fit(const TrainConfig& config_in, const MixingSpec& mixing,
                     const std::optional<DatasetManifest>& eval_set,
                     const std::filesystem::path& out_dir,
                     const std::optional<std::filesystem::path>& resume = std::nullopt,
                     FProtocol protocol = FProtocol::max) {
    TrainConfig config = config_in;
    config.model.input_height = config.resolution;
    config.model.input_width = config.resolution;
    config.validate();
    config.model.validate();

    std::filesystem::create_directories(out_dir);
    MixedSampler sampler(mixing);

    TrainState state;
    if (resume) {
        Checkpoint ckpt = load_checkpoint(*resume);
        if (ckpt.model.to_json() != config.model.to_json())
            throw TrainError("resume checkpoint model config does not match run config");
        state = state_from_checkpoint(ckpt);
    } else {
        state.params = init_params(config.model, derive_seed(config.seed, "init"));
    }

    const std::filesystem::path trace_path = out_dir / "trace.jsonl";
    std::ofstream trace(trace_path, resume ? std::ios::app : std::ios::out);
    if (!trace) throw IoError("fit: cannot open trace: " + trace_path.string());
    if (!resume) {
        nlohmann::json header = {{"kind", "header"},
                                 {"ratios", config.ratios},
                                 {"learning_rate", config.learning_rate},
                                 {"batch_size", config.batch_size},
                                 {"max_steps", config.max_steps},
                                 {"resolution", config.resolution},
                                 {"seed", config.seed},
                                 {"model", config.model.to_json()}};
        trace << header.dump() << "\n";
    }

    FitResult result;
    result.trace_path = trace_path;

    while (state.step < config.max_steps) {
        std::vector<Triplet> triplets;
        triplets.reserve(static_cast<std::size_t>(config.batch_size));
        for (int i = 0; i < config.batch_size; ++i) {
            auto draw = sampler.draw_at(state.draw_cursor + static_cast<std::uint64_t>(i));
            triplets.push_back(
                load_triplet(sampler.dataset(draw.dataset), sampler.record_at(draw)));
        }
        Batch batch = make_batch(triplets, config.resolution, config.model.raw_flow);
        const double loss = train_step(state, batch, config);
        result.losses.push_back(loss);
        trace << "{\"step\":" << state.step << ",\"loss\":" << detail::loss_repr(loss) << "}\n";

        if (config.eval_every > 0 && eval_set && state.step % config.eval_every == 0) {
            MetricTriple m = detail::eval_manifest(*eval_set, state.params, config.model,
                                                   config.resolution, protocol);
            nlohmann::json rec = {{"step", state.step},
                                  {"eval", {{"s", m.s}, {"f", m.f}, {"mae", m.m}}}};
            trace << rec.dump() << "\n";
            result.final_eval_s = m.s;
            result.final_eval_f = m.f;
            result.final_eval_mae = m.m;
            result.evaluated = true;
        }
        if (config.checkpoint_every > 0 && state.step % config.checkpoint_every == 0 &&
            state.step < config.max_steps) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "ckpt_%06" PRId64 ".ckpt", state.step);
            save_checkpoint(state_to_checkpoint(state, config), out_dir / buf);
        }
    }

    if (eval_set && (!result.evaluated || config.eval_every == 0 ||
                     config.max_steps % config.eval_every != 0)) {
        MetricTriple m = detail::eval_manifest(*eval_set, state.params, config.model,
                                               config.resolution, protocol);
        nlohmann::json rec = {{"step", state.step},
                              {"eval", {{"s", m.s}, {"f", m.f}, {"mae", m.m}}}};
        trace << rec.dump() << "\n";
        result.final_eval_s = m.s;
        result.final_eval_f = m.f;
        result.final_eval_mae = m.m;
        result.evaluated = true;
    }

    result.final_checkpoint = out_dir / "final.ckpt";
    save_checkpoint(state_to_checkpoint(state, config), result.final_checkpoint);
    trace.flush();
    return result;
}

}  // namespace saliflow

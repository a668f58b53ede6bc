#pragma once

// Two-stream saliency model: hierarchical convolutional encoders for the
// RGB and flow inputs, per-stage CBAM-style fusion (channel gates, then
// spatial gates, then the gated streams summed), and a top-down decoder
// with skip connections ending in a 1-channel head at input resolution.
// The encoder is an interface; the built-in small conv encoder keeps the
// model trainable at desk scale, and pretrained hierarchical backbones can
// be plugged in behind the same pyramid contract.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "saliflow/error.hpp"
#include "saliflow/tensor.hpp"

namespace saliflow {

struct FusionConfig {
    int reduction = 16;     // channel-attention bottleneck ratio
    int spatial_kernel = 7; // spatial-attention conv kernel
};

struct ModelConfig {
    int stages = 4;
    std::vector<int> widths = {16, 32, 64, 128};  // channels per stage
    FusionConfig fusion;
    int input_height = 512;
    int input_width = 512;
    // Flow enters as a colorized 3-channel raster by default so both
    // streams share one encoder signature; raw (u, v) input is available.
    bool raw_flow = false;

    int flow_channels() const { return raw_flow ? 2 : 3; }

    void validate() const {
        if (stages < 1) throw ConfigError("model config: stages must be >= 1");
        if (static_cast<int>(widths.size()) != stages)
            throw ConfigError("model config: widths count must equal stages");
        int min_width = widths[0];
        for (int w : widths) {
            if (w < 1) throw ConfigError("model config: widths must be positive");
            min_width = std::min(min_width, w);
        }
        if (fusion.reduction < 1 || min_width % fusion.reduction != 0)
            throw ConfigError("model config: reduction must divide the minimum width");
        if (fusion.spatial_kernel < 1 || fusion.spatial_kernel % 2 == 0)
            throw ConfigError("model config: spatial kernel must be odd");
        // stage s feature maps sit at input / 2^(s+2)... stride-4 stem then
        // stride-2 stages: require exact divisibility so skips align.
        int div = 4 << (stages - 1);
        if (input_height % div != 0 || input_width % div != 0)
            throw ConfigError("model config: resolution must be divisible by " +
                              std::to_string(div));
        if (input_height < div || input_width < div)
            throw ConfigError("model config: resolution too small for stage count");
    }

    static ModelConfig toy() {
        ModelConfig c;
        c.stages = 2;
        c.widths = {8, 16};
        c.fusion.reduction = 4;
        c.input_height = 64;
        c.input_width = 64;
        return c;
    }

    nlohmann::json to_json() const {
        return {{"stages", stages},
                {"widths", widths},
                {"reduction", fusion.reduction},
                {"spatial_kernel", fusion.spatial_kernel},
                {"input_height", input_height},
                {"input_width", input_width},
                {"raw_flow", raw_flow}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.stages = j.at("stages").get<int>();
        c.widths = j.at("widths").get<std::vector<int>>();
        c.fusion.reduction = j.at("reduction").get<int>();
        c.fusion.spatial_kernel = j.at("spatial_kernel").get<int>();
        c.input_height = j.at("input_height").get<int>();
        c.input_width = j.at("input_width").get<int>();
        c.raw_flow = j.value("raw_flow", false);
        return c;
    }
};

// Named parameter arrays; std::map keeps iteration (and thus the optimizer
// update order) deterministic.
struct ParamStore {
    std::map<std::string, Tensor> params;

    Tensor& at(const std::string& name) {
        auto it = params.find(name);
        if (it == params.end())
            throw ValueError("uninitialized params: missing " + name);
        return it->second;
    }
    const Tensor& at(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end())
            throw ValueError("uninitialized params: missing " + name);
        return it->second;
    }
    bool empty() const { return params.empty(); }

    void zero_grad() {
        for (auto& [name, t] : params) t.zero_grad();
    }
};

namespace detail {

inline int stage_kernel(int s) { return s == 0 ? 7 : 3; }
inline int stage_stride(int s) { return s == 0 ? 4 : 2; }

}  // namespace detail

// Shapes of every parameter for a config; init and checkpoint validation
// both derive from this single map.
inline std::map<std::string, std::vector<int>> param_shapes(const ModelConfig& config) {
    config.validate();
    std::map<std::string, std::vector<int>> shapes;
    const int r = config.fusion.reduction;
    const int sk = config.fusion.spatial_kernel;
    for (const std::string stream : {"img", "flw"}) {
        int cin = stream == "img" ? 3 : config.flow_channels();
        for (int s = 0; s < config.stages; ++s) {
            const int w = config.widths[static_cast<std::size_t>(s)];
            const int k = detail::stage_kernel(s);
            const std::string p = stream + ".s" + std::to_string(s);
            shapes[p + ".patch.w"] = {w, cin, k, k};
            shapes[p + ".patch.b"] = {w};
            shapes[p + ".conv.w"] = {w, w, 3, 3};
            shapes[p + ".conv.b"] = {w};
            cin = w;
        }
    }
    for (int s = 0; s < config.stages; ++s) {
        const int w = config.widths[static_cast<std::size_t>(s)];
        for (const std::string stream : {"img", "flw"}) {
            const std::string p = "fuse.s" + std::to_string(s) + "." + stream;
            shapes[p + ".ca.fc1.w"] = {w / r, w};
            shapes[p + ".ca.fc1.b"] = {w / r};
            shapes[p + ".ca.fc2.w"] = {w, w / r};
            shapes[p + ".ca.fc2.b"] = {w};
            shapes[p + ".sa.w"] = {1, 2, sk, sk};
            shapes[p + ".sa.b"] = {1};
        }
    }
    for (int s = config.stages - 2; s >= 0; --s) {
        const int w = config.widths[static_cast<std::size_t>(s)];
        const int cin = config.widths[static_cast<std::size_t>(s + 1)] + w;
        shapes["dec.s" + std::to_string(s) + ".w"] = {w, cin, 3, 3};
        shapes["dec.s" + std::to_string(s) + ".b"] = {w};
    }
    shapes["head.w"] = {1, config.widths[0], 1, 1};
    shapes["head.b"] = {1};
    return shapes;
}

inline ParamStore init_params(const ModelConfig& config, std::uint64_t seed) {
    ParamStore store;
    Rng rng(seed);
    for (const auto& [name, shape] : param_shapes(config)) {
        if (name.ends_with(".b")) {
            store.params[name] = Tensor::zeros(shape, true);
        } else {
            std::size_t fan_in = 1;
            for (std::size_t i = 1; i < shape.size(); ++i)
                fan_in *= static_cast<std::size_t>(shape[i]);
            store.params[name] =
                Tensor::randn(shape, rng, std::sqrt(2.0 / static_cast<double>(fan_in)));
        }
    }
    return store;
}

// ---- attention ---------------------------------------------------------------

// Per-channel gates: sigmoid(MLP(avg-pool) + MLP(max-pool)) with a shared
// bottleneck MLP of reduction r. Zero-initialized MLP gives gates of 0.5.
inline Tensor channel_attention(const Tensor& features, const Tensor& fc1w, const Tensor& fc1b,
                                const Tensor& fc2w, const Tensor& fc2b) {
    if (features.ndim() != 4) throw DimensionError("channel_attention: expected NCHW");
    const int c = features.dim(1);
    if (fc1w.dim(1) != c || c % fc1w.dim(0) != 0)
        throw ConfigError("channel_attention: reduction does not divide channels");
    Tensor avg = ops::global_avg_pool(features);
    Tensor mx = ops::global_max_pool(features);
    auto mlp = [&](const Tensor& in) {
        return ops::linear(ops::relu(ops::linear(in, fc1w, fc1b)), fc2w, fc2b);
    };
    return ops::sigmoid(ops::add(mlp(avg), mlp(mx)));
}

// Per-pixel gates: sigmoid(conv_kxk([channel-avg; channel-max])), same
// padding so gates match the feature map spatially.
inline Tensor spatial_attention(const Tensor& features, const Tensor& conv_w,
                                const Tensor& conv_b) {
    if (features.ndim() != 4) throw DimensionError("spatial_attention: expected NCHW");
    const int k = conv_w.dim(2);
    if (k % 2 == 0) throw ConfigError("spatial_attention: kernel must be odd");
    Tensor maps = ops::concat_channels(ops::channel_mean_map(features),
                                       ops::channel_max_map(features));
    return ops::sigmoid(ops::conv2d(maps, conv_w, conv_b, 1, k / 2));
}

// Channel gating then spatial gating of one stream's stage features.
inline Tensor cbam_gate(const Tensor& features, const ParamStore& params,
                        const std::string& prefix) {
    Tensor cg = channel_attention(features, params.at(prefix + ".ca.fc1.w"),
                                  params.at(prefix + ".ca.fc1.b"),
                                  params.at(prefix + ".ca.fc2.w"),
                                  params.at(prefix + ".ca.fc2.b"));
    Tensor gated = ops::mul_channel(features, cg);
    Tensor sg = spatial_attention(gated, params.at(prefix + ".sa.w"),
                                  params.at(prefix + ".sa.b"));
    return ops::mul_spatial(gated, sg);
}

// ---- encoder / decoder ---------------------------------------------------------

// Stage s output: input / 2^(s+2) spatially (stride-4 stem, then stride-2),
// widths[s] channels.
inline std::vector<Tensor> encode_stream(const Tensor& input, const ParamStore& params,
                                         const std::string& stream, const ModelConfig& config) {
    std::vector<Tensor> pyramid;
    Tensor x = input;
    for (int s = 0; s < config.stages; ++s) {
        const std::string p = stream + ".s" + std::to_string(s);
        const int k = detail::stage_kernel(s);
        x = ops::relu(ops::conv2d(x, params.at(p + ".patch.w"), params.at(p + ".patch.b"),
                                  detail::stage_stride(s), k / 2));
        x = ops::relu(ops::conv2d(x, params.at(p + ".conv.w"), params.at(p + ".conv.b"), 1, 1));
        pyramid.push_back(x);
    }
    return pyramid;
}

struct DecodeOptions {
    bool use_bias = true;
    bool use_activation = true;
};

// Top-down: upsample the coarser map x2, concatenate the matching fused
// skip, convolve; the 1-channel head output is upsampled to input
// resolution. With {no bias, no activation} the decoder is linear in the
// pyramid, which tests exploit.
inline Tensor decode(const std::vector<Tensor>& fused, const ParamStore& params,
                     const ModelConfig& config, DecodeOptions options = {}) {
    if (static_cast<int>(fused.size()) != config.stages)
        throw ValueError("decode: incomplete pyramid (" + std::to_string(fused.size()) +
                         " of " + std::to_string(config.stages) + " stages)");
    Tensor x = fused.back();
    for (int s = config.stages - 2; s >= 0; --s) {
        const std::string p = "dec.s" + std::to_string(s);
        const Tensor& skip = fused[static_cast<std::size_t>(s)];
        Tensor up = ops::upsample_bilinear(x, skip.dim(2), skip.dim(3));
        Tensor cat = ops::concat_channels(up, skip);
        Tensor conv = ops::conv2d(cat, params.at(p + ".w"),
                                  options.use_bias ? params.at(p + ".b") : Tensor(), 1, 1);
        x = options.use_activation ? ops::relu(conv) : conv;
    }
    Tensor logits = ops::conv2d(x, params.at("head.w"),
                                options.use_bias ? params.at("head.b") : Tensor(), 1, 0);
    return ops::upsample_bilinear(logits, config.input_height, config.input_width);
}

struct ForwardResult {
    Tensor logits;  // [N,1,H,W]
    Tensor probs;   // sigmoid(logits), values in (0,1)
};

inline ForwardResult forward(const Tensor& image, const Tensor& flow, const ParamStore& params,
                             const ModelConfig& config) {
    config.validate();
    if (params.empty()) throw ValueError("uninitialized params: empty parameter store");
    if (image.ndim() != 4 || image.dim(1) != 3)
        throw DimensionError("forward: image must be [N,3,H,W]");
    if (flow.ndim() != 4 || flow.dim(1) != config.flow_channels())
        throw DimensionError("forward: flow must be [N," +
                             std::to_string(config.flow_channels()) + ",H,W]");
    if (image.dim(2) != config.input_height || image.dim(3) != config.input_width ||
        flow.dim(2) != config.input_height || flow.dim(3) != config.input_width ||
        image.dim(0) != flow.dim(0))
        throw DimensionError("forward: resolution mismatch with model config");

    auto img_pyr = encode_stream(image, params, "img", config);
    auto flw_pyr = encode_stream(flow, params, "flw", config);
    std::vector<Tensor> fused;
    fused.reserve(static_cast<std::size_t>(config.stages));
    for (int s = 0; s < config.stages; ++s) {
        const std::string p = "fuse.s" + std::to_string(s);
        fused.push_back(ops::add(cbam_gate(img_pyr[static_cast<std::size_t>(s)], params, p + ".img"),
                                 cbam_gate(flw_pyr[static_cast<std::size_t>(s)], params, p + ".flw")));
    }
    ForwardResult result;
    result.logits = decode(fused, params, config);
    result.probs = ops::sigmoid(result.logits);
    return result;
}

}  // namespace saliflow

#pragma once

// Middlebury-style .flo container. Little-endian: a 32-bit float sanity
// magic 202021.25, signed 32-bit width and height, then height*width
// interleaved (u, v) float pairs, row-major top-to-bottom. Round trips are
// bit-exact.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "saliflow/error.hpp"
#include "saliflow/flow_field.hpp"

namespace saliflow {

inline constexpr float kFlowMagic = 202021.25f;
inline constexpr std::int32_t kFlowMaxDim = 1 << 20;

static_assert(std::endian::native == std::endian::little,
              "flow io assumes a little-endian host");

inline void write_flo(const FlowField& flow, const std::filesystem::path& path) {
    if (flow.empty()) throw ValueError("write_flo: empty flow field");
    if (!flow.all_finite()) throw ValueError("write_flo: flow contains non-finite values");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_flo: cannot open: " + path.string());
    const std::int32_t w = flow.width(), h = flow.height();
    out.write(reinterpret_cast<const char*>(&kFlowMagic), 4);
    out.write(reinterpret_cast<const char*>(&w), 4);
    out.write(reinterpret_cast<const char*>(&h), 4);
    out.write(reinterpret_cast<const char*>(flow.raw().data()),
              static_cast<std::streamsize>(flow.raw().size() * sizeof(float)));
    if (!out) throw IoError("write_flo: write failed: " + path.string());
}

inline FlowField read_flo(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_flo: cannot open: " + path.string());
    float magic = 0.0f;
    std::int32_t w = 0, h = 0;
    in.read(reinterpret_cast<char*>(&magic), 4);
    if (in.gcount() != 4) throw FormatError("read_flo: truncated header: " + path.string());
    if (magic != kFlowMagic) throw FormatError("read_flo: bad magic in " + path.string());
    in.read(reinterpret_cast<char*>(&w), 4);
    in.read(reinterpret_cast<char*>(&h), 4);
    if (!in) throw FormatError("read_flo: truncated header: " + path.string());
    if (w <= 0 || h <= 0 || w > kFlowMaxDim || h > kFlowMaxDim)
        throw FormatError("read_flo: dimension overflow in " + path.string());
    FlowField flow(h, w);
    const std::streamsize bytes =
        static_cast<std::streamsize>(flow.raw().size() * sizeof(float));
    in.read(reinterpret_cast<char*>(flow.raw().data()), bytes);
    if (in.gcount() != bytes) throw FormatError("read_flo: truncated data: " + path.string());
    return flow;
}

}  // namespace saliflow

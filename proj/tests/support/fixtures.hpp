#pragma once

// Procedural fixtures shared across tests: deterministic noise textures,
// masked objects, shifted frame pairs, and scratch directories.

#include <array>
#include <filesystem>
#include <string>

#include "saliflow/datagen.hpp"
#include "saliflow/flow_field.hpp"
#include "saliflow/image.hpp"
#include "saliflow/rng.hpp"

namespace testsupport {

using namespace saliflow;

// Non-repeating texture: every pixel is an independent hash of its
// coordinates, so block matching has a unique optimum.
inline ImageU8 noise_image(int height, int width, std::uint64_t seed, int channels = 3) {
    ImageU8 img(height, width, channels);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < channels; ++c) {
                std::uint64_t h = mix64(seed, (static_cast<std::uint64_t>(y) << 24) ^
                                                  (static_cast<std::uint64_t>(x) << 4) ^
                                                  static_cast<std::uint64_t>(c));
                img.at(y, x, c) = static_cast<std::uint8_t>(h & 0xFF);
            }
    return img;
}

inline ImageU8 rect_mask(int height, int width, int y0, int x0, int h, int w) {
    ImageU8 mask(height, width, 1, 0);
    for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x) mask.at(y, x) = 1;
    return mask;
}

inline SourceSample noise_source(const std::string& id, int height, int width,
                                 std::uint64_t seed, int my0, int mx0, int mh, int mw) {
    SourceSample s;
    s.id = id;
    s.image = noise_image(height, width, seed);
    s.mask = rect_mask(height, width, my0, mx0, mh, mw);
    s.origin = "fixture";
    return s;
}

// Content moved right by dx and down by dy, border-replicated.
inline ImageU8 shift_image(const ImageU8& src, int dx, int dy) {
    ImageU8 out(src.height(), src.width(), src.channels());
    for (int y = 0; y < src.height(); ++y)
        for (int x = 0; x < src.width(); ++x)
            for (int c = 0; c < src.channels(); ++c)
                out.at(y, x, c) = src.at_clamped(y - dy, x - dx, c);
    return out;
}

inline FlowField random_flow(int height, int width, Rng& rng, float scale = 10.0f) {
    FlowField f(height, width);
    for (auto& v : f.raw()) v = static_cast<float>(rng.uniform(-scale, scale));
    return f;
}

// Unique scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& tag) {
    static std::uint64_t counter = 0;
    auto dir = std::filesystem::temp_directory_path() /
               ("saliflow_test_" + tag + "_" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testsupport

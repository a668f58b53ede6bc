#pragma once

// Exhaustive integer block matching. Slow but exact and weight-free; serves
// as the built-in flow estimator so the whole pipeline runs and is testable
// without any learned model.

#include <cstdint>
#include <limits>

#include "saliflow/error.hpp"
#include "saliflow/flow_field.hpp"
#include "saliflow/image.hpp"

namespace saliflow {

// Per-pixel displacement minimizing the sum of squared differences over a
// patch x patch window (all channels), searched within +-search_radius.
// Ties resolve to the smallest |u|+|v|, then to the earliest candidate in
// raster order (dy outer, dx inner). Borders replicate.
inline FlowField block_match_flow(const ImageU8& src, const ImageU8& tgt,
                                  int search_radius, int patch) {
    if (!src.same_shape(tgt)) throw DimensionError("block_match_flow: frame size mismatch");
    if (search_radius < 1) throw ValueError("block_match_flow: search_radius must be >= 1");
    if (patch < 3 || patch % 2 == 0) throw ValueError("block_match_flow: patch must be odd >= 3");
    if (src.height() < patch || src.width() < patch)
        throw ValueError("block_match_flow: frames smaller than patch");

    const int half = patch / 2;
    const int channels = src.channels();
    FlowField flow(src.height(), src.width());

    for (int y = 0; y < src.height(); ++y) {
        for (int x = 0; x < src.width(); ++x) {
            std::int64_t best_cost = std::numeric_limits<std::int64_t>::max();
            int best_dx = 0, best_dy = 0, best_l1 = 0;
            for (int dy = -search_radius; dy <= search_radius; ++dy) {
                for (int dx = -search_radius; dx <= search_radius; ++dx) {
                    std::int64_t cost = 0;
                    for (int py = -half; py <= half; ++py) {
                        for (int px = -half; px <= half; ++px) {
                            for (int c = 0; c < channels; ++c) {
                                int a = src.at_clamped(y + py, x + px, c);
                                int b = tgt.at_clamped(y + dy + py, x + dx + px, c);
                                int d = a - b;
                                cost += static_cast<std::int64_t>(d) * d;
                            }
                        }
                        if (cost > best_cost) break;
                    }
                    int l1 = std::abs(dx) + std::abs(dy);
                    if (cost < best_cost || (cost == best_cost && l1 < best_l1)) {
                        best_cost = cost;
                        best_dx = dx;
                        best_dy = dy;
                        best_l1 = l1;
                    }
                }
            }
            flow.u(y, x) = static_cast<float>(best_dx);
            flow.v(y, x) = static_cast<float>(best_dy);
        }
    }
    return flow;
}

}  // namespace saliflow

#pragma once

// Flow visualization on the usual color wheel: hue encodes direction
// (atan2(v, u)), saturation encodes magnitude. Zero flow renders white.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "saliflow/error.hpp"
#include "saliflow/flow_field.hpp"
#include "saliflow/image.hpp"

namespace saliflow {

namespace detail {

// hue in [0, 360), s and v in [0, 1].
inline void hsv_to_rgb(double hue, double s, double v, double rgb[3]) {
    double c = v * s;
    double hp = hue / 60.0;
    double xcomp = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1)      { r = c; g = xcomp; }
    else if (hp < 2) { r = xcomp; g = c; }
    else if (hp < 3) { g = c; b = xcomp; }
    else if (hp < 4) { g = xcomp; b = c; }
    else if (hp < 5) { r = xcomp; b = c; }
    else             { r = c; b = xcomp; }
    double m = v - c;
    rgb[0] = r + m;
    rgb[1] = g + m;
    rgb[2] = b + m;
}

}  // namespace detail

// 99th-percentile flow magnitude (nearest-rank); normalization default.
inline double flow_magnitude_percentile(const FlowField& flow, double pct = 0.99) {
    std::vector<float> mags;
    mags.reserve(static_cast<std::size_t>(flow.height()) * flow.width());
    for (int y = 0; y < flow.height(); ++y)
        for (int x = 0; x < flow.width(); ++x) mags.push_back(flow.magnitude(y, x));
    std::size_t k = static_cast<std::size_t>(
        std::llround(pct * static_cast<double>(mags.size() - 1)));
    std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k), mags.end());
    return mags[k];
}

inline ImageU8 colorize_flow(const FlowField& flow,
                             std::optional<double> max_magnitude = std::nullopt) {
    if (!flow.all_finite()) throw ValueError("colorize_flow: non-finite flow");
    double norm = max_magnitude.value_or(flow_magnitude_percentile(flow));
    ImageU8 out(flow.height(), flow.width(), 3, 255);
    if (norm <= 0.0) return out;  // degenerate all-zero field: all white
    for (int y = 0; y < flow.height(); ++y)
        for (int x = 0; x < flow.width(); ++x) {
            double u = flow.u(y, x), v = flow.v(y, x);
            double mag = std::hypot(u, v);
            double hue = std::atan2(v, u) * (180.0 / 3.14159265358979323846);
            if (hue < 0) hue += 360.0;
            if (hue >= 360.0) hue = 0.0;
            double sat = std::clamp(mag / norm, 0.0, 1.0);
            double rgb[3];
            detail::hsv_to_rgb(hue, sat, 1.0, rgb);
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = static_cast<std::uint8_t>(
                    std::clamp(std::lround(rgb[c] * 255.0), 0l, 255l));
        }
    return out;
}

// Recover the hue angle (degrees in [0,360)) of an RGB pixel; NaN when the
// pixel is achromatic. Used by diagnostics and tests.
inline double rgb_hue_degrees(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) {
    double r = r8 / 255.0, g = g8 / 255.0, b = b8 / 255.0;
    double mx = std::max({r, g, b}), mn = std::min({r, g, b});
    double c = mx - mn;
    if (c <= 0.0) return std::nan("");
    double hp;
    if (mx == r)      hp = std::fmod((g - b) / c, 6.0);
    else if (mx == g) hp = (b - r) / c + 2.0;
    else              hp = (r - g) / c + 4.0;
    double hue = 60.0 * hp;
    if (hue < 0) hue += 360.0;
    return hue;
}

}  // namespace saliflow

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "saliflow/error.hpp"

namespace saliflow {

// Dense optical flow, pixel units, aligned to the source frame: a pixel at
// (x, y) in the source appears at (x + u, y + v) in the target. Storage is
// row-major interleaved (u, v) float pairs, matching the on-disk format
// bit for bit.
class FlowField {
public:
    FlowField() = default;
    FlowField(int height, int width)
        : height_(height), width_(width),
          data_(static_cast<std::size_t>(height) * width * 2, 0.0f) {
        if (height <= 0 || width <= 0)
            throw ValueError("flow field dimensions must be positive");
    }

    int height() const { return height_; }
    int width() const { return width_; }
    bool empty() const { return data_.empty(); }

    float& u(int y, int x) { return data_[idx(y, x)]; }
    float& v(int y, int x) { return data_[idx(y, x) + 1]; }
    const float& u(int y, int x) const { return data_[idx(y, x)]; }
    const float& v(int y, int x) const { return data_[idx(y, x) + 1]; }

    float magnitude(int y, int x) const { return std::hypot(u(y, x), v(y, x)); }

    std::vector<float>& raw() { return data_; }
    const std::vector<float>& raw() const { return data_; }

    bool same_shape(const FlowField& o) const {
        return height_ == o.height_ && width_ == o.width_;
    }
    bool operator==(const FlowField& o) const {
        return same_shape(o) && data_ == o.data_;
    }

    bool all_finite() const {
        for (float f : data_)
            if (!std::isfinite(f)) return false;
        return true;
    }

    static FlowField constant(int height, int width, float u, float v) {
        FlowField f(height, width);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                f.u(y, x) = u;
                f.v(y, x) = v;
            }
        return f;
    }

private:
    std::size_t idx(int y, int x) const {
        return (static_cast<std::size_t>(y) * width_ + x) * 2;
    }

    int height_ = 0, width_ = 0;
    std::vector<float> data_;
};

// Spatial resize of a flow field. Displacement vectors are rescaled by the
// resolution ratio so they stay in units of destination pixels.
inline FlowField resize_flow(const FlowField& src, int out_h, int out_w) {
    if (src.height() == out_h && src.width() == out_w) return src;
    FlowField out(out_h, out_w);
    const double sy = static_cast<double>(src.height()) / out_h;
    const double sx = static_cast<double>(src.width()) / out_w;
    const double scale_u = static_cast<double>(out_w) / src.width();
    const double scale_v = static_cast<double>(out_h) / src.height();
    for (int y = 0; y < out_h; ++y) {
        double yy = (y + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(yy));
        double fy = yy - y0;
        for (int x = 0; x < out_w; ++x) {
            double xx = (x + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(xx));
            double fx = xx - x0;
            auto cl = [&](int yq, int xq) {
                yq = std::clamp(yq, 0, src.height() - 1);
                xq = std::clamp(xq, 0, src.width() - 1);
                return std::pair<double, double>(src.u(yq, xq), src.v(yq, xq));
            };
            auto [u00, v00] = cl(y0, x0);
            auto [u01, v01] = cl(y0, x0 + 1);
            auto [u10, v10] = cl(y0 + 1, x0);
            auto [u11, v11] = cl(y0 + 1, x0 + 1);
            double u = (1 - fy) * ((1 - fx) * u00 + fx * u01) + fy * ((1 - fx) * u10 + fx * u11);
            double v = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
            out.u(y, x) = static_cast<float>(u * scale_u);
            out.v(y, x) = static_cast<float>(v * scale_v);
        }
    }
    return out;
}

}  // namespace saliflow

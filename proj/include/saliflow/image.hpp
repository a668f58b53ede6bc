#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <vector>

#include "saliflow/error.hpp"

namespace saliflow {

// Dense row-major raster with interleaved channels. Channel count is part of
// the value: 3 for color images, 1 for masks and grayscale maps.
template <typename T>
class Image {
public:
    Image() = default;
    Image(int height, int width, int channels, T fill = T{})
        : height_(height), width_(width), channels_(channels),
          data_(static_cast<std::size_t>(height) * width * channels, fill) {
        if (height <= 0 || width <= 0 || channels <= 0)
            throw ValueError("image dimensions must be positive");
    }

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    bool empty() const { return data_.empty(); }
    std::size_t size() const { return data_.size(); }

    T& at(int y, int x, int c = 0) {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }
    const T& at(int y, int x, int c = 0) const {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }

    // Border-replicating access.
    const T& at_clamped(int y, int x, int c = 0) const {
        y = std::clamp(y, 0, height_ - 1);
        x = std::clamp(x, 0, width_ - 1);
        return at(y, x, c);
    }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& raw() { return data_; }
    const std::vector<T>& raw() const { return data_; }

    bool same_shape(const Image& o) const {
        return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
    }
    bool operator==(const Image& o) const {
        return same_shape(o) && data_ == o.data_;
    }

private:
    int height_ = 0, width_ = 0, channels_ = 0;
    std::vector<T> data_;
};

using ImageU8 = Image<std::uint8_t>;
using ImageF = Image<float>;

// Bilinear sample at fractional coordinates with border replication.
template <typename T>
inline double sample_bilinear(const Image<T>& img, double y, double x, int c) {
    int y0 = static_cast<int>(std::floor(y));
    int x0 = static_cast<int>(std::floor(x));
    double fy = y - y0, fx = x - x0;
    double v00 = img.at_clamped(y0, x0, c);
    double v01 = img.at_clamped(y0, x0 + 1, c);
    double v10 = img.at_clamped(y0 + 1, x0, c);
    double v11 = img.at_clamped(y0 + 1, x0 + 1, c);
    return (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
}

inline ImageU8 resize_bilinear(const ImageU8& src, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0) throw ValueError("resize target must be positive");
    if (src.height() == out_h && src.width() == out_w) return src;
    ImageU8 out(out_h, out_w, src.channels());
    double sy = static_cast<double>(src.height()) / out_h;
    double sx = static_cast<double>(src.width()) / out_w;
    for (int y = 0; y < out_h; ++y) {
        double yy = (y + 0.5) * sy - 0.5;
        for (int x = 0; x < out_w; ++x) {
            double xx = (x + 0.5) * sx - 0.5;
            for (int c = 0; c < src.channels(); ++c) {
                double v = sample_bilinear(src, yy, xx, c);
                out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0l, 255l));
            }
        }
    }
    return out;
}

inline ImageF resize_bilinear(const ImageF& src, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0) throw ValueError("resize target must be positive");
    if (src.height() == out_h && src.width() == out_w) return src;
    ImageF out(out_h, out_w, src.channels());
    double sy = static_cast<double>(src.height()) / out_h;
    double sx = static_cast<double>(src.width()) / out_w;
    for (int y = 0; y < out_h; ++y) {
        double yy = (y + 0.5) * sy - 0.5;
        for (int x = 0; x < out_w; ++x) {
            double xx = (x + 0.5) * sx - 0.5;
            for (int c = 0; c < src.channels(); ++c)
                out.at(y, x, c) = static_cast<float>(sample_bilinear(src, yy, xx, c));
        }
    }
    return out;
}

// Nearest-neighbor resize; used for masks so values stay binary.
inline ImageU8 resize_nearest(const ImageU8& src, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0) throw ValueError("resize target must be positive");
    if (src.height() == out_h && src.width() == out_w) return src;
    ImageU8 out(out_h, out_w, src.channels());
    double sy = static_cast<double>(src.height()) / out_h;
    double sx = static_cast<double>(src.width()) / out_w;
    for (int y = 0; y < out_h; ++y) {
        int yy = std::min(static_cast<int>((y + 0.5) * sy), src.height() - 1);
        for (int x = 0; x < out_w; ++x) {
            int xx = std::min(static_cast<int>((x + 0.5) * sx), src.width() - 1);
            for (int c = 0; c < src.channels(); ++c) out.at(y, x, c) = src.at(yy, xx, c);
        }
    }
    return out;
}

// ---- mask helpers -------------------------------------------------------
// Masks are single-channel u8 rasters with values in {0, 1}.

inline void validate_mask(const ImageU8& mask) {
    if (mask.channels() != 1) throw ValueError("mask must be single-channel");
    for (std::uint8_t v : mask.raw())
        if (v > 1) throw ValueError("mask values must be 0 or 1");
}

inline std::size_t mask_count(const ImageU8& mask) {
    std::size_t n = 0;
    for (std::uint8_t v : mask.raw()) n += v;
    return n;
}

// Square-structuring-element morphology, radius in pixels.
inline ImageU8 dilate(const ImageU8& mask, int radius) {
    ImageU8 out(mask.height(), mask.width(), 1, 0);
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x) {
            std::uint8_t v = 0;
            for (int dy = -radius; dy <= radius && !v; ++dy)
                for (int dx = -radius; dx <= radius && !v; ++dx) {
                    int yy = y + dy, xx = x + dx;
                    if (yy >= 0 && yy < mask.height() && xx >= 0 && xx < mask.width())
                        v = mask.at(yy, xx);
                }
            out.at(y, x) = v;
        }
    return out;
}

inline ImageU8 erode(const ImageU8& mask, int radius) {
    ImageU8 out(mask.height(), mask.width(), 1, 0);
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x) {
            std::uint8_t v = 1;
            for (int dy = -radius; dy <= radius && v; ++dy)
                for (int dx = -radius; dx <= radius && v; ++dx) {
                    int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= mask.height() || xx < 0 || xx >= mask.width() ||
                        !mask.at(yy, xx))
                        v = 0;
                }
            out.at(y, x) = v;
        }
    return out;
}

// Fill the masked region with the value of the nearest unmasked pixel
// (multi-source BFS, 4-connectivity; deterministic scan order).
inline ImageU8 fill_nearest(const ImageU8& image, const ImageU8& mask) {
    if (image.height() != mask.height() || image.width() != mask.width())
        throw DimensionError("fill_nearest: image/mask size mismatch");
    ImageU8 out = image;
    const int h = image.height(), w = image.width();
    std::vector<int> src(static_cast<std::size_t>(h) * w, -1);
    std::queue<int> q;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (!mask.at(y, x)) {
                src[static_cast<std::size_t>(y) * w + x] = y * w + x;
                q.push(y * w + x);
            }
    if (q.empty()) return out;  // fully masked: nothing to copy from
    const int dy[4] = {-1, 0, 0, 1};
    const int dx[4] = {0, -1, 1, 0};
    while (!q.empty()) {
        int p = q.front();
        q.pop();
        int y = p / w, x = p % w;
        for (int k = 0; k < 4; ++k) {
            int yy = y + dy[k], xx = x + dx[k];
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            std::size_t idx = static_cast<std::size_t>(yy) * w + xx;
            if (src[idx] >= 0) continue;
            src[idx] = src[static_cast<std::size_t>(y) * w + x];
            q.push(yy * w + xx);
        }
    }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (mask.at(y, x)) {
                int s = src[static_cast<std::size_t>(y) * w + x];
                for (int c = 0; c < image.channels(); ++c)
                    out.at(y, x, c) = image.at(s / w, s % w, c);
            }
    return out;
}

}  // namespace saliflow

#pragma once

#include <array>
#include <cmath>
#include <optional>

#include "saliflow/error.hpp"
#include "saliflow/flow_field.hpp"
#include "saliflow/linalg.hpp"

namespace saliflow {

// Quality statistics for a flow field. EPE terms are present only when a
// reference field is supplied. checkerboard_score measures block-patterned
// high-frequency energy: the fraction of 8x8 block-DCT energy falling in
// the highest-frequency quadrant (both indices >= 4), averaged over the u
// and v channels. Smooth or constant fields score ~0; alternating-pixel
// artifacts score near 1.
struct FlowStats {
    std::optional<double> mean_epe;
    std::optional<double> max_epe;
    double smoothness = 0.0;
    double checkerboard_score = 0.0;
};

namespace detail {

inline constexpr int kDctBlock = 8;

// Orthonormal 2D DCT-II of one 8x8 block; i/j are frequency indices.
inline void dct8x8(const double in[kDctBlock][kDctBlock], double out[kDctBlock][kDctBlock]) {
    constexpr double pi = 3.14159265358979323846;
    for (int i = 0; i < kDctBlock; ++i) {
        for (int j = 0; j < kDctBlock; ++j) {
            double sum = 0.0;
            for (int y = 0; y < kDctBlock; ++y)
                for (int x = 0; x < kDctBlock; ++x)
                    sum += in[y][x] *
                           std::cos((2 * y + 1) * i * pi / (2.0 * kDctBlock)) *
                           std::cos((2 * x + 1) * j * pi / (2.0 * kDctBlock));
            double ci = (i == 0) ? std::sqrt(1.0 / kDctBlock) : std::sqrt(2.0 / kDctBlock);
            double cj = (j == 0) ? std::sqrt(1.0 / kDctBlock) : std::sqrt(2.0 / kDctBlock);
            out[i][j] = ci * cj * sum;
        }
    }
}

// Energy split for one channel over all full 8x8 blocks.
inline void dct_energy(const FlowField& flow, bool channel_v, double& high, double& total) {
    high = 0.0;
    total = 0.0;
    const int by = flow.height() / kDctBlock;
    const int bx = flow.width() / kDctBlock;
    double block[kDctBlock][kDctBlock];
    double coeff[kDctBlock][kDctBlock];
    for (int b = 0; b < by; ++b) {
        for (int a = 0; a < bx; ++a) {
            for (int y = 0; y < kDctBlock; ++y)
                for (int x = 0; x < kDctBlock; ++x)
                    block[y][x] = channel_v ? flow.v(b * kDctBlock + y, a * kDctBlock + x)
                                            : flow.u(b * kDctBlock + y, a * kDctBlock + x);
            dct8x8(block, coeff);
            for (int i = 0; i < kDctBlock; ++i)
                for (int j = 0; j < kDctBlock; ++j) {
                    double e = coeff[i][j] * coeff[i][j];
                    total += e;
                    if (i >= kDctBlock / 2 && j >= kDctBlock / 2) high += e;
                }
        }
    }
}

}  // namespace detail

inline double checkerboard_score(const FlowField& flow) {
    double score = 0.0;
    for (int ch = 0; ch < 2; ++ch) {
        double high = 0.0, total = 0.0;
        detail::dct_energy(flow, ch == 1, high, total);
        score += (total > 0.0) ? high / total : 0.0;
    }
    return score / 2.0;
}

// Mean joint gradient magnitude of (u, v), forward differences over the
// valid (H-1)x(W-1) interior.
inline double flow_smoothness(const FlowField& flow) {
    if (flow.height() < 2 || flow.width() < 2) return 0.0;
    double acc = 0.0;
    std::size_t n = 0;
    for (int y = 0; y + 1 < flow.height(); ++y)
        for (int x = 0; x + 1 < flow.width(); ++x) {
            double gxu = flow.u(y, x + 1) - flow.u(y, x);
            double gyu = flow.u(y + 1, x) - flow.u(y, x);
            double gxv = flow.v(y, x + 1) - flow.v(y, x);
            double gyv = flow.v(y + 1, x) - flow.v(y, x);
            acc += std::sqrt(gxu * gxu + gyu * gyu + gxv * gxv + gyv * gyv);
            ++n;
        }
    return acc / static_cast<double>(n);
}

inline FlowStats flow_stats(const FlowField& flow,
                            const FlowField* gt = nullptr) {
    FlowStats stats;
    if (gt) {
        if (!flow.same_shape(*gt)) throw DimensionError("flow_stats: gt dimension mismatch");
        double sum = 0.0, mx = 0.0;
        for (int y = 0; y < flow.height(); ++y)
            for (int x = 0; x < flow.width(); ++x) {
                double du = flow.u(y, x) - gt->u(y, x);
                double dv = flow.v(y, x) - gt->v(y, x);
                double epe = std::sqrt(du * du + dv * dv);
                sum += epe;
                mx = std::max(mx, epe);
            }
        stats.mean_epe = sum / (static_cast<double>(flow.height()) * flow.width());
        stats.max_epe = mx;
    }
    stats.smoothness = flow_smoothness(flow);
    stats.checkerboard_score = checkerboard_score(flow);
    return stats;
}

// Maximum per-pixel distance between the field and its least-squares best
// global affine fit u ~ a*x + b*y + c (per component). Globally uniform
// motion (pure affine warps) scores ~0; object-shaped motion scores high.
inline double affine_fit_residual(const FlowField& flow) {
    const int h = flow.height(), w = flow.width();
    // normal equations over basis (x, y, 1)
    double sxx = 0, sxy = 0, sx = 0, syy = 0, sy = 0, s1 = 0;
    double bu[3] = {0, 0, 0}, bv[3] = {0, 0, 0};
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            sxx += static_cast<double>(x) * x;
            sxy += static_cast<double>(x) * y;
            sx += x;
            syy += static_cast<double>(y) * y;
            sy += y;
            s1 += 1;
            bu[0] += static_cast<double>(x) * flow.u(y, x);
            bu[1] += static_cast<double>(y) * flow.u(y, x);
            bu[2] += flow.u(y, x);
            bv[0] += static_cast<double>(x) * flow.v(y, x);
            bv[1] += static_cast<double>(y) * flow.v(y, x);
            bv[2] += flow.v(y, x);
        }
    std::vector<std::vector<double>> m = {{sxx, sxy, sx}, {sxy, syy, sy}, {sx, sy, s1}};
    std::vector<double> cu, cv;
    try {
        cu = detail::solve_linear(m, {bu[0], bu[1], bu[2]});
        cv = detail::solve_linear(m, {bv[0], bv[1], bv[2]});
    } catch (const ValueError&) {
        // degenerate geometry (1-pixel row/column): fit the constant field
        cu = {0.0, 0.0, bu[2] / s1};
        cv = {0.0, 0.0, bv[2] / s1};
    }
    double residual = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double ru = flow.u(y, x) - (cu[0] * x + cu[1] * y + cu[2]);
            double rv = flow.v(y, x) - (cv[0] * x + cv[1] * y + cv[2]);
            residual = std::max(residual, std::hypot(ru, rv));
        }
    return residual;
}

// Mean endpoint error restricted to mask-selected pixels (mask value 1).
template <typename MaskImage>
inline double masked_mean_epe(const FlowField& flow, const FlowField& gt,
                              const MaskImage& mask) {
    if (!flow.same_shape(gt)) throw DimensionError("masked_mean_epe: dimension mismatch");
    if (mask.height() != flow.height() || mask.width() != flow.width())
        throw DimensionError("masked_mean_epe: mask dimension mismatch");
    double sum = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < flow.height(); ++y)
        for (int x = 0; x < flow.width(); ++x) {
            if (!mask.at(y, x)) continue;
            double du = flow.u(y, x) - gt.u(y, x);
            double dv = flow.v(y, x) - gt.v(y, x);
            sum += std::sqrt(du * du + dv * dv);
            ++n;
        }
    return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace saliflow

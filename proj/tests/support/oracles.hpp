#pragma once

// Independent brute-force re-implementations used as oracles. These follow
// the metric definitions step by step on explicitly materialized regions,
// deliberately sharing no code with the library implementations.

#include <array>
#include <cmath>
#include <vector>

#include "saliflow/image.hpp"

namespace oracle {

constexpr double kEps = 2.220446049250313e-16;

struct Raster {
    int h = 0, w = 0;
    std::vector<double> v;
    double& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
    double at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
};

inline Raster to_raster(const saliflow::ImageF& img) {
    Raster r;
    r.h = img.height();
    r.w = img.width();
    r.v.assign(img.raw().begin(), img.raw().end());
    return r;
}

inline Raster to_raster(const saliflow::ImageU8& img) {
    Raster r;
    r.h = img.height();
    r.w = img.width();
    r.v.reserve(img.raw().size());
    for (auto b : img.raw()) r.v.push_back(static_cast<double>(b));
    return r;
}

inline double mean(const Raster& r) {
    double s = 0;
    for (double x : r.v) s += x;
    return s / static_cast<double>(r.v.size());
}

// ---- S-measure -----------------------------------------------------------

inline double object_similarity(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    double m = 0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    double var = 0;
    for (double x : xs) var += (x - m) * (x - m);
    double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
    return 2.0 * m / (m * m + 1.0 + sd + kEps);
}

inline double s_object_oracle(const Raster& pred, const Raster& gt) {
    std::vector<double> fg, bg;
    for (int y = 0; y < gt.h; ++y)
        for (int x = 0; x < gt.w; ++x)
            (gt.at(y, x) > 0.5 ? fg : bg).push_back(gt.at(y, x) > 0.5 ? pred.at(y, x)
                                                                      : 1.0 - pred.at(y, x));
    double u = mean(gt);
    return u * object_similarity(fg) + (1.0 - u) * object_similarity(bg);
}

inline Raster crop(const Raster& r, int y0, int y1, int x0, int x1) {
    Raster out;
    out.h = y1 - y0;
    out.w = x1 - x0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) out.v.push_back(r.at(y, x));
    return out;
}

inline double region_similarity(const Raster& pred, const Raster& gt) {
    const double n = static_cast<double>(pred.v.size());
    if (n <= 0) return 1.0;
    double mx = mean(pred), my = mean(gt);
    double vx = 0, vy = 0, cxy = 0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
        vx += (pred.v[i] - mx) * (pred.v[i] - mx);
        vy += (gt.v[i] - my) * (gt.v[i] - my);
        cxy += (pred.v[i] - mx) * (gt.v[i] - my);
    }
    vx /= n - 1 + kEps;
    vy /= n - 1 + kEps;
    cxy /= n - 1 + kEps;
    double a = 4.0 * mx * my * cxy;
    double b = (mx * mx + my * my) * (vx + vy);
    if (a != 0.0) return a / (b + kEps);
    return b == 0.0 ? 1.0 : 0.0;
}

inline double s_region_oracle(const Raster& pred, const Raster& gt) {
    double total = 0, sx = 0, sy = 0;
    for (int y = 0; y < gt.h; ++y)
        for (int x = 0; x < gt.w; ++x)
            if (gt.at(y, x) > 0.5) {
                total += 1;
                sx += x + 1;
                sy += y + 1;
            }
    int cx = total > 0 ? static_cast<int>(std::lround(sx / total))
                       : static_cast<int>(std::lround(gt.w / 2.0));
    int cy = total > 0 ? static_cast<int>(std::lround(sy / total))
                       : static_cast<int>(std::lround(gt.h / 2.0));
    const double area = static_cast<double>(gt.h) * gt.w;
    std::array<Raster, 4> preds = {crop(pred, 0, cy, 0, cx), crop(pred, 0, cy, cx, gt.w),
                                   crop(pred, cy, gt.h, 0, cx), crop(pred, cy, gt.h, cx, gt.w)};
    std::array<Raster, 4> gts = {crop(gt, 0, cy, 0, cx), crop(gt, 0, cy, cx, gt.w),
                                 crop(gt, cy, gt.h, 0, cx), crop(gt, cy, gt.h, cx, gt.w)};
    std::array<double, 4> weights = {static_cast<double>(cx) * cy / area,
                                     static_cast<double>(gt.w - cx) * cy / area,
                                     static_cast<double>(cx) * (gt.h - cy) / area, 0.0};
    weights[3] = 1.0 - weights[0] - weights[1] - weights[2];
    double q = 0;
    for (int i = 0; i < 4; ++i) q += weights[static_cast<std::size_t>(i)] *
                                     region_similarity(preds[static_cast<std::size_t>(i)],
                                                       gts[static_cast<std::size_t>(i)]);
    return q;
}

inline double s_measure_oracle(const saliflow::ImageF& predf, const saliflow::ImageU8& gtu) {
    Raster pred = to_raster(predf);
    Raster gt = to_raster(gtu);
    double y = mean(gt);
    if (y == 0.0) return 1.0 - mean(pred);
    if (y == 1.0) return mean(pred);
    double q = 0.5 * s_object_oracle(pred, gt) + 0.5 * s_region_oracle(pred, gt);
    if (q < 0.0) q = 0.0;
    if (q > 1.0) q = 1.0;
    return q;
}

// ---- F-measure -----------------------------------------------------------

struct FOracle {
    std::array<double, 256> f{};
    double fmax = 0, fmean = 0, fadaptive = 0;
};

inline double f_at_threshold(const Raster& pred, const Raster& gt, double threshold,
                             double beta_sq) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
        bool p = pred.v[i] >= threshold;
        bool g = gt.v[i] > 0.5;
        tp += p && g;
        fp += p && !g;
        fn += !p && g;
    }
    double precision = tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0;
    double recall = tp + fn > 0 ? double(tp) / double(tp + fn) : 0.0;
    double denom = beta_sq * precision + recall;
    return denom > 0 ? (1 + beta_sq) * precision * recall / denom : 0.0;
}

inline FOracle f_measure_oracle(const saliflow::ImageF& predf, const saliflow::ImageU8& gtu,
                                double beta_sq = 0.3) {
    Raster pred = to_raster(predf);
    Raster gt = to_raster(gtu);
    FOracle out;
    double sum = 0;
    for (int i = 0; i < 256; ++i) {
        double f = f_at_threshold(pred, gt, (i + 0.5) / 256.0, beta_sq);
        out.f[static_cast<std::size_t>(i)] = f;
        out.fmax = std::max(out.fmax, f);
        sum += f;
    }
    out.fmean = sum / 256.0;
    double adaptive = std::min(2.0 * mean(pred), 1.0);
    out.fadaptive = f_at_threshold(pred, gt, adaptive, beta_sq);
    return out;
}

inline double mae_oracle(const saliflow::ImageF& predf, const saliflow::ImageU8& gtu) {
    Raster pred = to_raster(predf);
    Raster gt = to_raster(gtu);
    double s = 0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) s += std::fabs(pred.v[i] - gt.v[i]);
    return s / static_cast<double>(pred.v.size());
}

// ---- chi-square ------------------------------------------------------------

// Regularized upper incomplete gamma Q(a, x) (series / continued fraction),
// good to ~1e-10 for the small arguments used here.
inline double gamma_q(double a, double x) {
    if (x < 0 || a <= 0) return 1.0;
    if (x == 0) return 1.0;
    auto gln = std::lgamma(a);
    if (x < a + 1.0) {
        // series for P(a,x)
        double ap = a, sum = 1.0 / a, del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
        }
        double p = sum * std::exp(-x + a * std::log(x) - gln);
        return 1.0 - p;
    }
    // continued fraction for Q(a,x)
    double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
    for (int i = 1; i < 500; ++i) {
        double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::fabs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - gln) * h;
}

// p-value for a chi-square statistic with k degrees of freedom.
inline double chi_square_pvalue(double statistic, int dof) {
    return gamma_q(dof / 2.0, statistic / 2.0);
}

}  // namespace oracle

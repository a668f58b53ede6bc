#pragma once

// Saliency evaluation: S-measure (object- plus region-aware structural
// similarity), thresholded F-measure, and mean absolute error, aggregated
// per video and per dataset.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "saliflow/error.hpp"
#include "saliflow/image.hpp"

namespace saliflow {

inline constexpr int kFMeasureThresholds = 256;
inline constexpr double kFMeasureBetaSq = 0.3;

namespace detail {

inline constexpr double kEps = 2.220446049250313e-16;

inline void check_pred_gt(const ImageF& pred, const ImageU8& gt) {
    if (pred.channels() != 1 || gt.channels() != 1)
        throw ValueError("metrics: pred and gt must be single-channel");
    if (pred.height() != gt.height() || pred.width() != gt.width())
        throw DimensionError("metrics: pred/gt shape mismatch");
    for (float v : pred.raw())
        if (!(v >= 0.0f && v <= 1.0f))
            throw ValueError("metrics: prediction values must lie in [0,1]");
}

inline double mean_of(const ImageF& img) {
    double s = 0.0;
    for (float v : img.raw()) s += v;
    return s / static_cast<double>(img.raw().size());
}

// Object-level similarity of `pred` against a region selected by `sel`:
// 2*mean / (mean^2 + 1 + stddev), with the sample standard deviation.
inline double object_score(const ImageF& pred, const ImageU8& gt, bool foreground) {
    double sum = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < gt.height(); ++y)
        for (int x = 0; x < gt.width(); ++x)
            if ((gt.at(y, x) != 0) == foreground) {
                sum += foreground ? pred.at(y, x) : 1.0 - pred.at(y, x);
                ++n;
            }
    if (n == 0) return 0.0;
    double mean = sum / static_cast<double>(n);
    double var = 0.0;
    for (int y = 0; y < gt.height(); ++y)
        for (int x = 0; x < gt.width(); ++x)
            if ((gt.at(y, x) != 0) == foreground) {
                double d = (foreground ? pred.at(y, x) : 1.0 - pred.at(y, x)) - mean;
                var += d * d;
            }
    double sd = n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;
    return 2.0 * mean / (mean * mean + 1.0 + sd + kEps);
}

inline double s_object(const ImageF& pred, const ImageU8& gt) {
    double u = 0.0;
    for (std::uint8_t v : gt.raw()) u += v;
    u /= static_cast<double>(gt.raw().size());
    return u * object_score(pred, gt, true) + (1.0 - u) * object_score(pred, gt, false);
}

// Region similarity of one sub-rectangle [y0,y1) x [x0,x1).
inline double region_ssim(const ImageF& pred, const ImageU8& gt, int y0, int y1, int x0, int x1) {
    const std::int64_t n = static_cast<std::int64_t>(y1 - y0) * (x1 - x0);
    if (n <= 0) return 1.0;  // empty quadrant carries zero weight anyway
    double mx = 0.0, my = 0.0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            mx += pred.at(y, x);
            my += gt.at(y, x);
        }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double vx = 0.0, vy = 0.0, cxy = 0.0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            double dx = pred.at(y, x) - mx;
            double dy = static_cast<double>(gt.at(y, x)) - my;
            vx += dx * dx;
            vy += dy * dy;
            cxy += dx * dy;
        }
    vx /= static_cast<double>(n - 1) + kEps;
    vy /= static_cast<double>(n - 1) + kEps;
    cxy /= static_cast<double>(n - 1) + kEps;
    const double a = 4.0 * mx * my * cxy;
    const double b = (mx * mx + my * my) * (vx + vy);
    if (a != 0.0) return a / (b + kEps);
    return (b == 0.0) ? 1.0 : 0.0;
}

inline double s_region(const ImageF& pred, const ImageU8& gt) {
    const int h = gt.height(), w = gt.width();
    // gt centroid in 1-based coordinates; quadrant split point.
    double total = 0.0, sx = 0.0, sy = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (gt.at(y, x)) {
                total += 1.0;
                sx += x + 1;
                sy += y + 1;
            }
    int cx, cy;
    if (total == 0.0) {
        cx = static_cast<int>(std::lround(w / 2.0));
        cy = static_cast<int>(std::lround(h / 2.0));
    } else {
        cx = static_cast<int>(std::lround(sx / total));
        cy = static_cast<int>(std::lround(sy / total));
    }
    const double area = static_cast<double>(h) * w;
    const double w1 = (static_cast<double>(cx) * cy) / area;              // left-top
    const double w2 = (static_cast<double>(w - cx) * cy) / area;          // right-top
    const double w3 = (static_cast<double>(cx) * (h - cy)) / area;        // left-bottom
    const double w4 = 1.0 - w1 - w2 - w3;                                 // right-bottom
    return w1 * region_ssim(pred, gt, 0, cy, 0, cx) +
           w2 * region_ssim(pred, gt, 0, cy, cx, w) +
           w3 * region_ssim(pred, gt, cy, h, 0, cx) +
           w4 * region_ssim(pred, gt, cy, h, cx, w);
}

}  // namespace detail

// Structural similarity S = alpha*S_o + (1-alpha)*S_r, clamped to [0,1].
// Degenerate ground truths use the definitional limits: all-background maps
// to 1 - mean(pred), all-foreground to mean(pred).
inline double s_measure(const ImageF& pred, const ImageU8& gt, double alpha = 0.5) {
    detail::check_pred_gt(pred, gt);
    validate_mask(gt);
    double gt_mean = 0.0;
    for (std::uint8_t v : gt.raw()) gt_mean += v;
    gt_mean /= static_cast<double>(gt.raw().size());
    if (gt_mean == 0.0) return 1.0 - detail::mean_of(pred);
    if (gt_mean == 1.0) return detail::mean_of(pred);
    // definitional limit: a prediction identical to the mask has perfect
    // structure; the eps-guarded formulas below land within ~1e-15 of 1
    bool exact = true;
    for (std::size_t i = 0; i < pred.raw().size() && exact; ++i)
        exact = pred.raw()[i] == static_cast<float>(gt.raw()[i]);
    if (exact) return 1.0;
    double q = alpha * detail::s_object(pred, gt) + (1.0 - alpha) * detail::s_region(pred, gt);
    return std::clamp(q, 0.0, 1.0);
}

enum class FProtocol { max, mean, adaptive };

inline const char* to_string(FProtocol p) {
    switch (p) {
        case FProtocol::max: return "max";
        case FProtocol::mean: return "mean";
        case FProtocol::adaptive: return "adaptive";
    }
    return "unknown";
}

struct FMeasureResult {
    std::array<double, kFMeasureThresholds> precision{};
    std::array<double, kFMeasureThresholds> recall{};
    std::array<double, kFMeasureThresholds> f{};
    double f_max = 0.0;
    double f_mean = 0.0;
    double f_adaptive = 0.0;

    double value(FProtocol protocol) const {
        switch (protocol) {
            case FProtocol::max: return f_max;
            case FProtocol::mean: return f_mean;
            case FProtocol::adaptive: return f_adaptive;
        }
        return f_max;
    }
};

namespace detail {

inline double f_from_pr(double p, double r) {
    const double denom = kFMeasureBetaSq * p + r;
    if (denom <= 0.0) return 0.0;
    return (1.0 + kFMeasureBetaSq) * p * r / denom;
}

inline void confusion_at(const ImageF& pred, const ImageU8& gt, double threshold,
                         double& precision, double& recall) {
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (int y = 0; y < gt.height(); ++y)
        for (int x = 0; x < gt.width(); ++x) {
            const bool p = pred.at(y, x) >= threshold;
            const bool g = gt.at(y, x) != 0;
            if (p && g) ++tp;
            else if (p && !g) ++fp;
            else if (!p && g) ++fn;
        }
    precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
}

}  // namespace detail

// Precision/recall over 256 evenly spaced thresholds placed at the bin
// midpoints (i + 0.5)/256, so a binarized prediction is scored identically
// at every threshold. The adaptive protocol thresholds at 2*mean(pred).
inline FMeasureResult f_measure(const ImageF& pred, const ImageU8& gt) {
    detail::check_pred_gt(pred, gt);
    validate_mask(gt);
    FMeasureResult result;
    double f_sum = 0.0;
    for (int i = 0; i < kFMeasureThresholds; ++i) {
        const double threshold = (i + 0.5) / kFMeasureThresholds;
        double p = 0.0, r = 0.0;
        detail::confusion_at(pred, gt, threshold, p, r);
        result.precision[static_cast<std::size_t>(i)] = p;
        result.recall[static_cast<std::size_t>(i)] = r;
        const double f = detail::f_from_pr(p, r);
        result.f[static_cast<std::size_t>(i)] = f;
        result.f_max = std::max(result.f_max, f);
        f_sum += f;
    }
    result.f_mean = f_sum / kFMeasureThresholds;
    double pa = 0.0, ra = 0.0;
    detail::confusion_at(pred, gt, std::min(2.0 * detail::mean_of(pred), 1.0), pa, ra);
    result.f_adaptive = detail::f_from_pr(pa, ra);
    return result;
}

inline double f_measure_value(const ImageF& pred, const ImageU8& gt,
                              FProtocol protocol = FProtocol::max) {
    return f_measure(pred, gt).value(protocol);
}

inline double mae(const ImageF& pred, const ImageU8& gt) {
    detail::check_pred_gt(pred, gt);
    double s = 0.0;
    for (int y = 0; y < gt.height(); ++y)
        for (int x = 0; x < gt.width(); ++x)
            s += std::fabs(pred.at(y, x) - static_cast<double>(gt.at(y, x)));
    return s / (static_cast<double>(gt.height()) * gt.width());
}

// ---- aggregation -------------------------------------------------------------

struct MetricTriple {
    double s = 0.0;
    double f = 0.0;
    double m = 0.0;
};

struct VideoMetrics {
    std::string video;
    int n_frames = 0;
    MetricTriple mean;
};

struct DatasetMetrics {
    std::string dataset;
    std::string f_protocol = "max";
    std::vector<VideoMetrics> videos;
    MetricTriple mean;
};

// Table-layout report: one block per dataset plus the unweighted
// cross-dataset average; S/F/M reported x100.
struct MetricReport {
    std::vector<DatasetMetrics> datasets;
    MetricTriple average;
    std::string f_protocol = "max";

    void refresh_average() {
        average = MetricTriple{};
        if (datasets.empty()) return;
        for (const auto& d : datasets) {
            average.s += d.mean.s;
            average.f += d.mean.f;
            average.m += d.mean.m;
        }
        const double n = static_cast<double>(datasets.size());
        average.s /= n;
        average.f /= n;
        average.m /= n;
    }
};

inline MetricTriple frame_metrics(const ImageF& pred, const ImageU8& gt,
                                  FProtocol protocol = FProtocol::max) {
    MetricTriple t;
    t.s = s_measure(pred, gt);
    t.f = f_measure(pred, gt).value(protocol);
    t.m = mae(pred, gt);
    return t;
}

}  // namespace saliflow

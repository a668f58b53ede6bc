#pragma once

// Affine + thin-plate-spline warping used by the geometric clip generator.

#include <array>
#include <cmath>
#include <vector>

#include "saliflow/error.hpp"
#include "saliflow/image.hpp"
#include "saliflow/linalg.hpp"
#include "saliflow/rng.hpp"

namespace saliflow {

// 2x3 affine map y = A x + b acting on (x, y) pixel coordinates.
struct Affine2D {
    // row-major 2x2
    double a00 = 1, a01 = 0, a10 = 0, a11 = 1;
    double bx = 0, by = 0;

    double det() const { return a00 * a11 - a01 * a10; }

    std::array<double, 2> apply(double x, double y) const {
        return {a00 * x + a01 * y + bx, a10 * x + a11 * y + by};
    }

    Affine2D inverse() const {
        double d = det();
        if (std::fabs(d) < 1e-6) throw ValueError("affine is singular");
        Affine2D inv;
        inv.a00 = a11 / d;
        inv.a01 = -a01 / d;
        inv.a10 = -a10 / d;
        inv.a11 = a00 / d;
        inv.bx = -(inv.a00 * bx + inv.a01 * by);
        inv.by = -(inv.a10 * bx + inv.a11 * by);
        return inv;
    }

    // rotation/scale/shear about a center point, plus translation.
    static Affine2D compose(double rotation, double scale, double shear,
                            double tx, double ty, double cx, double cy) {
        double cr = std::cos(rotation), sr = std::sin(rotation);
        // M = S * Shear * R
        double r00 = cr, r01 = -sr, r10 = sr, r11 = cr;
        double h00 = r00 + shear * r10, h01 = r01 + shear * r11;
        double h10 = r10, h11 = r11;
        Affine2D m;
        m.a00 = scale * h00;
        m.a01 = scale * h01;
        m.a10 = scale * h10;
        m.a11 = scale * h11;
        m.bx = cx - (m.a00 * cx + m.a01 * cy) + tx;
        m.by = cy - (m.a10 * cx + m.a11 * cy) + ty;
        return m;
    }
};

// Thin-plate spline displacement field interpolating per-control-point
// displacements with the U(r) = r^2 log r kernel plus an affine part.
class ThinPlateSpline {
public:
    // control points and their displacement vectors (dx, dy), both in pixels.
    ThinPlateSpline(std::vector<std::array<double, 2>> points,
                    const std::vector<std::array<double, 2>>& displacements)
        : points_(std::move(points)) {
        const std::size_t n = points_.size();
        if (n < 3) throw ValueError("tps: need at least 3 control points");
        if (displacements.size() != n) throw ValueError("tps: point/displacement count mismatch");
        std::vector<std::vector<double>> m(n + 3, std::vector<double>(n + 3, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j)
                m[i][j] = kernel(dist(points_[i], points_[j]));
            m[i][n] = 1.0;
            m[i][n + 1] = points_[i][0];
            m[i][n + 2] = points_[i][1];
            m[n][i] = 1.0;
            m[n + 1][i] = points_[i][0];
            m[n + 2][i] = points_[i][1];
        }
        for (int comp = 0; comp < 2; ++comp) {
            std::vector<double> rhs(n + 3, 0.0);
            for (std::size_t i = 0; i < n; ++i) rhs[i] = displacements[i][comp];
            weights_[comp] = detail::solve_linear(m, rhs);
        }
    }

    std::array<double, 2> displacement(double x, double y) const {
        const std::size_t n = points_.size();
        std::array<double, 2> d{};
        for (int comp = 0; comp < 2; ++comp) {
            const auto& w = weights_[comp];
            double s = w[n] + w[n + 1] * x + w[n + 2] * y;
            for (std::size_t i = 0; i < n; ++i)
                s += w[i] * kernel(dist(points_[i], {x, y}));
            d[comp] = s;
        }
        return d;
    }

    static std::vector<std::array<double, 2>> grid_points(int grid, int width, int height) {
        if (grid < 2) throw ValueError("tps: grid must be >= 2");
        std::vector<std::array<double, 2>> pts;
        pts.reserve(static_cast<std::size_t>(grid) * grid);
        for (int j = 0; j < grid; ++j)
            for (int i = 0; i < grid; ++i)
                pts.push_back({static_cast<double>(i) * (width - 1) / (grid - 1),
                               static_cast<double>(j) * (height - 1) / (grid - 1)});
        return pts;
    }

private:
    static double dist(const std::array<double, 2>& a, const std::array<double, 2>& b) {
        return std::hypot(a[0] - b[0], a[1] - b[1]);
    }
    static double kernel(double r) { return r > 0.0 ? r * r * std::log(r) : 0.0; }

    std::vector<std::array<double, 2>> points_;
    std::array<std::vector<double>, 2> weights_;
};

}  // namespace saliflow

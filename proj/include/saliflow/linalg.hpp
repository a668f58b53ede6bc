#pragma once

#include <cmath>
#include <vector>

#include "saliflow/error.hpp"

namespace saliflow {
namespace detail {

// Gaussian elimination with partial pivoting; small dense systems only.
inline std::vector<double> solve_linear(std::vector<std::vector<double>> m,
                                        std::vector<double> rhs) {
    const std::size_t n = m.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::fabs(m[r][col]) > std::fabs(m[pivot][col])) pivot = r;
        if (std::fabs(m[pivot][col]) < 1e-12)
            throw ValueError("solve_linear: singular system");
        std::swap(m[col], m[pivot]);
        std::swap(rhs[col], rhs[pivot]);
        for (std::size_t r = col + 1; r < n; ++r) {
            double f = m[r][col] / m[col][col];
            for (std::size_t c = col; c < n; ++c) m[r][c] -= f * m[col][c];
            rhs[r] -= f * rhs[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (std::size_t i = n; i-- > 0;) {
        double s = rhs[i];
        for (std::size_t c = i + 1; c < n; ++c) s -= m[i][c] * x[c];
        x[i] = s / m[i][i];
    }
    return x;
}

}  // namespace detail
}  // namespace saliflow

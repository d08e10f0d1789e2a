#pragma once

// Independent top-singular-value oracle: plain power iteration on
// W^T W, run to convergence. Used to cross-check the library's
// normalization without sharing its code path.

#include <cmath>
#include <vector>

namespace ctxot::testing {

inline double top_singular_value_oracle(const std::vector<double>& w, size_t rows, size_t cols,
                                        int max_iters = 10000, double tol = 1e-13) {
    std::vector<double> x(cols, 1.0);
    double nx = std::sqrt(static_cast<double>(cols));
    for (double& v : x) v /= nx;
    double prev = 0.0;
    std::vector<double> y(rows, 0.0);
    for (int it = 0; it < max_iters; ++it) {
        for (size_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * x[c];
            y[r] = acc;
        }
        for (size_t c = 0; c < cols; ++c) {
            double acc = 0.0;
            for (size_t r = 0; r < rows; ++r) acc += w[r * cols + c] * y[r];
            x[c] = acc;
        }
        double norm = 0.0;
        for (double v : x) norm += v * v;
        norm = std::sqrt(norm);
        if (norm == 0.0) return 0.0;
        for (double& v : x) v /= norm;
        double sigma = std::sqrt(norm);
        if (std::abs(sigma - prev) < tol * std::max(1.0, sigma)) return sigma;
        prev = sigma;
    }
    return prev;
}

}  // namespace ctxot::testing

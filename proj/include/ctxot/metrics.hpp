#pragma once

#include <string>
#include <vector>

#include "ctxot/image.hpp"

namespace ctxot {

// 10 * log10(peak^2 / MSE) over all pixels and channels; identical images
// return the +infinity sentinel.
double psnr(const Image& a, const Image& b, double peak = 1.0);

// Mean structural similarity over valid 11x11 windows of the luminance
// plane (0.299 R + 0.587 G + 0.114 B), Gaussian window sigma 1.5,
// K1 = 0.01, K2 = 0.03, dynamic range 1.
double ssim(const Image& a, const Image& b);

struct MetricRow {
    std::string name;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

// Per-image rows (sorted by name) plus aggregate mean / standard
// deviation. Infinite PSNR rows propagate IEEE semantics into the
// aggregates (mean becomes inf, deviation nan).
struct MetricReport {
    std::vector<MetricRow> rows;
    double psnr_mean = 0.0, psnr_stddev = 0.0;
    double ssim_mean = 0.0, ssim_stddev = 0.0;

    static MetricReport build(std::vector<MetricRow> rows);
    std::string to_csv() const;  // name,psnr_db,ssim with a final AGGREGATE row
};

double median(std::vector<double> values);

}  // namespace ctxot

#include "ctxot/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "ctxot/errors.hpp"

namespace ctxot {

double psnr(const Image& a, const Image& b, double peak) {
    if (!a.same_shape(b)) {
        throw DimensionError("psnr: image shapes differ (" + std::to_string(a.height) + "x" +
                             std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                             std::to_string(b.width) + ")");
    }
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a.pixels[i] - b.pixels[i];
        acc += d * d;
    }
    double mse = acc / static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2, L = 1
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> luminance(const Image& img) {
    std::vector<double> out(img.height * img.width);
    if (img.channels == 3) {
        for (size_t y = 0; y < img.height; ++y) {
            for (size_t x = 0; x < img.width; ++x) {
                out[y * img.width + x] = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) +
                                         0.114 * img.at(y, x, 2);
            }
        }
    } else {
        for (size_t i = 0; i < out.size(); ++i) out[i] = img.pixels[i * img.channels];
    }
    return out;
}

const std::vector<double>& gaussian_window() {
    static std::vector<double> w = [] {
        std::vector<double> v(kWindow * kWindow);
        double total = 0.0;
        for (int y = 0; y < kWindow; ++y) {
            for (int x = 0; x < kWindow; ++x) {
                double dy = y - (kWindow - 1) / 2.0;
                double dx = x - (kWindow - 1) / 2.0;
                double g = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
                v[y * kWindow + x] = g;
                total += g;
            }
        }
        for (double& g : v) g /= total;
        return v;
    }();
    return w;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
    if (!a.same_shape(b)) {
        throw DimensionError("ssim: image shapes differ");
    }
    if (a.height < kWindow || a.width < kWindow) {
        throw DimensionError("ssim: image " + std::to_string(a.height) + "x" +
                             std::to_string(a.width) + " is smaller than the " +
                             std::to_string(kWindow) + "-pixel window");
    }
    std::vector<double> la = luminance(a);
    std::vector<double> lb = luminance(b);
    const std::vector<double>& win = gaussian_window();

    size_t oh = a.height - kWindow + 1;
    size_t ow = a.width - kWindow + 1;
    double acc = 0.0;
    for (size_t y = 0; y < oh; ++y) {
        for (size_t x = 0; x < ow; ++x) {
            double mx = 0.0, my = 0.0, mxx = 0.0, myy = 0.0, mxy = 0.0;
            for (int wy = 0; wy < kWindow; ++wy) {
                const double* ra = la.data() + (y + wy) * a.width + x;
                const double* rb = lb.data() + (y + wy) * a.width + x;
                const double* ww = win.data() + wy * kWindow;
                for (int wx = 0; wx < kWindow; ++wx) {
                    double va = ra[wx], vb = rb[wx], w = ww[wx];
                    mx += w * va;
                    my += w * vb;
                    mxx += w * (va * va);
                    myy += w * (vb * vb);
                    mxy += w * (va * vb);  // grouped so swapping inputs is bit-exact
                }
            }
            double vx = mxx - mx * mx;
            double vy = myy - my * my;
            double cxy = mxy - mx * my;
            double num = (2.0 * mx * my + kC1) * (2.0 * cxy + kC2);
            double den = (mx * mx + my * my + kC1) * (vx + vy + kC2);
            acc += num / den;
        }
    }
    return acc / static_cast<double>(oh * ow);
}

MetricReport MetricReport::build(std::vector<MetricRow> rows) {
    std::sort(rows.begin(), rows.end(),
              [](const MetricRow& a, const MetricRow& b) { return a.name < b.name; });
    MetricReport report;
    report.rows = std::move(rows);
    if (report.rows.empty()) return report;

    double n = static_cast<double>(report.rows.size());
    double ps = 0.0, ss = 0.0;
    for (const MetricRow& r : report.rows) {
        ps += r.psnr_db;
        ss += r.ssim;
    }
    report.psnr_mean = ps / n;
    report.ssim_mean = ss / n;
    double pv = 0.0, sv = 0.0;
    for (const MetricRow& r : report.rows) {
        pv += (r.psnr_db - report.psnr_mean) * (r.psnr_db - report.psnr_mean);
        sv += (r.ssim - report.ssim_mean) * (r.ssim - report.ssim_mean);
    }
    report.psnr_stddev = std::sqrt(pv / n);
    report.ssim_stddev = std::sqrt(sv / n);
    return report;
}

namespace {

std::string format_metric(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

std::string MetricReport::to_csv() const {
    std::string out = "name,psnr_db,ssim\n";
    for (const MetricRow& r : rows) {
        out += r.name + "," + format_metric(r.psnr_db) + "," + format_metric(r.ssim) + "\n";
    }
    out += "AGGREGATE," + format_metric(psnr_mean) + "," + format_metric(ssim_mean) + "\n";
    return out;
}

double median(std::vector<double> values) {
    if (values.empty()) throw ArgumentError("median: empty input");
    std::sort(values.begin(), values.end());
    size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace ctxot

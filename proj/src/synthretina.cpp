#include "ctxot/synthretina.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ctxot/errors.hpp"
#include "ctxot/rng.hpp"

namespace ctxot {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool power_of_two(size_t v) { return v >= 1 && (v & (v - 1)) == 0; }

void validate(const RetinaSpec& spec) {
    if (!power_of_two(spec.size) || spec.size < 32) {
        throw ArgumentError("retina: size must be a power of two >= 32, got " +
                            std::to_string(spec.size));
    }
    if (spec.vessel_depth < 1) throw ArgumentError("retina: vessel depth must be >= 1");
    if (spec.fov_radius <= 0.0 || spec.fov_radius > 0.5) {
        throw ArgumentError("retina: field-of-view radius fraction must lie in (0, 0.5]");
    }
}

// Stamps a multiplicative darkening disk; vessels stay darker than any
// background they cover.
void stamp_vessel(Image& img, double cx, double cy, double radius, double strength) {
    long n = static_cast<long>(img.height);
    long x0 = std::max(0L, static_cast<long>(std::floor(cx - radius - 1)));
    long x1 = std::min(n - 1, static_cast<long>(std::ceil(cx + radius + 1)));
    long y0 = std::max(0L, static_cast<long>(std::floor(cy - radius - 1)));
    long y1 = std::min(n - 1, static_cast<long>(std::ceil(cy + radius + 1)));
    double r2 = radius * radius;
    for (long y = y0; y <= y1; ++y) {
        for (long x = x0; x <= x1; ++x) {
            double dx = x - cx, dy = y - cy;
            double d2 = dx * dx + dy * dy;
            if (d2 > r2) continue;
            double fall = 1.0 - d2 / (r2 + 1e-12);
            double keep = 1.0 - strength * fall;
            // Green and blue drop harder than red, so vessels stay reddish.
            img.at(y, x, 0) *= (keep + 0.18 * (1.0 - keep));
            img.at(y, x, 1) *= keep * 0.85;
            img.at(y, x, 2) *= keep * 0.85;
        }
    }
}

struct VesselWalker {
    Image& img;
    Rng& rng;
    double size;
    int max_depth;
    std::vector<VesselPoint>* trace;

    void walk(double x, double y, double angle, double width, int level) {
        if (level > max_depth || width < 0.5) return;
        int steps = static_cast<int>(size * (0.30 * std::pow(0.82, level)));
        double step = 1.6;
        for (int i = 0; i < steps; ++i) {
            angle += rng.uniform(-0.28, 0.28);
            x += step * std::cos(angle);
            y += step * std::sin(angle);
            if (x < 1 || y < 1 || x > size - 2 || y > size - 2) return;
            stamp_vessel(img, x, y, width, 0.62);
            if (trace && i % 2 == 0) trace->push_back({x, y, level, width});
        }
        double spread = rng.uniform(0.35, 0.75);
        double w = width * rng.uniform(0.68, 0.8);
        walk(x, y, angle - spread, w, level + 1);
        walk(x, y, angle + spread, w, level + 1);
    }
};

}  // namespace

Image generate_retina(const RetinaSpec& spec) { return generate_retina(spec, nullptr); }

Image generate_retina(const RetinaSpec& spec, RetinaTrace* trace) {
    validate(spec);
    size_t n = spec.size;
    double half = n / 2.0 - 0.5;
    double fov = spec.fov_radius * n;

    Rng root(spec.seed);
    Rng rng_shade = root.substream("shade");
    Rng rng_disc = root.substream("disc");
    Rng rng_vessel = root.substream("vessels");

    Image img(n, n, 3, 0.0);

    // Background: radial falloff with a mild seeded angular wobble.
    double wobble_phase = rng_shade.uniform(0.0, 2.0 * kPi);
    double wobble_amp = rng_shade.uniform(0.02, 0.08);
    for (size_t y = 0; y < n; ++y) {
        for (size_t x = 0; x < n; ++x) {
            double dx = x - half, dy = y - half;
            double r = std::sqrt(dx * dx + dy * dy);
            if (r > fov) continue;
            double a = std::atan2(dy, dx);
            double shade = 1.0 - 0.38 * (r / fov) * (r / fov) +
                           wobble_amp * std::sin(2.0 * a + wobble_phase);
            shade = std::min(1.0, std::max(0.15, shade));
            img.at(y, x, 0) = spec.tint_r * shade;
            img.at(y, x, 1) = spec.tint_g * shade;
            img.at(y, x, 2) = spec.tint_b * shade;
        }
    }

    // Optic disc: a bright blob offset from center.
    double disc_angle = rng_disc.uniform(0.0, 2.0 * kPi);
    double disc_dist = rng_disc.uniform(0.35, 0.6) * fov;
    double dcx = half + disc_dist * std::cos(disc_angle);
    double dcy = half + disc_dist * std::sin(disc_angle);
    double dr = spec.disc_radius * n;
    for (size_t y = 0; y < n; ++y) {
        for (size_t x = 0; x < n; ++x) {
            double dx = x - half, dy = y - half;
            if (dx * dx + dy * dy > fov * fov) continue;
            double ddx = x - dcx, ddy = y - dcy;
            double g = std::exp(-(ddx * ddx + ddy * ddy) / (2.0 * (dr / 1.6) * (dr / 1.6)));
            img.at(y, x, 0) = std::min(1.0, img.at(y, x, 0) + 0.22 * g);
            img.at(y, x, 1) = std::min(1.0, img.at(y, x, 1) + 0.46 * g);
            img.at(y, x, 2) = std::min(1.0, img.at(y, x, 2) + 0.38 * g);
        }
    }

    if (trace) {
        trace->centerline.clear();
        trace->background = img;
    }

    // Vessel tree: trunks leave the disc at seeded angles.
    int trunks = static_cast<int>(rng_vessel.uniform_int(2, 4));
    double base_width = std::max(1.0, spec.vessel_base_width * n);
    VesselWalker walker{img, rng_vessel, static_cast<double>(n), spec.vessel_depth,
                        trace ? &trace->centerline : nullptr};
    for (int t = 0; t < trunks; ++t) {
        double a = rng_vessel.uniform(0.0, 2.0 * kPi);
        walker.walk(dcx, dcy, a, base_width, 1);
    }

    // Field-of-view mask last: outside stays exactly zero.
    for (size_t y = 0; y < n; ++y) {
        for (size_t x = 0; x < n; ++x) {
            double dx = x - half, dy = y - half;
            if (std::sqrt(dx * dx + dy * dy) > fov) {
                img.at(y, x, 0) = 0.0;
                img.at(y, x, 1) = 0.0;
                img.at(y, x, 2) = 0.0;
            }
        }
    }
    img.clamp01();
    if (trace) {
        // Drop centerline samples the mask removed.
        std::vector<VesselPoint> kept;
        for (const VesselPoint& p : trace->centerline) {
            double dx = p.x - half, dy = p.y - half;
            if (std::sqrt(dx * dx + dy * dy) <= fov - 1.5) kept.push_back(p);
        }
        trace->centerline = std::move(kept);
    }
    return img;
}

std::string DatasetManifest::to_csv() const {
    std::string out = "file,seed\n";
    for (const auto& [file, seed] : entries) {
        out += file + "," + std::to_string(seed) + "\n";
    }
    return out;
}

DatasetManifest generate_retina_dataset(size_t count, const RetinaSpec& spec,
                                        const std::string& out_dir) {
    if (count < 1) throw ArgumentError("retina dataset: count must be >= 1");
    validate(spec);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (!std::filesystem::is_directory(out_dir)) {
        throw IoError("retina dataset: cannot create directory " + out_dir);
    }
    DatasetManifest manifest;
    for (size_t i = 0; i < count; ++i) {
        RetinaSpec one = spec;
        one.seed = spec.seed + i;
        char name[32];
        std::snprintf(name, sizeof(name), "img_%04zu.ppm", i);
        write_ppm((std::filesystem::path(out_dir) / name).string(), generate_retina(one));
        manifest.entries.emplace_back(name, one.seed);
    }
    std::ofstream mf(std::filesystem::path(out_dir) / "manifest.csv",
                     std::ios::binary | std::ios::trunc);
    if (!mf) throw IoError("retina dataset: cannot write manifest in " + out_dir);
    mf << manifest.to_csv();
    return manifest;
}

}  // namespace ctxot

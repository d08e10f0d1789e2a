#include "ctxot/degrade.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ctxot/config.hpp"
#include "ctxot/errors.hpp"
#include "ctxot/rng.hpp"

namespace ctxot {

void DegradeConfig::validate() const {
    auto range = [](double lo, double hi, const char* what) {
        if (!(lo <= hi)) {
            throw ArgumentError(std::string("degrade config: empty range for ") + what);
        }
    };
    range(illumination.gain_lo, illumination.gain_hi, "illumination gain");
    range(illumination.bias_lo, illumination.bias_hi, "illumination bias");
    range(illumination.sigma_lo, illumination.sigma_hi, "halo sigma");
    range(blur.sigma_lo, blur.sigma_hi, "blur sigma");
    range(spots.radius_lo, spots.radius_hi, "spot radius");
    range(spots.peak_lo, spots.peak_hi, "spot peak");
    if (illumination.center_jitter < 0.0 || illumination.center_jitter > 0.25) {
        throw ArgumentError("degrade config: halo center jitter must lie in [0, 0.25]");
    }
    if (spots.count_lo < 1 || spots.count_hi < spots.count_lo) {
        throw ArgumentError("degrade config: spot count range is invalid");
    }
    if (blur.sigma_lo <= 0.0) throw ArgumentError("degrade config: blur sigma must be positive");
}

std::string DegradeConfig::serialize() const {
    KvConfig kv;
    kv.set_u64("seed", seed);
    kv.set_bool("illumination.enabled", illumination.enabled);
    kv.set_double("illumination.gain_lo", illumination.gain_lo);
    kv.set_double("illumination.gain_hi", illumination.gain_hi);
    kv.set_double("illumination.bias_lo", illumination.bias_lo);
    kv.set_double("illumination.bias_hi", illumination.bias_hi);
    kv.set_double("illumination.center_jitter", illumination.center_jitter);
    kv.set_double("illumination.sigma_lo", illumination.sigma_lo);
    kv.set_double("illumination.sigma_hi", illumination.sigma_hi);
    kv.set_bool("blur.enabled", blur.enabled);
    kv.set_double("blur.sigma_lo", blur.sigma_lo);
    kv.set_double("blur.sigma_hi", blur.sigma_hi);
    kv.set_bool("spots.enabled", spots.enabled);
    kv.set_int("spots.count_lo", spots.count_lo);
    kv.set_int("spots.count_hi", spots.count_hi);
    kv.set_double("spots.radius_lo", spots.radius_lo);
    kv.set_double("spots.radius_hi", spots.radius_hi);
    kv.set_double("spots.peak_lo", spots.peak_lo);
    kv.set_double("spots.peak_hi", spots.peak_hi);
    return kv.serialize();
}

DegradeConfig DegradeConfig::parse(const std::string& text) {
    KvConfig kv = KvConfig::parse(text);
    DegradeConfig cfg;
    cfg.seed = kv.get_u64_or("seed", cfg.seed);
    cfg.illumination.enabled = kv.get_bool_or("illumination.enabled", cfg.illumination.enabled);
    cfg.illumination.gain_lo = kv.get_double_or("illumination.gain_lo", cfg.illumination.gain_lo);
    cfg.illumination.gain_hi = kv.get_double_or("illumination.gain_hi", cfg.illumination.gain_hi);
    cfg.illumination.bias_lo = kv.get_double_or("illumination.bias_lo", cfg.illumination.bias_lo);
    cfg.illumination.bias_hi = kv.get_double_or("illumination.bias_hi", cfg.illumination.bias_hi);
    cfg.illumination.center_jitter =
        kv.get_double_or("illumination.center_jitter", cfg.illumination.center_jitter);
    cfg.illumination.sigma_lo = kv.get_double_or("illumination.sigma_lo", cfg.illumination.sigma_lo);
    cfg.illumination.sigma_hi = kv.get_double_or("illumination.sigma_hi", cfg.illumination.sigma_hi);
    cfg.blur.enabled = kv.get_bool_or("blur.enabled", cfg.blur.enabled);
    cfg.blur.sigma_lo = kv.get_double_or("blur.sigma_lo", cfg.blur.sigma_lo);
    cfg.blur.sigma_hi = kv.get_double_or("blur.sigma_hi", cfg.blur.sigma_hi);
    cfg.spots.enabled = kv.get_bool_or("spots.enabled", cfg.spots.enabled);
    cfg.spots.count_lo = static_cast<int>(kv.get_int_or("spots.count_lo", cfg.spots.count_lo));
    cfg.spots.count_hi = static_cast<int>(kv.get_int_or("spots.count_hi", cfg.spots.count_hi));
    cfg.spots.radius_lo = kv.get_double_or("spots.radius_lo", cfg.spots.radius_lo);
    cfg.spots.radius_hi = kv.get_double_or("spots.radius_hi", cfg.spots.radius_hi);
    cfg.spots.peak_lo = kv.get_double_or("spots.peak_lo", cfg.spots.peak_lo);
    cfg.spots.peak_hi = kv.get_double_or("spots.peak_hi", cfg.spots.peak_hi);
    cfg.validate();
    return cfg;
}

DegradeConfig DegradeConfig::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("degrade config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

void DegradeConfig::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("degrade config: cannot write " + path);
    out << serialize();
}

std::string AppliedDegradation::serialize() const {
    KvConfig kv;
    kv.set_u64("seed", seed);
    kv.set_bool("identity_warning", identity_warning);
    kv.set_bool("illumination.applied", illumination);
    if (illumination) {
        kv.set_double("illumination.gain", gain);
        kv.set_double("illumination.bias", bias);
        kv.set_double("illumination.halo_cx", halo_cx);
        kv.set_double("illumination.halo_cy", halo_cy);
        kv.set_double("illumination.halo_sigma", halo_sigma);
    }
    kv.set_bool("blur.applied", blurred);
    if (blurred) kv.set_double("blur.sigma", blur_sigma);
    kv.set_bool("spots.applied", spotted);
    if (spotted) {
        kv.set_int("spots.count", static_cast<int64_t>(spots.size()));
        for (size_t i = 0; i < spots.size(); ++i) {
            std::string p = "spots." + std::to_string(i) + ".";
            kv.set_double(p + "x", spots[i].x);
            kv.set_double(p + "y", spots[i].y);
            kv.set_double(p + "radius", spots[i].radius);
            kv.set_double(p + "peak", spots[i].peak);
        }
    }
    return kv.serialize();
}

Image gaussian_blur(const Image& image, double sigma) {
    if (sigma <= 0.0) throw ArgumentError("blur: sigma must be positive");
    int half = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * half + 1);
    double total = 0.0;
    for (int i = -half; i <= half; ++i) {
        double v = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        kernel[i + half] = v;
        total += v;
    }
    for (double& v : kernel) v /= total;

    long h = static_cast<long>(image.height), w = static_cast<long>(image.width);
    size_t ch = image.channels;
    Image mid(image.height, image.width, ch, 0.0);
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            for (size_t c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (int k = -half; k <= half; ++k) {
                    long xx = x + k;
                    if (xx < 0 || xx >= w) continue;  // zero padding
                    acc += kernel[k + half] * image.at(y, xx, c);
                }
                mid.at(y, x, c) = acc;
            }
        }
    }
    Image out(image.height, image.width, ch, 0.0);
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            for (size_t c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (int k = -half; k <= half; ++k) {
                    long yy = y + k;
                    if (yy < 0 || yy >= h) continue;
                    acc += kernel[k + half] * mid.at(yy, x, c);
                }
                out.at(y, x, c) = acc;
            }
        }
    }
    return out;
}

DegradeResult degrade(const Image& image, const DegradeConfig& cfg) {
    cfg.validate();
    if (!image.in_range(1e-9)) {
        throw InputError("degrade: input pixels must lie in [0, 1]");
    }
    double mind = static_cast<double>(std::min(image.height, image.width));
    Rng root(cfg.seed);

    AppliedDegradation applied;
    applied.seed = cfg.seed;

    if (!cfg.illumination.enabled && !cfg.blur.enabled && !cfg.spots.enabled) {
        applied.identity_warning = true;
        return {image, applied};
    }

    Image out = image;

    if (cfg.illumination.enabled) {
        Rng rng = root.substream("illumination");
        applied.illumination = true;
        applied.gain = rng.uniform(cfg.illumination.gain_lo, cfg.illumination.gain_hi);
        applied.bias = rng.uniform(cfg.illumination.bias_lo, cfg.illumination.bias_hi);
        double jx = rng.uniform(-cfg.illumination.center_jitter, cfg.illumination.center_jitter);
        double jy = rng.uniform(-cfg.illumination.center_jitter, cfg.illumination.center_jitter);
        applied.halo_cx = image.width / 2.0 + jx * mind;
        applied.halo_cy = image.height / 2.0 + jy * mind;
        applied.halo_sigma =
            rng.uniform(cfg.illumination.sigma_lo, cfg.illumination.sigma_hi) * mind;
        double two_s2 = 2.0 * applied.halo_sigma * applied.halo_sigma;
        for (size_t y = 0; y < out.height; ++y) {
            for (size_t x = 0; x < out.width; ++x) {
                double dx = x - applied.halo_cx, dy = y - applied.halo_cy;
                double halo = std::exp(-(dx * dx + dy * dy) / two_s2);  // unit peak at center
                for (size_t c = 0; c < out.channels; ++c) {
                    double v = applied.gain * out.at(y, x, c) * halo + applied.bias;
                    out.at(y, x, c) = std::min(1.0, std::max(0.0, v));
                }
            }
        }
    }

    if (cfg.blur.enabled) {
        Rng rng = root.substream("blur");
        applied.blurred = true;
        applied.blur_sigma = rng.uniform(cfg.blur.sigma_lo, cfg.blur.sigma_hi);
        out = gaussian_blur(out, applied.blur_sigma);
    }

    if (cfg.spots.enabled) {
        Rng rng = root.substream("spots");
        applied.spotted = true;
        int count = static_cast<int>(rng.uniform_int(cfg.spots.count_lo, cfg.spots.count_hi));
        for (int s = 0; s < count; ++s) {
            AppliedDegradation::Spot spot;
            spot.x = rng.uniform(0.0, static_cast<double>(image.width));
            spot.y = rng.uniform(0.0, static_cast<double>(image.height));
            spot.radius = rng.uniform(cfg.spots.radius_lo, cfg.spots.radius_hi) * mind;
            spot.peak = rng.uniform(cfg.spots.peak_lo, cfg.spots.peak_hi);
            applied.spots.push_back(spot);
            double half_r = spot.radius / 2.0;
            double two_s2 = 2.0 * half_r * half_r;
            for (size_t y = 0; y < out.height; ++y) {
                for (size_t x = 0; x < out.width; ++x) {
                    double dx = x - spot.x, dy = y - spot.y;
                    double add = spot.peak * std::exp(-(dx * dx + dy * dy) / two_s2);
                    for (size_t c = 0; c < out.channels; ++c) {
                        out.at(y, x, c) = std::min(1.0, out.at(y, x, c) + add);
                    }
                }
            }
        }
    }

    out.clamp01();
    return {std::move(out), std::move(applied)};
}

std::vector<SuiteVariant> degrade_suite(const Image& image, uint64_t seed) {
    struct Combo {
        const char* name;
        bool illum, blur, spots;
    };
    const Combo combos[6] = {
        {"illum", true, false, false},         {"blur", false, true, false},
        {"spots", false, false, true},         {"illum_blur", true, true, false},
        {"illum_spots", true, false, true},    {"illum_blur_spots", true, true, true},
    };
    std::vector<SuiteVariant> out;
    out.reserve(6);
    for (const Combo& combo : combos) {
        DegradeConfig cfg;
        cfg.seed = seed;
        cfg.illumination.enabled = combo.illum;
        cfg.blur.enabled = combo.blur;
        cfg.spots.enabled = combo.spots;
        DegradeResult result = degrade(image, cfg);
        out.push_back({combo.name, std::move(result.image), std::move(result.applied)});
    }
    return out;
}

}  // namespace ctxot

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctxot/image.hpp"

namespace ctxot {

// Parameter ranges for the three degradation families. Each family draws
// from its own sub-stream of (seed, family tag), so toggling one family
// never perturbs another's samples. Pipeline order is illumination, then
// blur, then spots.
struct DegradeConfig {
    uint64_t seed = 0;

    struct Illumination {
        bool enabled = true;
        double gain_lo = 0.4, gain_hi = 1.1;
        double bias_lo = -0.15, bias_hi = 0.15;
        double center_jitter = 0.25;          // fraction of min(H, W), per axis
        double sigma_lo = 0.3, sigma_hi = 0.7;  // fraction of min(H, W)
    } illumination;

    struct Blur {
        bool enabled = true;
        double sigma_lo = 0.5, sigma_hi = 3.0;  // pixels
    } blur;

    struct Spots {
        bool enabled = true;
        int count_lo = 1, count_hi = 5;
        double radius_lo = 0.05, radius_hi = 0.15;  // fraction of min(H, W)
        double peak_lo = 0.3, peak_hi = 0.9;
    } spots;

    std::string serialize() const;
    static DegradeConfig parse(const std::string& text);
    static DegradeConfig load(const std::string& path);
    void save(const std::string& path) const;
    void validate() const;
};

// The exact values sampled for one degraded image; written as the
// INI-style sidecar so a run is reproducible.
struct AppliedDegradation {
    uint64_t seed = 0;
    bool identity_warning = false;  // every family was disabled

    bool illumination = false;
    double gain = 0.0, bias = 0.0;
    double halo_cx = 0.0, halo_cy = 0.0, halo_sigma = 0.0;

    bool blurred = false;
    double blur_sigma = 0.0;

    struct Spot {
        double x = 0.0, y = 0.0, radius = 0.0, peak = 0.0;
    };
    bool spotted = false;
    std::vector<Spot> spots;

    std::string serialize() const;
};

struct DegradeResult {
    Image image;
    AppliedDegradation applied;
};

DegradeResult degrade(const Image& image, const DegradeConfig& cfg);

// The six canonical combinations: illum, blur, spots, illum_blur,
// illum_spots, illum_blur_spots; all share one seed schedule.
struct SuiteVariant {
    std::string name;
    Image image;
    AppliedDegradation applied;
};
std::vector<SuiteVariant> degrade_suite(const Image& image, uint64_t seed);

// Separable Gaussian blur, kernel half-width ceil(3 sigma), zero padding.
Image gaussian_blur(const Image& image, double sigma);

}  // namespace ctxot

#include <cmath>
#include <cstring>

#include "ctxot/degrade.hpp"
#include "ctxot/metrics.hpp"
#include "ctxot/rng.hpp"
#include "ctxot/synthretina.hpp"
#include "doctest.h"

using namespace ctxot;

TEST_SUITE_BEGIN("degrade");

namespace {

Image clean_retina(uint64_t seed, size_t size = 32) {
    RetinaSpec spec;
    spec.size = size;
    spec.seed = seed;
    return generate_retina(spec);
}

// Full 2-D convolution with the same truncated-Gaussian kernel; the
// library uses separable passes, so this is an independent route.
Image blur_oracle(const Image& img, double sigma) {
    int half = static_cast<int>(std::ceil(3.0 * sigma));
    int n = 2 * half + 1;
    std::vector<double> k1(n);
    double total = 0.0;
    for (int i = -half; i <= half; ++i) {
        k1[i + half] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        total += k1[i + half];
    }
    for (double& v : k1) v /= total;
    Image out(img.height, img.width, img.channels, 0.0);
    long h = static_cast<long>(img.height), w = static_cast<long>(img.width);
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            for (size_t c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int ky = -half; ky <= half; ++ky) {
                    for (int kx = -half; kx <= half; ++kx) {
                        long yy = y + ky, xx = x + kx;
                        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                        acc += k1[ky + half] * k1[kx + half] * img.at(yy, xx, c);
                    }
                }
                out.at(y, x, c) = acc;
            }
        }
    }
    return out;
}

}  // namespace

TEST_CASE("disabling every family returns the input unchanged with a warning") {
    Image img = clean_retina(1);
    DegradeConfig cfg;
    cfg.illumination.enabled = false;
    cfg.blur.enabled = false;
    cfg.spots.enabled = false;
    DegradeResult r = degrade(img, cfg);
    CHECK(r.applied.identity_warning);
    CHECK(std::memcmp(r.image.pixels.data(), img.pixels.data(),
                      img.size() * sizeof(double)) == 0);
}

TEST_CASE("equal image and seed degrade bit-identically") {
    Image img = clean_retina(2);
    DegradeConfig cfg;
    cfg.seed = 77;
    DegradeResult a = degrade(img, cfg);
    DegradeResult b = degrade(img, cfg);
    CHECK(std::memcmp(a.image.pixels.data(), b.image.pixels.data(),
                      a.image.size() * sizeof(double)) == 0);
    CHECK(a.applied.serialize() == b.applied.serialize());
}

TEST_CASE("out-of-range input pixels are rejected") {
    Image img(8, 8, 3, 1.5);
    CHECK_THROWS_AS(degrade(img, DegradeConfig{}), InputError);
}

TEST_CASE("blur matches a direct 2-D convolution and conserves mass") {
    Image dot(33, 33, 3, 0.0);
    dot.at(16, 16, 0) = 1.0;
    dot.at(16, 16, 1) = 1.0;
    dot.at(16, 16, 2) = 1.0;
    Image blurred = gaussian_blur(dot, 2.0);
    Image expect = blur_oracle(dot, 2.0);
    for (size_t i = 0; i < dot.size(); ++i) {
        CHECK(blurred.pixels[i] == doctest::Approx(expect.pixels[i]).epsilon(1e-12));
    }
    CHECK(blurred.at(16, 16, 0) < 1.0);  // center strictly decreases
    double before = 0.0, after = 0.0;
    for (size_t i = 0; i < dot.size(); ++i) {
        before += dot.pixels[i];
        after += blurred.pixels[i];
    }
    CHECK(std::abs(after - before) / before < 0.01);  // boundary truncation < 1%
}

TEST_CASE("applied record mirrors the sampled pipeline") {
    Image img = clean_retina(3);
    DegradeConfig cfg;
    cfg.seed = 5;
    DegradeResult r = degrade(img, cfg);
    CHECK(r.applied.illumination);
    CHECK(r.applied.blurred);
    CHECK(r.applied.spotted);
    CHECK(r.applied.gain >= cfg.illumination.gain_lo);
    CHECK(r.applied.gain <= cfg.illumination.gain_hi);
    CHECK(r.applied.bias >= cfg.illumination.bias_lo);
    CHECK(r.applied.bias <= cfg.illumination.bias_hi);
    CHECK(r.applied.blur_sigma >= cfg.blur.sigma_lo);
    CHECK(r.applied.blur_sigma <= cfg.blur.sigma_hi);
    CHECK(r.applied.spots.size() >= static_cast<size_t>(cfg.spots.count_lo));
    CHECK(r.applied.spots.size() <= static_cast<size_t>(cfg.spots.count_hi));
    for (const auto& s : r.applied.spots) {
        CHECK(s.peak >= cfg.spots.peak_lo);
        CHECK(s.peak <= cfg.spots.peak_hi);
        CHECK(s.radius >= cfg.spots.radius_lo * 32);
        CHECK(s.radius <= cfg.spots.radius_hi * 32);
    }
    CHECK(r.image.in_range());
}

TEST_CASE("config text round trips losslessly") {
    DegradeConfig cfg;
    cfg.seed = 123;
    cfg.blur.sigma_hi = 2.7182818284590452;
    cfg.spots.enabled = false;
    DegradeConfig back = DegradeConfig::parse(cfg.serialize());
    CHECK(back.serialize() == cfg.serialize());
    CHECK(back.blur.sigma_hi == cfg.blur.sigma_hi);
    CHECK_FALSE(back.spots.enabled);
}

TEST_CASE("suite emits the six canonical variants deterministically") {
    Image img = clean_retina(4);
    std::vector<SuiteVariant> suite = degrade_suite(img, 99);
    REQUIRE(suite.size() == 6);
    CHECK(suite[0].name == "illum");
    CHECK(suite[1].name == "blur");
    CHECK(suite[2].name == "spots");
    CHECK(suite[3].name == "illum_blur");
    CHECK(suite[4].name == "illum_spots");
    CHECK(suite[5].name == "illum_blur_spots");
    std::vector<SuiteVariant> again = degrade_suite(img, 99);
    for (size_t i = 0; i < 6; ++i) {
        CHECK(std::memcmp(suite[i].image.pixels.data(), again[i].image.pixels.data(),
                          suite[i].image.size() * sizeof(double)) == 0);
    }
}

TEST_CASE("disabling spots in the combined variant reproduces illum_blur bit-exactly") {
    Image img = clean_retina(5);
    uint64_t seed = 31;
    std::vector<SuiteVariant> suite = degrade_suite(img, seed);

    DegradeConfig cfg;
    cfg.seed = seed;
    cfg.spots.enabled = false;  // start from the combined config, drop spots
    DegradeResult r = degrade(img, cfg);
    const Image& combined_minus_spots = r.image;
    const Image& illum_blur = suite[3].image;
    CHECK(std::memcmp(combined_minus_spots.pixels.data(), illum_blur.pixels.data(),
                      illum_blur.size() * sizeof(double)) == 0);
}

TEST_CASE("each family strictly reduces median PSNR on the synthetic pool") {
    std::vector<double> illum_psnr, blur_psnr, spot_psnr;
    for (uint64_t i = 0; i < 50; ++i) {
        Image clean = clean_retina(1000 + i);
        std::vector<SuiteVariant> suite = degrade_suite(clean, 2000 + i);
        illum_psnr.push_back(psnr(suite[0].image, clean));
        blur_psnr.push_back(psnr(suite[1].image, clean));
        spot_psnr.push_back(psnr(suite[2].image, clean));
        CHECK(suite[5].image.in_range());
    }
    CHECK(median(illum_psnr) < std::numeric_limits<double>::infinity());
    CHECK(median(blur_psnr) < 60.0);
    CHECK(median(spot_psnr) < 60.0);
}

TEST_CASE("combined degradations lower PSNR below illumination alone") {
    std::vector<double> illum_only, all_three;
    for (uint64_t i = 0; i < 50; ++i) {
        Image clean = clean_retina(3000 + i);
        std::vector<SuiteVariant> suite = degrade_suite(clean, 4000 + i);
        illum_only.push_back(psnr(suite[0].image, clean));
        all_three.push_back(psnr(suite[5].image, clean));
    }
    CHECK(median(all_three) <= median(illum_only));
}

TEST_SUITE_END();

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctxot/tensor.hpp"

namespace ctxot {

// H x W x C real image with values in [0, 1], row-major (y, x, channel).
// Serialization is binary portable pixmap (P6, 8-bit); the 8-bit rounding
// on write is the defined serialization semantics.
struct Image {
    size_t height = 0;
    size_t width = 0;
    size_t channels = 3;
    std::vector<double> pixels;

    Image() = default;
    Image(size_t h, size_t w, size_t c = 3, double fill = 0.0)
        : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

    double& at(size_t y, size_t x, size_t c) { return pixels[(y * width + x) * channels + c]; }
    double at(size_t y, size_t x, size_t c) const {
        return pixels[(y * width + x) * channels + c];
    }
    size_t size() const { return pixels.size(); }
    bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }

    void clamp01();
    bool in_range(double slack = 0.0) const;
};

Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);

// Round-trips an image through the 8-bit quantization without touching disk.
Image quantize8(const Image& img);

Tensor image_to_tensor(const Image& img);                      // [1, C, H, W]
Tensor images_to_batch(const std::vector<Image>& imgs);        // [B, C, H, W]
Image tensor_to_image(const Tensor& t, size_t batch_index = 0);

Image resize_bilinear(const Image& img, size_t out_h, size_t out_w);
Image center_crop_square(const Image& img);
Image center_crop_resize(const Image& img, size_t size);

uint64_t file_checksum(const std::string& path);  // FNV-1a over the raw bytes

}  // namespace ctxot

#include "ctxot/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "ctxot/errors.hpp"
#include "ctxot/rng.hpp"

namespace ctxot {

void Image::clamp01() {
    for (double& v : pixels) v = std::min(1.0, std::max(0.0, v));
}

bool Image::in_range(double slack) const {
    for (double v : pixels) {
        if (!std::isfinite(v) || v < -slack || v > 1.0 + slack) return false;
    }
    return true;
}

namespace {

// Reads one whitespace-delimited token, skipping '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

size_t parse_extent(const std::string& tok, const char* what) {
    if (tok.empty()) throw FormatError(std::string("ppm: missing ") + what);
    for (char c : tok) {
        if (!std::isdigit(static_cast<unsigned char>(c))) {
            throw FormatError(std::string("ppm: bad ") + what + ": " + tok);
        }
    }
    return static_cast<size_t>(std::stoull(tok));
}

}  // namespace

Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("ppm: cannot open " + path);
    std::string magic = next_token(in);
    if (magic != "P6") throw FormatError("ppm: bad magic in " + path);
    size_t w = parse_extent(next_token(in), "width");
    size_t h = parse_extent(next_token(in), "height");
    size_t maxval = parse_extent(next_token(in), "maxval");
    if (maxval != 255) {
        throw FormatError("ppm: unsupported maxval " + std::to_string(maxval) + " in " + path);
    }
    if (w == 0 || h == 0) throw FormatError("ppm: zero extent in " + path);

    std::vector<unsigned char> raw(h * w * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size()) {
        throw FormatError("ppm: truncated pixel data in " + path);
    }
    Image img(h, w, 3);
    for (size_t i = 0; i < raw.size(); ++i) img.pixels[i] = raw[i] / 255.0;
    return img;
}

void write_ppm(const std::string& path, const Image& img) {
    if (img.channels != 3) {
        throw DimensionError("ppm: expected 3 channels, got " + std::to_string(img.channels));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("ppm: cannot write " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raw(img.size());
    for (size_t i = 0; i < img.size(); ++i) {
        double v = std::min(1.0, std::max(0.0, img.pixels[i]));
        raw[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw IoError("ppm: write failed for " + path);
}

Image quantize8(const Image& img) {
    Image q = img;
    for (double& v : q.pixels) {
        v = std::lround(std::min(1.0, std::max(0.0, v)) * 255.0) / 255.0;
    }
    return q;
}

Tensor image_to_tensor(const Image& img) { return images_to_batch({img}); }

Tensor images_to_batch(const std::vector<Image>& imgs) {
    if (imgs.empty()) throw ArgumentError("images_to_batch: empty batch");
    size_t h = imgs[0].height, w = imgs[0].width, c = imgs[0].channels;
    Tensor t(Shape{imgs.size(), c, h, w});
    double* p = t.mutable_data();
    for (size_t b = 0; b < imgs.size(); ++b) {
        const Image& img = imgs[b];
        if (!img.same_shape(imgs[0])) {
            throw DimensionError("images_to_batch: image " + std::to_string(b) +
                                 " has a different shape");
        }
        for (size_t ch = 0; ch < c; ++ch) {
            for (size_t y = 0; y < h; ++y) {
                for (size_t x = 0; x < w; ++x) {
                    p[((b * c + ch) * h + y) * w + x] = img.at(y, x, ch);
                }
            }
        }
    }
    return t;
}

Image tensor_to_image(const Tensor& t, size_t batch_index) {
    if (t.rank() != 4) {
        throw DimensionError("tensor_to_image: expected [B,C,H,W], got shape " +
                             shape_str(t.shape()));
    }
    size_t c = t.shape()[1], h = t.shape()[2], w = t.shape()[3];
    if (batch_index >= t.shape()[0]) {
        throw ArgumentError("tensor_to_image: batch index out of range");
    }
    Image img(h, w, c);
    const double* p = t.data();
    for (size_t ch = 0; ch < c; ++ch) {
        for (size_t y = 0; y < h; ++y) {
            for (size_t x = 0; x < w; ++x) {
                img.at(y, x, ch) = p[((batch_index * c + ch) * h + y) * w + x];
            }
        }
    }
    return img;
}

Image resize_bilinear(const Image& img, size_t out_h, size_t out_w) {
    if (out_h == 0 || out_w == 0) throw ArgumentError("resize: zero output extent");
    Image out(out_h, out_w, img.channels);
    double sy = static_cast<double>(img.height) / static_cast<double>(out_h);
    double sx = static_cast<double>(img.width) / static_cast<double>(out_w);
    for (size_t y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        double cy = std::min(std::max(fy, 0.0), static_cast<double>(img.height - 1));
        size_t y0 = static_cast<size_t>(cy);
        size_t y1 = std::min(y0 + 1, img.height - 1);
        double wy = cy - static_cast<double>(y0);
        for (size_t x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            double cx = std::min(std::max(fx, 0.0), static_cast<double>(img.width - 1));
            size_t x0 = static_cast<size_t>(cx);
            size_t x1 = std::min(x0 + 1, img.width - 1);
            double wx = cx - static_cast<double>(x0);
            for (size_t c = 0; c < img.channels; ++c) {
                double top = img.at(y0, x0, c) * (1.0 - wx) + img.at(y0, x1, c) * wx;
                double bot = img.at(y1, x0, c) * (1.0 - wx) + img.at(y1, x1, c) * wx;
                out.at(y, x, c) = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return out;
}

Image center_crop_square(const Image& img) {
    size_t side = std::min(img.height, img.width);
    size_t y0 = (img.height - side) / 2;
    size_t x0 = (img.width - side) / 2;
    Image out(side, side, img.channels);
    for (size_t y = 0; y < side; ++y) {
        for (size_t x = 0; x < side; ++x) {
            for (size_t c = 0; c < img.channels; ++c) {
                out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
            }
        }
    }
    return out;
}

Image center_crop_resize(const Image& img, size_t size) {
    Image sq = center_crop_square(img);
    if (sq.height == size) return sq;
    return resize_bilinear(sq, size, size);
}

uint64_t file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checksum: cannot open " + path);
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a64(buf.data(), buf.size());
}

}  // namespace ctxot

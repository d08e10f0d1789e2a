#include "ctxot/featenc.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "ctxot/rng.hpp"

namespace ctxot {

size_t EncoderSpec::total_stride() const {
    size_t s = 1;
    for (int i = 0; i < stages; ++i) s *= static_cast<size_t>(stride);
    return s;
}

namespace {

// Gram-Schmidt over the rows; rows beyond the span are only normalized.
void orthonormalize_rows(std::vector<double>& m, size_t rows, size_t cols) {
    for (size_t r = 0; r < rows; ++r) {
        double* vr = m.data() + r * cols;
        for (size_t q = 0; q < r && q < cols; ++q) {
            const double* vq = m.data() + q * cols;
            double dot = 0.0;
            for (size_t k = 0; k < cols; ++k) dot += vr[k] * vq[k];
            for (size_t k = 0; k < cols; ++k) vr[k] -= dot * vq[k];
        }
        double sq = 0.0;
        for (size_t k = 0; k < cols; ++k) sq += vr[k] * vr[k];
        double norm = std::sqrt(sq);
        if (norm > 1e-12) {
            for (size_t k = 0; k < cols; ++k) vr[k] /= norm;
        }
    }
}

}  // namespace

Encoder::Encoder(EncoderSpec spec) : spec_(std::move(spec)) {
    if (spec_.stages < 1 || spec_.channels.size() != static_cast<size_t>(spec_.stages)) {
        throw ArgumentError("encoder: channel list must match the stage count");
    }
    if (spec_.kernel < 1 || spec_.stride < 1) {
        throw ArgumentError("encoder: kernel and stride must be >= 1");
    }
    Rng root(spec_.filter_seed);
    size_t cin = 3;
    for (int st = 0; st < spec_.stages; ++st) {
        size_t cout = spec_.channels[st];
        size_t k = static_cast<size_t>(spec_.kernel);
        size_t cols = cin * k * k;
        std::vector<double> filt(cout * cols);
        Rng rng = root.substream("stage" + std::to_string(st));
        for (double& v : filt) v = rng.normal();
        orthonormalize_rows(filt, cout, cols);
        filters_.push_back(Tensor(Shape{cout, cin, k, k}, std::move(filt)));
        cin = cout;
    }
}

FeatureSet Encoder::encode(const Tensor& image) const {
    if (image.rank() != 4 || image.shape()[0] != 1 || image.shape()[1] != 3) {
        throw DimensionError("encode: expected a [1,3,H,W] image tensor, got shape " +
                             shape_str(image.shape()));
    }
    size_t h = image.shape()[2], w = image.shape()[3];
    size_t divisor = spec_.total_stride();
    if (h % divisor != 0 || w % divisor != 0) {
        throw DimensionError("encode: spatial extents " + std::to_string(h) + "x" +
                             std::to_string(w) + " are not divisible by the pyramid stride " +
                             std::to_string(divisor));
    }

    Tensor x = image;
    int pad = (spec_.kernel - 1) / 2;
    for (const Tensor& f : filters_) {
        x = leaky_relu(conv2d(x, f, spec_.stride, pad), spec_.alpha);
    }
    size_t d = spec_.channels.back();
    size_t n = (h / divisor) * (w / divisor);
    Tensor flat = transpose2d(reshape(x, Shape{d, n}));  // [N, D]

    // Unit-normalize each row; all-zero rows stay zero and keep finite
    // gradients through the guarded norm.
    Tensor sumsq = sum_axis(square(flat), 1);
    Tensor norm = sqrt_eps(sumsq, 1e-24);
    Tensor inv = recip(add_scalar(norm, 1e-12));
    Tensor unit = mul(flat, expand_axis(inv, 1, d));
    return FeatureSet{unit};
}

FeatureSet encode(const Tensor& image, const EncoderSpec& spec) {
    return Encoder(spec).encode(image);
}

namespace {

constexpr char kMagic[4] = {'C', 'T', 'X', 'F'};

void put_u32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

uint32_t get_u32(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

void write_features(const std::string& path, const FeatureSet& fs) {
    std::string payload;
    payload.append(kMagic, 4);
    put_u32(payload, static_cast<uint32_t>(fs.count()));
    put_u32(payload, static_cast<uint32_t>(fs.dim()));
    const double* p = fs.values.data();
    for (size_t i = 0; i < fs.values.numel(); ++i) {
        float f = static_cast<float>(p[i]);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(payload, bits);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("features: cannot write " + path);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError("features: write failed for " + path);
}

FeatureSet read_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("features: cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("features: bad magic in " + path);
    }
    uint32_t n = get_u32(bytes.data() + 4);
    uint32_t d = get_u32(bytes.data() + 8);
    if (n == 0 || d == 0) throw FormatError("features: zero count or dim in " + path);
    size_t expected = 12 + static_cast<size_t>(n) * d * 4;
    if (bytes.size() != expected) {
        throw FormatError("features: payload declares " + std::to_string(n) + "x" +
                          std::to_string(d) + " but holds " +
                          std::to_string((bytes.size() - 12) / 4) + " floats");
    }
    std::vector<double> vals(static_cast<size_t>(n) * d);
    for (size_t i = 0; i < vals.size(); ++i) {
        uint32_t bits = get_u32(bytes.data() + 12 + i * 4);
        float f;
        std::memcpy(&f, &bits, 4);
        if (!std::isfinite(f)) {
            throw FormatError("features: non-finite value at index " + std::to_string(i));
        }
        vals[i] = static_cast<double>(f);
    }
    // 32-bit storage of unit rows stays well within 1e-3.
    try {
        return FeatureSet::from_tensor(Tensor(Shape{n, d}, std::move(vals)), 1e-3);
    } catch (const InputError& e) {
        throw FormatError(std::string(e.what()) + " in " + path);
    }
}

}  // namespace ctxot

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctxot/otcore.hpp"
#include "ctxot/tensor.hpp"

namespace ctxot {

// Fixed-filter convolution pyramid standing in for a pretrained feature
// extractor. Fully determined by its fields: equal specs give
// bit-identical filters, and filters within a stage are orthonormalized
// rows (unit norm, pairwise orthogonal where the count allows).
struct EncoderSpec {
    int stages = 3;
    std::vector<size_t> channels = {16, 32, 64};
    int kernel = 3;
    int stride = 2;
    double alpha = 0.2;  // leaky_relu slope
    uint64_t filter_seed = 0xc0411357u;

    size_t total_stride() const;
    bool operator==(const EncoderSpec&) const = default;
};

class Encoder {
  public:
    explicit Encoder(EncoderSpec spec);

    const EncoderSpec& spec() const { return spec_; }
    const std::vector<Tensor>& filters() const { return filters_; }

    // Runs the pyramid on a [1, 3, H, W] tensor (H, W divisible by the
    // total stride) and returns the final map flattened to N = (H/s)(W/s)
    // unit-normalized rows of dimension D = last channel count. The fixed
    // filters stay off the tape; gradients flow to the input image.
    FeatureSet encode(const Tensor& image) const;

  private:
    EncoderSpec spec_;
    std::vector<Tensor> filters_;  // detached [Cout, Cin, k, k] per stage
};

FeatureSet encode(const Tensor& image, const EncoderSpec& spec = EncoderSpec{});

// Feature file: magic "CTXF", little-endian u32 N, u32 D, then N*D
// little-endian 32-bit floats, row-major. The read path validates magic,
// payload length, and finiteness; values written from a prior read come
// back bit-for-bit.
void write_features(const std::string& path, const FeatureSet& fs);
FeatureSet read_features(const std::string& path);

}  // namespace ctxot

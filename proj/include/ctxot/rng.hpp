#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace ctxot {

// Deterministic splitmix64 generator. Unlike std distributions, every
// sampling routine here is spelled out, so equal seeds give bit-identical
// streams on every platform. Sub-streams derived from (seed, tag) are
// independent: consuming one never perturbs another.
class Rng {
  public:
    explicit Rng(uint64_t seed) : seed_(seed), state_(seed) {}

    uint64_t seed() const { return seed_; }

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi], inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(next_u64() % span);
    }

    size_t index(size_t n) { return static_cast<size_t>(next_u64() % n); }

    bool coin(double p = 0.5) { return uniform() < p; }

    // Standard normal via Box-Muller; pairs are cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Independent generator derived from this generator's seed and a tag.
    Rng substream(std::string_view tag) const {
        uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64
        for (char c : tag) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ull;
        }
        Rng mixer(seed_ ^ h);
        mixer.next_u64();
        return Rng(mixer.next_u64());
    }

    Rng substream(uint64_t n) const {
        Rng mixer(seed_ ^ (0x9e3779b97f4a7c15ull + n * 0xff51afd7ed558ccdull));
        mixer.next_u64();
        return Rng(mixer.next_u64());
    }

  private:
    uint64_t seed_;
    uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a over raw bytes; used for artifact checksums and manifest hashes.
inline uint64_t fnv1a64(const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xcbf29ce484222325ull;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace ctxot

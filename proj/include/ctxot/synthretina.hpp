#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ctxot/image.hpp"

namespace ctxot {

// Procedural fundus-like image: circular field of view over black,
// radially shaded reddish background, one bright disc, and a seeded
// recursive vessel tree.
struct RetinaSpec {
    size_t size = 64;  // H = W, power of two >= 32
    uint64_t seed = 0;
    int vessel_depth = 5;
    double vessel_base_width = 0.014;  // fraction of size
    double disc_radius = 0.09;         // fraction of size
    double tint_r = 0.82, tint_g = 0.42, tint_b = 0.21;
    double fov_radius = 0.48;  // fraction of size
};

struct VesselPoint {
    double x = 0.0, y = 0.0;
    int level = 0;
    double width = 0.0;
};

Image generate_retina(const RetinaSpec& spec);

// Also returns the sampled vessel centerline and the background as it was
// before vessels were drawn, for checks against the generator's own record.
struct RetinaTrace {
    std::vector<VesselPoint> centerline;
    Image background;  // field + disc, before vessels
};
Image generate_retina(const RetinaSpec& spec, RetinaTrace* trace);

struct DatasetManifest {
    std::vector<std::pair<std::string, uint64_t>> entries;  // (file, seed)
    std::string to_csv() const;
};

// Writes `count` images seeded spec.seed + 0 .. count-1 plus manifest.csv.
DatasetManifest generate_retina_dataset(size_t count, const RetinaSpec& spec,
                                        const std::string& out_dir);

}  // namespace ctxot

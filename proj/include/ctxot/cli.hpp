#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "ctxot/config.hpp"

namespace ctxot {

// One manifest per command run: the resolved configuration, input and
// output checksums, and wall-clock. Deterministic commands reproduce
// equal artifact checksums on equal inputs; only wall_clock_ms varies.
struct RunManifest {
    std::string command;
    KvConfig config;
    uint64_t seed = 0;
    std::vector<std::pair<std::string, uint64_t>> inputs;
    std::vector<std::pair<std::string, uint64_t>> outputs;
    double wall_clock_ms = 0.0;

    std::string serialize() const;
    void save(const std::string& path) const;
};

struct SynthOptions {
    size_t count = 1;
    size_t size = 64;
    uint64_t seed = 0;
    std::string out_dir;
};

struct DegradeOptions {
    std::string in_dir;
    std::string out_dir;
    std::string config_path;  // optional; defaults otherwise
    uint64_t seed = 0;
    bool suite = false;
};

struct TrainOptions {
    std::string clean_dir;
    std::string noisy_dir;
    std::string config_path;  // optional
    std::string out_checkpoint;
    uint64_t seed = 0;
    bool seed_given = false;  // command-line seed overrides the config's
};

struct EnhanceOptions {
    std::string checkpoint;
    std::string in_dir;
    std::string out_dir;
};

struct EvalOptions {
    std::string ref_dir;
    std::string test_dir;
    std::string out_csv;
};

struct AblateOptions {
    std::string lambdas = "10:100:10";  // start:stop:stride, inclusive
    std::string clean_dir;
    std::string noisy_dir;
    std::string eval_clean_dir;
    std::string eval_noisy_dir;
    std::string config_path;  // optional
    std::string out_dir;
    int steps = 0;  // per-lambda step cap (0 = config schedule)
    uint64_t seed = 0;
    bool seed_given = false;
};

struct OtcostOptions {
    std::string a_path;
    std::string b_path;
    std::string cost = "exp";     // sqeuclid | exp
    std::string mode = "context";  // emd | rem | context
    double h = 0.5;
};

RunManifest run_synth(const SynthOptions& opts);
RunManifest run_degrade(const DegradeOptions& opts);
RunManifest run_train(const TrainOptions& opts);
RunManifest run_enhance(const EnhanceOptions& opts);
RunManifest run_eval(const EvalOptions& opts);
RunManifest run_ablate(const AblateOptions& opts);
// Prints the value with 12 fixed decimals to `out`.
RunManifest run_otcost(const OtcostOptions& opts, std::ostream& out);

// start:stop:stride, inclusive of stop when it lands on the grid.
std::vector<double> parse_lambda_range(const std::string& text);

// Sorted .ppm listing; the deterministic traversal order for every command.
std::vector<std::string> list_ppm(const std::string& dir);

}  // namespace ctxot

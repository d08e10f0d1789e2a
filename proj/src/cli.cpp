#include "ctxot/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ctxot/degrade.hpp"
#include "ctxot/errors.hpp"
#include "ctxot/featenc.hpp"
#include "ctxot/gan.hpp"
#include "ctxot/image.hpp"
#include "ctxot/metrics.hpp"
#include "ctxot/otcore.hpp"
#include "ctxot/rng.hpp"
#include "ctxot/synthretina.hpp"

namespace ctxot {

namespace fs = std::filesystem;

std::string RunManifest::serialize() const {
    KvConfig kv;
    kv.set("command", command);
    kv.set_u64("seed", seed);
    for (const auto& [k, v] : config.items()) kv.set("config." + k, v);
    for (const auto& [name, hash] : inputs) {
        char buf[24];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
        kv.set("input." + name, buf);
    }
    for (const auto& [name, hash] : outputs) {
        char buf[24];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
        kv.set("output." + name, buf);
    }
    kv.set_double("wall_clock_ms", wall_clock_ms);
    return kv.serialize();
}

void RunManifest::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("manifest: cannot write " + path);
    out << serialize();
}

std::vector<std::string> list_ppm(const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError("cannot read directory " + dir);
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".ppm") {
            names.push_back(entry.path().filename().string());
        }
    }
    std::sort(names.begin(), names.end());
    return names;
}

namespace {

class Stopwatch {
  public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                         start_)
            .count();
    }

  private:
    std::chrono::steady_clock::time_point start_;
};

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir)) throw IoError("cannot create directory " + dir);
}

void hash_dir_into(RunManifest&, const std::string& dir, const std::string& label,
                   std::vector<std::pair<std::string, uint64_t>>& sink) {
    for (const std::string& name : list_ppm(dir)) {
        sink.emplace_back(label + "/" + name, file_checksum((fs::path(dir) / name).string()));
    }
}

std::vector<Image> load_pool(const std::string& dir, size_t resize_to) {
    std::vector<Image> pool;
    for (const std::string& name : list_ppm(dir)) {
        Image img = read_ppm((fs::path(dir) / name).string());
        pool.push_back(resize_to ? center_crop_resize(img, resize_to) : img);
    }
    if (pool.empty()) throw IoError("no .ppm images in " + dir);
    return pool;
}

// Minimal deterministic line chart on a white canvas.
void draw_line(Image& img, double x0, double y0, double x1, double y1, size_t channel) {
    int steps = static_cast<int>(std::max(std::abs(x1 - x0), std::abs(y1 - y0)) * 2.0) + 1;
    for (int i = 0; i <= steps; ++i) {
        double t = static_cast<double>(i) / steps;
        long x = std::lround(x0 + t * (x1 - x0));
        long y = std::lround(y0 + t * (y1 - y0));
        if (x < 0 || y < 0 || x >= static_cast<long>(img.width) ||
            y >= static_cast<long>(img.height)) {
            continue;
        }
        for (size_t c = 0; c < 3; ++c) img.at(y, x, c) = (c == channel) ? 0.75 : 0.1;
    }
}

Image render_curves(const std::vector<double>& xs, const std::vector<double>& series_a,
                    const std::vector<double>& series_b) {
    const size_t width = 420, height = 300, margin = 30;
    Image img(height, width, 3, 1.0);
    // axes
    for (size_t x = margin; x < width - margin / 2; ++x) {
        for (size_t c = 0; c < 3; ++c) img.at(height - margin, x, c) = 0.0;
    }
    for (size_t y = margin / 2; y <= height - margin; ++y) {
        for (size_t c = 0; c < 3; ++c) img.at(y, margin, c) = 0.0;
    }
    auto plot = [&](const std::vector<double>& ys, size_t channel) {
        double lo = *std::min_element(ys.begin(), ys.end());
        double hi = *std::max_element(ys.begin(), ys.end());
        if (hi - lo < 1e-12) {
            lo -= 1.0;
            hi += 1.0;
        }
        double x_lo = xs.front(), x_hi = xs.back();
        if (x_hi - x_lo < 1e-12) x_hi = x_lo + 1.0;
        auto px = [&](double x) {
            return margin + (x - x_lo) / (x_hi - x_lo) * (width - 1.75 * margin);
        };
        auto py = [&](double y) {
            return (height - margin) - (y - lo) / (hi - lo) * (height - 1.75 * margin);
        };
        for (size_t i = 1; i < xs.size(); ++i) {
            draw_line(img, px(xs[i - 1]), py(ys[i - 1]), px(xs[i]), py(ys[i]), channel);
        }
    };
    plot(series_a, 0);  // reddish
    if (!series_b.empty()) plot(series_b, 2);  // bluish
    return img;
}

}  // namespace

RunManifest run_synth(const SynthOptions& opts) {
    Stopwatch watch;
    if (opts.count < 1) throw ArgumentError("synth: count must be >= 1");
    ensure_dir(opts.out_dir);
    RetinaSpec spec;
    spec.size = opts.size;
    spec.seed = opts.seed;
    DatasetManifest ds = generate_retina_dataset(opts.count, spec, opts.out_dir);

    RunManifest manifest;
    manifest.command = "synth";
    manifest.seed = opts.seed;
    manifest.config.set_u64("count", opts.count);
    manifest.config.set_u64("size", opts.size);
    manifest.config.set("out", opts.out_dir);
    for (const auto& [name, seed] : ds.entries) {
        (void)seed;
        manifest.outputs.emplace_back(name, file_checksum((fs::path(opts.out_dir) / name).string()));
    }
    manifest.outputs.emplace_back("manifest.csv",
                                  file_checksum((fs::path(opts.out_dir) / "manifest.csv").string()));
    manifest.wall_clock_ms = watch.ms();
    manifest.save((fs::path(opts.out_dir) / "run_manifest.ini").string());
    return manifest;
}

RunManifest run_degrade(const DegradeOptions& opts) {
    Stopwatch watch;
    DegradeConfig cfg =
        opts.config_path.empty() ? DegradeConfig{} : DegradeConfig::load(opts.config_path);
    ensure_dir(opts.out_dir);

    RunManifest manifest;
    manifest.command = "degrade";
    manifest.seed = opts.seed;
    manifest.config = KvConfig::parse(cfg.serialize());
    manifest.config.set_bool("suite", opts.suite);
    hash_dir_into(manifest, opts.in_dir, "in", manifest.inputs);

    Rng per_file(opts.seed);
    for (const std::string& name : list_ppm(opts.in_dir)) {
        Image img = read_ppm((fs::path(opts.in_dir) / name).string());
        std::string stem = fs::path(name).stem().string();
        uint64_t image_seed = per_file.substream(name).seed();
        if (opts.suite) {
            for (const SuiteVariant& variant : degrade_suite(img, image_seed)) {
                std::string out_name = stem + "_" + variant.name + ".ppm";
                write_ppm((fs::path(opts.out_dir) / out_name).string(), variant.image);
                std::ofstream side((fs::path(opts.out_dir) / (stem + "_" + variant.name + ".ini")));
                side << variant.applied.serialize();
                manifest.outputs.emplace_back(
                    out_name, file_checksum((fs::path(opts.out_dir) / out_name).string()));
            }
        } else {
            DegradeConfig one = cfg;
            one.seed = image_seed;
            DegradeResult result = degrade(img, one);
            write_ppm((fs::path(opts.out_dir) / name).string(), result.image);
            std::ofstream side((fs::path(opts.out_dir) / (stem + ".ini")));
            side << result.applied.serialize();
            manifest.outputs.emplace_back(name,
                                          file_checksum((fs::path(opts.out_dir) / name).string()));
        }
    }
    manifest.wall_clock_ms = watch.ms();
    manifest.save((fs::path(opts.out_dir) / "run_manifest.ini").string());
    return manifest;
}

RunManifest run_train(const TrainOptions& opts) {
    Stopwatch watch;
    TrainConfig cfg =
        opts.config_path.empty() ? TrainConfig{} : TrainConfig::load(opts.config_path);
    if (opts.seed_given) cfg.seed = opts.seed;
    cfg.validate();

    std::vector<Image> clean = load_pool(opts.clean_dir, cfg.image_size);
    std::vector<Image> noisy = load_pool(opts.noisy_dir, cfg.image_size);

    std::string loss_csv = opts.out_checkpoint + ".loss.csv";
    TrainResult result = train(clean, noisy, cfg, opts.out_checkpoint, loss_csv);
    (void)result;

    RunManifest manifest;
    manifest.command = "train";
    manifest.seed = cfg.seed;
    manifest.config = KvConfig::parse(cfg.serialize());
    hash_dir_into(manifest, opts.clean_dir, "clean", manifest.inputs);
    hash_dir_into(manifest, opts.noisy_dir, "noisy", manifest.inputs);
    manifest.outputs.emplace_back(fs::path(opts.out_checkpoint).filename().string(),
                                  file_checksum(opts.out_checkpoint));
    manifest.outputs.emplace_back(fs::path(loss_csv).filename().string(),
                                  file_checksum(loss_csv));
    manifest.wall_clock_ms = watch.ms();
    manifest.save(opts.out_checkpoint + ".manifest.ini");
    return manifest;
}

RunManifest run_enhance(const EnhanceOptions& opts) {
    Stopwatch watch;
    Checkpoint ckpt = load_checkpoint(opts.checkpoint);
    ensure_dir(opts.out_dir);

    RunManifest manifest;
    manifest.command = "enhance";
    manifest.seed = ckpt.cfg.seed;
    manifest.config = KvConfig::parse(ckpt.cfg.serialize());
    manifest.inputs.emplace_back(fs::path(opts.checkpoint).filename().string(),
                                 file_checksum(opts.checkpoint));
    hash_dir_into(manifest, opts.in_dir, "in", manifest.inputs);

    for (const std::string& name : list_ppm(opts.in_dir)) {
        Image img = read_ppm((fs::path(opts.in_dir) / name).string());
        Image out = enhance(ckpt, img);
        write_ppm((fs::path(opts.out_dir) / name).string(), out);
        manifest.outputs.emplace_back(name,
                                      file_checksum((fs::path(opts.out_dir) / name).string()));
    }
    manifest.wall_clock_ms = watch.ms();
    manifest.save((fs::path(opts.out_dir) / "run_manifest.ini").string());
    return manifest;
}

RunManifest run_eval(const EvalOptions& opts) {
    Stopwatch watch;
    std::vector<std::string> ref_names = list_ppm(opts.ref_dir);
    std::vector<std::string> test_names = list_ppm(opts.test_dir);
    if (ref_names != test_names) {
        throw ArgumentError("eval: reference and test directories must hold matching filenames");
    }
    if (ref_names.empty()) throw IoError("eval: no .ppm images in " + opts.ref_dir);

    std::vector<MetricRow> rows;
    for (const std::string& name : ref_names) {
        Image ref = read_ppm((fs::path(opts.ref_dir) / name).string());
        Image test = read_ppm((fs::path(opts.test_dir) / name).string());
        rows.push_back({name, psnr(ref, test), ssim(ref, test)});
    }
    MetricReport report = MetricReport::build(std::move(rows));
    {
        std::ofstream out(opts.out_csv, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("eval: cannot write " + opts.out_csv);
        out << report.to_csv();
    }

    RunManifest manifest;
    manifest.command = "eval";
    manifest.config.set("ref", opts.ref_dir);
    manifest.config.set("test", opts.test_dir);
    hash_dir_into(manifest, opts.ref_dir, "ref", manifest.inputs);
    hash_dir_into(manifest, opts.test_dir, "test", manifest.inputs);
    manifest.outputs.emplace_back(fs::path(opts.out_csv).filename().string(),
                                  file_checksum(opts.out_csv));
    manifest.wall_clock_ms = watch.ms();
    manifest.save(opts.out_csv + ".manifest.ini");
    return manifest;
}

std::vector<double> parse_lambda_range(const std::string& text) {
    double start = 0, stop = 0, stride = 0;
    char extra = 0;
    int got = std::sscanf(text.c_str(), "%lf:%lf:%lf%c", &start, &stop, &stride, &extra);
    if (got != 3 || stride <= 0.0 || stop < start) {
        throw ArgumentError("ablate: malformed range '" + text + "', expected start:stop:stride");
    }
    std::vector<double> values;
    for (double v = start; v <= stop + 1e-9; v += stride) values.push_back(v);
    return values;
}

RunManifest run_ablate(const AblateOptions& opts) {
    Stopwatch watch;
    std::vector<double> lambdas = parse_lambda_range(opts.lambdas);
    TrainConfig base =
        opts.config_path.empty() ? TrainConfig{} : TrainConfig::load(opts.config_path);
    if (opts.seed_given) base.seed = opts.seed;
    if (opts.steps > 0) base.max_steps = opts.steps;
    base.validate();
    ensure_dir(opts.out_dir);

    std::vector<Image> clean = load_pool(opts.clean_dir, base.image_size);
    std::vector<Image> noisy = load_pool(opts.noisy_dir, base.image_size);
    std::vector<std::string> eval_names = list_ppm(opts.eval_noisy_dir);
    if (eval_names != list_ppm(opts.eval_clean_dir)) {
        throw ArgumentError("ablate: eval directories must hold matching filenames");
    }

    std::string csv = "lambda,psnr,ssim\n";
    std::vector<double> psnr_curve, ssim_curve;
    for (double lambda : lambdas) {
        TrainConfig cfg = base;
        cfg.w_ctx = lambda;
        char tag[32];
        std::snprintf(tag, sizeof(tag), "lambda_%g", lambda);
        std::string ckpt_path = (fs::path(opts.out_dir) / (std::string(tag) + ".ckpt")).string();
        train(clean, noisy, cfg, ckpt_path, ckpt_path + ".loss.csv");

        Checkpoint ckpt = load_checkpoint(ckpt_path);
        std::vector<MetricRow> rows;
        for (const std::string& name : eval_names) {
            Image ref = center_crop_resize(
                read_ppm((fs::path(opts.eval_clean_dir) / name).string()), cfg.image_size);
            Image noisy_img = center_crop_resize(
                read_ppm((fs::path(opts.eval_noisy_dir) / name).string()), cfg.image_size);
            Image out = enhance(ckpt, noisy_img);
            rows.push_back({name, psnr(ref, out), ssim(ref, out)});
        }
        MetricReport report = MetricReport::build(std::move(rows));
        char row[96];
        std::snprintf(row, sizeof(row), "%g,%.6f,%.6f\n", lambda, report.psnr_mean,
                      report.ssim_mean);
        csv += row;
        psnr_curve.push_back(report.psnr_mean);
        ssim_curve.push_back(report.ssim_mean);
    }

    std::string csv_path = (fs::path(opts.out_dir) / "ablation.csv").string();
    {
        std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("ablate: cannot write " + csv_path);
        out << csv;
    }
    std::string plot_path = (fs::path(opts.out_dir) / "ablation.ppm").string();
    write_ppm(plot_path, render_curves(lambdas, psnr_curve, ssim_curve));

    RunManifest manifest;
    manifest.command = "ablate";
    manifest.seed = base.seed;
    manifest.config = KvConfig::parse(base.serialize());
    manifest.config.set("lambdas", opts.lambdas);
    hash_dir_into(manifest, opts.clean_dir, "clean", manifest.inputs);
    hash_dir_into(manifest, opts.noisy_dir, "noisy", manifest.inputs);
    manifest.outputs.emplace_back("ablation.csv", file_checksum(csv_path));
    manifest.outputs.emplace_back("ablation.ppm", file_checksum(plot_path));
    manifest.wall_clock_ms = watch.ms();
    manifest.save((fs::path(opts.out_dir) / "run_manifest.ini").string());
    return manifest;
}

RunManifest run_otcost(const OtcostOptions& opts, std::ostream& out) {
    Stopwatch watch;
    FeatureSet a = read_features(opts.a_path);
    FeatureSet b = read_features(opts.b_path);

    CostKind kind;
    if (opts.cost == "sqeuclid") {
        kind = CostKind::SquaredEuclidean;
    } else if (opts.cost == "exp") {
        kind = CostKind::Exponential;
    } else {
        throw ArgumentError("otcost: unknown cost kind '" + opts.cost + "'");
    }

    CostMatrix c = cost_matrix(a, b, kind, opts.h);
    double value = 0.0;
    if (opts.mode == "emd") {
        value = emd_exact(c).first;
    } else if (opts.mode == "rem") {
        value = rem_distance(c);
    } else if (opts.mode == "context") {
        value = one_sided_cost(c);
    } else {
        throw ArgumentError("otcost: unknown mode '" + opts.mode + "'");
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12f\n", value);
    out << buf;

    RunManifest manifest;
    manifest.command = "otcost";
    manifest.config.set("cost", opts.cost);
    manifest.config.set("mode", opts.mode);
    manifest.config.set_double("h", opts.h);
    manifest.inputs.emplace_back("a", file_checksum(opts.a_path));
    manifest.inputs.emplace_back("b", file_checksum(opts.b_path));
    manifest.wall_clock_ms = watch.ms();
    return manifest;  // prints to stdout; no artifact directory to write into
}

}  // namespace ctxot

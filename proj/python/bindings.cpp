#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <fstream>

#include "ctxot/cli.hpp"
#include "ctxot/degrade.hpp"
#include "ctxot/featenc.hpp"
#include "ctxot/gan.hpp"
#include "ctxot/image.hpp"
#include "ctxot/metrics.hpp"
#include "ctxot/otcore.hpp"
#include "ctxot/synthretina.hpp"

namespace py = pybind11;
using namespace ctxot;

namespace {

Image image_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 3 || a.shape(2) != 3) {
        throw DimensionError("expected an image array of shape [H, W, 3]");
    }
    Image img(static_cast<size_t>(a.shape(0)), static_cast<size_t>(a.shape(1)), 3);
    std::memcpy(img.pixels.data(), a.data(), img.size() * sizeof(double));
    return img;
}

py::array_t<double> array_from_image(const Image& img) {
    py::array_t<double> out({img.height, img.width, img.channels});
    std::memcpy(out.mutable_data(), img.pixels.data(), img.size() * sizeof(double));
    return out;
}

FeatureSet features_from_array(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw DimensionError("expected a feature array of shape [N, D]");
    std::vector<double> data(a.data(), a.data() + a.size());
    return FeatureSet::from_tensor(
        Tensor(Shape{static_cast<size_t>(a.shape(0)), static_cast<size_t>(a.shape(1))},
               std::move(data)),
        1e-3);
}

py::array_t<double> array_from_matrix(const std::vector<double>& m, size_t rows, size_t cols) {
    py::array_t<double> out({rows, cols});
    std::memcpy(out.mutable_data(), m.data(), m.size() * sizeof(double));
    return out;
}

CostKind kind_from_string(const std::string& kind) {
    if (kind == "sqeuclid") return CostKind::SquaredEuclidean;
    if (kind == "exp") return CostKind::Exponential;
    throw ArgumentError("unknown cost kind '" + kind + "', expected sqeuclid or exp");
}

CostMatrix matrix_from_array(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
    const std::string& kind, double h) {
    if (a.ndim() != 2 || a.shape(0) != a.shape(1)) {
        throw DimensionError("expected a square cost matrix");
    }
    CostMatrix c;
    c.n = static_cast<size_t>(a.shape(0));
    c.kind = kind_from_string(kind);
    c.bandwidth = h;
    c.c.assign(a.data(), a.data() + a.size());
    return c;
}

}  // namespace

PYBIND11_MODULE(_ctxot, m) {
    m.doc() = "Context-aware optimal-transport learning for unpaired image enhancement";

    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
    py::register_exception<CapacityError>(m, "CapacityError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    // ---- metrics ----
    m.def(
        "psnr",
        [](py::array_t<double> a, py::array_t<double> b, double peak) {
            return psnr(image_from_array(a), image_from_array(b), peak);
        },
        py::arg("a"), py::arg("b"), py::arg("peak") = 1.0);
    m.def(
        "ssim",
        [](py::array_t<double> a, py::array_t<double> b) {
            return ssim(image_from_array(a), image_from_array(b));
        },
        py::arg("a"), py::arg("b"));

    // ---- synthetic data ----
    m.def(
        "generate_retina",
        [](size_t size, uint64_t seed) {
            RetinaSpec spec;
            spec.size = size;
            spec.seed = seed;
            return array_from_image(generate_retina(spec));
        },
        py::arg("size") = 64, py::arg("seed") = 0);
    m.def(
        "degrade",
        [](py::array_t<double> img, uint64_t seed, bool illumination, bool blur, bool spots) {
            DegradeConfig cfg;
            cfg.seed = seed;
            cfg.illumination.enabled = illumination;
            cfg.blur.enabled = blur;
            cfg.spots.enabled = spots;
            DegradeResult r = degrade(image_from_array(img), cfg);
            return py::make_tuple(array_from_image(r.image), r.applied.serialize());
        },
        py::arg("image"), py::arg("seed") = 0, py::arg("illumination") = true,
        py::arg("blur") = true, py::arg("spots") = true,
        "Returns (degraded image, applied-parameters text)");

    // ---- features and transport costs ----
    m.def(
        "encode",
        [](py::array_t<double> img, uint64_t filter_seed) {
            EncoderSpec spec;
            spec.filter_seed = filter_seed;
            Image image = image_from_array(img);
            FeatureSet fs = encode(image_to_tensor(image), spec);
            return array_from_matrix(fs.values.values(), fs.count(), fs.dim());
        },
        py::arg("image"), py::arg("filter_seed") = EncoderSpec{}.filter_seed);
    m.def(
        "cost_matrix",
        [](py::array_t<double> a, py::array_t<double> b, const std::string& kind, double h) {
            CostMatrix c =
                cost_matrix(features_from_array(a), features_from_array(b), kind_from_string(kind), h);
            return array_from_matrix(c.c, c.n, c.n);
        },
        py::arg("a"), py::arg("b"), py::arg("kind") = "exp", py::arg("h") = 0.5);
    m.def(
        "emd_exact",
        [](py::array_t<double> c, const std::string& kind, double h) {
            auto [value, plan] = emd_exact(matrix_from_array(c, kind, h));
            return py::make_tuple(value, array_from_matrix(plan.f, plan.n, plan.n));
        },
        py::arg("cost"), py::arg("kind") = "exp", py::arg("h") = 0.5,
        "Exact value and optimal plan for uniform marginals (N <= 8)");
    m.def(
        "rem_distance",
        [](py::array_t<double> c, const std::string& kind, double h) {
            return rem_distance(matrix_from_array(c, kind, h));
        },
        py::arg("cost"), py::arg("kind") = "exp", py::arg("h") = 0.5);
    m.def(
        "one_sided_cost",
        [](py::array_t<double> c, const std::string& kind, double h) {
            return one_sided_cost(matrix_from_array(c, kind, h));
        },
        py::arg("cost"), py::arg("kind") = "exp", py::arg("h") = 0.5);
    m.def(
        "contextual_cost",
        [](py::array_t<double> a, py::array_t<double> b, double h) {
            return contextual_cost(features_from_array(a), features_from_array(b), h).value();
        },
        py::arg("y_feats"), py::arg("fy_feats"), py::arg("h") = 0.5);
    m.def(
        "contextual_cost_grad",
        [](py::array_t<double> a, py::array_t<double> b, double h) {
            Tape tape;
            FeatureSet fa = features_from_array(a);
            FeatureSet fb = features_from_array(b);
            Tensor leaf = tape.leaf(fb.values);
            Tensor cost = contextual_cost(fa.values, leaf, h);
            Tensor grad = tape.gradients(cost, {leaf})[0];
            return py::make_tuple(cost.value(),
                                  array_from_matrix(grad.values(), fb.count(), fb.dim()));
        },
        py::arg("y_feats"), py::arg("fy_feats"), py::arg("h") = 0.5,
        "Returns (value, gradient w.r.t. fy_feats)");

    m.def("write_features", [](const std::string& path, py::array_t<double> a) {
        write_features(path, features_from_array(a));
    });
    m.def("read_features", [](const std::string& path) {
        FeatureSet fs = read_features(path);
        return array_from_matrix(fs.values.values(), fs.count(), fs.dim());
    });

    // ---- training and inference ----
    m.def(
        "train",
        [](const std::string& clean_dir, const std::string& noisy_dir,
           const std::string& out_checkpoint, const std::string& config_text, uint64_t seed) {
            TrainOptions opts;
            opts.clean_dir = clean_dir;
            opts.noisy_dir = noisy_dir;
            opts.out_checkpoint = out_checkpoint;
            opts.seed = seed;
            opts.seed_given = true;
            std::string cfg_path;
            if (!config_text.empty()) {
                cfg_path = out_checkpoint + ".cfg.ini";
                TrainConfig cfg = TrainConfig::parse(config_text);
                std::ofstream(cfg_path) << cfg.serialize();
                opts.config_path = cfg_path;
            }
            run_train(opts);
        },
        py::arg("clean_dir"), py::arg("noisy_dir"), py::arg("out_checkpoint"),
        py::arg("config_text") = "", py::arg("seed") = 0);
    m.def(
        "enhance",
        [](const std::string& checkpoint, py::array_t<double> img) {
            return array_from_image(enhance(checkpoint, image_from_array(img)));
        },
        py::arg("checkpoint"), py::arg("image"));

    m.def("read_ppm", [](const std::string& path) { return array_from_image(read_ppm(path)); });
    m.def("write_ppm", [](const std::string& path, py::array_t<double> img) {
        write_ppm(path, image_from_array(img));
    });
}

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "bavit/checkpoint.hpp"
#include "bavit/data.hpp"
#include "bavit/error.hpp"
#include "bavit/net.hpp"
#include "bavit/patch_labeling.hpp"
#include "bavit/postproc.hpp"
#include "bavit/prune.hpp"
#include "bavit/train.hpp"

namespace py = pybind11;
using namespace bavit;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

U8Array labels_to_array(const TokenLabelMap& m) {
    U8Array out({m.grid().rows(), m.grid().cols()});
    std::copy(m.labels().begin(), m.labels().end(), out.mutable_data());
    return out;
}

TokenLabelMap array_to_labels(const U8Array& a) {
    if (a.ndim() != 2) throw std::invalid_argument("label grid must be 2-D");
    const int rows = static_cast<int>(a.shape(0));
    const int cols = static_cast<int>(a.shape(1));
    std::vector<std::uint8_t> v(a.data(), a.data() + a.size());
    for (auto& x : v) x = x ? 1 : 0;
    return TokenLabelMap(PatchGrid(cols, rows, 1), std::move(v));
}

FloatImage array_to_image(const F32Array& a) {
    if (a.ndim() != 3 || a.shape(2) != 3) throw std::invalid_argument("image must be H x W x 3");
    FloatImage img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::copy(a.data(), a.data() + a.size(), img.values.begin());
    return img;
}

F32Array image_to_array(const FloatImage& img) {
    F32Array out({img.height, img.width, 3});
    std::copy(img.values.begin(), img.values.end(), out.mutable_data());
    return out;
}

py::dict report_dict(const PruneReport& r) {
    py::dict d;
    d["sparsity"] = r.sparsity;
    d["bavit_tokens"] = r.bavit_tokens;
    d["detector_tokens"] = r.detector_tokens;
    d["pruned_detector_tokens"] = r.pruned_detector_tokens;
    d["combined_tokens"] = r.combined_tokens;
    d["reduction"] = r.reduction;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Patch labeling, token classification and pruning utilities";

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<GeometryError>(m, "GeometryError", base.ptr());
    auto data = py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<CheckpointError>(m, "CheckpointError", data.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init([](int image_size, int patch_size, int embed_dim, int depth, int heads, int mlp_ratio) {
                 ModelConfig c{image_size, patch_size, embed_dim, depth, heads, mlp_ratio, 2};
                 c.validate();
                 return c;
             }),
             py::arg("image_size") = 384, py::arg("patch_size") = 16, py::arg("embed_dim") = 192,
             py::arg("depth") = 2, py::arg("heads") = 3, py::arg("mlp_ratio") = 4)
        .def_readonly("image_size", &ModelConfig::image_size)
        .def_readonly("patch_size", &ModelConfig::patch_size)
        .def_readonly("embed_dim", &ModelConfig::embed_dim)
        .def_readonly("depth", &ModelConfig::depth)
        .def_readonly("heads", &ModelConfig::heads)
        .def_readonly("mlp_ratio", &ModelConfig::mlp_ratio)
        .def_property_readonly("tokens", &ModelConfig::tokens)
        .def("__repr__", [](const ModelConfig& c) {
            return "ModelConfig(image_size=" + std::to_string(c.image_size) + ", patch_size=" +
                   std::to_string(c.patch_size) + ", embed_dim=" + std::to_string(c.embed_dim) +
                   ", depth=" + std::to_string(c.depth) + ", heads=" + std::to_string(c.heads) +
                   ", mlp_ratio=" + std::to_string(c.mlp_ratio) + ")";
        });

    m.def("count_params", &count_params, py::arg("config"));
    m.def("estimate_flops", &estimate_flops, py::arg("config"));

    m.def(
        "label_from_boxes",
        [](int width, int height, int patch, const std::vector<std::array<int, 4>>& boxes, double tau,
           const std::string& mode) {
            std::vector<BoundingBox> b;
            for (const auto& [x0, y0, x1, y1] : boxes) b.push_back({x0, y0, x1, y1});
            return labels_to_array(label_from_boxes(PatchGrid(width, height, patch), b, tau, parse_overlap_mode(mode)));
        },
        py::arg("width"), py::arg("height"), py::arg("patch"), py::arg("boxes"),
        py::arg("tau") = kDefaultBoxThreshold, py::arg("mode") = "coverage",
        "Per-patch labels from (x_min, y_min, x_max, y_max) boxes; returns a rows x cols uint8 array.");

    m.def(
        "label_from_mask",
        [](const U8Array& mask, int patch, double min_fraction) {
            if (mask.ndim() != 2) throw std::invalid_argument("mask must be 2-D");
            SegMask sm(static_cast<int>(mask.shape(1)), static_cast<int>(mask.shape(0)));
            std::copy(mask.data(), mask.data() + mask.size(), sm.values.begin());
            return labels_to_array(label_from_mask(PatchGrid(sm.width, sm.height, patch), sm, min_fraction));
        },
        py::arg("mask"), py::arg("patch"), py::arg("min_fraction") = kDefaultMaskFraction);

    m.def(
        "cca",
        [](const U8Array& labels, int steps, int threshold) {
            CcaConfig c;
            c.steps = steps;
            c.threshold = threshold;
            return labels_to_array(cca(array_to_labels(labels), c));
        },
        py::arg("labels"), py::arg("steps") = 3, py::arg("threshold") = 2);

    m.def(
        "upscale_labels",
        [](const U8Array& labels, int rows, int cols) {
            return labels_to_array(upscale_labels(array_to_labels(labels), PatchGrid(cols, rows, 1)));
        },
        py::arg("labels"), py::arg("rows"), py::arg("cols"));

    m.def(
        "mask_from_probs",
        [](const Matrix<float>& probs, int rows, int cols, double theta) {
            const auto mask = mask_from_probs(probs, PatchGrid(cols, rows, 1), theta);
            return labels_to_array(mask.as_labels());
        },
        py::arg("probs"), py::arg("rows"), py::arg("cols"), py::arg("theta"),
        "Keep map (1 = kept) pruning tokens with P(BG) > theta.");

    m.def(
        "theta_for_sparsity",
        [](const std::vector<double>& p_bg, double target) { return theta_for_sparsity(p_bg, target); },
        py::arg("p_bg"), py::arg("target_sparsity"));

    m.def(
        "prune_report",
        [](std::int64_t detector_tokens, std::int64_t bavit_tokens, double sparsity) {
            return report_dict(prune_report(detector_tokens, bavit_tokens, sparsity));
        },
        py::arg("detector_tokens"), py::arg("bavit_tokens"), py::arg("sparsity"));

    m.def(
        "table2_report",
        [](const std::vector<double>& sparsities, std::int64_t detector_tokens, std::int64_t detector_layers,
           std::int64_t bavit_tokens, std::int64_t bavit_layers) {
            py::list rows;
            for (const auto& r :
                 table2_report(sparsities, {detector_tokens, detector_layers, bavit_tokens, bavit_layers})) {
                rows.append(report_dict(r));
            }
            return rows;
        },
        py::arg("sparsities"), py::arg("detector_tokens") = 1024, py::arg("detector_layers") = 12,
        py::arg("bavit_tokens") = 576, py::arg("bavit_layers") = 2);

    m.def(
        "generate_synthetic",
        [](int n, int image_size, int patch_size, std::uint64_t seed) {
            SynthSpec spec;
            spec.image_size = image_size;
            spec.patch_size = patch_size;
            spec.rng_seed = seed;
            py::list out;
            for (const auto& s : generate_synthetic(spec, n)) {
                U8Array raster({s.shape_raster.height, s.shape_raster.width});
                std::copy(s.shape_raster.values.begin(), s.shape_raster.values.end(), raster.mutable_data());
                out.append(py::make_tuple(image_to_array(s.sample.image), labels_to_array(s.sample.label_map),
                                          raster));
            }
            return out;
        },
        py::arg("n"), py::arg("image_size") = 128, py::arg("patch_size") = 16, py::arg("seed") = 1,
        "List of (image HxWx3 float32, labels rows x cols uint8, shape raster HxW uint8).");

    py::class_<Checkpoint>(m, "Model")
        .def_static("load", &load_checkpoint, py::arg("path"))
        .def_static(
            "init", [](const ModelConfig& c, std::uint64_t seed) {
                return Checkpoint{c, init_params<float>(c, seed), OptimState::create(c), {}};
            },
            py::arg("config"), py::arg("seed") = 0)
        .def("save", [](const Checkpoint& ck, const std::filesystem::path& p) { save_checkpoint(p, ck); })
        .def_readonly("config", &Checkpoint::config)
        .def_property_readonly("step", [](const Checkpoint& ck) { return ck.optim.step; })
        .def(
            "predict_probs",
            [](const Checkpoint& ck, const F32Array& image) {
                const auto img = array_to_image(image);
                std::vector<AnnotatedSample> one{AnnotatedSample{img, TokenLabelMap(ck.config.grid()), "py"}};
                const std::vector<std::size_t> order{0};
                return predict_probs(ck.params, ck.config, pack_batch(one, order));
            },
            py::arg("image"), "M x 2 array of (P(BG), P(FG)) per token.")
        .def(
            "predict_labels",
            [](const Checkpoint& ck, const F32Array& image) {
                return labels_to_array(predict_labels(ck.params, ck.config, array_to_image(image)));
            },
            py::arg("image"));
}

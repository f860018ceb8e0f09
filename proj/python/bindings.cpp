#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <random>

#include "fusionnet/augmentation.hpp"
#include "fusionnet/checkpoint.hpp"
#include "fusionnet/config.hpp"
#include "fusionnet/gradcheck.hpp"
#include "fusionnet/metrics.hpp"
#include "fusionnet/pipeline.hpp"
#include "fusionnet/synthetic.hpp"

namespace py = pybind11;
using namespace fusionnet;

namespace {

template <typename T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <typename T, typename Grid>
Grid to_grid(const Array<T>& a, const char* what) {
  if (a.ndim() != 2) throw py::value_error(std::string(what) + " must be a 2-D array");
  Grid g(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  const T* p = a.data();
  for (std::size_t i = 0; i < g.size(); ++i) g.values[i] = static_cast<typename Grid::value_type>(p[i]);
  return g;
}

template <typename Grid>
py::array_t<typename Grid::value_type> to_array(const Grid& g) {
  py::array_t<typename Grid::value_type> out({g.height, g.width});
  std::copy(g.values.begin(), g.values.end(), out.mutable_data());
  return out;
}

Image image_arg(const Array<float>& a, const char* what = "image") { return to_grid<float, Image>(a, what); }
Labeling labels_arg(const Array<std::int32_t>& a, const char* what = "labels") { return to_grid<std::int32_t, Labeling>(a, what); }
Mask mask_arg(const Array<std::uint8_t>& a, const char* what = "mask") { return to_grid<std::uint8_t, Mask>(a, what); }

py::dict report_dict(const ScoreReport& r) {
  py::dict d;
  d["v_rand"] = r.v_rand;
  d["v_info"] = r.v_info;
  d["v_dice"] = r.v_dice;
  d["evaluated_pixels"] = r.evaluated_pixels;
  d["total_pixels"] = r.total_pixels;
  return d;
}

const Orientation& orientation(int index) {
  if (index < 0 || index > 7) throw py::value_error("orientation index must be in 0..7");
  return Orientation::all()[static_cast<std::size_t>(index)];
}

std::vector<SamplePair> pairs_arg(const std::vector<Array<float>>& images, const std::vector<Array<float>>& labels) {
  if (images.size() != labels.size()) throw py::value_error("images and labels differ in length");
  std::vector<SamplePair> out;
  for (std::size_t i = 0; i < images.size(); ++i) out.push_back({image_arg(images[i]), image_arg(labels[i], "label")});
  return out;
}

// Network plus the padding it was trained with.
struct Model {
  FusionNet<float> net;
  int pad_radius = 0;

  py::array_t<float> predict(const Array<float>& image, bool tta) const {
    return to_array(fusionnet::predict(net, image_arg(image), pad_radius, tta));
  }
};

NetworkSpec make_spec(int levels, int base_features, int input_size, const std::string& block_order) {
  NetworkSpec s;
  s.levels = levels;
  s.base_features = base_features;
  s.input_height = s.input_width = input_size;
  s.block_order = block_order_from_string(block_order);
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "FusionNet membrane segmentation core";

  py::class_<Model>(m, "Network")
      .def(py::init([](int levels, int base_features, int input_size, std::uint64_t seed, const std::string& block_order,
                       int pad_radius) {
             return Model{FusionNet<float>::build(make_spec(levels, base_features, input_size, block_order), seed), pad_radius};
           }),
           py::arg("levels") = 2, py::arg("base_features") = 8, py::arg("input_size") = 64, py::arg("seed") = 0,
           py::arg("block_order") = "conv_relu_bn", py::arg("pad_radius") = 0)
      .def_static("load", [](const std::string& path) {
        const Checkpoint ck = load_checkpoint(path);
        return Model{ck.network(), ck.pad_radius};
      }, py::arg("path"))
      .def("predict", &Model::predict, py::arg("image"), py::arg("tta") = true,
           "Boundary probability map with the same shape as the image.")
      .def_readwrite("pad_radius", &Model::pad_radius)
      .def_property_readonly("levels", [](const Model& self) { return self.net.spec().levels; })
      .def_property_readonly("parameter_count", [](const Model& self) { return self.net.parameter_count(); })
      .def_property_readonly("parameter_names", [](const Model& self) {
        std::vector<std::string> names;
        for (const auto& p : self.net.parameters()) names.push_back(p.name);
        return names;
      })
      .def("trace_shapes", [](const Model& self, std::int64_t height, std::int64_t width) {
        py::list rows;
        for (const auto& r : self.net.trace_shapes(height, width)) {
          py::list shapes;
          for (const auto& s : r.shapes) shapes.append(py::make_tuple(s.h, s.w, s.c));
          rows.append(py::make_tuple(r.block, r.ingredients, shapes));
        }
        return rows;
      }, py::arg("height"), py::arg("width"), "Rows of (block, ingredients, [(height, width, channels), ...]).");

  m.def("full_network", [](std::uint64_t seed) { return Model{FusionNet<float>::build(NetworkSpec::full(), seed), 64}; },
        py::arg("seed") = 0);

  m.def("train", [](const std::string& config_text, const std::vector<Array<float>>& images,
                    const std::vector<Array<float>>& labels, const std::string& checkpoint) {
    TrainConfig config = parse_config(config_text);
    apply_environment(config);
    const auto data = pairs_arg(images, labels);
    TrainResult result;
    {
      py::gil_scoped_release release;
      result = fusionnet::train(config, data);
    }
    if (!checkpoint.empty()) save_checkpoint(result.checkpoint, checkpoint);
    return py::make_tuple(Model{result.checkpoint.network(), result.checkpoint.pad_radius}, result.losses, result.diverged);
  }, py::arg("config"), py::arg("images"), py::arg("labels"), py::arg("checkpoint") = "",
        "Trains from INI config text; returns (network, losses, diverged).");

  m.def("synthetic_cells", [](int size, int cells, double membrane_width, double noise, std::uint64_t seed) {
    const SamplePair s = fusionnet::synthetic_cells({size, cells, membrane_width, noise}, seed);
    return py::make_tuple(to_array(s.image), to_array(s.label));
  }, py::arg("size") = 64, py::arg("cells") = 6, py::arg("membrane_width") = 4.0, py::arg("noise") = 0.03,
        py::arg("seed") = 0);

  // metrics
  m.def("threshold", [](const Array<float>& p, double t) { return to_array(threshold(image_arg(p), t)); },
        py::arg("prob"), py::arg("t") = 0.5);
  m.def("median_filter", [](const Array<float>& p, int r) { return to_array(median_filter(image_arg(p), r)); },
        py::arg("prob"), py::arg("radius") = 2);
  m.def("connected_components", [](const Array<std::uint8_t>& mask, int connectivity) {
    return to_array(connected_components(mask_arg(mask), connectivity));
  }, py::arg("mask"), py::arg("connectivity") = 4);
  m.def("thin_boundaries", [](const Array<std::int32_t>& l) { return to_array(thin_boundaries(labels_arg(l))); },
        py::arg("labels"));
  m.def("labels_from_boundary", [](const Array<float>& b) { return to_array(labels_from_boundary(image_arg(b, "label"))); },
        py::arg("boundary_label"));
  m.def("rand_fscore", [](const Array<std::int32_t>& pred, const Array<std::int32_t>& truth) {
    return rand_fscore(labels_arg(pred, "pred"), labels_arg(truth, "truth"));
  }, py::arg("pred"), py::arg("truth"));
  m.def("info_fscore", [](const Array<std::int32_t>& pred, const Array<std::int32_t>& truth) {
    return info_fscore(labels_arg(pred, "pred"), labels_arg(truth, "truth"));
  }, py::arg("pred"), py::arg("truth"));
  m.def("dice", [](const Array<std::uint8_t>& pred, const Array<std::uint8_t>& truth) {
    return dice(mask_arg(pred, "pred"), mask_arg(truth, "truth"));
  }, py::arg("pred"), py::arg("truth"));
  m.def("evaluate", [](const Array<float>& prob, const Array<std::int32_t>& truth, double t, int median_radius,
                       bool border_thinning) {
    return report_dict(evaluate(image_arg(prob, "prob"), labels_arg(truth, "truth"), {t, median_radius, border_thinning}));
  }, py::arg("prob"), py::arg("truth"), py::arg("threshold") = 0.5, py::arg("median_radius") = 2,
        py::arg("border_thinning") = true);

  // augmentation
  m.def("d4_apply", [](const Array<float>& img, int index) { return to_array(d4_apply(image_arg(img), orientation(index))); },
        py::arg("image"), py::arg("orientation"), "Orientation 0-3: quarter turns; 4-7: mirrored, then turned.");
  m.def("mirror_pad", [](const Array<float>& img, int r) { return to_array(mirror_pad(image_arg(img), r)); },
        py::arg("image"), py::arg("radius"));
  m.def("crop_center", [](const Array<float>& img, int r) { return to_array(crop_center(image_arg(img), r)); },
        py::arg("image"), py::arg("radius"));
  m.def("enrich", [](const std::vector<Array<float>>& images, const std::vector<Array<float>>& labels) {
    py::list out_images, out_labels;
    for (const auto& s : enrich(pairs_arg(images, labels))) {
      out_images.append(to_array(s.image));
      out_labels.append(to_array(s.label));
    }
    return py::make_tuple(out_images, out_labels);
  }, py::arg("images"), py::arg("labels"));
  m.def("elastic_warp", [](const Array<float>& image, const Array<float>& label, double amplitude, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const SamplePair s = elastic_warp({image_arg(image), image_arg(label, "label")}, sample_elastic_field(rng, amplitude));
    return py::make_tuple(to_array(s.image), to_array(s.label));
  }, py::arg("image"), py::arg("label"), py::arg("amplitude") = 10.0, py::arg("seed") = 0);
  m.def("add_gaussian_noise", [](const Array<float>& image, double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return to_array(add_gaussian_noise(image_arg(image), sigma, rng));
  }, py::arg("image"), py::arg("sigma") = 0.1, py::arg("seed") = 0);

  m.def("gradient_suite", [](std::uint64_t seed, int trials) {
    py::list out;
    for (const auto& r : run_gradient_suite(seed, trials)) {
      py::dict d;
      d["op"] = r.op;
      d["trials"] = r.trials;
      d["max_error"] = r.max_error;
      d["passed"] = r.passed;
      out.append(d);
    }
    return out;
  }, py::arg("seed") = 0, py::arg("trials") = 20);
}

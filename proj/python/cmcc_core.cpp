#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "cmcc/baselines.hpp"
#include "cmcc/data.hpp"
#include "cmcc/errors.hpp"
#include "cmcc/evaluation.hpp"
#include "cmcc/model.hpp"
#include "cmcc/pipeline.hpp"
#include "cmcc/training.hpp"

namespace py = pybind11;
using namespace cmcc;

namespace {

template <typename T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <typename T>
Tensor3<T> to_tensor(const Array<T>& a) {
    if (a.ndim() != 3 || a.shape(2) != 3) throw ShapeError("expected an H x W x 3 array");
    Tensor3<T> t(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), 3);
    std::memcpy(t.data().data(), a.data(), t.size() * sizeof(T));
    return t;
}

template <typename T>
py::array_t<T> to_array(const Tensor3<T>& t) {
    py::array_t<T> a({t.height(), t.width(), t.channels()});
    std::memcpy(a.mutable_data(), t.data().data(), t.size() * sizeof(T));
    return a;
}

py::array_t<float> kernel_array(const Kernel4<float>& k) {
    if (k.empty()) return py::array_t<float>(std::vector<py::ssize_t>{0, 0, 0, 0});
    py::array_t<float> a({k.kh(), k.kw(), k.cin(), k.cout()});
    std::memcpy(a.mutable_data(), k.data().data(), k.size() * sizeof(float));
    return a;
}

Variant variant_arg(const std::string& name) {
    auto v = parse_variant(name);
    if (!v) throw py::value_error("unknown variant '" + name + "'");
    return *v;
}

py::tuple vec3(const Vec3& v) { return py::make_tuple(v[0], v[1], v[2]); }

Vec3 vec3_arg(const std::vector<double>& v) {
    if (v.size() != 3) throw py::value_error("expected three components");
    return {v[0], v[1], v[2]};
}

py::dict image_dict(const LabeledImage& img) {
    py::dict d;
    d["id"] = img.id;
    d["pixels"] = to_array(img.pixels);
    d["gt"] = vec3(img.gt);
    d["camera"] = img.camera ? py::object(py::str(*img.camera)) : py::object(py::none());
    return d;
}

LabeledImage image_from_dict(const py::dict& d) {
    LabeledImage img;
    img.id = d["id"].cast<std::string>();
    img.pixels = to_tensor(d["pixels"].cast<Array<std::uint8_t>>());
    img.gt = unit_vector(vec3_arg(d["gt"].cast<std::vector<double>>()));
    if (d.contains("camera") && !d["camera"].is_none()) img.camera = d["camera"].cast<std::string>();
    return img;
}

Dataset dataset_arg(const py::list& images) {
    Dataset data;
    for (const auto& item : images) data.images.push_back(image_from_dict(item.cast<py::dict>()));
    data.canonicalize();
    return data;
}

py::list dataset_list(const Dataset& data) {
    py::list out;
    for (const auto& img : data.images) out.append(image_dict(img));
    return out;
}

py::dict stats_dict(const ErrorStats& s) {
    py::dict d;
    d["mean"] = s.mean;
    d["median"] = s.median;
    d["trimean"] = s.trimean;
    d["best25"] = s.best25;
    d["worst25"] = s.worst25;
    d["n"] = s.n;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Convolutional-mean illuminant estimation";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<CmParams>(m, "Params")
        .def_property_readonly("variant", [](const CmParams& p) { return std::string(variant_name(p.variant)); })
        .def_property_readonly("param_count", &CmParams::param_count)
        .def("weights", [](const CmParams& p) { return py::make_tuple(kernel_array(p.f1), kernel_array(p.f2), kernel_array(p.f3)); },
             "Copies of the three filter banks, each kh x kw x cin x cout.")
        .def("to_bytes", [](const CmParams& p) {
            const auto b = serialize(p);
            return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
        })
        .def_static("from_bytes", [](const py::bytes& b) {
            const std::string s = b;
            return deserialize(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
        })
        .def("save", [](const CmParams& p, const std::filesystem::path& path) { save_model(path, p); })
        .def_static("load", [](const std::filesystem::path& path) { return load_model(path); })
        .def("__repr__", [](const CmParams& p) {
            return "<Params variant=" + std::string(variant_name(p.variant)) + " weights=" + std::to_string(p.param_count()) + ">";
        });

    m.def("init_kaiming", [](std::uint64_t seed, const std::string& variant) { return init_kaiming(seed, variant_arg(variant)); },
          py::arg("seed"), py::arg("variant") = "cm");

    m.def("forward", [](const CmParams& p, const Array<float>& x) {
              const auto r = forward(p, to_tensor(x));
              return py::make_tuple(py::make_tuple(r.estimate[0], r.estimate[1], r.estimate[2]), r.degenerate);
          },
          py::arg("params"), py::arg("input"),
          "Network on an already prepared H x W x 3 float input; returns (estimate, degenerate).");
    m.def("prepare_input", [](const Array<std::uint8_t>& img, const std::string& variant) {
              return to_array(prepare_input(to_tensor(img), variant_arg(variant)));
          },
          py::arg("pixels"), py::arg("variant") = "cm");
    m.def("predict", [](const CmParams& p, const Array<std::uint8_t>& img) {
              LabeledImage li{"", to_tensor(img), {0, 0, 1}, {}};
              const auto r = predict(p, li);
              return py::make_tuple(vec3(r.illuminant), r.degenerate);
          },
          py::arg("params"), py::arg("pixels"), "Estimate for an 8-bit frame of any size; returns (estimate, degenerate).");
    m.def("thumbnail", [](const Array<std::uint8_t>& img) {
        return to_array(make_thumbnail({"", to_tensor(img), {0, 0, 1}, {}}).pixels);
    });

    m.def("gray_world", [](const Array<float>& img) { return vec3(gray_world(to_tensor(img)).illuminant); });
    m.def("white_patch", [](const Array<float>& img) { return vec3(white_patch(to_tensor(img)).illuminant); });
    m.def("shades_of_gray", [](const Array<float>& img, double p) { return vec3(shades_of_gray(to_tensor(img), p).illuminant); },
          py::arg("image"), py::arg("p") = 6.0);
    m.def("gray_edge", [](const Array<float>& img, int order, double p) {
              const auto e = gray_edge(to_tensor(img), order, p);
              return py::make_tuple(vec3(e.illuminant), e.fallback);
          },
          py::arg("image"), py::arg("order") = 1, py::arg("p") = 1.0);

    m.def("angular_error", [](const std::vector<double>& e, const std::vector<double>& gt) {
        return angular_error(vec3_arg(e), vec3_arg(gt));
    });
    m.def("error_stats", [](const std::vector<double>& errors) { return stats_dict(error_stats(errors)); });

    m.def("synth", [](std::uint64_t seed, int n, int width, int height) {
              MondrianSpec shape;
              shape.width = width;
              shape.height = height;
              return dataset_list(synth_generate(seed, n, shape));
          },
          py::arg("seed"), py::arg("n"), py::arg("width") = 384, py::arg("height") = 256);
    m.def("load_dataset", [](const std::filesystem::path& dir) { return dataset_list(load_dataset(dir)); });
    m.def("save_dataset", [](const std::filesystem::path& dir, const py::list& images) { save_dataset(dir, dataset_arg(images)); });

    m.def("evaluate", [](const CmParams& p, const py::list& images, int jobs) { return evaluate_model(p, dataset_arg(images), jobs); },
          py::arg("params"), py::arg("images"), py::arg("jobs") = 1, "Angular error per image, in id order.");

    m.def("train",
          [](const py::list& train, py::object test, int epochs, int batch, double lr, std::uint64_t seed,
             const std::string& variant, bool select_on_test, const py::object& on_epoch) {
              TrainConfig cfg;
              cfg.epochs = epochs;
              cfg.batch = batch;
              cfg.lr = lr;
              cfg.seed = seed;
              cfg.variant = variant_arg(variant);
              cfg.select_on_test = select_on_test;
              const Dataset tr = dataset_arg(train);
              const Dataset te = test.is_none() ? tr : dataset_arg(test.cast<py::list>());
              EpochCallback cb;
              if (!on_epoch.is_none()) {
                  cb = [&](const EpochRecord& r) { on_epoch(r.epoch, r.train_loss, r.test_mean_deg); };
              }
              TrainReport report;
              {
                  py::gil_scoped_release release;
                  if (cb) {
                      // the callback needs the interpreter back
                      auto guarded = [&](const EpochRecord& r) {
                          py::gil_scoped_acquire acquire;
                          cb(r);
                      };
                      report = train_fold(tr, te, cfg, guarded);
                  } else {
                      report = train_fold(tr, te, cfg);
                  }
              }
              py::list history;
              for (const auto& r : report.history) {
                  py::dict d;
                  d["epoch"] = r.epoch;
                  d["train_loss"] = r.train_loss;
                  d["test_mean_deg"] = r.test_mean_deg;
                  d["test_median_deg"] = r.test_median_deg;
                  history.append(d);
              }
              py::dict out;
              out["params"] = report.params;
              out["final_params"] = report.final_params;
              out["selected_epoch"] = report.selected_epoch;
              out["selected_test_error"] = report.selected_test_error;
              out["history"] = history;
              return out;
          },
          py::arg("train"), py::arg("test") = py::none(), py::arg("epochs") = 2000, py::arg("batch") = 16,
          py::arg("lr") = 1e-3, py::arg("seed") = 0, py::arg("variant") = "cm", py::arg("select_on_test") = true,
          py::arg("on_epoch") = py::none());
}

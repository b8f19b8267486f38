// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "sgr/cli.hpp"
#include "sgr/config.hpp"
#include "sgr/errors.hpp"
#include "sgr/model.hpp"
#include "sgr/serve.hpp"
#include "sgr/synth.hpp"
#include "sgr/training.hpp"

namespace py = pybind11;
using namespace sgr;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const Tensor& t) {
  Array a(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.storage().begin(), t.storage().end(), a.mutable_data());
  return a;
}

Tensor from_numpy(const Array& a) {
  Shape s(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(s), std::vector<double>(a.data(), a.data() + a.size()));
}

/// (L, K, 3) coordinates with NaN for missing landmarks, plus timestamps.
py::tuple sequence_arrays(const GestureSequence& seq) {
  const std::size_t k = seq.frames.front().landmarks.size();
  Array xyz({static_cast<py::ssize_t>(seq.size()), static_cast<py::ssize_t>(k), py::ssize_t{3}});
  py::array_t<std::int64_t> t(static_cast<py::ssize_t>(seq.size()));
  double* out = xyz.mutable_data();
  for (std::size_t f = 0; f < seq.size(); ++f) {
    t.mutable_data()[f] = seq.frames[f].t;
    for (const auto& l : seq.frames[f].landmarks) {
      const bool miss = l.is_missing();
      *out++ = miss ? NAN : l.x;
      *out++ = miss ? NAN : l.y;
      *out++ = miss ? NAN : l.z;
    }
  }
  return py::make_tuple(t, xyz);
}

py::dict prediction_dict(const Prediction& p) {
  py::dict d;
  d["window_end"] = p.window_end;
  d["label"] = p.label;
  d["label_name"] = p.label_name;
  d["probs"] = p.probs;
  return d;
}

class PyModel {
 public:
  explicit PyModel(Model<double> m) : model_(std::move(m)) {}
  PyModel(const PyModel&) = delete;
  PyModel(PyModel&&) = default;
  static PyModel load(const std::filesystem::path& p) { return PyModel(load_checkpoint<double>(p)); }
  std::string spec_json() const { return to_json(model_.spec()).dump(); }
  std::vector<std::string> classes() const {
    std::vector<std::string> out;
    for (std::size_t k = 0; k < model_.spec().classes; ++k) out.push_back(model_.class_name(k));
    return out;
  }
  Array predict(const Array& batch) {
    const Tensor x = from_numpy(batch);
    Tensor p;
    {
      py::gil_scoped_release nogil;
      p = sgr::predict(model_, x);
    }
    return to_numpy(p);
  }
  py::list infer(const std::filesystem::path& kpjl, std::size_t window, std::size_t stride) {
    StreamConfig c{window, stride};
    c.validate();
    const auto seq = read_sequence(kpjl);
    std::vector<Prediction> preds;
    {
      py::gil_scoped_release nogil;
      preds = offline_window_predictions(model_, seq, c);
    }
    py::list out;
    for (const auto& p : preds) out.append(prediction_dict(p));
    return out;
  }

 private:
  Model<double> model_;
};

}  // namespace

PYBIND11_MODULE(_sgr, m) {
  m.doc() = "Sign-gesture recognition core: preprocessing, models, training and streaming inference.";

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release nogil;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the sgr command line in-process; returns (exit_code, stdout, stderr).");

  m.def("f1", &f1, py::arg("precision"), py::arg("recall"));
  m.def("round_tenth", &round_tenth, py::arg("pct"));

  m.def("verify_arch_json", [] {
    const auto a = verify_paper_architecture();
    nlohmann::ordered_json j;
    j["computed_total"] = a.computed_total;
    j["published_total"] = a.paper_total;
    j["delta"] = a.delta();
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto& r : a.rows)
      j["rows"].push_back({{"name", r.name},
                           {"output_shape", r.output_shape},
                           {"expected_output_shape", r.expected_output_shape},
                           {"params", r.computed_params},
                           {"expected_params", r.expected_params},
                           {"params_match", r.params_match},
                           {"shape_match", r.shape_match},
                           {"note", r.note}});
    return j.dump();
  });

  m.def(
      "synth",
      [](const std::filesystem::path& out, std::size_t classes, std::size_t per_class, std::uint64_t seed,
         double jitter_scale, std::size_t jobs) {
        py::gil_scoped_release nogil;
        return serialize_manifest(synth_dataset({classes, per_class, seed, jitter_scale}, out, jobs));
      },
      py::arg("out"), py::arg("classes") = 5, py::arg("per_class") = 40, py::arg("seed") = 0,
      py::arg("jitter_scale") = 1.0, py::arg("jobs") = 1, "Writes a synthetic corpus; returns the manifest JSON.");

  m.def(
      "separability_oracle",
      [](const std::filesystem::path& manifest, std::size_t jobs) {
        const auto mf = read_manifest(manifest);
        py::gil_scoped_release nogil;
        return separability_oracle(mf, {}, jobs);
      },
      py::arg("manifest"), py::arg("jobs") = 1);

  m.def(
      "read_sequence", [](const std::filesystem::path& p) { return sequence_arrays(read_sequence(p)); },
      py::arg("path"), "Returns (t, xyz) with NaN marking missing landmarks.");

  m.def(
      "preprocess",
      [](const std::filesystem::path& p, const std::string& config_json) {
        PreprocessConfig c;
        if (!config_json.empty()) c = preprocess_config_from_json(nlohmann::json::parse(config_json));
        return to_numpy(preprocess_pipeline(read_sequence(p), c));
      },
      py::arg("path"), py::arg("config_json") = "", "Runs the full pipeline; returns a (T, K, 3) array.");

  py::class_<PyModel>(m, "Model")
      .def_static("load", &PyModel::load, py::arg("path"))
      .def_property_readonly("spec_json", &PyModel::spec_json)
      .def_property_readonly("classes", &PyModel::classes)
      .def("predict", &PyModel::predict, py::arg("batch"), "Class probabilities for an (N, T, K, 3) batch.")
      .def("infer", &PyModel::infer, py::arg("kpjl"), py::arg("window") = 30, py::arg("stride") = 5);

  m.def(
      "summarize_latency",
      [](std::vector<double> samples) {
        const auto s = summarize_latency(std::move(samples));
        py::dict d;
        d["p50"] = s.p50;
        d["p95"] = s.p95;
        d["mean"] = s.mean;
        d["n"] = s.n;
        return d;
      },
      py::arg("samples_ms"));
}

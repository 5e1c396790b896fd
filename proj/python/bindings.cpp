#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "cli.hpp"
#include "ffc/analysis.hpp"
#include "ffc/attribution.hpp"
#include "ffc/data.hpp"
#include "ffc/error.hpp"
#include "ffc/formats.hpp"
#include "ffc/game.hpp"

namespace py = pybind11;
using namespace ffc;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ComplexArray = py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  std::vector<std::size_t> shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

// [C,H,W] image; a 2-D array is read as a single channel.
Tensor to_image(const Array& a) {
  if (a.ndim() == 2) return Tensor({1, static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))},
                                   std::vector<double>(a.data(), a.data() + a.size()));
  if (a.ndim() != 3) throw UsageError("expected a [C,H,W] or [H,W] array");
  return to_tensor(a);
}

py::array_t<double> from_values(const std::vector<double>& v, std::vector<py::ssize_t> shape) {
  py::array_t<double> out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<double> from_tensor(const Tensor& t) {
  return from_values(t.storage(), std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
}

py::array_t<double> from_map(const ImportanceMap& m) {
  return from_values(m.scores, {static_cast<py::ssize_t>(m.channels), static_cast<py::ssize_t>(m.height),
                                static_cast<py::ssize_t>(m.width)});
}

ImportanceMap to_map(const Array& a, Domain domain) {
  const Tensor t = to_image(a);
  return ImportanceMap(domain, t.dim(0), t.dim(1), t.dim(2), t.storage());
}

std::vector<Tensor> to_images(const Array& batch) {
  if (batch.ndim() != 4) throw UsageError("expected an [N,C,H,W] array");
  const Tensor t = to_tensor(batch);
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < t.dim(0); ++i) out.push_back(t.at(i));
  return out;
}

AttributionConfig make_config(double lr, std::size_t iterations, const std::string& denominator,
                              const std::string& target, double epsilon) {
  AttributionConfig c;
  c.learning_rate = lr;
  c.iterations = iterations;
  c.projection_denominator = parse_projection_denominator(denominator);
  c.target_policy = parse_target_policy(target);
  c.epsilon = epsilon;
  return c;
}

py::dict curve_dict(const DeletionCurve& c) {
  py::dict d;
  d["fractions"] = c.fractions;
  d["mean"] = c.mean;
  d["standard_error"] = c.standard_error;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Fourier-domain feature attribution and evaluation";

  static py::exception<UsageError> usage_error(m, "UsageError", PyExc_ValueError);
  static py::exception<DataError> data_error(m, "DataError", PyExc_IOError);
  static py::exception<NumericalError> numerical_error(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const UsageError& e) {
      usage_error(e.what());
    } catch (const DataError& e) {
      data_error(e.what());
    } catch (const NumericalError& e) {
      numerical_error(e.what());
    }
  });

  // Fourier
  m.def(
      "dft2",
      [](const Array& grid) {
        if (grid.ndim() != 2) throw UsageError("dft2 expects a 2-D array");
        const RealGrid g(grid.shape(0), grid.shape(1), std::vector<double>(grid.data(), grid.data() + grid.size()));
        const Spectrum s = dft2(g);
        py::array_t<std::complex<double>> out({grid.shape(0), grid.shape(1)});
        std::copy(s.values.begin(), s.values.end(), out.mutable_data());
        return out;
      },
      py::arg("grid"));
  m.def(
      "idft2",
      [](const ComplexArray& spec) {
        if (spec.ndim() != 2) throw UsageError("idft2 expects a 2-D array");
        Spectrum s(spec.shape(0), spec.shape(1));
        std::copy(spec.data(), spec.data() + spec.size(), s.values.begin());
        const RealGrid g = idft2(s);
        return from_values(g.values, {spec.shape(0), spec.shape(1)});
      },
      py::arg("spectrum"), "Real inverse; raises ArithmeticError when the spectrum is not conjugate symmetric.");
  m.def(
      "conjugate_pair",
      [](std::size_t u, std::size_t v, std::size_t height, std::size_t width) {
        const auto p = conjugate_pair({0, u, v}, height, width);
        return py::make_tuple(p.u, p.v);
      },
      py::arg("u"), py::arg("v"), py::arg("height"), py::arg("width"));

  // Models
  py::class_<Checkpoint>(m, "Model")
      .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p); }, py::arg("path"))
      .def("save", [](const Checkpoint& c, const std::filesystem::path& p) { save_checkpoint(p, c); }, py::arg("path"))
      .def_property_readonly("arch", [](const Checkpoint& c) { return to_string(c.spec.arch); })
      .def_property_readonly("input_shape", [](const Checkpoint& c) { return c.spec.input_shape; })
      .def_property_readonly("classes", [](const Checkpoint& c) { return c.spec.classes; })
      .def_property_readonly("parameter_count", [](const Checkpoint& c) { return c.parameters.size(); })
      .def_property_readonly("final_loss", [](const Checkpoint& c) { return c.meta.final_loss; })
      .def(
          "logits", [](const Checkpoint& c, const Array& x) { return forward_one(c, to_image(x).values()); },
          py::arg("x"))
      .def(
          "predict", [](const Checkpoint& c, const Array& x) { return predict_one(c, to_image(x).values()); },
          py::arg("x"));

  m.def(
      "train",
      [](const Array& images, const std::vector<std::size_t>& labels, const std::string& arch,
         const std::vector<std::size_t>& hidden, std::size_t epochs, double step_size, std::size_t batch_size,
         std::uint64_t seed) {
        LabeledDataset d;
        d.samples = to_images(images);
        d.labels = labels;
        for (auto l : labels) d.classes = std::max(d.classes, l + 1);
        ModelSpec spec;
        spec.arch = parse_architecture(arch);
        const auto& s = d.samples.at(0).shape();
        spec.input_shape = {s[0], s[1], s[2]};
        spec.classes = d.classes;
        spec.hidden = hidden;
        TrainOptions o{seed, epochs, step_size, batch_size};
        py::gil_scoped_release release;
        return train(spec, d, o);
      },
      py::arg("images"), py::arg("labels"), py::arg("arch") = "mlp", py::arg("hidden") = std::vector<std::size_t>{256},
      py::arg("epochs") = 30, py::arg("step_size") = 0.05, py::arg("batch_size") = 16, py::arg("seed") = 0);

  // Data
  m.def(
      "planted_dataset",
      [](std::uint64_t seed, std::size_t size, std::size_t classes, std::size_t frequencies, double noise,
         std::size_t per_class) {
        PlantedConfig pc;
        pc.seed = seed;
        pc.height = pc.width = size;
        pc.classes = classes;
        pc.frequencies = frequencies;
        pc.noise = noise;
        pc.per_class = per_class;
        const LabeledDataset d = generate_planted_dataset(pc);
        std::vector<std::vector<std::pair<std::size_t, std::size_t>>> planted;
        for (const auto& set : d.planted) {
          auto& out = planted.emplace_back();
          for (const auto& f : set) out.emplace_back(f.u, f.v);
        }
        return py::make_tuple(from_tensor(d.all()), d.labels, planted);
      },
      py::arg("seed") = 0, py::arg("size") = 32, py::arg("classes") = 4, py::arg("frequencies") = 3,
      py::arg("noise") = 0.1, py::arg("per_class") = 200,
      "Returns (images [N,1,H,W], labels, planted (u, v) pairs per class).");

  // Attribution
  m.def(
      "ffc",
      [](const Checkpoint& model, const Array& x, double lr, std::size_t iterations, const std::string& denominator,
         const std::string& target, std::optional<std::size_t> label, double epsilon) {
        const auto cfg = make_config(lr, iterations, denominator, target, epsilon);
        const Tensor img = to_image(x);
        FfcResult r;
        {
          py::gil_scoped_release release;
          r = ffc_with_trace(model, img, cfg, label);
        }
        py::dict d;
        d["scores"] = from_map(r.map);
        d["expected"] = from_tensor(r.trace.rectified);
        d["losses"] = r.trace.losses;
        d["final_loss"] = r.trace.final_loss;
        d["target"] = r.trace.target;
        return d;
      },
      py::arg("model"), py::arg("x"), py::arg("lr") = 1000.0, py::arg("iterations") = 50,
      py::arg("denominator") = "original", py::arg("target") = "predicted", py::arg("label") = py::none(),
      py::arg("epsilon") = 1e-12);
  m.def(
      "input_x_gradient",
      [](const Checkpoint& model, const Array& x, std::size_t target) {
        return from_map(input_x_gradient(model, to_image(x), target));
      },
      py::arg("model"), py::arg("x"), py::arg("target"));
  m.def(
      "integrated_gradients",
      [](const Checkpoint& model, const Array& x, std::size_t target, std::size_t steps) {
        return from_map(integrated_gradients(model, to_image(x), target, steps));
      },
      py::arg("model"), py::arg("x"), py::arg("target"), py::arg("steps") = 50);
  m.def(
      "smoothgrad",
      [](const Checkpoint& model, const Array& x, std::size_t target, std::size_t samples, double sigma,
         std::uint64_t seed) { return from_map(smoothgrad(model, to_image(x), target, samples, sigma, seed)); },
      py::arg("model"), py::arg("x"), py::arg("target"), py::arg("samples") = 25, py::arg("sigma") = 0.15,
      py::arg("seed") = 0);
  m.def(
      "baseline_scores",
      [](const std::string& kind, const Array& x, std::uint64_t seed) {
        return from_map(baseline_scores(parse_baseline_kind(kind), to_image(x), seed));
      },
      py::arg("kind"), py::arg("x"), py::arg("seed") = 0, "kind: random, sorted_freq or energy");

  // Evaluation
  m.def(
      "deletion_game",
      [](const Checkpoint& model, const Array& images, const Array& maps, const std::string& domain,
         const std::string& direction, bool pair_conjugates, std::size_t workers) {
        const auto xs = to_images(images);
        std::vector<ImportanceMap> ms;
        const Domain d = parse_domain(domain);
        for (const auto& t : to_images(maps)) ms.emplace_back(d, t.dim(0), t.dim(1), t.dim(2), t.storage());
        GameConfig gc;
        gc.domain = d;
        gc.direction = parse_game_direction(direction);
        gc.pair_conjugates = pair_conjugates;
        GameReport r;
        {
          py::gil_scoped_release release;
          r = deletion_curves(model, xs, ms, gc, workers);
        }
        py::dict out;
        out["auc"] = r.auc;
        out["auc_standard_error"] = r.auc_standard_error;
        if (r.least_first) out["least_first"] = curve_dict(*r.least_first);
        if (r.most_first) out["most_first"] = curve_dict(*r.most_first);
        return out;
      },
      py::arg("model"), py::arg("images"), py::arg("maps"), py::arg("domain") = "fourier",
      py::arg("direction") = "both", py::arg("pair_conjugates") = true, py::arg("workers") = 1);
  m.def(
      "maintain_rate",
      [](const Checkpoint& model, const Array& images, const Array& maps, const std::vector<double>& keep) {
        const auto xs = to_images(images);
        std::vector<ImportanceMap> ms;
        for (const auto& t : to_images(maps)) ms.emplace_back(Domain::fourier, t.dim(0), t.dim(1), t.dim(2), t.storage());
        const auto c = maintain_rate_curve(model, xs, ms, keep);
        return py::make_tuple(c.rate, c.standard_error);
      },
      py::arg("model"), py::arg("images"), py::arg("maps"), py::arg("keep"));
  m.def(
      "binarize_high_score", [](const Array& map) { return binarize_high_score(to_map(map, Domain::fourier)); },
      py::arg("map"));
  m.def(
      "excess_kurtosis", [](const std::vector<double>& v) { return excess_kurtosis(v); }, py::arg("values"));
  m.def(
      "spearman", [](const std::vector<double>& a, const std::vector<double>& b) { return spearman(a, b); },
      py::arg("a"), py::arg("b"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one `ffc` invocation in-process; returns (exit code, stdout, stderr).");
}

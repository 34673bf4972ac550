#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "automiseg/errors.hpp"
#include "automiseg/eval.hpp"
#include "automiseg/image_ops.hpp"
#include "automiseg/mock_backends.hpp"
#include "automiseg/pipeline.hpp"
#include "automiseg/wire.hpp"

namespace py = pybind11;
using namespace automiseg;

namespace {

using ImageArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

ImageRgb8 to_image(const ImageArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw InvalidArgument("expected an (H, W, 3) uint8 array");
  const auto h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  return ImageRgb8(w, h, std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

ImageArray from_image(const ImageRgb8& img) {
  ImageArray out({img.height(), img.width(), 3});
  std::memcpy(out.mutable_data(), img.data().data(), img.data().size());
  return out;
}

BinaryMask to_mask(const py::array& any) {
  const auto a = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>::ensure(any);
  if (!a || a.ndim() != 2) throw InvalidArgument("expected an (H, W) mask array");
  std::vector<std::uint8_t> bits(a.data(), a.data() + a.size());
  for (auto& b : bits) b = b != 0;
  return BinaryMask(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), std::move(bits));
}

py::array_t<bool> from_mask(const BinaryMask& m) {
  py::array_t<bool> out({m.height(), m.width()});
  auto* dst = out.mutable_data();
  for (std::size_t i = 0; i < m.size(); ++i) dst[i] = m.data()[i] != 0;
  return out;
}

std::vector<Sample> to_samples(const std::vector<ImageArray>& images) {
  std::vector<Sample> out;
  char id[32];
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::snprintf(id, sizeof id, "img_%04zu", i);
    out.push_back({id, to_image(images[i])});
  }
  return out;
}

py::dict result_to_dict(const SampleResult& r) {
  py::dict d;
  d["status"] = to_string(r.status);
  d["mask"] = r.mask ? py::object(from_mask(*r.mask)) : py::none();
  d["bbox"] = r.bbox ? py::object(py::make_tuple(r.bbox->x_min, r.bbox->y_min, r.bbox->x_max, r.bbox->y_max))
                     : py::none();
  py::list pts;
  for (const auto& p : r.points) pts.append(py::make_tuple(p.x, p.y));
  d["points"] = pts;
  d["s_zc"] = r.score.s_zc;
  d["s_mt"] = r.score.s_mt;
  d["s_val"] = r.score.s_val;
  d["error"] = r.error;
  return d;
}

// Task, search space and backends bound together.
class Engine {
 public:
  Engine(TaskDefinition task, Backends backends)
      : task_(std::move(task)), space_(default_space(task_.grounding_sentences.size())),
        backends_(std::move(backends)) {
    task_.validate();
  }

  std::string base_config() const { return config_to_json(space_, automiseg::base_config(space_)).dump(); }

  Configuration parse(const std::string& config_json) const {
    auto c = config_from_json(space_, nlohmann::json::parse(config_json));
    validate(space_, c);
    return c;
  }

  py::dict segment(const ImageArray& image, const std::string& config_json) const {
    const auto img = to_image(image);
    const auto config = parse(config_json);
    SampleResult r;
    {
      py::gil_scoped_release release;
      r = segment_one(img, task_, config, backends_);
    }
    return result_to_dict(r);
  }

  py::dict adapt(const std::vector<ImageArray>& images, std::size_t n_trials, std::size_t subset_size,
                 std::uint64_t seed, const std::string& mode, std::size_t workers) const {
    const auto samples = to_samples(images);
    AdaptationSettings s;
    s.n_trials = n_trials;
    s.subset_size = subset_size;
    s.subset_seed = seed;
    s.tpe.seed = seed;
    s.mode = parse_mode(mode);
    s.workers = workers;
    AdaptationResult r;
    {
      py::gil_scoped_release release;
      r = automiseg::adapt(samples, task_, s, backends_);
    }
    py::dict d;
    d["best_config"] = config_to_json(space_, r.best_config).dump();
    std::vector<double> objectives;
    for (const auto& t : r.trials) objectives.push_back(t.objective);
    d["objectives"] = objectives;
    d["subset"] = r.subset;
    std::vector<std::string> per_sample;
    for (const auto& c : r.per_sample_configs) per_sample.push_back(config_to_json(space_, c).dump());
    d["per_sample_configs"] = per_sample;
    return d;
  }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> out;
    for (const auto& p : space_.params()) out.push_back(p.name);
    return out;
  }

 private:
  TaskDefinition task_;
  SearchSpace space_;
  Backends backends_;
};

TransformParams params_from_json(const std::string& j) {
  const auto space = default_space(1);
  auto full = automiseg::base_config(space);
  const auto parsed = nlohmann::json::parse(j);
  for (const auto& [k, v] : parsed.items()) {
    const auto name = kGroundingPrefix + k;
    if (!space.contains(name)) throw InvalidArgument("unknown transform parameter '" + k + "'");
    if (space.at(name).kind == ParamKind::kFloat) {
      full.set(name, v.get<double>());
    } else {
      full.set(name, v.get<std::int64_t>());
    }
  }
  auto p = transform_params_from(full, kGroundingPrefix);
  p.validate();
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Zero-shot segmentation engine with test-time adaptation";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);

  m.def("dice", [](const py::array& a, const py::array& b) { return dice(to_mask(a), to_mask(b)); },
        py::arg("a"), py::arg("b"));
  m.def("pearson", &pearson, py::arg("x"), py::arg("y"));

  m.def("hsv_shift", [](const ImageArray& i, int h, int s, int v) { return from_image(hsv_shift(to_image(i), h, s, v)); },
        py::arg("image"), py::arg("hue"), py::arg("sat"), py::arg("val"));
  m.def("rgb_shift", [](const ImageArray& i, int r, int g, int b) { return from_image(rgb_shift(to_image(i), r, g, b)); },
        py::arg("image"), py::arg("r"), py::arg("g"), py::arg("b"));
  m.def("clahe", [](const ImageArray& i, double clip, int grid) { return from_image(clahe(to_image(i), clip, grid)); },
        py::arg("image"), py::arg("clip"), py::arg("grid"));
  m.def("unsharp_mask", [](const ImageArray& i, double s) { return from_image(unsharp_mask(to_image(i), s)); },
        py::arg("image"), py::arg("strength"));
  m.def("_transform_chain",
        [](const ImageArray& i, const std::string& params) {
          return from_image(apply_transform_chain(to_image(i), params_from_json(params)));
        },
        py::arg("image"), py::arg("params_json"));

  m.def(
      "synthetic_benchmark",
      [](std::size_t n, std::uint64_t seed) {
        const auto b = generate_synthetic_benchmark(n, seed);
        py::list out;
        for (const auto& s : b.samples) out.append(py::make_tuple(s.id, from_image(s.image), from_mask(s.truth)));
        return out;
      },
      py::arg("n"), py::arg("seed"), "List of (id, image, truth) tuples.");
  m.def("write_synthetic_benchmark",
        [](std::size_t n, std::uint64_t seed, const std::filesystem::path& out) {
          write_benchmark(generate_synthetic_benchmark(n, seed), out);
        },
        py::arg("n"), py::arg("seed"), py::arg("out_dir"));

  py::class_<Engine>(m, "_Engine")
      .def_static("synthetic_mock", [] {
        const auto world = synthetic_world();
        return Engine(synthetic_task(), make_mock_backends(world));
      })
      .def_static("mock",
                  [](const std::filesystem::path& task, const std::filesystem::path& world) {
                    return Engine(load_task(task), make_mock_backends(load_mock_world(world)));
                  },
                  py::arg("task"), py::arg("world"))
      .def_static("remote",
                  [](const std::filesystem::path& task, const std::string& url, double timeout, int retries) {
                    BackendEndpoints e;
                    e.base_url = url;
                    e.timeout_seconds = timeout;
                    e.retries = retries;
                    return Engine(load_task(task), make_wire_backends(e));
                  },
                  py::arg("task"), py::arg("url"), py::arg("timeout") = 120.0, py::arg("retries") = 2)
      .def("base_config", &Engine::base_config)
      .def("parameter_names", &Engine::parameter_names)
      .def("segment", &Engine::segment, py::arg("image"), py::arg("config_json"))
      .def("adapt", &Engine::adapt, py::arg("images"), py::arg("n_trials"), py::arg("subset_size"),
           py::arg("seed"), py::arg("mode"), py::arg("workers"));
}

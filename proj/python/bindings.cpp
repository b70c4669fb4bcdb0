#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sstlf/pipeline.hpp"
#include "sstlf/synth.hpp"

namespace py = pybind11;
using namespace sstlf;

namespace {

template <typename T>
py::array_t<T> to_array(const Image<T>& img) {
  std::vector<py::ssize_t> shape{img.height(), img.width()};
  if (img.channels() > 1) shape.push_back(img.channels());
  py::array_t<T> out(shape);
  std::copy(img.data().begin(), img.data().end(), out.mutable_data());
  return out;
}

template <typename T>
Image<T> from_array(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw Error(ErrorKind::kInvalidArgument, "expected an HxW or HxWxC array");
  const int h = static_cast<int>(a.shape(0));
  const int w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  Image<T> img(w, h, c);
  std::copy(a.data(), a.data() + a.size(), img.data().begin());
  return img;
}

LabelProbabilityVolume volume_from(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 3) throw Error(ErrorKind::kInvalidArgument, "expected an HxWxC probability array");
  return {static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), static_cast<int>(a.shape(2)),
          std::vector<float>(a.data(), a.data() + a.size())};
}

SceneMaps maps_from(const LightField& lf, const std::vector<py::array_t<float, py::array::c_style | py::array::forcecast>>& disp,
                    const std::vector<py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>>& labels) {
  SceneMaps maps;
  for (std::size_t i = 0; i < disp.size(); ++i) {
    maps.disparity.push_back({from_array<float>(disp[i]), static_cast<int>(i) % lf.cols(), static_cast<int>(i) / lf.cols()});
  }
  for (const auto& l : labels) maps.labels.push_back(from_array<std::uint8_t>(l));
  return maps;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Semantic see-through light-field rendering";

  py::register_exception<Error>(m, "Error");

  py::class_<Calibration>(m, "Calibration")
      .def(py::init<>())
      .def_readwrite("grid_rows", &Calibration::grid_rows)
      .def_readwrite("grid_cols", &Calibration::grid_cols)
      .def_readwrite("baseline", &Calibration::baseline)
      .def_readwrite("disparity_scale", &Calibration::disparity_scale)
      .def_readwrite("disparity_min", &Calibration::disparity_min)
      .def_readwrite("disparity_max", &Calibration::disparity_max);

  py::class_<LightField>(m, "LightField")
      .def(py::init([](const Calibration& calib,
                       const std::vector<py::array_t<float, py::array::c_style | py::array::forcecast>>& views) {
             std::vector<ViewImage> imgs;
             for (const auto& v : views) imgs.push_back(from_array<float>(v));
             return LightField(calib, std::move(imgs));
           }),
           py::arg("calibration"), py::arg("views"))
      .def_property_readonly("cols", &LightField::cols)
      .def_property_readonly("rows", &LightField::rows)
      .def_property_readonly("width", &LightField::width)
      .def_property_readonly("height", &LightField::height)
      .def_property_readonly("channels", &LightField::channels)
      .def_property_readonly("calibration", &LightField::calibration)
      .def("view", [](const LightField& lf, int s, int t) { return to_array(lf.view(s, t)); }, py::arg("s"), py::arg("t"));

  m.def("load_lightfield", [](const fs::path& dir) { return load_lightfield(dir); }, py::arg("dir"));
  m.def("save_lightfield", &save_lightfield, py::arg("dir"), py::arg("lf"));

  m.def(
      "refocus",
      [](const LightField& lf, double d_f, const std::string& aperture, bool allow_out_of_range) {
        RenderResult r;
        {
          py::gil_scoped_release release;
          r = refocus(lf, {d_f, ApertureMask::parse(aperture, lf.cols(), lf.rows()), allow_out_of_range});
        }
        return py::make_tuple(to_array(r.image), to_array(r.valid));
      },
      py::arg("lf"), py::arg("d_f"), py::arg("aperture") = "full", py::arg("allow_out_of_range") = false,
      "Regular refocus; returns (image, valid mask).");

  m.def(
      "sst_render",
      [](const LightField& lf, const std::vector<py::array_t<float, py::array::c_style | py::array::forcecast>>& disparity,
         const std::vector<py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>>& labels, double d_f,
         double sigma_d, bool sigma_bypass, double c1, double c2, std::optional<int> target_label, double suppress_factor,
         const std::string& aperture, bool allow_out_of_range) {
        const SceneMaps maps = maps_from(lf, disparity, labels);
        WeightParams p;
        p.sigma_d = sigma_d;
        p.sigma_bypass = sigma_bypass;
        p.c1 = c1;
        p.c2 = c2;
        p.target_label = target_label;
        p.suppress_factor = suppress_factor;
        RenderResult r;
        {
          py::gil_scoped_release release;
          r = sst_render(lf, maps, SSTRequest{d_f, ApertureMask::parse(aperture, lf.cols(), lf.rows()), p, allow_out_of_range});
        }
        return py::make_tuple(to_array(r.image), to_array(r.valid));
      },
      py::arg("lf"), py::arg("disparity"), py::arg("labels"), py::arg("d_f"), py::arg("sigma_d") = 0.5,
      py::arg("sigma_bypass") = false, py::arg("c1") = 0.1, py::arg("c2") = 0.05, py::arg("target_label") = py::none(),
      py::arg("suppress_factor") = 2.0, py::arg("aperture") = "full", py::arg("allow_out_of_range") = false,
      "Semantic see-through render; returns (image, valid mask).");

  m.def("depth_weight", &depth_weight, py::arg("d_ray"), py::arg("d_f"), py::arg("sigma_d"), py::arg("c1"),
        py::arg("sigma_bypass") = false);
  m.def("semantic_weight", &semantic_weight, py::arg("d_f"), py::arg("d_min"), py::arg("d_max"), py::arg("sigma_d"),
        py::arg("c2"));
  m.def("normalize_weights", [](const std::vector<double>& w) { return normalize_weights(w); }, py::arg("weights"));

  m.def("entropy", [](const std::vector<float>& p) { return entropy(p); }, py::arg("p"));
  m.def("entropy_map",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& probs) {
          return to_array(entropy_map(volume_from(probs)));
        },
        py::arg("probs"));
  m.def("map_labels",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& probs) {
          return to_array(map_labels(volume_from(probs)));
        },
        py::arg("probs"));
  m.def(
      "score_threshold",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& probs,
         const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& gt, double mexp) {
        const LabelProbabilityVolume vol = volume_from(probs);
        const ThresholdScore s = score_threshold(vol, map_labels(vol), from_array<std::uint8_t>(gt), mexp);
        return py::dict(py::arg("epsilon_h") = s.epsilon_h, py::arg("accuracy") = s.accuracy,
                        py::arg("coverage") = s.coverage, py::arg("score") = s.score);
      },
      py::arg("probs"), py::arg("gt"), py::arg("m") = kDefaultScoreExponent);
  m.def(
      "hcsm",
      [](const py::array_t<float, py::array::c_style | py::array::forcecast>& probs, double eps) {
        const LabelProbabilityVolume vol = volume_from(probs);
        return to_array(apply_confidence(map_labels(vol), hcsm_filter(vol, eps)));
      },
      py::arg("probs"), py::arg("epsilon_h"), "MAP labels with unconfident pixels set to 255.");

  m.def(
      "lf_disparity",
      [](const LightField& lf, double p1, double p2, double alpha, double eps_i) {
        StereoParams params;
        params.sgm.p1 = p1;
        params.sgm.p2 = p2;
        params.match.alpha = alpha;
        params.filter.eps_i = eps_i;
        std::vector<DisparityMap> maps;
        {
          py::gil_scoped_release release;
          maps = lf_disparity(lf, params);
        }
        py::list out;
        for (const DisparityMap& d : maps) out.append(to_array(d.disp));
        return out;
      },
      py::arg("lf"), py::arg("p1") = 1.0, py::arg("p2") = 8.0, py::arg("alpha") = 0.7, py::arg("eps_i") = 0.03);

  m.def(
      "refine_labels",
      [](const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& hcsm,
         const py::array_t<float, py::array::c_style | py::array::forcecast>& disparity, double eps_d, double p_n,
         double p_d, double tau, std::optional<int> ground_label, bool use_normals) {
        RefineParams p;
        p.eps_d = eps_d;
        p.p_n = p_n;
        p.p_d = p_d;
        p.tau = tau;
        p.ground_label = ground_label;
        p.use_normals = use_normals;
        return to_array(refine_labels(from_array<std::uint8_t>(hcsm), DisparityMap{from_array<float>(disparity)}, p));
      },
      py::arg("hcsm"), py::arg("disparity"), py::arg("eps_d") = 0.1, py::arg("p_n") = 1.0, py::arg("p_d") = 1.0,
      py::arg("tau") = 0.5, py::arg("ground_label") = py::none(), py::arg("use_normals") = true);

  m.def(
      "synth_scene",
      [](const std::string& spec_json) {
        const synth::SceneData data = synth::render_scene(synth::parse_scene(nlohmann::json::parse(spec_json)));
        py::list disp, labels, probs;
        for (const DisparityMap& d : data.disparity) disp.append(to_array(d.disp));
        for (const LabelMap& l : data.labels) labels.append(to_array(l));
        for (const LabelProbabilityVolume& v : data.probabilities) {
          py::array_t<float> a({v.height(), v.width(), v.num_classes()});
          std::copy(v.data().begin(), v.data().end(), a.mutable_data());
          probs.append(a);
        }
        return py::dict(py::arg("lightfield") = data.lightfield, py::arg("disparity") = disp,
                        py::arg("labels") = labels, py::arg("probabilities") = probs,
                        py::arg("classes") = data.palette.names);
      },
      py::arg("spec_json"), "Renders a scene spec given as JSON text.");
  m.def(
      "synth_dataset",
      [](const fs::path& spec, const fs::path& out) {
        const synth::SceneSpec s = synth::load_scene(spec);
        synth::write_dataset(out, s, synth::render_scene(s));
      },
      py::arg("spec"), py::arg("out"));

  m.def("read_pfm", [](const fs::path& p) { return to_array(io::read_pfm(p)); }, py::arg("path"));
  m.def(
      "write_pfm",
      [](const fs::path& p, const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
        io::write_pfm(p, from_array<float>(a));
      },
      py::arg("path"), py::arg("image"));

  m.def(
      "run_pipeline",
      [](std::optional<fs::path> config, const fs::path& workdir, const std::vector<std::string>& overrides) {
        const PipelineResult r = run_pipeline(load_config(config, overrides), workdir);
        py::list stages;
        for (const StageRecord& s : r.stages) {
          stages.append(py::dict(py::arg("name") = s.name, py::arg("status") = s.status, py::arg("key") = s.key,
                                 py::arg("outputs") = s.outputs));
        }
        return stages;
      },
      py::arg("config"), py::arg("workdir"), py::arg("overrides") = std::vector<std::string>{});
}

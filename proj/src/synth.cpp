#include "sstlf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <random>

#include "sstlf/image_io.hpp"
#include "sstlf/parallel.hpp"

namespace sstlf::synth {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lattice(long ix, long iy, std::uint64_t seed) noexcept {
  const std::uint64_t h = splitmix64(static_cast<std::uint64_t>(ix) * 0x8da6b343ULL ^
                                     splitmix64(static_cast<std::uint64_t>(iy) * 0xd8163841ULL ^ seed));
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

double fade(double t) noexcept { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double value_octave(double u, double v, std::uint64_t seed) noexcept {
  const double fu = std::floor(u);
  const double fv = std::floor(v);
  const auto ix = static_cast<long>(fu);
  const auto iy = static_cast<long>(fv);
  const double tu = fade(u - fu);
  const double tv = fade(v - fv);
  const double a = lattice(ix, iy, seed);
  const double b = lattice(ix + 1, iy, seed);
  const double c = lattice(ix, iy + 1, seed);
  const double d = lattice(ix + 1, iy + 1, seed);
  return (a * (1 - tu) + b * tu) * (1 - tv) + (c * (1 - tu) + d * tu) * tv;
}

}  // namespace

double value_noise(double u, double v, std::uint64_t seed, double scale, int octaves) noexcept {
  double sum = 0.0;
  double norm = 0.0;
  double amp = 1.0;
  double freq = 1.0 / scale;
  for (int o = 0; o < octaves; ++o) {
    sum += amp * value_octave(u * freq, v * freq, splitmix64(seed + static_cast<std::uint64_t>(o)));
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return sum / norm;
}

// Spec parsing ---------------------------------------------------------------

void SceneSpec::validate() const {
  auto bad = [](const std::string& msg) { throw Error(ErrorKind::kBadSpec, msg); };
  if (width < 8 || height < 8) bad("image must be at least 8x8");
  if (channels != 1 && channels != 3) bad("channels must be 1 or 3");
  if (grid_rows < 1 || grid_cols < 1) bad("grid must be at least 1x1");
  if (!(baseline > 0.0) || !(disparity_scale > 0.0)) bad("baseline and disparity_scale must be positive");
  if (!(disparity_range[0] <= disparity_range[1])) bad("disparity_range must be [min,max]");
  if (noise < 0.0) bad("noise must be >= 0");
  if (classes.empty() || classes.size() > 255) bad("need 1..255 classes");
  if (view_format != "pfm" && view_format != "png") bad("view_format must be pfm or png");
  if (probabilities.temperature < 0.0 || probabilities.noise_temperature <= 0.0 || probabilities.label_noise < 0.0 ||
      probabilities.label_noise > 1.0) {
    bad("bad probability settings");
  }
  if (layers.empty()) bad("scene needs at least one layer");
  for (const Layer& l : layers) {
    if (l.label < 0 || l.label >= static_cast<int>(classes.size())) bad("layer '" + l.name + "' has unknown label");
    if (!(l.texture.scale > 0.0) || l.texture.octaves < 1) bad("layer '" + l.name + "' has bad texture");
    if (l.mask.kind == MaskSpec::Kind::kNoise && !(l.mask.coverage >= 0.0 && l.mask.coverage <= 1.0)) {
      bad("mask coverage must lie in [0,1]");
    }
    // Parallax must keep the per-layer ray solve invertible.
    const double max_off = std::max(grid_cols, grid_rows);
    if (std::abs(l.gradient_u) * max_off >= 0.5 || std::abs(l.gradient_v) * max_off >= 0.5) {
      bad("layer '" + l.name + "' is too steep for the grid");
    }
  }
}

namespace {

MaskSpec parse_mask(const json& j) {
  MaskSpec m;
  const std::string type = j.value("type", "full");
  if (type == "full") m.kind = MaskSpec::Kind::kFull;
  else if (type == "noise") m.kind = MaskSpec::Kind::kNoise;
  else if (type == "rect") m.kind = MaskSpec::Kind::kRect;
  else if (type == "disk") m.kind = MaskSpec::Kind::kDisk;
  else throw Error(ErrorKind::kBadSpec, "unknown mask type " + type);
  m.coverage = j.value("coverage", m.coverage);
  m.scale = j.value("scale", m.scale);
  m.seed = j.value("seed", m.seed);
  if (j.contains("rect")) m.rect = j.at("rect").get<std::array<double, 4>>();
  if (j.contains("disk")) m.disk = j.at("disk").get<std::array<double, 3>>();
  return m;
}

json mask_to_json(const MaskSpec& m) {
  static const char* kNames[] = {"full", "noise", "rect", "disk"};
  return {{"type", kNames[static_cast<int>(m.kind)]}, {"coverage", m.coverage}, {"scale", m.scale},
          {"seed", m.seed}, {"rect", m.rect}, {"disk", m.disk}};
}

}  // namespace

SceneSpec parse_scene(const json& j) {
  SceneSpec s;
  try {
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.channels = j.value("channels", s.channels);
    s.grid_rows = j.value("grid_rows", s.grid_rows);
    s.grid_cols = j.value("grid_cols", s.grid_cols);
    s.baseline = j.value("baseline", s.baseline);
    s.disparity_scale = j.value("disparity_scale", s.disparity_scale);
    if (j.contains("disparity_range")) s.disparity_range = j.at("disparity_range").get<std::array<double, 2>>();
    s.noise = j.value("noise", s.noise);
    s.seed = j.value("seed", s.seed);
    if (j.contains("classes")) s.classes = j.at("classes").get<std::vector<std::string>>();
    s.view_format = j.value("view_format", s.view_format);
    if (j.contains("probabilities")) {
      const json& p = j.at("probabilities");
      s.probabilities.temperature = p.value("temperature", s.probabilities.temperature);
      s.probabilities.label_noise = p.value("label_noise", s.probabilities.label_noise);
      s.probabilities.noise_temperature = p.value("noise_temperature", s.probabilities.noise_temperature);
    }
    for (const json& lj : j.at("layers")) {
      Layer l;
      l.name = lj.value("name", "");
      l.label = lj.value("label", 0);
      l.disparity = lj.at("disparity").get<double>();
      if (lj.contains("gradient")) {
        const auto g = lj.at("gradient").get<std::array<double, 2>>();
        l.gradient_u = g[0];
        l.gradient_v = g[1];
      }
      if (lj.contains("texture")) {
        const json& t = lj.at("texture");
        l.texture.seed = t.value("seed", l.texture.seed);
        l.texture.scale = t.value("scale", l.texture.scale);
        l.texture.octaves = t.value("octaves", l.texture.octaves);
        l.texture.contrast = t.value("contrast", l.texture.contrast);
        if (t.contains("color")) l.texture.color = t.at("color").get<std::array<double, 3>>();
      }
      if (lj.contains("mask")) l.mask = parse_mask(lj.at("mask"));
      s.layers.push_back(l);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kBadSpec, e.what());
  }
  s.validate();
  return s;
}

SceneSpec load_scene(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kBadSpec, "cannot open scene spec " + path.string());
  try {
    return parse_scene(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kBadSpec, path.string() + ": " + e.what());
  }
}

json scene_to_json(const SceneSpec& s) {
  json layers = json::array();
  for (const Layer& l : s.layers) {
    layers.push_back({{"name", l.name},
                      {"label", l.label},
                      {"disparity", l.disparity},
                      {"gradient", {l.gradient_u, l.gradient_v}},
                      {"texture",
                       {{"seed", l.texture.seed},
                        {"scale", l.texture.scale},
                        {"octaves", l.texture.octaves},
                        {"contrast", l.texture.contrast},
                        {"color", l.texture.color}}},
                      {"mask", mask_to_json(l.mask)}});
  }
  return {{"width", s.width},
          {"height", s.height},
          {"channels", s.channels},
          {"grid_rows", s.grid_rows},
          {"grid_cols", s.grid_cols},
          {"baseline", s.baseline},
          {"disparity_scale", s.disparity_scale},
          {"disparity_range", s.disparity_range},
          {"noise", s.noise},
          {"seed", s.seed},
          {"classes", s.classes},
          {"view_format", s.view_format},
          {"probabilities",
           {{"temperature", s.probabilities.temperature},
            {"label_noise", s.probabilities.label_noise},
            {"noise_temperature", s.probabilities.noise_temperature}}},
          {"layers", layers}};
}

// Rasterisation ----------------------------------------------------------------

namespace {

class SceneRaster {
 public:
  explicit SceneRaster(const SceneSpec& spec) : spec_(spec) {
    spec.validate();
    cs_ = (spec.grid_cols - 1) / 2;
    ct_ = (spec.grid_rows - 1) / 2;
    thresholds_.resize(spec.layers.size(), 0.0);
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      const MaskSpec& m = spec.layers[i].mask;
      if (m.kind != MaskSpec::Kind::kNoise) continue;
      std::vector<double> vals;
      vals.reserve(static_cast<std::size_t>(spec.width) * spec.height);
      for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) vals.push_back(value_noise(x, y, m.seed, m.scale, 2));
      }
      std::sort(vals.begin(), vals.end());
      const auto k = static_cast<std::size_t>(std::llround(m.coverage * static_cast<double>(vals.size())));
      thresholds_[i] = k >= vals.size() ? std::numeric_limits<double>::infinity() : vals[k];
    }
  }

  int center_s() const noexcept { return cs_; }
  int center_t() const noexcept { return ct_; }

  bool covers(std::size_t i, double u, double v) const noexcept {
    const MaskSpec& m = spec_.layers[i].mask;
    switch (m.kind) {
      case MaskSpec::Kind::kFull: return true;
      case MaskSpec::Kind::kNoise: return value_noise(u, v, m.seed, m.scale, 2) < thresholds_[i];
      case MaskSpec::Kind::kRect: return u >= m.rect[0] && v >= m.rect[1] && u < m.rect[2] && v < m.rect[3];
      case MaskSpec::Kind::kDisk: return std::hypot(u - m.disk[0], v - m.disk[1]) <= m.disk[2];
    }
    return false;
  }

  struct Hit {
    std::size_t layer;
    double u_ref;
    double v_ref;
    double disparity;
  };

  /// Front-most layer seen at view pixel (u, v) of view (s, t).
  std::optional<Hit> trace(int s, int t, double u, double v) const noexcept {
    const double ds = s - cs_;
    const double dt = t - ct_;
    std::optional<Hit> best;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      const Layer& l = spec_.layers[i];
      // Solve u = ur + d(ur, vr) * ds, v = vr + d(ur, vr) * dt for (ur, vr).
      const double a = 1.0 + l.gradient_u * ds;
      const double b = l.gradient_v * ds;
      const double c = l.gradient_u * dt;
      const double e = 1.0 + l.gradient_v * dt;
      const double r0 = u - l.disparity * ds;
      const double r1 = v - l.disparity * dt;
      const double det = a * e - b * c;
      const double ur = (r0 * e - b * r1) / det;
      const double vr = (a * r1 - c * r0) / det;
      if (!covers(i, ur, vr)) continue;
      const double d = l.disparity_at(ur, vr);
      if (!best || d > best->disparity) best = Hit{i, ur, vr, d};
    }
    return best;
  }

  std::array<float, 3> shade(const Hit& hit) const noexcept {
    const TextureSpec& tex = spec_.layers[hit.layer].texture;
    const double g = value_noise(hit.u_ref, hit.v_ref, tex.seed, tex.scale, tex.octaves);
    const double k = (1.0 - tex.contrast) + tex.contrast * g;
    std::array<float, 3> out{};
    for (int c = 0; c < 3; ++c) out[static_cast<std::size_t>(c)] = static_cast<float>(std::clamp(tex.color[static_cast<std::size_t>(c)] * k, 0.0, 1.0));
    return out;
  }

 private:
  const SceneSpec& spec_;
  int cs_ = 0;
  int ct_ = 0;
  std::vector<double> thresholds_;
};

void store_color(ViewImage& img, int x, int y, const std::array<float, 3>& c) {
  if (img.channels() == 1) {
    img.at(x, y) = (c[0] + c[1] + c[2]) / 3.0f;
  } else {
    for (int k = 0; k < 3; ++k) img.at(x, y, k) = c[static_cast<std::size_t>(k)];
  }
}

LabelProbabilityVolume make_probabilities(const SceneSpec& spec, const LabelMap& gt, std::uint64_t stream) {
  const int n_classes = static_cast<int>(spec.classes.size());
  const int classes = std::max(2, n_classes);
  std::mt19937_64 rng(splitmix64(spec.seed ^ (0x5bd1e995ULL * (stream + 1))));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> other(1, classes - 1);
  auto softmax = [classes](int hot, double temperature, float* out) {
    if (temperature <= 0.0) {
      for (int c = 0; c < classes; ++c) out[c] = c == hot ? 1.0f : 0.0f;
      return;
    }
    // exp(1/T) on the hot class, exp(0) elsewhere, computed stably.
    const double rest = std::exp(-1.0 / temperature);
    const double denom = 1.0 + (classes - 1) * rest;
    for (int c = 0; c < classes; ++c) out[c] = static_cast<float>((c == hot ? 1.0 : rest) / denom);
  };
  std::vector<float> probs(gt.pixel_count() * static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < gt.pixel_count(); ++i) {
    int label = gt.data()[i];
    double temperature = spec.probabilities.temperature;
    if (spec.probabilities.label_noise > 0.0 && unit(rng) < spec.probabilities.label_noise) {
      label = (label + other(rng)) % classes;
      temperature = std::max(temperature, spec.probabilities.noise_temperature);
    }
    softmax(label, temperature, probs.data() + i * static_cast<std::size_t>(classes));
  }
  return {gt.width(), gt.height(), classes, std::move(probs)};
}

}  // namespace

SceneData render_scene(const SceneSpec& spec) {
  const SceneRaster raster(spec);
  const int cols = spec.grid_cols;
  const int rows = spec.grid_rows;
  const auto n = static_cast<std::size_t>(cols) * rows;
  std::vector<ViewImage> views(n);
  std::vector<DisparityMap> disp(n);
  std::vector<LabelMap> labels(n);
  tbb::parallel_for(std::size_t{0}, n, [&](std::size_t i) {
    const int s = static_cast<int>(i) % cols;
    const int t = static_cast<int>(i) / cols;
    ViewImage img(spec.width, spec.height, spec.channels);
    DisparityMap dm{FloatMap(spec.width, spec.height, 1, static_cast<float>(spec.disparity_range[0])), s, t};
    LabelMap lm(spec.width, spec.height, 1, kBackground);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const auto hit = raster.trace(s, t, x, y);
        if (!hit) continue;
        store_color(img, x, y, raster.shade(*hit));
        dm.at(x, y) = static_cast<float>(hit->disparity);
        lm.at(x, y) = static_cast<std::uint8_t>(spec.layers[hit->layer].label);
      }
    }
    if (spec.noise > 0.0) {
      std::mt19937_64 rng(splitmix64(spec.seed * 0x9e3779b97f4a7c15ULL + i));
      std::normal_distribution<float> gauss(0.0f, static_cast<float>(spec.noise));
      for (float& v : img.data()) v = std::clamp(v + gauss(rng), 0.0f, 1.0f);
    }
    views[i] = std::move(img);
    disp[i] = std::move(dm);
    labels[i] = std::move(lm);
  });

  Calibration calib;
  calib.grid_rows = rows;
  calib.grid_cols = cols;
  calib.baseline = spec.baseline;
  calib.disparity_scale = spec.disparity_scale;
  calib.disparity_min = spec.disparity_range[0];
  calib.disparity_max = spec.disparity_range[1];
  calib.view_pattern = "view_{s}_{t}." + spec.view_format;

  std::vector<LabelProbabilityVolume> probs;
  probs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) probs.push_back(make_probabilities(spec, labels[i], i));

  std::vector<std::string> names = spec.classes;
  if (names.size() < 2) names.push_back("unused");
  return SceneData{LightField(calib, std::move(views)), std::move(disp), std::move(labels), std::move(probs),
                   Palette::with_names(std::move(names))};
}

ViewImage render_layers(const SceneSpec& spec, int s, int t, const std::function<bool(std::size_t)>& keep) {
  SceneSpec sub = spec;
  sub.layers.clear();
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (keep(i)) sub.layers.push_back(spec.layers[i]);
  }
  if (sub.layers.empty()) throw Error(ErrorKind::kBadSpec, "layer filter rejected every layer");
  const SceneRaster raster(sub);
  ViewImage img(spec.width, spec.height, spec.channels);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      if (const auto hit = raster.trace(s, t, x, y)) store_color(img, x, y, raster.shade(*hit));
    }
  }
  return img;
}

Image<int> visibility_count(const SceneSpec& spec, std::size_t layer) {
  if (layer >= spec.layers.size()) throw Error(ErrorKind::kBadSpec, "layer index out of range");
  const SceneRaster raster(spec);
  const Layer& l = spec.layers[layer];
  Image<int> count(spec.width, spec.height, 1, 0);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      if (!raster.covers(layer, x, y)) continue;
      const double d = l.disparity_at(x, y);
      for (int t = 0; t < spec.grid_rows; ++t) {
        for (int s = 0; s < spec.grid_cols; ++s) {
          const double u = x + d * (s - raster.center_s());
          const double v = y + d * (t - raster.center_t());
          if (u < 0 || v < 0 || u > spec.width - 1 || v > spec.height - 1) continue;
          const auto hit = raster.trace(s, t, u, v);
          if (hit && hit->layer == layer) ++count.at(x, y);
        }
      }
    }
  }
  return count;
}

void write_dataset(const fs::path& dir, const SceneSpec& spec, const SceneData& data) {
  const fs::path lf_dir = dir / "lf";
  const fs::path gt_dir = dir / "gt";
  const fs::path probs_dir = dir / "probs";
  fs::create_directories(gt_dir);
  save_lightfield(lf_dir, data.lightfield);
  const int cols = data.lightfield.cols();
  for (std::size_t i = 0; i < data.disparity.size(); ++i) {
    const int s = static_cast<int>(i) % cols;
    const int t = static_cast<int>(i) / cols;
    const std::string tag = std::to_string(s) + "_" + std::to_string(t);
    io::write_pfm(gt_dir / ("disp_" + tag + ".pfm"), data.disparity[i].disp);
    write_label_map(gt_dir / ("sem_" + tag + ".png"), data.labels[i], data.palette);
    save_probability_volume(probs_dir, s, t, data.probabilities[i]);
  }
  save_palette(gt_dir / "palette.json", data.palette);
  save_class_sidecar(probs_dir, data.palette.names);
  std::ofstream out(dir / "scene.json");
  out << scene_to_json(spec).dump(2) << "\n";
}

}  // namespace sstlf::synth

#include "sstlf/lightfield.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "sstlf/image_io.hpp"

namespace sstlf {

using nlohmann::json;

void Calibration::validate() const {
  auto bad = [](const std::string& msg) { throw Error(ErrorKind::kBadManifest, msg); };
  if (grid_rows < 1 || grid_cols < 1) bad("grid dimensions must be >= 1");
  if (!(baseline > 0.0) || !std::isfinite(baseline)) bad("baseline must be positive");
  if (!(disparity_scale > 0.0) || !std::isfinite(disparity_scale)) bad("disparity_scale must be positive");
  if (!std::isfinite(disparity_min) || !std::isfinite(disparity_max) || disparity_min > disparity_max) {
    bad("disparity_range must be finite [min, max] with min <= max");
  }
  if (view_pattern.find("{s}") == std::string::npos || view_pattern.find("{t}") == std::string::npos) {
    bad("view_pattern must contain {s} and {t}");
  }
  if (!rectified) bad("views must be rectified");
}

bool Calibration::focal_in_range(double d_f) const {
  return std::isfinite(d_f) && d_f >= disparity_min && d_f <= disparity_max;
}

std::string Calibration::view_filename(int s, int t) const {
  std::string name = view_pattern;
  auto replace = [&name](const std::string& key, int value) {
    for (auto pos = name.find(key); pos != std::string::npos; pos = name.find(key)) {
      name.replace(pos, key.size(), std::to_string(value));
    }
  };
  replace("{s}", s);
  replace("{t}", t);
  return name;
}

Calibration load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kBadManifest, "cannot open manifest: " + path.string());
  Calibration c;
  try {
    const json j = json::parse(in);
    c.grid_rows = j.at("grid_rows").get<int>();
    c.grid_cols = j.at("grid_cols").get<int>();
    c.baseline = j.at("baseline").get<double>();
    c.disparity_scale = j.at("disparity_scale").get<double>();
    const auto& range = j.at("disparity_range");
    if (!range.is_array() || range.size() != 2) throw Error(ErrorKind::kBadManifest, "disparity_range must be [min,max]");
    c.disparity_min = range[0].get<double>();
    c.disparity_max = range[1].get<double>();
    c.view_pattern = j.value("view_pattern", c.view_pattern);
    c.rectified = j.value("rectified", true);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kBadManifest, path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

void save_manifest(const fs::path& path, const Calibration& calib) {
  const json j = {
      {"grid_rows", calib.grid_rows},
      {"grid_cols", calib.grid_cols},
      {"baseline", calib.baseline},
      {"disparity_scale", calib.disparity_scale},
      {"disparity_range", {calib.disparity_min, calib.disparity_max}},
      {"view_pattern", calib.view_pattern},
      {"rectified", calib.rectified},
  };
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write manifest: " + path.string());
  out << j.dump(2) << "\n";
}

LightField::LightField(Calibration calib, std::vector<ViewImage> views)
    : calib_(std::move(calib)), views_(std::move(views)) {
  calib_.validate();
  if (views_.size() != static_cast<std::size_t>(calib_.grid_rows) * calib_.grid_cols) {
    throw Error(ErrorKind::kMissingView, "expected " + std::to_string(calib_.grid_rows * calib_.grid_cols) +
                                             " views, got " + std::to_string(views_.size()));
  }
  const ViewImage& first = views_.front();
  if (first.empty()) throw Error(ErrorKind::kMissingView, "empty view");
  if (first.channels() != 1 && first.channels() != 3) {
    throw Error(ErrorKind::kBadImage, "views must have 1 or 3 channels");
  }
  for (const ViewImage& v : views_) {
    if (!v.same_shape(first)) throw Error(ErrorKind::kDimensionMismatch, "views differ in size or channel count");
    for (float x : v.data()) {
      if (!std::isfinite(x)) throw Error(ErrorKind::kBadImage, "non-finite sample in view");
    }
  }
}

const ViewImage& LightField::view(int s, int t) const {
  if (!has_view(s, t)) {
    throw Error(ErrorKind::kBadViewIndex, "view (" + std::to_string(s) + "," + std::to_string(t) + ") outside grid");
  }
  return views_[static_cast<std::size_t>(t) * cols() + s];
}

LightField load_lightfield(const fs::path& dir, const std::optional<fs::path>& manifest) {
  const Calibration calib = load_manifest(manifest.value_or(dir / "manifest.json"));
  std::vector<ViewImage> views;
  views.reserve(static_cast<std::size_t>(calib.grid_rows) * calib.grid_cols);
  for (int t = 0; t < calib.grid_rows; ++t) {
    for (int s = 0; s < calib.grid_cols; ++s) {
      const fs::path file = dir / calib.view_filename(s, t);
      if (!fs::exists(file)) throw Error(ErrorKind::kMissingView, file.string());
      views.push_back(io::read_image(file));
    }
  }
  return LightField(calib, std::move(views));
}

void save_lightfield(const fs::path& dir, const LightField& lf) {
  fs::create_directories(dir);
  const Calibration& calib = lf.calibration();
  for (int t = 0; t < lf.rows(); ++t) {
    for (int s = 0; s < lf.cols(); ++s) io::write_image(dir / calib.view_filename(s, t), lf.view(s, t));
  }
  save_manifest(dir / "manifest.json", calib);
}

bool sample_bilinear(const ViewImage& img, double u, double v, float* out) noexcept {
  const int w = img.width();
  const int h = img.height();
  if (!(u >= 0.0 && v >= 0.0 && u <= w - 1 && v <= h - 1)) return false;
  const int x0 = static_cast<int>(u);
  const int y0 = static_cast<int>(v);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = u - x0;
  const double fy = v - y0;
  const int ch = img.channels();
  if (fx == 0.0 && fy == 0.0) {
    for (int c = 0; c < ch; ++c) out[c] = img.at(x0, y0, c);
    return true;
  }
  for (int c = 0; c < ch; ++c) {
    const double top = (1.0 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
    const double bot = (1.0 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
    out[c] = static_cast<float>((1.0 - fy) * top + fy * bot);
  }
  return true;
}

std::optional<Color> sample_view(const LightField& lf, int s, int t, double u, double v) {
  const ViewImage& img = lf.view(s, t);
  Color c{0.0f, 0.0f, 0.0f};
  if (!sample_bilinear(img, u, v, c.data())) return std::nullopt;
  return c;
}

// ApertureMask --------------------------------------------------------------

ApertureMask::ApertureMask(int cols, int rows, std::vector<double> weights)
    : cols_(cols), rows_(rows), weights_(std::move(weights)) {
  if (cols < 1 || rows < 1 || weights_.size() != static_cast<std::size_t>(cols) * rows) {
    throw Error(ErrorKind::kInvalidArgument, "aperture weights do not match grid");
  }
  bool any = false;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorKind::kInvalidArgument, "aperture weights must be >= 0");
    any = any || w > 0.0;
  }
  if (!any) throw Error(ErrorKind::kEmptyAperture, "all aperture weights are zero");
}

ApertureMask ApertureMask::full(int cols, int rows) {
  return {cols, rows, std::vector<double>(static_cast<std::size_t>(cols) * rows, 1.0)};
}

ApertureMask ApertureMask::center(int cols, int rows) {
  return single(cols, rows, (cols - 1) / 2, (rows - 1) / 2);
}

ApertureMask ApertureMask::single(int cols, int rows, int s, int t) {
  std::vector<double> w(static_cast<std::size_t>(cols) * rows, 0.0);
  if (s < 0 || t < 0 || s >= cols || t >= rows) throw Error(ErrorKind::kBadViewIndex, "aperture view outside grid");
  w[static_cast<std::size_t>(t) * cols + s] = 1.0;
  return {cols, rows, std::move(w)};
}

ApertureMask ApertureMask::radius(int cols, int rows, double r) {
  std::vector<double> w(static_cast<std::size_t>(cols) * rows, 0.0);
  const int cs = (cols - 1) / 2;
  const int ct = (rows - 1) / 2;
  for (int t = 0; t < rows; ++t) {
    for (int s = 0; s < cols; ++s) {
      if (std::hypot(s - cs, t - ct) <= r) w[static_cast<std::size_t>(t) * cols + s] = 1.0;
    }
  }
  return {cols, rows, std::move(w)};
}

ApertureMask ApertureMask::parse(const std::string& spec, int cols, int rows) {
  if (spec == "full") return full(cols, rows);
  if (spec == "center") return center(cols, rows);
  if (spec.rfind("radius:", 0) == 0) {
    try {
      return radius(cols, rows, std::stod(spec.substr(7)));
    } catch (const std::invalid_argument&) {
    }
  }
  throw Error(ErrorKind::kInvalidArgument, "bad aperture spec '" + spec + "' (full|center|radius:<r>)");
}

ApertureMask ApertureMask::normalize() const {
  double sum = 0.0;
  for (double w : weights_) sum += w;
  std::vector<double> out = weights_;
  for (double& w : out) w /= sum;
  ApertureMask m(cols_, rows_, std::move(out));
  m.normalized_ = true;
  return m;
}

}  // namespace sstlf

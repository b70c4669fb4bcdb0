#include "sstlf/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "sstlf/parallel.hpp"

namespace sstlf {

using nlohmann::json;

LabelProbabilityVolume::LabelProbabilityVolume(int width, int height, int num_classes, std::vector<float> probs)
    : width_(width), height_(height), classes_(num_classes), probs_(std::move(probs)) {
  if (width < 1 || height < 1) throw Error(ErrorKind::kInvalidArgument, "volume dimensions must be positive");
  if (num_classes < 2 || num_classes > 255) throw Error(ErrorKind::kInvalidArgument, "need 2..255 classes");
  if (probs_.size() != static_cast<std::size_t>(width) * height * num_classes) {
    throw Error(ErrorKind::kDimensionMismatch, "probability buffer size mismatch");
  }
  for (std::size_t i = 0; i < probs_.size(); i += static_cast<std::size_t>(classes_)) {
    double sum = 0.0;
    for (int c = 0; c < classes_; ++c) {
      const float p = probs_[i + static_cast<std::size_t>(c)];
      if (!(p >= 0.0f) || !std::isfinite(p)) throw Error(ErrorKind::kInvalidArgument, "negative or non-finite probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-5) throw Error(ErrorKind::kInvalidArgument, "probabilities do not sum to 1");
  }
}

double entropy(std::span<const float> p) {
  double h = 0.0;
  for (float v : p) {
    if (v > 0.0f) h -= static_cast<double>(v) * std::log(static_cast<double>(v));
  }
  return std::clamp(h, 0.0, std::log(static_cast<double>(p.size())));
}

Image<double> entropy_map(const LabelProbabilityVolume& vol) {
  Image<double> out(vol.width(), vol.height(), 1);
  parallel_rows(0, vol.height(), [&](int y) {
    for (int x = 0; x < vol.width(); ++x) out.at(x, y) = entropy(vol.at(x, y));
  });
  return out;
}

LabelMap map_labels(const LabelProbabilityVolume& vol) {
  LabelMap out(vol.width(), vol.height(), 1);
  parallel_rows(0, vol.height(), [&](int y) {
    for (int x = 0; x < vol.width(); ++x) {
      const auto p = vol.at(x, y);
      // max_element returns the first maximum.
      out.at(x, y) = static_cast<std::uint8_t>(std::max_element(p.begin(), p.end()) - p.begin());
    }
  });
  return out;
}

namespace {

void check_same(const Image<double>& entropy, const LabelMap& labels, const LabelMap& gt) {
  if (!entropy.same_size(labels) || !entropy.same_size(gt)) {
    throw Error(ErrorKind::kDimensionMismatch, "entropy, labels and ground truth must share a raster");
  }
}

ThresholdScore make_score(double eps, long tp, long fp, long gt_fg, double m) {
  ThresholdScore r;
  r.epsilon_h = eps;
  r.accuracy = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  r.coverage = static_cast<double>(tp) / static_cast<double>(gt_fg);
  r.score = std::pow(r.accuracy, m) * r.coverage;
  return r;
}

long count_foreground(const LabelMap& gt) {
  return std::count_if(gt.data().begin(), gt.data().end(),
                       [](std::uint8_t v) { return v != kBackground && v != kUnlabeled; });
}

}  // namespace

ThresholdScore evaluate_threshold(const Image<double>& entropy, const LabelMap& labels, const LabelMap& ground_truth,
                                  double epsilon_h, double m) {
  check_same(entropy, labels, ground_truth);
  const long gt_fg = count_foreground(ground_truth);
  if (gt_fg == 0) throw Error(ErrorKind::kNoForegroundPixels, "ground truth has only background");
  long tp = 0;
  long fp = 0;
  for (std::size_t i = 0; i < labels.data().size(); ++i) {
    if (!(entropy.data()[i] < epsilon_h)) continue;
    const std::uint8_t pred = labels.data()[i];
    if (pred == kBackground || pred == kUnlabeled) continue;
    if (pred == ground_truth.data()[i]) ++tp;
    else ++fp;
  }
  return make_score(epsilon_h, tp, fp, gt_fg, m);
}

ThresholdScore score_threshold(const LabelProbabilityVolume& vol, const LabelMap& labels,
                               const LabelMap& ground_truth, double m) {
  if (!(m > 0.0)) throw Error(ErrorKind::kInvalidArgument, "score exponent m must be positive");
  const Image<double> h = entropy_map(vol);
  check_same(h, labels, ground_truth);
  const long gt_fg = count_foreground(ground_truth);
  if (gt_fg == 0) throw Error(ErrorKind::kNoForegroundPixels, "ground truth has only background");

  std::vector<std::size_t> order(h.data().size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return h.data()[a] < h.data()[b]; });

  const double ln_c = std::log(static_cast<double>(vol.num_classes()));
  ThresholdScore best;
  bool have_best = false;
  auto consider = [&](const ThresholdScore& cand) {
    if (!(cand.epsilon_h > 0.0)) return;
    if (!have_best || cand.score > best.score) {
      best = cand;
      have_best = true;
    }
  };

  long tp = 0;
  long fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double value = h.data()[order[i]];
    // Threshold `value` admits everything strictly below it, i.e. what has been accumulated so far.
    consider(make_score(value, tp, fp, gt_fg, m));
    for (; i < order.size() && h.data()[order[i]] == value; ++i) {
      const std::uint8_t pred = labels.data()[order[i]];
      if (pred == kBackground || pred == kUnlabeled) continue;
      if (pred == ground_truth.data()[order[i]]) ++tp;
      else ++fp;
    }
  }
  if (h.data()[order.back()] < ln_c) consider(make_score(ln_c, tp, fp, gt_fg, m));
  if (!have_best) best = make_score(ln_c, tp, fp, gt_fg, m);
  return best;
}

double ConfidenceMask::coverage() const {
  const auto n = std::count(confident.data().begin(), confident.data().end(), std::uint8_t{1});
  return static_cast<double>(n) / static_cast<double>(confident.data().size());
}

ConfidenceMask hcsm_filter(const Image<double>& entropy, double epsilon_h) {
  if (!(epsilon_h > 0.0)) throw Error(ErrorKind::kInvalidArgument, "epsilon_H must be positive");
  ConfidenceMask mask{entropy, Image<std::uint8_t>(entropy.width(), entropy.height(), 1), epsilon_h};
  for (std::size_t i = 0; i < entropy.data().size(); ++i) {
    mask.confident.data()[i] = entropy.data()[i] < epsilon_h ? 1 : 0;
  }
  return mask;
}

ConfidenceMask hcsm_filter(const LabelProbabilityVolume& vol, double epsilon_h) {
  return hcsm_filter(entropy_map(vol), epsilon_h);
}

LabelMap apply_confidence(const LabelMap& labels, const ConfidenceMask& mask) {
  if (!labels.same_size(mask.confident)) throw Error(ErrorKind::kDimensionMismatch, "mask and labels differ in size");
  LabelMap out = labels;
  for (std::size_t i = 0; i < out.data().size(); ++i) {
    if (!mask.confident.data()[i]) out.data()[i] = kUnlabeled;
  }
  return out;
}

// Palette -------------------------------------------------------------------

std::optional<int> Palette::find(const std::string& name) const {
  for (int i = 0; i < size(); ++i) {
    if (names[static_cast<std::size_t>(i)] == name) return i;
  }
  return std::nullopt;
}

std::optional<int> Palette::ground_label() const {
  for (const char* name : {"ground", "floor", "table"}) {
    if (auto idx = find(name)) return idx;
  }
  return std::nullopt;
}

Palette Palette::with_names(std::vector<std::string> names) {
  Palette p;
  p.names = std::move(names);
  // Golden-angle hue walk gives distinct colours for small class counts.
  for (int i = 0; i < p.size(); ++i) {
    if (i == 0) {
      p.colors.push_back({64, 64, 64});
      continue;
    }
    const double hue = std::fmod(i * 137.508, 360.0) / 60.0;
    const double f = hue - std::floor(hue);
    const auto q = static_cast<std::uint8_t>(255 * (1.0 - f));
    const auto t = static_cast<std::uint8_t>(255 * f);
    switch (static_cast<int>(hue)) {
      case 0: p.colors.push_back({255, t, 0}); break;
      case 1: p.colors.push_back({q, 255, 0}); break;
      case 2: p.colors.push_back({0, 255, t}); break;
      case 3: p.colors.push_back({0, q, 255}); break;
      case 4: p.colors.push_back({t, 0, 255}); break;
      default: p.colors.push_back({255, 0, q}); break;
    }
  }
  return p;
}

Palette load_palette(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open palette: " + path.string());
  try {
    const json j = json::parse(in);
    Palette p = Palette::with_names(j.at("classes").get<std::vector<std::string>>());
    if (j.contains("colors")) {
      const auto colors = j.at("colors").get<std::vector<std::array<int, 3>>>();
      for (std::size_t i = 0; i < colors.size() && i < p.colors.size(); ++i) {
        for (int c = 0; c < 3; ++c) p.colors[i][static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(colors[i][static_cast<std::size_t>(c)]);
      }
    }
    if (p.size() < 1 || p.size() > 255) throw Error(ErrorKind::kBadConfig, "palette must have 1..255 classes");
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kBadConfig, path.string() + ": " + e.what());
  }
}

void save_palette(const fs::path& path, const Palette& palette) {
  json colors = json::array();
  for (const auto& c : palette.colors) colors.push_back({c[0], c[1], c[2]});
  const json j = {{"classes", palette.names}, {"colors", colors}, {"unlabeled", kUnlabeled}};
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write palette: " + path.string());
  out << j.dump(2) << "\n";
}

void write_label_map(const fs::path& path, const LabelMap& labels, const Palette& palette) {
  std::vector<io::Rgb> colors(256, io::Rgb{0, 0, 0});
  for (int i = 0; i < palette.size() && i < 255; ++i) colors[static_cast<std::size_t>(i)] = palette.colors[static_cast<std::size_t>(i)];
  io::write_indexed_png(path, labels, colors);
}

LabelMap read_label_map(const fs::path& path) { return io::read_indexed_png(path); }

namespace {

fs::path prob_path(const fs::path& dir, int s, int t, int c) {
  return dir / ("probs_" + std::to_string(s) + "_" + std::to_string(t) + "_" + std::to_string(c) + ".pfm");
}

}  // namespace

void save_probability_volume(const fs::path& dir, int s, int t, const LabelProbabilityVolume& vol) {
  fs::create_directories(dir);
  for (int c = 0; c < vol.num_classes(); ++c) {
    FloatMap plane(vol.width(), vol.height(), 1);
    for (int y = 0; y < vol.height(); ++y) {
      for (int x = 0; x < vol.width(); ++x) plane.at(x, y) = vol.at(x, y)[static_cast<std::size_t>(c)];
    }
    io::write_pfm(prob_path(dir, s, t, c), plane);
  }
}

LabelProbabilityVolume load_probability_volume(const fs::path& dir, int s, int t, int num_classes) {
  std::vector<FloatMap> planes;
  for (int c = 0; c < num_classes; ++c) {
    const fs::path p = prob_path(dir, s, t, c);
    if (!fs::exists(p)) throw Error(ErrorKind::kMissingMaps, "missing probability plane " + p.string());
    planes.push_back(io::read_pfm(p));
    if (planes.back().channels() != 1 || !planes.back().same_shape(planes.front())) {
      throw Error(ErrorKind::kDimensionMismatch, "probability planes differ in shape: " + p.string());
    }
  }
  const int w = planes.front().width();
  const int h = planes.front().height();
  std::vector<float> probs(static_cast<std::size_t>(w) * h * num_classes);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < num_classes; ++c) {
        probs[(static_cast<std::size_t>(y) * w + x) * num_classes + c] = planes[static_cast<std::size_t>(c)].at(x, y);
      }
    }
  }
  return {w, h, num_classes, std::move(probs)};
}

void save_class_sidecar(const fs::path& dir, const std::vector<std::string>& names) {
  fs::create_directories(dir);
  std::ofstream out(dir / "classes.json");
  if (!out) throw Error(ErrorKind::kIo, "cannot write classes.json in " + dir.string());
  out << json{{"num_classes", names.size()}, {"class_names", names}}.dump(2) << "\n";
}

std::vector<std::string> load_class_sidecar(const fs::path& dir) {
  std::ifstream in(dir / "classes.json");
  if (!in) throw Error(ErrorKind::kMissingMaps, "missing classes.json in " + dir.string());
  try {
    const json j = json::parse(in);
    auto names = j.at("class_names").get<std::vector<std::string>>();
    if (static_cast<int>(names.size()) != j.at("num_classes").get<int>()) {
      throw Error(ErrorKind::kBadConfig, "num_classes disagrees with class_names");
    }
    return names;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kBadConfig, std::string("classes.json: ") + e.what());
  }
}

}  // namespace sstlf

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sstlf/image.hpp"
#include "sstlf/image_io.hpp"

namespace sstlf {

namespace fs = std::filesystem;

/// Per-pixel class indices. Class 0 is background; kUnlabeled marks pixels
/// without a trusted label.
using LabelMap = Image<std::uint8_t>;
inline constexpr std::uint8_t kUnlabeled = 255;
inline constexpr std::uint8_t kBackground = 0;

/// Soft segmenter output: one distribution over num_classes per pixel.
class LabelProbabilityVolume {
 public:
  /// probs is pixel-major, classes contiguous. Throws InvalidArgument unless
  /// every distribution is nonnegative and sums to 1 within 1e-5.
  LabelProbabilityVolume(int width, int height, int num_classes, std::vector<float> probs);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int num_classes() const noexcept { return classes_; }

  std::span<const float> at(int x, int y) const noexcept {
    return {probs_.data() + (static_cast<std::size_t>(y) * width_ + x) * classes_,
            static_cast<std::size_t>(classes_)};
  }
  const std::vector<float>& data() const noexcept { return probs_; }

 private:
  int width_;
  int height_;
  int classes_;
  std::vector<float> probs_;
};

/// Shannon entropy in nats, 0 log 0 := 0, clamped to [0, ln C].
double entropy(std::span<const float> p);
Image<double> entropy_map(const LabelProbabilityVolume& vol);

/// Argmax per pixel; ties go to the lowest class index.
LabelMap map_labels(const LabelProbabilityVolume& vol);

struct ThresholdScore {
  double epsilon_h = 0.0;
  double accuracy = 0.0;
  double coverage = 0.0;
  double score = 0.0;
};

inline constexpr double kDefaultScoreExponent = 4.0;

/// Accuracy/coverage of the confident subset {H < epsilon_h} against a
/// ground-truth labelling, background excluded from both.
ThresholdScore evaluate_threshold(const Image<double>& entropy, const LabelMap& labels, const LabelMap& ground_truth,
                                  double epsilon_h, double m);

/// Exact maximiser of accuracy^m * coverage. The confident set only changes
/// at observed entropies, so candidates are each distinct entropy value
/// (admitting every pixel strictly below it) plus ln C. Ties resolve to the
/// smallest threshold.
ThresholdScore score_threshold(const LabelProbabilityVolume& vol, const LabelMap& labels,
                               const LabelMap& ground_truth, double m = kDefaultScoreExponent);

/// High-confidence semantic map.
struct ConfidenceMask {
  Image<double> entropy;
  Image<std::uint8_t> confident;
  double epsilon_h = 0.0;

  double coverage() const;
};

ConfidenceMask hcsm_filter(const Image<double>& entropy, double epsilon_h);
ConfidenceMask hcsm_filter(const LabelProbabilityVolume& vol, double epsilon_h);

/// Labels where confident, kUnlabeled elsewhere.
LabelMap apply_confidence(const LabelMap& labels, const ConfidenceMask& mask);

/// Class names and display colours for label maps.
struct Palette {
  std::vector<std::string> names;
  std::vector<io::Rgb> colors;

  int size() const noexcept { return static_cast<int>(names.size()); }
  std::optional<int> find(const std::string& name) const;
  /// First class named ground, floor or table.
  std::optional<int> ground_label() const;

  static Palette with_names(std::vector<std::string> names);
};

Palette load_palette(const fs::path& path);
void save_palette(const fs::path& path, const Palette& palette);

/// Indexed PNG; kUnlabeled is written as palette entry 255 (black).
void write_label_map(const fs::path& path, const LabelMap& labels, const Palette& palette);
LabelMap read_label_map(const fs::path& path);

/// probs_<s>_<t>_<c>.pfm, one greyscale PFM per class, with classes.json
/// ({"num_classes": C, "class_names": [...]}) alongside.
void save_probability_volume(const fs::path& dir, int s, int t, const LabelProbabilityVolume& vol);
LabelProbabilityVolume load_probability_volume(const fs::path& dir, int s, int t, int num_classes);
void save_class_sidecar(const fs::path& dir, const std::vector<std::string>& names);
std::vector<std::string> load_class_sidecar(const fs::path& dir);

}  // namespace sstlf

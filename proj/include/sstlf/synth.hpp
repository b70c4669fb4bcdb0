#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sstlf/lightfield.hpp"
#include "sstlf/semantics.hpp"
#include "sstlf/stereo.hpp"

namespace sstlf::synth {

namespace fs = std::filesystem;

/// Band-limited value noise: smoothly interpolated hashed lattice values
/// summed over octaves, normalised to [0, 1].
struct TextureSpec {
  std::uint64_t seed = 1;
  double scale = 4.0;  // lattice spacing of the coarsest octave, pixels
  int octaves = 3;
  double contrast = 0.8;
  std::array<double, 3> color{1.0, 1.0, 1.0};
};

struct MaskSpec {
  enum class Kind { kFull, kNoise, kRect, kDisk };
  Kind kind = Kind::kFull;
  double coverage = 0.4;  // kNoise: covered fraction over the reference raster
  double scale = 6.0;     // kNoise: blob size, pixels
  std::uint64_t seed = 7;
  std::array<double, 4> rect{0, 0, 0, 0};  // x0, y0, x1, y1 (half-open), reference coordinates
  std::array<double, 3> disk{0, 0, 0};     // cx, cy, radius
};

/// Textured plane d(u, v) = disparity + gradient_u * u + gradient_v * v in
/// reference-view coordinates, cut out by a binary mask.
struct Layer {
  std::string name;
  int label = 0;
  double disparity = 0.0;
  double gradient_u = 0.0;
  double gradient_v = 0.0;
  TextureSpec texture;
  MaskSpec mask;

  double disparity_at(double u, double v) const noexcept { return disparity + gradient_u * u + gradient_v * v; }
};

struct ProbabilitySpec {
  double temperature = 0.0;        // softmax temperature of clean pixels; 0 = one-hot
  double label_noise = 0.0;        // fraction of pixels given a wrong label
  double noise_temperature = 1.0;  // temperature of mislabelled pixels
};

struct SceneSpec {
  int width = 64;
  int height = 64;
  int channels = 3;
  int grid_rows = 3;
  int grid_cols = 3;
  double baseline = 1.0;
  double disparity_scale = 1.0;
  std::array<double, 2> disparity_range{0.0, 10.0};
  double noise = 0.0;
  std::uint64_t seed = 1;
  std::vector<std::string> classes{"background"};
  std::string view_format = "pfm";
  ProbabilitySpec probabilities;
  std::vector<Layer> layers;

  /// Throws BadSpec.
  void validate() const;
};

SceneSpec parse_scene(const nlohmann::json& j);
SceneSpec load_scene(const fs::path& path);
nlohmann::json scene_to_json(const SceneSpec& spec);

struct SceneData {
  LightField lightfield;
  std::vector<DisparityMap> disparity;  // indexed t * cols + s
  std::vector<LabelMap> labels;
  std::vector<LabelProbabilityVolume> probabilities;
  Palette palette;
};

/// Exact per-view rasterisation with z-ordering by disparity. Pixels no
/// layer covers are black background at the minimum scene disparity.
SceneData render_scene(const SceneSpec& spec);

/// Reference-view render restricted to the layers accepted by `keep`.
ViewImage render_layers(const SceneSpec& spec, int s, int t, const std::function<bool(std::size_t)>& keep);

/// For each central-view pixel, the number of views in which the point of
/// layer `layer` seen through that pixel is unoccluded and inside the frame.
Image<int> visibility_count(const SceneSpec& spec, std::size_t layer);

/// Writes lf/, gt/ (disp_<s>_<t>.pfm, sem_<s>_<t>.png, palette.json) and
/// probs/ (probs_<s>_<t>_<c>.pfm, classes.json) under dir.
void write_dataset(const fs::path& dir, const SceneSpec& spec, const SceneData& data);

double value_noise(double u, double v, std::uint64_t seed, double scale, int octaves) noexcept;

}  // namespace sstlf::synth

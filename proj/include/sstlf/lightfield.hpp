#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sstlf/image.hpp"

namespace sstlf {

namespace fs = std::filesystem;

/// Grid geometry and disparity convention of a rectified camera array.
///
/// Views are addressed by (s, t): s is the horizontal grid index in
/// [0, grid_cols), t the vertical index in [0, grid_rows). A scene point at
/// disparity d seen at (u, v) in view (s0, t0) appears at
/// (u + d * (s - s0), v + d * (t - t0)) in view (s, t).
struct Calibration {
  int grid_rows = 0;
  int grid_cols = 0;
  double baseline = 1.0;
  double disparity_scale = 1.0;
  double disparity_min = 0.0;
  double disparity_max = 0.0;
  std::string view_pattern = "view_{s}_{t}.png";
  bool rectified = true;

  /// Throws BadManifest when a field is out of range.
  void validate() const;

  /// Metric depth of a disparity; infinite at d = 0.
  double depth_of(double disparity) const { return baseline * disparity_scale / disparity; }

  bool focal_in_range(double d_f) const;

  std::string view_filename(int s, int t) const;
};

Calibration load_manifest(const fs::path& path);
void save_manifest(const fs::path& path, const Calibration& calib);

/// Immutable after construction; safe for concurrent reads.
class LightField {
 public:
  /// views are indexed t * grid_cols + s.
  LightField(Calibration calib, std::vector<ViewImage> views);

  const Calibration& calibration() const noexcept { return calib_; }
  int cols() const noexcept { return calib_.grid_cols; }
  int rows() const noexcept { return calib_.grid_rows; }
  int width() const noexcept { return views_.front().width(); }
  int height() const noexcept { return views_.front().height(); }
  int channels() const noexcept { return views_.front().channels(); }
  int view_count() const noexcept { return static_cast<int>(views_.size()); }

  /// Central view; the output raster of every renderer.
  int center_s() const noexcept { return (cols() - 1) / 2; }
  int center_t() const noexcept { return (rows() - 1) / 2; }

  bool has_view(int s, int t) const noexcept { return s >= 0 && t >= 0 && s < cols() && t < rows(); }
  const ViewImage& view(int s, int t) const;

 private:
  Calibration calib_;
  std::vector<ViewImage> views_;
};

/// Reads manifest.json (or the given manifest path) plus one image per view.
LightField load_lightfield(const fs::path& dir, const std::optional<fs::path>& manifest = std::nullopt);
void save_lightfield(const fs::path& dir, const LightField& lf);

using Color = std::array<float, 3>;

/// Bilinear sample of view (s, t) at fractional pixel (u, v). Returns nullopt
/// when (u, v) lies outside the pixel lattice [0, w-1] x [0, h-1].
std::optional<Color> sample_view(const LightField& lf, int s, int t, double u, double v);

/// Same as sample_view on a bare image; writes channels() values to out.
bool sample_bilinear(const ViewImage& img, double u, double v, float* out) noexcept;

struct PixelPos {
  double u;
  double v;
};

/// Pixel in view (s, t) hit by the ray through (u_ref, v_ref) of view
/// (s_ref, t_ref) on the focal plane at disparity d_f.
constexpr PixelPos reproject(int s, int t, double u_ref, double v_ref, double d_f, int s_ref, int t_ref) noexcept {
  return {u_ref + d_f * (s - s_ref), v_ref + d_f * (t - t_ref)};
}

/// Per-view nonnegative blending weights A(s, t).
class ApertureMask {
 public:
  ApertureMask(int cols, int rows, std::vector<double> weights);

  static ApertureMask full(int cols, int rows);
  static ApertureMask center(int cols, int rows);
  /// Views within Euclidean grid distance `radius` of the centre view.
  static ApertureMask radius(int cols, int rows, double radius);
  static ApertureMask single(int cols, int rows, int s, int t);
  /// "full", "center" or "radius:<r>".
  static ApertureMask parse(const std::string& spec, int cols, int rows);

  int cols() const noexcept { return cols_; }
  int rows() const noexcept { return rows_; }
  double weight(int s, int t) const { return weights_.at(static_cast<std::size_t>(t) * cols_ + s); }
  bool normalized() const noexcept { return normalized_; }
  ApertureMask normalize() const;

 private:
  int cols_;
  int rows_;
  std::vector<double> weights_;
  bool normalized_ = false;
};

}  // namespace sstlf

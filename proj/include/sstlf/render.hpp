#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "sstlf/refocus.hpp"
#include "sstlf/semantics.hpp"
#include "sstlf/stereo.hpp"

namespace sstlf {

struct WeightParams {
  double sigma_d = 0.5;
  /// Treats sigma_d as infinite: the depth weight is identically 1.
  bool sigma_bypass = false;
  double c1 = 0.1;
  double c2 = 0.05;
  std::optional<int> target_label;
  double suppress_factor = 2.0;

  /// Throws InvalidArgument when a field is out of range.
  void validate() const;
};

/// (1 - C1) * exp(-(d_f - d_ray)^2 / 2 sigma_d^2) + C1.
double depth_weight(double d_ray, double d_f, double sigma_d, double c1, bool sigma_bypass = false) noexcept;

/// Quadratic over [d_min, d_max] with vertex 1 at the midpoint, clamped at
/// zero outside. A collapsed range is a box of half-width sigma_d.
double semantic_weight_raw(double d_f, double d_min, double d_max, double sigma_d) noexcept;

/// (1 - C2) * raw + C2.
double semantic_weight(double d_f, double d_min, double d_max, double sigma_d, double c2) noexcept;

/// Divides each weight by their sum. Throws ZeroWeightSum when the sum is 0.
std::vector<double> normalize_weights(std::span<const double> weights);

struct LabelRange {
  double min = 0.0;
  double max = 0.0;
  bool present = false;

  bool overlaps(const LabelRange& o) const noexcept { return present && o.present && min <= o.max && o.min <= max; }
};

/// Per view, per label: disparity extent of that label's rays in that view.
class LabelDepthRanges {
 public:
  LabelDepthRanges() = default;
  LabelDepthRanges(std::span<const DisparityMap> disps, std::span<const LabelMap> labels);

  const LabelRange& get(std::size_t view, int label) const { return ranges_.at(view)[static_cast<std::size_t>(label)]; }
  std::size_t view_count() const noexcept { return ranges_.size(); }

 private:
  std::vector<std::array<LabelRange, 256>> ranges_;
};

struct SSTRequest {
  double d_f = 0.0;
  ApertureMask aperture;
  WeightParams params;
  bool allow_out_of_range = false;
};

/// Per-view inputs of the renderer, indexed t * cols + s like the views.
struct SceneMaps {
  std::vector<DisparityMap> disparity;
  std::vector<LabelMap> labels;
};

/// Semantic see-through render in the central view's raster. Each ray's
/// colour is weighted by aperture * depth weight * semantic weight (label
/// and disparity looked up nearest-neighbour in the ray's own view), with
/// non-target labels overlapping the target divided by suppress_factor, and
/// normalised over the in-bounds rays. Unlabeled rays get semantic weight 1.
RenderResult sst_render(const LightField& lf, const SceneMaps& maps, const SSTRequest& req);
RenderResult sst_render(const LightField& lf, const SceneMaps& maps, const LabelDepthRanges& ranges,
                        const SSTRequest& req);

/// Normalised weights of every in-bounds ray through output pixel (x, y),
/// ordered by view index; views outside the aperture or bounds get 0.
std::vector<double> ray_weights(const LightField& lf, const SceneMaps& maps, const LabelDepthRanges& ranges,
                                const SSTRequest& req, int x, int y);

/// One render per focal disparity; the list must be monotone.
std::vector<RenderResult> focal_sweep(const LightField& lf, const SceneMaps& maps, std::span<const double> focal_list,
                                      const ApertureMask& aperture, const WeightParams& params,
                                      bool allow_out_of_range = false);

/// Validates shape agreement between the light field and its maps.
void check_scene_maps(const LightField& lf, const SceneMaps& maps);

}  // namespace sstlf

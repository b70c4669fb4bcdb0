#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sstlf/semantics.hpp"
#include "sstlf/stereo.hpp"

namespace sstlf {

/// Disparity distribution of one label over its confident pixels.
struct LabelGaussian {
  double mean = 0.0;
  double sigma = 0.0;
  long count = 0;
  bool valid = false;

  /// Peak-normalised density exp(-(d - mean)^2 / 2 sigma^2).
  double density(double d) const noexcept;
};

struct LabelDepthModel {
  /// Indexed by class; entries with valid == false are excluded labels.
  std::vector<LabelGaussian> labels;

  const LabelGaussian* find(int label) const noexcept;
};

struct RefineParams {
  long min_support = 50;
  double sigma_min = 0.25;
  double eps_d = 0.1;
  double p_n = 1.0;
  double p_d = 1.0;
  double tau = 0.5;
  /// Gain applied to disparity before taking surface normals, so that
  /// gentle disparity slopes still tilt the normal measurably.
  double normal_gain = 10.0;
  int normal_window = 5;
  std::optional<int> ground_label;
  bool use_normals = true;
};

/// Per-label sample mean and population stddev over confident,
/// non-background pixels with valid disparity. Labels with fewer than
/// min_support samples are excluded; sigma is floored at sigma_min.
LabelDepthModel fit_models(const Image<std::uint8_t>& confident, const LabelMap& labels, const DisparityMap& dmap,
                           const RefineParams& params = {});

struct ConflictPixel {
  int x = 0;
  int y = 0;
  std::vector<std::uint8_t> candidates;
};

struct DisparityAssignment {
  LabelMap labels;  // confident labels kept; filled or kUnlabeled elsewhere
  std::vector<ConflictPixel> conflicts;
};

/// Each non-confident pixel receives every label whose density at its
/// disparity exceeds eps_d: one match labels it, several make it a conflict
/// (left kUnlabeled until resolved), none leave it unlabeled.
DisparityAssignment assign_by_disparity(const LabelDepthModel& models, const DisparityMap& dmap,
                                        const Image<std::uint8_t>& confident, const LabelMap& labels, double eps_d);

/// Unit normals of the surface (u, v, gain * d) from a least-squares plane
/// over a window x window neighbourhood, oriented with positive z. Three
/// channels (nx, ny, nz).
Image<float> compute_normals(const DisparityMap& dmap, int window = 5, double gain = 1.0);

struct ConflictDecision {
  int x = 0;
  int y = 0;
  std::uint8_t label = kUnlabeled;
  double energy = 0.0;
  double normal_term = 0.0;
  double distance_term = 0.0;
  bool used_normals = false;
};

/// Picks, for every conflict pixel, the candidate minimising
/// p_d * E_d - p_n * E_n, where E_d is min/max squared distance to the
/// candidate's confident region and E_n = x / (x + tau) with x the clamped
/// mean cosine between the pixel normal and the region's normals. E_n is
/// only used when a candidate is the ground label. Ties prefer the higher
/// label density, then the lower index.
LabelMap resolve_conflicts(const DisparityAssignment& assignment, const Image<std::uint8_t>& confident,
                           const LabelMap& confident_labels, const Image<float>& normals, const DisparityMap& dmap,
                           const LabelDepthModel& models, const RefineParams& params,
                           std::vector<ConflictDecision>* decisions = nullptr);

/// fit_models -> assign_by_disparity -> compute_normals -> resolve_conflicts.
LabelMap refine_labels(const LabelMap& hcsm_labels, const DisparityMap& dmap, const RefineParams& params = {});

/// Confident mask implied by an HCSM label map (anything not kUnlabeled).
Image<std::uint8_t> confident_from_labels(const LabelMap& hcsm_labels);

}  // namespace sstlf

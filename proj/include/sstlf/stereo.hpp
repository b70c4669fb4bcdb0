#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "sstlf/image.hpp"
#include "sstlf/lightfield.hpp"

namespace sstlf {

/// Integer disparity hypotheses [lo, hi].
struct DisparityRange {
  int lo = 0;
  int hi = 0;
  int levels() const noexcept { return hi - lo + 1; }
};

/// Matching cost C(p, d), lower is better.
class CostVolume {
 public:
  CostVolume(int width, int height, DisparityRange range, float fill = 0.0f);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  DisparityRange range() const noexcept { return range_; }
  int levels() const noexcept { return range_.levels(); }

  float& at(int x, int y, int d) noexcept { return cost_[offset(x, y) + (d - range_.lo)]; }
  float at(int x, int y, int d) const noexcept { return cost_[offset(x, y) + (d - range_.lo)]; }
  /// All levels of pixel (x, y), ordered lo..hi.
  float* costs(int x, int y) noexcept { return cost_.data() + offset(x, y); }
  const float* costs(int x, int y) const noexcept { return cost_.data() + offset(x, y); }

  const std::vector<float>& data() const noexcept { return cost_; }

 private:
  std::size_t offset(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * static_cast<std::size_t>(range_.levels());
  }

  int width_;
  int height_;
  DisparityRange range_;
  std::vector<float> cost_;
};

inline constexpr float kHole = std::numeric_limits<float>::quiet_NaN();
inline bool is_hole(float d) noexcept { return std::isnan(d); }

struct DisparityMap {
  FloatMap disp;
  int s = 0;
  int t = 0;

  int width() const noexcept { return disp.width(); }
  int height() const noexcept { return disp.height(); }
  float at(int x, int y) const noexcept { return disp.at(x, y); }
  float& at(int x, int y) noexcept { return disp.at(x, y); }
};

struct MatchParams {
  double alpha = 0.7;  // census share of the blended cost
  int census_height = 7;
  int census_width = 9;
  int ncc_size = 9;
};

/// Blended census + NCC cost between ref(p) and other(p + step * d), so the
/// default step -1 compares left(p) with right(p - d). Both terms lie in
/// [0, 1]; a textureless patch contributes a neutral NCC term of 0.5.
/// Matches falling outside `other` cost 1.
CostVolume matching_cost(const ViewImage& ref, const ViewImage& other, DisparityRange range, int step = -1,
                         const MatchParams& params = {});

struct CrossParams {
  float tau_c = 0.03f;
  int max_arm = 17;
  int iterations = 2;
};

/// Arm lengths of the cross-shaped support region at each pixel.
struct CrossArms {
  Image<std::uint16_t> left, right, up, down;
};

/// An arm extends while the max channel difference to the anchor pixel is
/// strictly below tau_c and the arm is at most max_arm long.
CrossArms compute_arms(const ViewImage& guide, const CrossParams& params);

/// Averages costs over the union of horizontal arms of all pixels on the
/// anchor's vertical arm, repeated params.iterations times.
CostVolume aggregate_cross(const CostVolume& cv, const ViewImage& guide, const CrossParams& params = {});

struct SgmParams {
  double p1 = 1.0;
  double p2 = 8.0;
};

/// Per-pixel argmin; ties go to the lowest disparity.
DisparityMap winner_take_all(const CostVolume& cv);

/// Summed path costs of the four scanline passes (left, right, up, down).
CostVolume sgm_aggregate(const CostVolume& cv, const SgmParams& params = {});

/// Scanline DP of the smoothness energy in four directions, then WTA.
DisparityMap sgm(const CostVolume& cv, const SgmParams& params = {});

/// Data term plus P1 / P2 penalties over ordered 4-neighbour pairs. Disparities
/// are rounded to the nearest level; holes are skipped.
double sgm_energy(const CostVolume& cv, const DisparityMap& dmap, const SgmParams& params);

/// Offset of the parabola vertex through (d-1, d, d+1), clamped to [-0.5, 0.5].
double parabola_offset(double c_prev, double c_mid, double c_next) noexcept;

/// Refines integer disparities by parabola fitting; range ends stay put.
DisparityMap subpixel(const CostVolume& cv, const DisparityMap& dmap);

struct FilterParams {
  int median_size = 5;
  int bilateral_radius = 2;
  double eps_i = 0.03;
};

/// Median filter followed by the intensity-gated bilateral average with
/// standard-normal spatial weights.
DisparityMap refine_filters(const DisparityMap& dmap, const ViewImage& guide, const FilterParams& params = {});

enum class Consistency : std::uint8_t { kCorrect = 0, kMismatch = 1, kOcclusion = 2 };
using ConsistencyLabels = Image<std::uint8_t>;

/// A neighbouring view's disparity map together with its grid offset: a
/// point at disparity d seen at x in the reference view appears at
/// x + offset * d in the neighbour.
struct Neighbor {
  const DisparityMap* map = nullptr;
  int offset = 1;
  const ConsistencyLabels* labels = nullptr;
};

/// Correct when d = D_R(p) agrees within 1 px with either neighbour at the
/// position d predicts; mismatch when some other integer d in `range` would
/// agree; occlusion otherwise. The band of width `margin` on the side where
/// matches leave the image is labelled occlusion.
ConsistencyLabels consistency_label(const DisparityMap& ref, const Neighbor& near, const Neighbor& far,
                                    DisparityRange range, int margin = 0);

struct FillReport {
  int searched = 0;       // occlusions filled by the neighbour search
  int background = 0;     // occlusions filled from the row background
  int interpolated = 0;   // mismatches filled from 16-direction medians
  int row_copied = 0;     // pixels of rows without any correct pixel
};

/// Replaces occlusions by searching the neighbours (near, far, then the
/// optional opposite pair) for a correct pixel that maps back onto p, and
/// mismatches by the median of the nearest correct pixels along 16 rays.
/// Unresolved occlusions take the smaller of the nearest correct values to
/// either side on the row. Rows with no correct pixel copy the nearest
/// filled row. Correct pixels are never modified.
DisparityMap occlusion_fill(const DisparityMap& ref, const ConsistencyLabels& labels, const Neighbor& near,
                            const Neighbor& far, DisparityRange range,
                            const std::vector<Neighbor>& fallback = {}, FillReport* report = nullptr);

struct StereoParams {
  MatchParams match;
  CrossParams cross;
  SgmParams sgm;
  FilterParams filter;
  /// Defaults to the calibrated disparity range widened to integers.
  std::optional<DisparityRange> range;
};

/// Disparity from a single rectified pair, before multi-view consistency.
DisparityMap pair_disparity(const ViewImage& ref, const ViewImage& other, int step, DisparityRange range,
                            const StereoParams& params);

/// Pairwise stereo along every grid row, then consistency labelling and
/// hole filling per view. Returned maps are indexed t * cols + s.
std::vector<DisparityMap> lf_disparity(const LightField& lf, const StereoParams& params = {});

DisparityRange range_for(const Calibration& calib);

}  // namespace sstlf

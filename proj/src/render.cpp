#include "sstlf/render.hpp"

#include <cmath>

#include "sstlf/parallel.hpp"

namespace sstlf {

void WeightParams::validate() const {
  auto bad = [](const std::string& msg) { throw Error(ErrorKind::kInvalidArgument, msg); };
  if (!sigma_bypass && !(sigma_d > 0.0 && std::isfinite(sigma_d))) bad("sigma_d must be positive");
  if (!(c1 >= 0.0 && c1 <= 1.0)) bad("C1 must lie in [0,1]");
  if (!(c2 >= 0.0 && c2 <= 1.0)) bad("C2 must lie in [0,1]");
  if (!(suppress_factor >= 1.0 && std::isfinite(suppress_factor))) bad("suppress_factor must be >= 1");
  if (target_label && (*target_label < 0 || *target_label > 254)) bad("target label out of range");
}

double depth_weight(double d_ray, double d_f, double sigma_d, double c1, bool sigma_bypass) noexcept {
  double raw = 1.0;
  if (!sigma_bypass) {
    const double diff = d_f - d_ray;
    raw = std::exp(-(diff * diff) / (2.0 * sigma_d * sigma_d));
  }
  return (1.0 - c1) * raw + c1;
}

double semantic_weight_raw(double d_f, double d_min, double d_max, double sigma_d) noexcept {
  if (d_max <= d_min) return std::abs(d_f - d_min) <= sigma_d ? 1.0 : 0.0;
  const double half = (d_max - d_min) / 2.0;
  return std::max(0.0, -(d_f - d_min) * (d_f - d_max) / (half * half));
}

double semantic_weight(double d_f, double d_min, double d_max, double sigma_d, double c2) noexcept {
  return (1.0 - c2) * semantic_weight_raw(d_f, d_min, d_max, sigma_d) + c2;
}

std::vector<double> normalize_weights(std::span<const double> weights) {
  double sum = 0.0;
  for (double w : weights) sum += w;
  if (!(sum > 0.0)) throw Error(ErrorKind::kZeroWeightSum, "weights sum to zero");
  std::vector<double> out(weights.begin(), weights.end());
  for (double& w : out) w /= sum;
  return out;
}

LabelDepthRanges::LabelDepthRanges(std::span<const DisparityMap> disps, std::span<const LabelMap> labels) {
  if (disps.size() != labels.size()) throw Error(ErrorKind::kMissingMaps, "one label map per disparity map required");
  ranges_.resize(disps.size());
  for (std::size_t v = 0; v < disps.size(); ++v) {
    const DisparityMap& dm = disps[v];
    const LabelMap& lm = labels[v];
    if (!dm.disp.same_size(lm)) throw Error(ErrorKind::kDimensionMismatch, "label and disparity maps differ in size");
    auto& table = ranges_[v];
    for (std::size_t i = 0; i < lm.data().size(); ++i) {
      const std::uint8_t lab = lm.data()[i];
      const float d = dm.disp.data()[i];
      if (lab == kUnlabeled || is_hole(d)) continue;
      LabelRange& r = table[lab];
      if (!r.present) {
        r = {d, d, true};
      } else {
        r.min = std::min<double>(r.min, d);
        r.max = std::max<double>(r.max, d);
      }
    }
  }
}

void check_scene_maps(const LightField& lf, const SceneMaps& maps) {
  const auto n = static_cast<std::size_t>(lf.view_count());
  if (maps.disparity.size() != n || maps.labels.size() != n) {
    throw Error(ErrorKind::kMissingMaps, "need one disparity and one label map per view");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (maps.disparity[i].width() != lf.width() || maps.disparity[i].height() != lf.height() ||
        maps.labels[i].width() != lf.width() || maps.labels[i].height() != lf.height()) {
      throw Error(ErrorKind::kDimensionMismatch, "maps must match the view raster");
    }
  }
}

namespace {

struct ViewTap {
  const ViewImage* img;
  const DisparityMap* disp;
  const LabelMap* labels;
  std::size_t view;
  double aperture;
  double du;
  double dv;
};

// Shared per-ray weighting so that ray_weights and sst_render agree exactly.
class RayWeigher {
 public:
  RayWeigher(const LightField& lf, const SceneMaps& maps, const LabelDepthRanges& ranges, const SSTRequest& req)
      : ranges_(ranges), params_(req.params), d_f_(req.d_f) {
    if (req.aperture.cols() != lf.cols() || req.aperture.rows() != lf.rows()) {
      throw Error(ErrorKind::kInvalidArgument, "aperture does not match light-field grid");
    }
    if (!std::isfinite(req.d_f)) throw Error(ErrorKind::kInvalidArgument, "d_f must be finite");
    if (!req.allow_out_of_range && !lf.calibration().focal_in_range(req.d_f)) {
      throw Error(ErrorKind::kInvalidArgument, "d_f outside calibrated disparity range");
    }
    req.params.validate();
    check_scene_maps(lf, maps);
    if (ranges.view_count() != maps.disparity.size()) throw Error(ErrorKind::kMissingMaps, "label ranges missing views");

    const int cs = lf.center_s();
    const int ct = lf.center_t();
    for (int t = 0; t < lf.rows(); ++t) {
      for (int s = 0; s < lf.cols(); ++s) {
        const double a = req.aperture.weight(s, t);
        if (a <= 0.0) continue;
        const std::size_t v = static_cast<std::size_t>(t) * lf.cols() + s;
        const PixelPos off = reproject(s, t, 0.0, 0.0, req.d_f, cs, ct);
        taps_.push_back({&lf.view(s, t), &maps.disparity[v], &maps.labels[v], v, a, off.u, off.v});
      }
    }
    // Labels whose reference-view range overlaps the target's get suppressed.
    suppressed_.fill(false);
    if (params_.target_label) {
      const std::size_t ref = static_cast<std::size_t>(ct) * lf.cols() + cs;
      const LabelRange& target = ranges.get(ref, *params_.target_label);
      for (int lab = 0; lab < 255; ++lab) {
        suppressed_[static_cast<std::size_t>(lab)] = lab != *params_.target_label && ranges.get(ref, lab).overlaps(target);
      }
    }
  }

  const std::vector<ViewTap>& taps() const noexcept { return taps_; }

  /// Joint weight of the ray of `tap` landing at (u, v), before normalisation.
  double weight(const ViewTap& tap, double u, double v) const {
    const int x = std::clamp(static_cast<int>(std::lround(u)), 0, tap.disp->width() - 1);
    const int y = std::clamp(static_cast<int>(std::lround(v)), 0, tap.disp->height() - 1);
    const float d_ray = tap.disp->at(x, y);
    const std::uint8_t lab = tap.labels->at(x, y);
    const double wd = is_hole(d_ray) ? 1.0 : depth_weight(d_ray, d_f_, params_.sigma_d, params_.c1, params_.sigma_bypass);
    double ws = 1.0;
    if (lab != kUnlabeled) {
      const LabelRange& r = ranges_.get(tap.view, lab);
      ws = semantic_weight(d_f_, r.min, r.max, params_.sigma_d, params_.c2);
    }
    double w = tap.aperture * (wd * ws);
    if (suppressed_[lab]) w /= params_.suppress_factor;
    return w;
  }

 private:
  const LabelDepthRanges& ranges_;
  WeightParams params_;
  double d_f_;
  std::vector<ViewTap> taps_;
  std::array<bool, 256> suppressed_{};
};

}  // namespace

RenderResult sst_render(const LightField& lf, const SceneMaps& maps, const LabelDepthRanges& ranges,
                        const SSTRequest& req) {
  const RayWeigher weigher(lf, maps, ranges, req);
  const int w = lf.width();
  const int h = lf.height();
  const int ch = lf.channels();
  RenderResult out{ViewImage(w, h, ch), Image<std::uint8_t>(w, h, 1)};
  parallel_rows(0, h, [&](int y) {
    float sample[3];
    double acc[3];
    for (int x = 0; x < w; ++x) {
      acc[0] = acc[1] = acc[2] = 0.0;
      double wsum = 0.0;
      for (const ViewTap& tap : weigher.taps()) {
        const double u = x + tap.du;
        const double v = y + tap.dv;
        if (!sample_bilinear(*tap.img, u, v, sample)) continue;
        const double wt = weigher.weight(tap, u, v);
        for (int c = 0; c < ch; ++c) acc[c] += wt * sample[c];
        wsum += wt;
      }
      if (wsum > 0.0) {
        for (int c = 0; c < ch; ++c) out.image.at(x, y, c) = static_cast<float>(acc[c] / wsum);
        out.valid.at(x, y) = 1;
      }
    }
  });
  const bool any = std::any_of(out.valid.data().begin(), out.valid.data().end(), [](std::uint8_t v) { return v != 0; });
  if (!any) throw Error(ErrorKind::kZeroWeightSum, "no output pixel received a nonzero weight");
  return out;
}

RenderResult sst_render(const LightField& lf, const SceneMaps& maps, const SSTRequest& req) {
  check_scene_maps(lf, maps);
  const LabelDepthRanges ranges(maps.disparity, maps.labels);
  return sst_render(lf, maps, ranges, req);
}

std::vector<double> ray_weights(const LightField& lf, const SceneMaps& maps, const LabelDepthRanges& ranges,
                                const SSTRequest& req, int x, int y) {
  const RayWeigher weigher(lf, maps, ranges, req);
  std::vector<double> raw(static_cast<std::size_t>(lf.view_count()), 0.0);
  float sample[3];
  for (const ViewTap& tap : weigher.taps()) {
    const double u = x + tap.du;
    const double v = y + tap.dv;
    if (!sample_bilinear(*tap.img, u, v, sample)) continue;
    raw[tap.view] = weigher.weight(tap, u, v);
  }
  return normalize_weights(raw);
}

std::vector<RenderResult> focal_sweep(const LightField& lf, const SceneMaps& maps, std::span<const double> focal_list,
                                      const ApertureMask& aperture, const WeightParams& params,
                                      bool allow_out_of_range) {
  const bool up = std::is_sorted(focal_list.begin(), focal_list.end());
  const bool down = std::is_sorted(focal_list.begin(), focal_list.end(), std::greater<>());
  if (!up && !down) throw Error(ErrorKind::kInvalidArgument, "focal sweep must be monotone");
  check_scene_maps(lf, maps);
  const LabelDepthRanges ranges(maps.disparity, maps.labels);
  std::vector<RenderResult> frames;
  frames.reserve(focal_list.size());
  for (double d_f : focal_list) {
    frames.push_back(sst_render(lf, maps, ranges, SSTRequest{d_f, aperture, params, allow_out_of_range}));
  }
  return frames;
}

}  // namespace sstlf

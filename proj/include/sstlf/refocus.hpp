#pragma once

#include <optional>

#include "sstlf/lightfield.hpp"

namespace sstlf {

struct RenderRequest {
  double d_f = 0.0;
  ApertureMask aperture;
  /// When false, d_f outside the calibrated disparity range is rejected.
  bool allow_out_of_range = false;
};

/// Output raster plus a mask of pixels that received at least one sample.
struct RenderResult {
  ViewImage image;
  Image<std::uint8_t> valid;
};

/// Synthetic-aperture refocus onto the plane of disparity d_f, rendered in
/// the central view's raster. Each output pixel is the A(s,t)-weighted mean
/// of in-bounds bilinear samples; out-of-bounds rays are dropped and the
/// remaining weights renormalised. Pixels with no sample are black and
/// invalid.
RenderResult refocus(const LightField& lf, const RenderRequest& req);

}  // namespace sstlf

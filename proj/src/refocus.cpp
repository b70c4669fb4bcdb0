#include "sstlf/refocus.hpp"

#include <cmath>

#include "sstlf/parallel.hpp"

namespace sstlf {

RenderResult refocus(const LightField& lf, const RenderRequest& req) {
  if (req.aperture.cols() != lf.cols() || req.aperture.rows() != lf.rows()) {
    throw Error(ErrorKind::kInvalidArgument, "aperture does not match light-field grid");
  }
  if (!std::isfinite(req.d_f)) throw Error(ErrorKind::kInvalidArgument, "d_f must be finite");
  if (!req.allow_out_of_range && !lf.calibration().focal_in_range(req.d_f)) {
    throw Error(ErrorKind::kInvalidArgument, "d_f outside calibrated disparity range");
  }

  const int w = lf.width();
  const int h = lf.height();
  const int ch = lf.channels();
  const int cs = lf.center_s();
  const int ct = lf.center_t();

  struct Tap {
    const ViewImage* img;
    double weight;
    double du;
    double dv;
  };
  std::vector<Tap> taps;
  for (int t = 0; t < lf.rows(); ++t) {
    for (int s = 0; s < lf.cols(); ++s) {
      const double a = req.aperture.weight(s, t);
      if (a <= 0.0) continue;
      const PixelPos off = reproject(s, t, 0.0, 0.0, req.d_f, cs, ct);
      taps.push_back({&lf.view(s, t), a, off.u, off.v});
    }
  }

  RenderResult out{ViewImage(w, h, ch), Image<std::uint8_t>(w, h, 1)};
  parallel_rows(0, h, [&](int y) {
    float sample[3];
    double acc[3];
    for (int x = 0; x < w; ++x) {
      acc[0] = acc[1] = acc[2] = 0.0;
      double wsum = 0.0;
      for (const Tap& tap : taps) {
        if (!sample_bilinear(*tap.img, x + tap.du, y + tap.dv, sample)) continue;
        for (int c = 0; c < ch; ++c) acc[c] += tap.weight * sample[c];
        wsum += tap.weight;
      }
      if (wsum > 0.0) {
        for (int c = 0; c < ch; ++c) out.image.at(x, y, c) = static_cast<float>(acc[c] / wsum);
        out.valid.at(x, y) = 1;
      }
    }
  });
  return out;
}

}  // namespace sstlf

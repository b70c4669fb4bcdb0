#include <doctest.h>

#include "sstlf/refocus.hpp"
#include "support.hpp"

using namespace sstlf;

namespace {

// Independent oracle: plain loops, own bilinear, double accumulation.
double oracle_bilinear(const ViewImage& img, double u, double v, int c, bool& ok) {
  ok = u >= 0 && v >= 0 && u <= img.width() - 1 && v <= img.height() - 1;
  if (!ok) return 0.0;
  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = u - x0, fy = v - y0;
  return (1 - fy) * ((1 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c)) +
         fy * ((1 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c));
}

double oracle_pixel(const LightField& lf, const ApertureMask& a, double d_f, int x, int y, int c) {
  const int cs = (lf.cols() - 1) / 2, ct = (lf.rows() - 1) / 2;
  double acc = 0, wsum = 0;
  for (int t = 0; t < lf.rows(); ++t) {
    for (int s = 0; s < lf.cols(); ++s) {
      bool ok = false;
      const double v = oracle_bilinear(lf.view(s, t), x + d_f * (s - cs), y + d_f * (t - ct), c, ok);
      if (ok && a.weight(s, t) > 0) acc += a.weight(s, t) * v, wsum += a.weight(s, t);
    }
  }
  return wsum > 0 ? acc / wsum : 0.0;
}

LightField random_lf(int cols, int rows, int w, int h, int ch, std::uint64_t seed, double dmax = 6) {
  std::vector<ViewImage> views;
  for (int i = 0; i < cols * rows; ++i) views.push_back(testing::random_view(w, h, ch, seed + static_cast<std::uint64_t>(i)));
  return LightField(testing::calibration(cols, rows, 0.0, dmax), std::move(views));
}

}  // namespace

TEST_CASE("constant light field refocuses to the constant") {
  std::vector<ViewImage> views(9, ViewImage(12, 10, 3, 0.37f));
  const LightField lf(testing::calibration(3, 3, 0, 5), views);
  for (double d : {0.0, 1.3, 5.0}) {
    const RenderResult r = refocus(lf, {d, ApertureMask::full(3, 3)});
    for (float v : r.image.data()) CHECK(v == doctest::Approx(0.37f).epsilon(1e-6));
  }
}

TEST_CASE("plane refocused at its own disparity equals the reference view") {
  const synth::SceneData data = synth::render_scene(testing::plane_scene(40, 32, 3, 3, 3.0, 0.0, 6.0));
  const LightField& lf = data.lightfield;
  const RenderResult r = refocus(lf, {3.0, ApertureMask::full(3, 3)});
  const ViewImage& ref = lf.view(1, 1);
  double max_err = 0;
  // Common field of view: every view's sample lies inside its frame.
  for (int y = 3; y < 32 - 3; ++y) {
    for (int x = 3; x < 40 - 3; ++x) {
      for (int c = 0; c < 3; ++c) max_err = std::max(max_err, double(std::abs(r.image.at(x, y, c) - ref.at(x, y, c))));
    }
  }
  CHECK(max_err < 1e-6);
}

TEST_CASE("plane refocused off by two equals the shifted-average blur of the reference") {
  const synth::SceneData data = synth::render_scene(testing::plane_scene(48, 40, 3, 3, 3.0, 0.0, 6.0));
  const LightField& lf = data.lightfield;
  const RenderResult r = refocus(lf, {5.0, ApertureMask::full(3, 3)});
  // View (s,t) holds ref(x - 3ds, y - 3dt); sampling it at (x + 5ds, y + 5dt) reads ref(x + 2ds, y + 2dt).
  const ViewImage& ref = lf.view(1, 1);
  double max_err = 0;
  for (int y = 5; y < 40 - 5; ++y) {
    for (int x = 5; x < 48 - 5; ++x) {
      for (int c = 0; c < 3; ++c) {
        double k = 0;
        for (int dt = -1; dt <= 1; ++dt) {
          for (int ds = -1; ds <= 1; ++ds) k += ref.at(x + 2 * ds, y + 2 * dt, c);
        }
        max_err = std::max(max_err, std::abs(r.image.at(x, y, c) - k / 9.0));
      }
    }
  }
  CHECK(max_err < 1e-6);
}

TEST_CASE("refocus matches a brute-force oracle at fractional disparity and weighted aperture") {
  const LightField lf = random_lf(3, 3, 17, 13, 3, 7);
  ApertureMask a(3, 3, {0.5, 1, 0.5, 1, 2, 1, 0, 1, 0.25});
  for (double d : {0.0, 0.7, 2.35, 5.5}) {
    const RenderResult r = refocus(lf, {d, a});
    for (int y = 0; y < 13; ++y) {
      for (int x = 0; x < 17; ++x) {
        for (int c = 0; c < 3; ++c) CHECK(r.image.at(x, y, c) == doctest::Approx(oracle_pixel(lf, a, d, x, y, c)).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("refocus is linear in the light field") {
  const LightField a = random_lf(3, 3, 15, 11, 1, 20);
  const LightField b = random_lf(3, 3, 15, 11, 1, 40);
  const double alpha = 0.3, beta = 0.6;
  std::vector<ViewImage> mix;
  for (int t = 0; t < 3; ++t) {
    for (int s = 0; s < 3; ++s) {
      ViewImage v = a.view(s, t);
      for (std::size_t i = 0; i < v.data().size(); ++i) {
        v.data()[i] = static_cast<float>(alpha * a.view(s, t).data()[i] + beta * b.view(s, t).data()[i]);
      }
      mix.push_back(v);
    }
  }
  const LightField m(a.calibration(), mix);
  const RenderRequest req{1.6, ApertureMask::full(3, 3)};
  const RenderResult ra = refocus(a, req), rb = refocus(b, req), rm = refocus(m, req);
  for (std::size_t i = 0; i < rm.image.data().size(); ++i) {
    CHECK(std::abs(rm.image.data()[i] - (alpha * ra.image.data()[i] + beta * rb.image.data()[i])) < 1e-6);
  }
}

TEST_CASE("single-view aperture reproduces that view shifted") {
  const LightField lf = random_lf(3, 3, 16, 12, 1, 60);
  const RenderResult r = refocus(lf, {2.0, ApertureMask::single(3, 3, 2, 0)});
  for (int y = 0; y < 12; ++y) {
    for (int x = 0; x < 16; ++x) {
      const int u = x + 2, v = y - 2;
      const bool inside = u >= 0 && u < 16 && v >= 0 && v < 12;
      CHECK(static_cast<bool>(r.valid.at(x, y)) == inside);
      if (inside) CHECK(r.image.at(x, y) == lf.view(2, 0).at(u, v));
      else CHECK(r.image.at(x, y) == 0.0f);
    }
  }
}

TEST_CASE("mean intensity is conserved for in-bounds renders") {
  std::vector<ViewImage> views;
  for (int i = 0; i < 9; ++i) views.push_back(testing::random_view(20, 20, 1, 300 + static_cast<std::uint64_t>(i)));
  const LightField lf(testing::calibration(3, 3, 0, 4), views);
  // d_f = 0: every sample is in bounds, output = mean of views.
  const RenderResult r = refocus(lf, {0.0, ApertureMask::full(3, 3)});
  double out_mean = 0, view_mean = 0;
  for (float v : r.image.data()) out_mean += v;
  for (const ViewImage& v : views) {
    for (float x : v.data()) view_mean += x;
  }
  CHECK(out_mean / 400.0 == doctest::Approx(view_mean / 3600.0).epsilon(1e-4));
}

TEST_CASE("focal disparity outside the calibrated range is rejected unless allowed") {
  const LightField lf = random_lf(3, 3, 8, 8, 1, 1, 4.0);
  CHECK_THROWS_AS(refocus(lf, {4.5, ApertureMask::full(3, 3)}), Error);
  CHECK_THROWS_AS(refocus(lf, {std::nan(""), ApertureMask::full(3, 3), true}), Error);
  CHECK_NOTHROW(refocus(lf, {4.5, ApertureMask::full(3, 3), true}));
  CHECK_THROWS_AS(refocus(lf, {1.0, ApertureMask::full(2, 2)}), Error);
}

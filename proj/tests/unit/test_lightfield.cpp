#include <doctest.h>

#include <fstream>

#include "sstlf/lightfield.hpp"
#include "support.hpp"

using namespace sstlf;

namespace {

LightField random_lf(int cols, int rows, int w, int h, int ch) {
  std::vector<ViewImage> views;
  for (int i = 0; i < cols * rows; ++i) views.push_back(testing::random_view(w, h, ch, 100 + static_cast<std::uint64_t>(i)));
  return LightField(testing::calibration(cols, rows, 0.0, 4.0), std::move(views));
}

}  // namespace

TEST_CASE("3x3 grid loads with its declared dimensions") {
  const fs::path dir = testing::scratch("lf_load");
  save_lightfield(dir, random_lf(3, 3, 8, 6, 3));
  const LightField lf = load_lightfield(dir);
  CHECK(lf.rows() == 3);
  CHECK(lf.cols() == 3);
  CHECK(lf.width() == 8);
  CHECK(lf.height() == 6);
}

TEST_CASE("6x6 grid with one file absent is a MissingView") {
  const fs::path dir = testing::scratch("lf_missing");
  save_lightfield(dir, random_lf(6, 6, 4, 4, 1));
  fs::remove(dir / "view_4_2.png");
  try {
    load_lightfield(dir);
    FAIL("expected MissingView");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kMissingView);
  }
}

TEST_CASE("views of different width are a DimensionMismatch") {
  std::vector<ViewImage> views;
  for (int i = 0; i < 4; ++i) views.push_back(testing::random_view(i == 2 ? 9 : 8, 6, 1, 1));
  try {
    LightField(testing::calibration(2, 2, 0, 1), std::move(views));
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDimensionMismatch);
  }
}

TEST_CASE("bad manifests are rejected") {
  const fs::path dir = testing::scratch("lf_manifest");
  std::ofstream(dir / "a.json") << R"({"grid_rows": 2, "grid_cols": 0, "baseline": 1, "disparity_scale": 1,
                                       "disparity_range": [0, 1], "view_pattern": "view_{s}_{t}.png"})";
  std::ofstream(dir / "b.json") << R"({"grid_rows": 2)";
  std::ofstream(dir / "c.json") << R"({"grid_rows": 2, "grid_cols": 2, "baseline": 1, "disparity_scale": 1,
                                       "disparity_range": [3, 1], "view_pattern": "view_{s}_{t}.png"})";
  for (const char* f : {"a.json", "b.json", "c.json"}) {
    try {
      load_manifest(dir / f);
      FAIL("expected BadManifest");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kBadManifest);
    }
  }
}

TEST_CASE("manifest round trip") {
  const fs::path p = testing::scratch("lf_manifest_rt") / "m.json";
  Calibration c = testing::calibration(5, 3, -1.5, 7.25);
  c.baseline = 0.2;
  c.disparity_scale = 3.0;
  c.view_pattern = "cam_{t}_{s}.pfm";
  save_manifest(p, c);
  const Calibration back = load_manifest(p);
  CHECK(back.grid_cols == 5);
  CHECK(back.grid_rows == 3);
  CHECK(back.baseline == 0.2);
  CHECK(back.disparity_scale == 3.0);
  CHECK(back.disparity_min == -1.5);
  CHECK(back.disparity_max == 7.25);
  CHECK(back.view_filename(2, 1) == "cam_1_2.pfm");
}

TEST_CASE("PFM light fields reload bit-identically, PNG after quantisation") {
  LightField lf = random_lf(3, 2, 5, 4, 3);
  Calibration c = lf.calibration();
  c.view_pattern = "view_{s}_{t}.pfm";
  std::vector<ViewImage> views;
  for (int t = 0; t < 2; ++t) {
    for (int s = 0; s < 3; ++s) views.push_back(lf.view(s, t));
  }
  const LightField pfm_lf(c, views);
  const fs::path dir = testing::scratch("lf_rt");
  save_lightfield(dir / "pfm", pfm_lf);
  const LightField back = load_lightfield(dir / "pfm");
  for (int t = 0; t < 2; ++t) {
    for (int s = 0; s < 3; ++s) CHECK(back.view(s, t) == pfm_lf.view(s, t));
  }
  save_lightfield(dir / "png", lf);
  const LightField q1 = load_lightfield(dir / "png");
  save_lightfield(dir / "png2", q1);
  const LightField q2 = load_lightfield(dir / "png2");
  for (int t = 0; t < 2; ++t) {
    for (int s = 0; s < 3; ++s) CHECK(q1.view(s, t) == q2.view(s, t));
  }
}

TEST_CASE("sample_view is exact at lattice points and bilinear between") {
  std::vector<ViewImage> views(1, ViewImage(4, 3, 1));
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 4; ++x) views[0].at(x, y) = static_cast<float>(x == 1 ? 1.0 : 0.0) + 0.125f * static_cast<float>(y);
  }
  const LightField lf(testing::calibration(1, 1, 0, 1), views);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 4; ++x) CHECK((*sample_view(lf, 0, 0, x, y))[0] == views[0].at(x, y));
  }
  // Midpoint between 0.0 and 1.0.
  CHECK((*sample_view(lf, 0, 0, 0.5, 0.0))[0] == doctest::Approx(0.5));
  // Bilinear oracle at an arbitrary point.
  const double u = 1.3, v = 1.6;
  const double top = 0.7 * views[0].at(1, 1) + 0.3 * views[0].at(2, 1);
  const double bot = 0.7 * views[0].at(1, 2) + 0.3 * views[0].at(2, 2);
  CHECK((*sample_view(lf, 0, 0, u, v))[0] == doctest::Approx(0.4 * top + 0.6 * bot).epsilon(1e-6));
  CHECK_FALSE(sample_view(lf, 0, 0, 4 + 5, 1).has_value());
  CHECK_FALSE(sample_view(lf, 0, 0, -0.01, 1).has_value());
  CHECK_THROWS_AS(sample_view(lf, 1, 0, 0, 0), Error);
}

TEST_CASE("reproject") {
  CHECK(reproject(2, 1, 10.0, 7.0, 3.0, 2, 1).u == 10.0);
  CHECK(reproject(2, 1, 10.0, 7.0, 3.0, 2, 1).v == 7.0);
  for (int s = 0; s < 3; ++s) {
    const PixelPos p = reproject(s, 2, 10.0, 7.0, 0.0, 1, 1);
    CHECK(p.u == 10.0);
    CHECK(p.v == 7.0);
  }
  CHECK(reproject(2, 1, 10.0, 5.0, 2.0, 1, 1).u == 12.0);
  // Round trip A -> B -> A.
  const PixelPos b = reproject(4, 0, 3.25, -1.5, 1.75, 1, 2);
  const PixelPos a = reproject(1, 2, b.u, b.v, 1.75, 4, 0);
  CHECK(std::abs(a.u - 3.25) < 1e-9);
  CHECK(std::abs(a.v + 1.5) < 1e-9);
}

TEST_CASE("aperture masks") {
  const ApertureMask full = ApertureMask::parse("full", 3, 3);
  const ApertureMask center = ApertureMask::parse("center", 3, 3);
  const ApertureMask r1 = ApertureMask::parse("radius:1", 3, 3);
  int nf = 0, nc = 0, nr = 0;
  for (int t = 0; t < 3; ++t) {
    for (int s = 0; s < 3; ++s) {
      nf += full.weight(s, t) > 0;
      nc += center.weight(s, t) > 0;
      nr += r1.weight(s, t) > 0;
    }
  }
  CHECK(nf == 9);
  CHECK(nc == 1);
  CHECK(center.weight(1, 1) == 1.0);
  CHECK(nr == 5);
  const ApertureMask n = full.normalize();
  double sum = 0;
  for (int t = 0; t < 3; ++t) {
    for (int s = 0; s < 3; ++s) sum += n.weight(s, t);
  }
  CHECK(n.normalized());
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  try {
    ApertureMask(2, 1, {0.0, 0.0});
    FAIL("expected EmptyAperture");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kEmptyAperture);
  }
  CHECK_THROWS_AS(ApertureMask::parse("wide", 3, 3), Error);
}

#include <doctest.h>

#include <random>

#include "sstlf/stereo.hpp"
#include "support.hpp"

using namespace sstlf;

namespace {

// other(x) = ref(x - shift): a point at x in ref appears at x + shift in other.
ViewImage shifted(const ViewImage& ref, int shift) {
  ViewImage out(ref.width(), ref.height(), ref.channels());
  for (int y = 0; y < ref.height(); ++y) {
    for (int x = 0; x < ref.width(); ++x) {
      for (int c = 0; c < ref.channels(); ++c) out.at(x, y, c) = ref.clamped(x - shift, y, c);
    }
  }
  return out;
}

DisparityMap constant_map(int w, int h, float d) { return DisparityMap{FloatMap(w, h, 1, d), 0, 0}; }

CostVolume random_volume(int w, int h, DisparityRange r, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  CostVolume cv(w, h, r);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int d = r.lo; d <= r.hi; ++d) cv.at(x, y, d) = u(rng);
    }
  }
  return cv;
}

}  // namespace

TEST_CASE("matching cost of identical images is zero at d = 0") {
  const ViewImage img = testing::random_view(40, 30, 3, 9);
  const CostVolume cv = matching_cost(img, img, {0, 5}, 1);
  for (int y = 0; y < 30; ++y) {
    for (int x = 0; x < 40; ++x) CHECK(cv.at(x, y, 0) == doctest::Approx(0.0).epsilon(1e-6));
  }
}

TEST_CASE("textureless images give a flat cost profile") {
  const ViewImage img(30, 20, 1, 0.4f);
  const CostVolume cv = matching_cost(img, img, {0, 4}, 1);
  for (int d = 1; d <= 4; ++d) CHECK(cv.at(10, 10, d) == cv.at(10, 10, 0));
}

TEST_CASE("shifted pair has its cost minimum at the shift") {
  const ViewImage ref = testing::random_view(60, 30, 1, 13);
  const ViewImage other = shifted(ref, 3);
  const CostVolume cv = matching_cost(ref, other, {0, 6}, 1);
  const DisparityMap d = winner_take_all(cv);
  int hits = 0, total = 0;
  for (int y = 5; y < 25; ++y) {
    for (int x = 5; x < 50; ++x) {
      ++total;
      hits += d.at(x, y) == 3.0f;
    }
  }
  CHECK(hits == total);
}

TEST_CASE("cross arms follow the guide") {
  SUBCASE("constant guide extends arms to the limit or the border") {
    const ViewImage g(30, 30, 1, 0.5f);
    const CrossArms a = compute_arms(g, {0.03f, 17, 2});
    CHECK(a.left.at(20, 15) == 17);
    CHECK(a.right.at(20, 15) == 9);
    CHECK(a.up.at(20, 3) == 3);
    CHECK(a.down.at(20, 3) == 17);
  }
  SUBCASE("an intensity edge stops the arm") {
    ViewImage g(20, 5, 1, 0.2f);
    for (int y = 0; y < 5; ++y) {
      for (int x = 10; x < 20; ++x) g.at(x, y) = 0.8f;
    }
    const CrossArms a = compute_arms(g, {0.03f, 17, 2});
    CHECK(a.right.at(5, 2) == 4);
    CHECK(a.left.at(12, 2) == 2);
  }
  SUBCASE("tau_c = 0 collapses arms and aggregation is the identity") {
    const ViewImage g = testing::random_view(12, 10, 1, 2);
    const CrossArms a = compute_arms(g, {0.0f, 17, 2});
    for (auto v : a.left.data()) CHECK(v == 0);
    const CostVolume cv = random_volume(12, 10, {0, 3}, 4);
    CHECK(aggregate_cross(cv, g, {0.0f, 17, 2}).data() == cv.data());
  }
}

TEST_CASE("cross aggregation on a constant guide is a box average") {
  const ViewImage g(9, 7, 1, 0.5f);
  const CostVolume cv = random_volume(9, 7, {0, 2}, 6);
  const CostVolume out = aggregate_cross(cv, g, {0.03f, 1, 1});
  // Oracle: 3x3 box clipped at the border.
  for (int y = 0; y < 7; ++y) {
    for (int x = 0; x < 9; ++x) {
      for (int d = 0; d <= 2; ++d) {
        double s = 0;
        int n = 0;
        for (int yy = std::max(0, y - 1); yy <= std::min(6, y + 1); ++yy) {
          for (int xx = std::max(0, x - 1); xx <= std::min(8, x + 1); ++xx) s += cv.at(xx, yy, d), ++n;
        }
        CHECK(out.at(x, y, d) == doctest::Approx(s / n).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("SGM with zero penalties equals winner-take-all") {
  const CostVolume cv = random_volume(25, 15, {0, 7}, 8);
  CHECK(sgm(cv, {0.0, 0.0}).disp == winner_take_all(cv).disp);
}

TEST_CASE("SGM smoothness pulls an ambiguous pixel to its neighbours") {
  // Row of pixels preferring d = 2, except the centre which is tied between 2 and 5.
  CostVolume cv(9, 1, {0, 6}, 1.0f);
  for (int x = 0; x < 9; ++x) cv.at(x, 0, 2) = 0.0f;
  cv.at(4, 0, 2) = 0.5f;
  cv.at(4, 0, 5) = 0.5f;
  CHECK(sgm(cv, {0.2, 1.0}).at(4, 0) == 2.0f);
  // Hand-computed path cost: the centre's total at d = 5 includes P2 from each horizontal side.
  const CostVolume agg = sgm_aggregate(cv, {0.2, 1.0});
  CHECK(agg.at(4, 0, 2) < agg.at(4, 0, 5));
}

TEST_CASE("SGM energy of the SGM result does not exceed winner-take-all") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const ViewImage ref = testing::random_view(48, 32, 1, seed);
    const CostVolume cv = matching_cost(ref, shifted(ref, 4), {0, 8}, 1);
    const SgmParams p{0.1, 0.8};
    CHECK(sgm_energy(cv, sgm(cv, p), p) <= sgm_energy(cv, winner_take_all(cv), p));
  }
}

TEST_CASE("sgm_energy counts data and ordered-pair penalties") {
  CostVolume cv(2, 1, {0, 3}, 0.0f);
  cv.at(0, 0, 0) = 0.25f;
  cv.at(1, 0, 1) = 0.5f;
  DisparityMap d = constant_map(2, 1, 0.0f);
  d.at(1, 0) = 1.0f;
  // 0.25 + 0.5 + two ordered pairs with |jump| = 1.
  CHECK(sgm_energy(cv, d, {1.0, 8.0}) == doctest::Approx(2.75));
  d.at(1, 0) = 3.0f;
  CHECK(sgm_energy(cv, d, {1.0, 8.0}) == doctest::Approx(16.25));
}

TEST_CASE("parabola vertex offset") {
  CHECK(parabola_offset(2, 1, 2) == 0.0);
  CHECK(parabola_offset(2, 1, 2 - 1e-3) > 0.0);
  CHECK(parabola_offset(2 - 1e-3, 1, 2) < 0.0);
  // Vertex of a parabola through known points: c(d) = (d - 0.3)^2.
  CHECK(parabola_offset(1.69, 0.09, 0.49) == doctest::Approx(0.3));
  CHECK(parabola_offset(1, 1, 1) == 0.0);
  CHECK(std::abs(parabola_offset(0, 1, 5)) <= 0.5);
}

TEST_CASE("subpixel leaves range ends untouched") {
  CostVolume cv(3, 1, {0, 4}, 1.0f);
  cv.at(0, 0, 0) = 0.0f;
  cv.at(1, 0, 4) = 0.0f;
  cv.at(2, 0, 2) = 0.0f;
  cv.at(2, 0, 3) = 0.5f;
  const DisparityMap out = subpixel(cv, winner_take_all(cv));
  CHECK(out.at(0, 0) == 0.0f);
  CHECK(out.at(1, 0) == 4.0f);
  CHECK(out.at(2, 0) > 2.0f);
  CHECK(out.at(2, 0) < 2.5f);
}

TEST_CASE("median and bilateral filters") {
  const ViewImage flat(15, 15, 1, 0.5f);
  SUBCASE("constant map is unchanged") {
    const DisparityMap d = constant_map(15, 15, 4.0f);
    const DisparityMap out = refine_filters(d, flat);
    for (float v : out.disp.data()) CHECK(v == doctest::Approx(4.0f));
  }
  SUBCASE("isolated impulse is removed") {
    DisparityMap d = constant_map(15, 15, 4.0f);
    d.at(7, 7) = 12.0f;
    CHECK(refine_filters(d, flat).at(7, 7) == doctest::Approx(4.0f));
  }
  SUBCASE("a disparity step on an intensity edge survives") {
    ViewImage g(15, 15, 1, 0.2f);
    DisparityMap d = constant_map(15, 15, 2.0f);
    for (int y = 0; y < 15; ++y) {
      for (int x = 8; x < 15; ++x) g.at(x, y) = 0.9f, d.at(x, y) = 7.0f;
    }
    const DisparityMap out = refine_filters(d, g);
    for (int y = 0; y < 15; ++y) {
      CHECK(out.at(7, y) == doctest::Approx(2.0f));
      CHECK(out.at(8, y) == doctest::Approx(7.0f));
    }
  }
}

TEST_CASE("consistency labels") {
  const DisparityRange range{0, 10};
  SUBCASE("agreeing neighbour makes pixels correct") {
    const DisparityMap r = constant_map(30, 1, 3.0f), n = constant_map(30, 1, 3.5f);
    const ConsistencyLabels l = consistency_label(r, {&n, 1}, {nullptr, 2}, range);
    CHECK(l.at(5, 0) == std::uint8_t(Consistency::kCorrect));
  }
  SUBCASE("some other disparity would agree: mismatch") {
    DisparityMap r = constant_map(30, 1, 0.0f), n = constant_map(30, 1, 0.0f);
    r.at(5, 0) = 5.0f;
    n.at(10, 0) = 9.0f;
    n.at(12, 0) = 7.0f;
    const ConsistencyLabels l = consistency_label(r, {&n, 1}, {nullptr, 2}, range);
    CHECK(l.at(5, 0) == std::uint8_t(Consistency::kMismatch));
  }
  SUBCASE("nothing agrees: occlusion") {
    DisparityMap r = constant_map(30, 1, 5.0f), n = constant_map(30, 1, 20.0f);
    const ConsistencyLabels l = consistency_label(r, {&n, 1}, {nullptr, 2}, range);
    CHECK(l.at(5, 0) == std::uint8_t(Consistency::kOcclusion));
  }
  SUBCASE("margin band is occlusion regardless of agreement") {
    const DisparityMap r = constant_map(30, 1, 2.0f), n = constant_map(30, 1, 2.0f);
    const ConsistencyLabels l = consistency_label(r, {&n, 1}, {nullptr, 2}, range, 10);
    for (int x = 20; x < 30; ++x) CHECK(l.at(x, 0) == std::uint8_t(Consistency::kOcclusion));
    CHECK(l.at(19, 0) == std::uint8_t(Consistency::kCorrect));
    const ConsistencyLabels lm = consistency_label(r, {&n, -1}, {nullptr, -2}, range, 10);
    for (int x = 0; x < 10; ++x) CHECK(lm.at(x, 0) == std::uint8_t(Consistency::kOcclusion));
  }
}

TEST_CASE("occlusion fill never modifies correct pixels and leaves no holes") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> lab(0, 2);
  std::uniform_real_distribution<float> val(0.0f, 8.0f);
  DisparityMap r = constant_map(40, 12, 0.0f), n = constant_map(40, 12, 3.0f);
  ConsistencyLabels labels(40, 12, 1);
  for (int y = 0; y < 12; ++y) {
    for (int x = 0; x < 40; ++x) {
      r.at(x, y) = val(rng);
      labels.at(x, y) = static_cast<std::uint8_t>(lab(rng));
    }
  }
  for (int x = 0; x < 40; ++x) labels.at(x, 4) = std::uint8_t(Consistency::kOcclusion);
  const DisparityMap out = occlusion_fill(r, labels, {&n, 1}, {nullptr, 2}, {0, 8});
  for (int y = 0; y < 12; ++y) {
    for (int x = 0; x < 40; ++x) {
      CHECK_FALSE(is_hole(out.at(x, y)));
      if (labels.at(x, y) == std::uint8_t(Consistency::kCorrect)) CHECK(out.at(x, y) == r.at(x, y));
    }
  }
}

TEST_CASE("occlusion search recovers the background disparity from the neighbour") {
  // Neighbour has background d = 2 everywhere; reference pixel 10 is occluded.
  DisparityMap r = constant_map(30, 1, 2.0f), n = constant_map(30, 1, 2.0f);
  ConsistencyLabels labels(30, 1, 1, std::uint8_t(Consistency::kCorrect));
  r.at(10, 0) = kHole;
  labels.at(10, 0) = std::uint8_t(Consistency::kOcclusion);
  FillReport rep;
  const DisparityMap out = occlusion_fill(r, labels, {&n, 1}, {nullptr, 2}, {0, 8}, {}, &rep);
  CHECK(out.at(10, 0) == 2.0f);
  CHECK(rep.searched == 1);
}

TEST_CASE("mismatches take the median of 16 rays") {
  DisparityMap r = constant_map(21, 21, 4.0f);
  ConsistencyLabels labels(21, 21, 1, std::uint8_t(Consistency::kCorrect));
  labels.at(10, 10) = std::uint8_t(Consistency::kMismatch);
  r.at(10, 10) = 100.0f;
  const DisparityMap out = occlusion_fill(r, labels, {&r, 1}, {nullptr, 2}, {0, 8});
  CHECK(out.at(10, 10) == 4.0f);
}

TEST_CASE("stereo errors") {
  std::vector<ViewImage> two(2, testing::random_view(20, 10, 1, 1));
  const LightField lf(testing::calibration(2, 1, 0, 4), two);
  try {
    lf_disparity(lf);
    FAIL("expected GridTooSmall");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kGridTooSmall);
  }
  try {
    matching_cost(two[0], two[1], {3, 3});
    FAIL("expected DegenerateRange");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDegenerateRange);
  }
}

TEST_CASE("light-field stereo on a plane is accurate and deterministic") {
  const synth::SceneData data = synth::render_scene(testing::plane_scene(64, 40, 3, 3, 3.0, 0.0, 6.0));
  const auto a = lf_disparity(data.lightfield);
  const auto b = lf_disparity(data.lightfield);
  REQUIRE(a.size() == 9);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::memcmp(a[i].disp.data().data(), b[i].disp.data().data(), a[i].disp.data().size() * 4) == 0);
    long good = 0;
    for (float v : a[i].disp.data()) good += std::abs(v - 3.0f) <= 1.0f;
    CHECK(double(good) / double(a[i].disp.data().size()) >= 0.99);
  }
}

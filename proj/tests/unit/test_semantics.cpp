#include <doctest.h>

#include <cmath>
#include <random>

#include "sstlf/semantics.hpp"
#include "support.hpp"

using namespace sstlf;

namespace {

LabelProbabilityVolume volume_from(int w, int h, int c, const std::vector<std::vector<float>>& dists) {
  std::vector<float> flat;
  for (const auto& d : dists) flat.insert(flat.end(), d.begin(), d.end());
  return LabelProbabilityVolume(w, h, c, flat);
}

std::vector<float> random_distribution(std::mt19937_64& rng, int c) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> raw(static_cast<std::size_t>(c));
  double sum = 0;
  for (double& v : raw) sum += (v = e(rng));
  std::vector<float> out;
  for (double v : raw) out.push_back(static_cast<float>(v / sum));
  return out;
}

// Oracle: brute-force over a dense threshold grid plus every observed value.
double brute_force_best(const std::vector<double>& h, const std::vector<int>& pred, const std::vector<int>& gt,
                        double m, double ln_c) {
  std::vector<double> candidates = h;
  candidates.push_back(ln_c);
  for (int i = 1; i <= 200; ++i) candidates.push_back(ln_c * i / 200.0);
  long fg = 0;
  for (int g : gt) fg += g != 0;
  double best = 0;
  for (double eps : candidates) {
    if (!(eps > 0)) continue;
    long tp = 0, fp = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      if (!(h[i] < eps) || pred[i] == 0) continue;
      (pred[i] == gt[i] ? tp : fp)++;
    }
    const double acc = tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0;
    best = std::max(best, std::pow(acc, m) * double(tp) / double(fg));
  }
  return best;
}

}  // namespace

TEST_CASE("entropy of reference distributions") {
  const std::vector<float> one_hot{0, 1, 0, 0};
  const std::vector<float> uniform{0.25f, 0.25f, 0.25f, 0.25f};
  const std::vector<float> half{0.5f, 0.5f};
  CHECK(entropy(one_hot) == 0.0);
  CHECK(entropy(uniform) == doctest::Approx(std::log(4.0)).epsilon(1e-9));
  CHECK(entropy(half) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  // Hand-computed: -(0.7 ln 0.7 + 0.2 ln 0.2 + 0.1 ln 0.1).
  const std::vector<float> p{0.7f, 0.2f, 0.1f};
  const double expect = -(0.7 * std::log(0.7) + 0.2 * std::log(0.2) + 0.1 * std::log(0.1));
  CHECK(entropy(p) == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("entropy stays within [0, ln C] on random distributions") {
  std::mt19937_64 rng(11);
  for (int c : {2, 3, 5, 9}) {
    for (int i = 0; i < 2000; ++i) {
      const auto p = random_distribution(rng, c);
      const double h = entropy(p);
      CHECK(h >= 0.0);
      CHECK(h <= std::log(double(c)));
    }
  }
}

TEST_CASE("MAP labels take the argmax with ties to the lowest index") {
  const auto vol = volume_from(3, 1, 3, {{0.1f, 0.7f, 0.2f}, {0.4f, 0.2f, 0.4f}, {0.2f, 0.2f, 0.6f}});
  const LabelMap m = map_labels(vol);
  CHECK(m.at(0, 0) == 1);
  CHECK(m.at(1, 0) == 0);
  CHECK(m.at(2, 0) == 2);
}

TEST_CASE("volume rejects distributions that do not sum to one") {
  CHECK_THROWS_AS(LabelProbabilityVolume(1, 1, 2, {0.6f, 0.6f}), Error);
  CHECK_THROWS_AS(LabelProbabilityVolume(1, 1, 2, {1.2f, -0.2f}), Error);
  CHECK_THROWS_AS(LabelProbabilityVolume(2, 1, 2, {0.5f, 0.5f}), Error);
}

TEST_CASE("score combines accuracy and coverage with exponent m") {
  // 20 GT foreground pixels, 10 confident predictions with 9 correct: Acc 0.9, Cvg 9/20 = 0.45.
  Image<double> h(30, 1, 1, 0.1);
  LabelMap pred(30, 1, 1, 0), gt(30, 1, 1, 0);
  for (int x = 0; x < 20; ++x) gt.at(x, 0) = 1;
  for (int x = 0; x < 10; ++x) pred.at(x, 0) = 1;
  pred.at(0, 0) = 2;
  for (int x = 10; x < 30; ++x) h.at(x, 0) = 1.0;
  const ThresholdScore s = evaluate_threshold(h, pred, gt, 0.5, 4.0);
  CHECK(s.accuracy == doctest::Approx(0.9));
  CHECK(s.coverage == doctest::Approx(0.45));
  CHECK(s.score == doctest::Approx(std::pow(0.9, 4) * 0.45));
  // Acc 0.9, Cvg 0.5 gives 0.32805.
  CHECK(std::pow(0.9, 4) * 0.5 == doctest::Approx(0.32805).epsilon(1e-12));
}

TEST_CASE("perfect prediction scores 1 at the full threshold") {
  std::vector<std::vector<float>> d;
  for (int i = 0; i < 12; ++i) {
    std::vector<float> p(3, 0.0f);
    p[static_cast<std::size_t>(i % 3)] = 1.0f;
    d.push_back(p);
  }
  const auto vol = volume_from(4, 3, 3, d);
  const LabelMap labels = map_labels(vol);
  const ThresholdScore s = score_threshold(vol, labels, labels);
  CHECK(s.score == doctest::Approx(1.0));
  CHECK(s.epsilon_h == doctest::Approx(std::log(3.0)));
}

TEST_CASE("threshold sweep matches a brute-force oracle") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 23, hgt = 17, c = 4;
    std::vector<float> flat;
    LabelMap gt(w, hgt, 1);
    std::uniform_int_distribution<int> label(0, c - 1);
    std::uniform_real_distribution<double> sharp(0.5, 8.0);
    for (int i = 0; i < w * hgt; ++i) {
      const int g = label(rng);
      gt.data()[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(g);
      // Sharper distributions are more often correct.
      std::vector<double> logits(c);
      for (double& l : logits) l = std::normal_distribution<double>(0, 1)(rng);
      logits[static_cast<std::size_t>(g)] += sharp(rng) * 0.5;
      double sum = 0;
      for (double& l : logits) sum += (l = std::exp(l));
      for (double l : logits) flat.push_back(static_cast<float>(l / sum));
    }
    const LabelProbabilityVolume vol(w, hgt, c, flat);
    const LabelMap pred = map_labels(vol);
    const Image<double> hm = entropy_map(vol);
    std::vector<int> pv, gv;
    for (auto v : pred.data()) pv.push_back(v);
    for (auto v : gt.data()) gv.push_back(v);
    const ThresholdScore s = score_threshold(vol, pred, gt, 4.0);
    CHECK(s.score == doctest::Approx(brute_force_best(hm.data(), pv, gv, 4.0, std::log(double(c)))).epsilon(1e-12));
    const ThresholdScore re = evaluate_threshold(hm, pred, gt, s.epsilon_h, 4.0);
    CHECK(re.score == doctest::Approx(s.score).epsilon(1e-12));
  }
}

TEST_CASE("ground truth without foreground raises NoForegroundPixels") {
  const auto vol = volume_from(2, 1, 2, {{0.9f, 0.1f}, {0.2f, 0.8f}});
  const LabelMap gt(2, 1, 1, 0);
  try {
    score_threshold(vol, map_labels(vol), gt);
    FAIL("expected NoForegroundPixels");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNoForegroundPixels);
  }
}

TEST_CASE("confidence filter keeps pixels strictly below the threshold") {
  Image<double> h(4, 1, 1);
  h.at(0, 0) = 0.0;
  h.at(1, 0) = 0.3;
  h.at(2, 0) = 0.5;
  h.at(3, 0) = 0.9;
  const ConfidenceMask m = hcsm_filter(h, 0.5);
  CHECK(m.confident.at(0, 0) == 1);
  CHECK(m.confident.at(1, 0) == 1);
  CHECK(m.confident.at(2, 0) == 0);
  CHECK(m.confident.at(3, 0) == 0);
  CHECK(m.coverage() == doctest::Approx(0.5));
  LabelMap labels(4, 1, 1, 2);
  const LabelMap out = apply_confidence(labels, m);
  CHECK(out.at(0, 0) == 2);
  CHECK(out.at(2, 0) == kUnlabeled);
  CHECK_THROWS_AS(hcsm_filter(h, 0.0), Error);
}

TEST_CASE("default score exponent is 4") { CHECK(kDefaultScoreExponent == 4.0); }

TEST_CASE("palette, label maps and probability volumes round trip") {
  const fs::path dir = testing::scratch("sem_io");
  const Palette pal = Palette::with_names({"background", "wall", "ground"});
  CHECK(pal.ground_label() == 2);
  CHECK(pal.find("wall") == 1);
  CHECK_FALSE(pal.find("sky").has_value());
  save_palette(dir / "palette.json", pal);
  const Palette back = load_palette(dir / "palette.json");
  CHECK(back.names == pal.names);

  LabelMap labels(5, 4, 1, 1);
  labels.at(2, 2) = kUnlabeled;
  labels.at(0, 0) = 2;
  write_label_map(dir / "l.png", labels, pal);
  CHECK(read_label_map(dir / "l.png") == labels);

  std::mt19937_64 rng(3);
  std::vector<float> flat;
  for (int i = 0; i < 20; ++i) {
    const auto p = random_distribution(rng, 3);
    flat.insert(flat.end(), p.begin(), p.end());
  }
  const LabelProbabilityVolume vol(5, 4, 3, flat);
  save_probability_volume(dir, 1, 0, vol);
  save_class_sidecar(dir, pal.names);
  CHECK(load_class_sidecar(dir) == pal.names);
  CHECK(load_probability_volume(dir, 1, 0, 3).data() == vol.data());
}

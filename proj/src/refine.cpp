#include "sstlf/refine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "sstlf/parallel.hpp"

namespace sstlf {

double LabelGaussian::density(double d) const noexcept {
  const double z = (d - mean) / sigma;
  return std::exp(-0.5 * z * z);
}

const LabelGaussian* LabelDepthModel::find(int label) const noexcept {
  if (label < 0 || label >= static_cast<int>(labels.size())) return nullptr;
  const LabelGaussian& g = labels[static_cast<std::size_t>(label)];
  return g.valid ? &g : nullptr;
}

namespace {

void check_raster(const Image<std::uint8_t>& a, const LabelMap& b, const DisparityMap& d) {
  if (!a.same_size(b) || !a.same_size(d.disp)) {
    throw Error(ErrorKind::kDimensionMismatch, "confidence, labels and disparity must share a raster");
  }
}

}  // namespace

LabelDepthModel fit_models(const Image<std::uint8_t>& confident, const LabelMap& labels, const DisparityMap& dmap,
                           const RefineParams& params) {
  check_raster(confident, labels, dmap);
  struct Acc {
    double sum = 0.0;
    double sq = 0.0;
    long n = 0;
  };
  std::vector<Acc> acc(256);
  for (std::size_t i = 0; i < labels.data().size(); ++i) {
    const std::uint8_t lab = labels.data()[i];
    const float d = dmap.disp.data()[i];
    if (!confident.data()[i] || lab == kBackground || lab == kUnlabeled || is_hole(d)) continue;
    Acc& a = acc[lab];
    a.sum += d;
    a.sq += static_cast<double>(d) * d;
    ++a.n;
  }
  LabelDepthModel model;
  model.labels.resize(256);
  for (std::size_t k = 0; k < acc.size(); ++k) {
    const Acc& a = acc[k];
    LabelGaussian& g = model.labels[k];
    g.count = a.n;
    if (a.n == 0) continue;
    g.mean = a.sum / static_cast<double>(a.n);
    const double var = std::max(0.0, a.sq / static_cast<double>(a.n) - g.mean * g.mean);
    g.sigma = std::max(std::sqrt(var), params.sigma_min);
    g.valid = a.n >= params.min_support;
  }
  return model;
}

DisparityAssignment assign_by_disparity(const LabelDepthModel& models, const DisparityMap& dmap,
                                        const Image<std::uint8_t>& confident, const LabelMap& labels, double eps_d) {
  check_raster(confident, labels, dmap);
  if (!(eps_d > 0.0)) throw Error(ErrorKind::kInvalidArgument, "eps_D must be positive");
  DisparityAssignment out{labels, {}};
  std::vector<std::uint8_t> matches;
  for (int y = 0; y < labels.height(); ++y) {
    for (int x = 0; x < labels.width(); ++x) {
      if (confident.at(x, y)) continue;
      out.labels.at(x, y) = kUnlabeled;
      const float d = dmap.at(x, y);
      if (is_hole(d)) continue;
      matches.clear();
      for (std::size_t k = 0; k < models.labels.size(); ++k) {
        const LabelGaussian& g = models.labels[k];
        if (g.valid && g.density(d) > eps_d) matches.push_back(static_cast<std::uint8_t>(k));
      }
      if (matches.size() == 1) out.labels.at(x, y) = matches.front();
      else if (matches.size() > 1) out.conflicts.push_back({x, y, matches});
    }
  }
  return out;
}

Image<float> compute_normals(const DisparityMap& dmap, int window, double gain) {
  if (window < 3 || window % 2 == 0) throw Error(ErrorKind::kInvalidArgument, "normal window must be odd and >= 3");
  const int w = dmap.width();
  const int h = dmap.height();
  const int r = window / 2;
  Image<float> normals(w, h, 3);
  parallel_rows(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      // Least squares d = a*du + b*dv + c over the window, centred coordinates.
      double suu = 0, svv = 0, suv = 0, su = 0, sv = 0, n = 0, sud = 0, svd = 0, sd = 0;
      for (int yy = std::max(0, y - r); yy <= std::min(h - 1, y + r); ++yy) {
        for (int xx = std::max(0, x - r); xx <= std::min(w - 1, x + r); ++xx) {
          const float d = dmap.at(xx, yy);
          if (is_hole(d)) continue;
          const double u = xx - x;
          const double v = yy - y;
          const double dd = gain * d;
          suu += u * u;
          svv += v * v;
          suv += u * v;
          su += u;
          sv += v;
          n += 1;
          sud += u * dd;
          svd += v * dd;
          sd += dd;
        }
      }
      double a = 0.0;
      double b = 0.0;
      if (n >= 3) {
        // Solve the 3x3 normal equations by Cramer's rule.
        const double m[3][3] = {{suu, suv, su}, {suv, svv, sv}, {su, sv, n}};
        const double rhs[3] = {sud, svd, sd};
        auto det3 = [](const double k[3][3]) {
          return k[0][0] * (k[1][1] * k[2][2] - k[1][2] * k[2][1]) - k[0][1] * (k[1][0] * k[2][2] - k[1][2] * k[2][0]) +
                 k[0][2] * (k[1][0] * k[2][1] - k[1][1] * k[2][0]);
        };
        const double det = det3(m);
        if (std::abs(det) > 1e-12) {
          double ma[3][3], mb[3][3];
          for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
              ma[i][j] = j == 0 ? rhs[i] : m[i][j];
              mb[i][j] = j == 1 ? rhs[i] : m[i][j];
            }
          }
          a = det3(ma) / det;
          b = det3(mb) / det;
        }
      }
      const double len = std::sqrt(a * a + b * b + 1.0);
      normals.at(x, y, 0) = static_cast<float>(-a / len);
      normals.at(x, y, 1) = static_cast<float>(-b / len);
      normals.at(x, y, 2) = static_cast<float>(1.0 / len);
    }
  });
  return normals;
}

namespace {

// Exact squared Euclidean distance transform (lower envelope of parabolas).
void edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double kInf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[static_cast<std::size_t>(q)] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s;
    while (true) {
      const int p = v[static_cast<std::size_t>(k)];
      s = ((f[static_cast<std::size_t>(q)] + q * q) - (f[static_cast<std::size_t>(p)] + p * p)) / (2.0 * (q - p));
      if (s <= z[static_cast<std::size_t>(k)] && k > 0) --k;
      else break;
    }
    if (s <= z[static_cast<std::size_t>(k)]) {
      v[static_cast<std::size_t>(k)] = q;
      z[static_cast<std::size_t>(k)] = -kInf;
    } else {
      ++k;
      v[static_cast<std::size_t>(k)] = q;
      z[static_cast<std::size_t>(k)] = s;
    }
    z[static_cast<std::size_t>(k + 1)] = kInf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), kInf);
    return;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(k + 1)] < q) ++k;
    const int p = v[static_cast<std::size_t>(k)];
    d[static_cast<std::size_t>(q)] = (q - p) * (q - p) + f[static_cast<std::size_t>(p)];
  }
}

Image<double> squared_distance_to(const Image<std::uint8_t>& region) {
  const int w = region.width();
  const int h = region.height();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  Image<double> dist(w, h, 1, kInf);
  {
    std::vector<double> f(static_cast<std::size_t>(h)), d(static_cast<std::size_t>(h)), z(static_cast<std::size_t>(h) + 1);
    std::vector<int> v(static_cast<std::size_t>(h));
    for (int x = 0; x < w; ++x) {
      for (int y = 0; y < h; ++y) f[static_cast<std::size_t>(y)] = region.at(x, y) ? 0.0 : kInf;
      edt_1d(f, d, v, z);
      for (int y = 0; y < h; ++y) dist.at(x, y) = d[static_cast<std::size_t>(y)];
    }
  }
  std::vector<double> f(static_cast<std::size_t>(w)), d(static_cast<std::size_t>(w)), z(static_cast<std::size_t>(w) + 1);
  std::vector<int> v(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[static_cast<std::size_t>(x)] = dist.at(x, y);
    edt_1d(f, d, v, z);
    for (int x = 0; x < w; ++x) dist.at(x, y) = d[static_cast<std::size_t>(x)];
  }
  return dist;
}

struct Point {
  long x;
  long y;
};

// Andrew's monotone chain; the farthest region pixel from any query is a hull vertex.
std::vector<Point> convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  if (pts.size() < 3) return pts;
  auto cross = [](const Point& o, const Point& a, const Point& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
  };
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const Point& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

struct RegionStats {
  Image<double> min_dist2;
  std::vector<Point> hull;
  std::array<double, 3> normal_sum{0.0, 0.0, 0.0};
  long count = 0;

  double max_dist2(int x, int y) const {
    double best = 0.0;
    for (const Point& p : hull) {
      const double dx = static_cast<double>(p.x - x);
      const double dy = static_cast<double>(p.y - y);
      best = std::max(best, dx * dx + dy * dy);
    }
    return best;
  }
};

}  // namespace

LabelMap resolve_conflicts(const DisparityAssignment& assignment, const Image<std::uint8_t>& confident,
                           const LabelMap& confident_labels, const Image<float>& normals, const DisparityMap& dmap,
                           const LabelDepthModel& models, const RefineParams& params,
                           std::vector<ConflictDecision>* decisions) {
  check_raster(confident, confident_labels, dmap);
  if (!normals.same_size(dmap.disp) || normals.channels() != 3) {
    throw Error(ErrorKind::kDimensionMismatch, "normals must be a 3-channel map matching the disparity");
  }
  if (params.p_n < 0.0 || params.p_d < 0.0) throw Error(ErrorKind::kInvalidArgument, "p_n and p_d must be >= 0");

  // Region statistics for every label that appears as a candidate.
  std::map<int, RegionStats> regions;
  for (const ConflictPixel& c : assignment.conflicts) {
    for (std::uint8_t lab : c.candidates) regions.try_emplace(lab);
  }
  const int w = dmap.width();
  const int h = dmap.height();
  for (auto& [lab, stats] : regions) {
    Image<std::uint8_t> mask(w, h, 1);
    std::vector<Point> pts;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!confident.at(x, y) || confident_labels.at(x, y) != lab) continue;
        mask.at(x, y) = 1;
        pts.push_back({x, y});
        for (int c = 0; c < 3; ++c) stats.normal_sum[static_cast<std::size_t>(c)] += normals.at(x, y, c);
      }
    }
    if (pts.empty()) throw Error(ErrorKind::kEmptyRegion, "label " + std::to_string(lab) + " has no confident region");
    stats.count = static_cast<long>(pts.size());
    stats.min_dist2 = squared_distance_to(mask);
    stats.hull = convex_hull(std::move(pts));
  }

  LabelMap out = assignment.labels;
  std::vector<ConflictDecision> local(assignment.conflicts.size());
  tbb::parallel_for(std::size_t{0}, assignment.conflicts.size(), [&](std::size_t i) {
    const ConflictPixel& c = assignment.conflicts[i];
    const bool gate = params.use_normals && params.ground_label &&
                      std::find(c.candidates.begin(), c.candidates.end(), *params.ground_label) != c.candidates.end();
    const double d = dmap.at(c.x, c.y);
    ConflictDecision best;
    double best_density = -1.0;
    bool have = false;
    for (std::uint8_t lab : c.candidates) {
      const RegionStats& reg = regions.at(lab);
      const double max2 = reg.max_dist2(c.x, c.y);
      const double e_d = max2 > 0.0 ? reg.min_dist2.at(c.x, c.y) / max2 : 0.0;
      double e_n = 0.0;
      if (gate) {
        double dot = 0.0;
        for (int k = 0; k < 3; ++k) dot += normals.at(c.x, c.y, k) * reg.normal_sum[static_cast<std::size_t>(k)];
        const double mean_cos = std::max(0.0, dot / static_cast<double>(reg.count));
        e_n = mean_cos / (mean_cos + params.tau);
      }
      const double energy = params.p_d * e_d - (gate ? params.p_n * e_n : 0.0);
      const LabelGaussian* g = models.find(lab);
      const double density = g ? g->density(d) : 0.0;
      constexpr double kTie = 1e-12;
      const bool better = !have || energy < best.energy - kTie ||
                          (std::abs(energy - best.energy) <= kTie && density > best_density);
      if (better) {
        best = {c.x, c.y, lab, energy, e_n, e_d, gate};
        best_density = density;
        have = true;
      }
    }
    local[i] = best;
  });
  for (const ConflictDecision& dec : local) out.at(dec.x, dec.y) = dec.label;
  if (decisions) *decisions = std::move(local);
  return out;
}

Image<std::uint8_t> confident_from_labels(const LabelMap& hcsm_labels) {
  Image<std::uint8_t> out(hcsm_labels.width(), hcsm_labels.height(), 1);
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] = hcsm_labels.data()[i] != kUnlabeled ? 1 : 0;
  return out;
}

LabelMap refine_labels(const LabelMap& hcsm_labels, const DisparityMap& dmap, const RefineParams& params) {
  const Image<std::uint8_t> confident = confident_from_labels(hcsm_labels);
  const LabelDepthModel models = fit_models(confident, hcsm_labels, dmap, params);
  const DisparityAssignment assignment = assign_by_disparity(models, dmap, confident, hcsm_labels, params.eps_d);
  if (assignment.conflicts.empty()) return assignment.labels;
  const Image<float> normals = compute_normals(dmap, params.normal_window, params.normal_gain);
  return resolve_conflicts(assignment, confident, hcsm_labels, normals, dmap, models, params);
}

}  // namespace sstlf

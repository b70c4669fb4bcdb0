#include "sstlf/stereo.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>

#include "sstlf/parallel.hpp"

namespace sstlf {

CostVolume::CostVolume(int width, int height, DisparityRange range, float fill)
    : width_(width), height_(height), range_(range) {
  if (width < 1 || height < 1) throw Error(ErrorKind::kInvalidArgument, "cost volume dimensions must be positive");
  if (range.hi <= range.lo) throw Error(ErrorKind::kDegenerateRange, "disparity range needs hi > lo");
  cost_.assign(static_cast<std::size_t>(width) * height * range.levels(), fill);
}

DisparityRange range_for(const Calibration& calib) {
  DisparityRange r{static_cast<int>(std::floor(calib.disparity_min)), static_cast<int>(std::ceil(calib.disparity_max))};
  if (r.hi <= r.lo) r.hi = r.lo + 1;
  return r;
}

// Matching cost --------------------------------------------------------------

namespace {

std::vector<std::uint64_t> census_codes(const FloatMap& img, int win_h, int win_w) {
  const int w = img.width();
  const int h = img.height();
  const int ry = win_h / 2;
  const int rx = win_w / 2;
  std::vector<std::uint64_t> codes(img.pixel_count());
  parallel_rows(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const float center = img.at(x, y);
      std::uint64_t code = 0;
      for (int dy = -ry; dy <= ry; ++dy) {
        for (int dx = -rx; dx <= rx; ++dx) {
          if (dx == 0 && dy == 0) continue;
          code = (code << 1) | (img.clamped(x + dx, y + dy) < center ? 1u : 0u);
        }
      }
      codes[static_cast<std::size_t>(y) * w + x] = code;
    }
  });
  return codes;
}

// Box sum with clamp-to-edge borders over a (2r+1)^2 window.
Image<double> box_sum(const Image<double>& src, int r) {
  const int w = src.width();
  const int h = src.height();
  Image<double> horiz(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k) s += src.clamped(x + k, y);
      horiz.at(x, y) = s;
    }
  }
  Image<double> out(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k) s += horiz.clamped(x, y + k);
      out.at(x, y) = s;
    }
  }
  return out;
}

Image<double> to_double(const FloatMap& img) {
  Image<double> out(img.width(), img.height(), 1);
  std::copy(img.data().begin(), img.data().end(), out.data().begin());
  return out;
}

}  // namespace

CostVolume matching_cost(const ViewImage& ref, const ViewImage& other, DisparityRange range, int step,
                         const MatchParams& params) {
  if (!ref.same_shape(other)) throw Error(ErrorKind::kDimensionMismatch, "stereo pair differs in shape");
  if (range.hi <= range.lo) throw Error(ErrorKind::kDegenerateRange, "disparity range needs hi > lo");
  if (std::max(std::abs(range.lo), std::abs(range.hi)) >= ref.width()) {
    throw Error(ErrorKind::kDegenerateRange, "disparity range exceeds image width");
  }
  if (step != 1 && step != -1) throw Error(ErrorKind::kInvalidArgument, "step must be +1 or -1");
  if (params.census_height * params.census_width - 1 > 64 || params.census_height % 2 == 0 ||
      params.census_width % 2 == 0 || params.ncc_size % 2 == 0) {
    throw Error(ErrorKind::kInvalidArgument, "census/NCC windows must be odd and census <= 65 pixels");
  }

  const int w = ref.width();
  const int h = ref.height();
  const FloatMap gl = to_gray(ref);
  const FloatMap gr = to_gray(other);
  const auto code_l = census_codes(gl, params.census_height, params.census_width);
  const auto code_r = census_codes(gr, params.census_height, params.census_width);
  const double census_bits = params.census_height * params.census_width - 1;

  const int r = params.ncc_size / 2;
  const double n = static_cast<double>(params.ncc_size) * params.ncc_size;
  const Image<double> dl = to_double(gl);
  const Image<double> dr = to_double(gr);
  auto squared = [](const Image<double>& a) {
    Image<double> out = a;
    for (double& v : out.data()) v *= v;
    return out;
  };
  const Image<double> sum_l = box_sum(dl, r);
  const Image<double> sum_r = box_sum(dr, r);
  const Image<double> sq_l = box_sum(squared(dl), r);
  const Image<double> sq_r = box_sum(squared(dr), r);
  constexpr double kVarFloor = 1e-8;

  CostVolume cv(w, h, range, 1.0f);
  const double alpha = params.alpha;
  tbb::parallel_for(range.lo, range.hi + 1, [&](int d) {
    const int shift = step * d;
    // Window cross terms with the other image shifted by `shift`, clamping
    // the shifted coordinate like the per-image sums do.
    Image<double> prod(w, h, 1);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) prod.at(x, y) = dl.at(x, y) * dr.clamped(x + shift, y);
    }
    const Image<double> cross = box_sum(prod, r);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int xm = x + shift;
        if (xm < 0 || xm >= w) continue;
        const std::size_t il = static_cast<std::size_t>(y) * w + x;
        const std::size_t ir = static_cast<std::size_t>(y) * w + xm;
        const double census = std::popcount(code_l[il] ^ code_r[ir]) / census_bits;
        // Window statistics of the other image at xm: windows of the shifted
        // product and the plain sums agree away from the borders.
        const double mean_l = sum_l.at(x, y) / n;
        const double mean_r = sum_r.at(xm, y) / n;
        const double var_l = sq_l.at(x, y) / n - mean_l * mean_l;
        const double var_r = sq_r.at(xm, y) / n - mean_r * mean_r;
        double ncc_term = 0.5;
        if (var_l > kVarFloor && var_r > kVarFloor) {
          const double cov = cross.at(x, y) / n - mean_l * mean_r;
          const double ncc = std::clamp(cov / std::sqrt(var_l * var_r), -1.0, 1.0);
          ncc_term = (1.0 - ncc) / 2.0;
        }
        cv.at(x, y, d) = static_cast<float>(alpha * census + (1.0 - alpha) * ncc_term);
      }
    }
  });
  return cv;
}

// Cross-based aggregation ----------------------------------------------------

CrossArms compute_arms(const ViewImage& guide, const CrossParams& params) {
  const int w = guide.width();
  const int h = guide.height();
  const int ch = guide.channels();
  CrossArms arms{Image<std::uint16_t>(w, h, 1), Image<std::uint16_t>(w, h, 1), Image<std::uint16_t>(w, h, 1),
                 Image<std::uint16_t>(w, h, 1)};
  auto similar = [&](int x, int y, int qx, int qy) {
    float diff = 0.0f;
    for (int c = 0; c < ch; ++c) diff = std::max(diff, std::abs(guide.at(x, y, c) - guide.at(qx, qy, c)));
    return diff < params.tau_c;
  };
  auto extend = [&](int x, int y, int dx, int dy) {
    int len = 0;
    while (len < params.max_arm) {
      const int qx = x + (len + 1) * dx;
      const int qy = y + (len + 1) * dy;
      if (!guide.contains(qx, qy) || !similar(x, y, qx, qy)) break;
      ++len;
    }
    return static_cast<std::uint16_t>(len);
  };
  parallel_rows(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      arms.left.at(x, y) = extend(x, y, -1, 0);
      arms.right.at(x, y) = extend(x, y, 1, 0);
      arms.up.at(x, y) = extend(x, y, 0, -1);
      arms.down.at(x, y) = extend(x, y, 0, 1);
    }
  });
  return arms;
}

CostVolume aggregate_cross(const CostVolume& cv, const ViewImage& guide, const CrossParams& params) {
  if (guide.width() != cv.width() || guide.height() != cv.height()) {
    throw Error(ErrorKind::kDimensionMismatch, "guide and cost volume differ in size");
  }
  const CrossArms arms = compute_arms(guide, params);
  const int w = cv.width();
  const int h = cv.height();
  const int levels = cv.levels();
  CostVolume cur = cv;
  for (int iter = 0; iter < params.iterations; ++iter) {
    // Horizontal segment sums and pixel counts.
    std::vector<double> hsum(static_cast<std::size_t>(w) * h * levels);
    std::vector<int> hcount(static_cast<std::size_t>(w) * h);
    parallel_rows(0, h, [&](int y) {
      std::vector<double> prefix(static_cast<std::size_t>(w + 1) * levels, 0.0);
      for (int x = 0; x < w; ++x) {
        const float* c = cur.costs(x, y);
        for (int k = 0; k < levels; ++k) {
          prefix[static_cast<std::size_t>(x + 1) * levels + k] = prefix[static_cast<std::size_t>(x) * levels + k] + c[k];
        }
      }
      for (int x = 0; x < w; ++x) {
        const int x0 = x - arms.left.at(x, y);
        const int x1 = x + arms.right.at(x, y) + 1;
        const std::size_t base = (static_cast<std::size_t>(y) * w + x) * levels;
        for (int k = 0; k < levels; ++k) {
          hsum[base + k] = prefix[static_cast<std::size_t>(x1) * levels + k] - prefix[static_cast<std::size_t>(x0) * levels + k];
        }
        hcount[static_cast<std::size_t>(y) * w + x] = x1 - x0;
      }
    });
    CostVolume next(w, h, cv.range());
    parallel_rows(0, h, [&](int y) {
      std::vector<double> acc(static_cast<std::size_t>(levels));
      for (int x = 0; x < w; ++x) {
        std::fill(acc.begin(), acc.end(), 0.0);
        long count = 0;
        for (int yy = y - arms.up.at(x, y); yy <= y + arms.down.at(x, y); ++yy) {
          const std::size_t base = (static_cast<std::size_t>(yy) * w + x) * levels;
          for (int k = 0; k < levels; ++k) acc[static_cast<std::size_t>(k)] += hsum[base + k];
          count += hcount[static_cast<std::size_t>(yy) * w + x];
        }
        float* out = next.costs(x, y);
        for (int k = 0; k < levels; ++k) out[k] = static_cast<float>(acc[static_cast<std::size_t>(k)] / count);
      }
    });
    cur = std::move(next);
  }
  return cur;
}

// SGM -----------------------------------------------------------------------

DisparityMap winner_take_all(const CostVolume& cv) {
  DisparityMap out{FloatMap(cv.width(), cv.height(), 1), 0, 0};
  const int levels = cv.levels();
  parallel_rows(0, cv.height(), [&](int y) {
    for (int x = 0; x < cv.width(); ++x) {
      const float* c = cv.costs(x, y);
      const int best = static_cast<int>(std::min_element(c, c + levels) - c);
      out.at(x, y) = static_cast<float>(best + cv.range().lo);
    }
  });
  return out;
}

namespace {

// One step of the path recursion: L(p,d) = C(p,d) + min(L(q,d), L(q,d±1)+P1, min L(q)+P2) - min L(q).
void path_step(const float* cost, const double* prev, double prev_min, double* cur, int levels, double p1, double p2) {
  for (int k = 0; k < levels; ++k) {
    double best = prev[k];
    if (k > 0) best = std::min(best, prev[k - 1] + p1);
    if (k + 1 < levels) best = std::min(best, prev[k + 1] + p1);
    best = std::min(best, prev_min + p2);
    cur[k] = cost[k] + (best - prev_min);
  }
}

}  // namespace

CostVolume sgm_aggregate(const CostVolume& cv, const SgmParams& params) {
  if (params.p1 < 0.0 || params.p2 < params.p1) throw Error(ErrorKind::kInvalidArgument, "need P2 >= P1 >= 0");
  const int w = cv.width();
  const int h = cv.height();
  const int levels = cv.levels();
  const auto nl = static_cast<std::size_t>(levels);
  std::vector<double> total(static_cast<std::size_t>(w) * h * nl, 0.0);
  auto total_at = [&](int x, int y) { return total.data() + (static_cast<std::size_t>(y) * w + x) * nl; };

  // Horizontal passes: rows are independent.
  parallel_rows(0, h, [&](int y) {
    std::vector<double> prev(nl), cur(nl);
    for (int dir : {1, -1}) {
      const int x_start = dir > 0 ? 0 : w - 1;
      for (int i = 0; i < w; ++i) {
        const int x = x_start + dir * i;
        const float* c = cv.costs(x, y);
        if (i == 0) {
          for (std::size_t k = 0; k < nl; ++k) cur[k] = c[k];
        } else {
          const double pmin = *std::min_element(prev.begin(), prev.end());
          path_step(c, prev.data(), pmin, cur.data(), levels, params.p1, params.p2);
        }
        double* tot = total_at(x, y);
        for (std::size_t k = 0; k < nl; ++k) tot[k] += cur[k];
        std::swap(prev, cur);
      }
    }
  });

  // Vertical passes: columns are independent.
  tbb::parallel_for(0, w, [&](int x) {
    std::vector<double> prev(nl), cur(nl);
    for (int dir : {1, -1}) {
      const int y_start = dir > 0 ? 0 : h - 1;
      for (int i = 0; i < h; ++i) {
        const int y = y_start + dir * i;
        const float* c = cv.costs(x, y);
        if (i == 0) {
          for (std::size_t k = 0; k < nl; ++k) cur[k] = c[k];
        } else {
          const double pmin = *std::min_element(prev.begin(), prev.end());
          path_step(c, prev.data(), pmin, cur.data(), levels, params.p1, params.p2);
        }
        double* tot = total_at(x, y);
        for (std::size_t k = 0; k < nl; ++k) tot[k] += cur[k];
        std::swap(prev, cur);
      }
    }
  });

  CostVolume out(w, h, cv.range());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double* tot = total_at(x, y);
      float* o = out.costs(x, y);
      for (std::size_t k = 0; k < nl; ++k) o[k] = static_cast<float>(tot[k]);
    }
  }
  return out;
}

DisparityMap sgm(const CostVolume& cv, const SgmParams& params) { return winner_take_all(sgm_aggregate(cv, params)); }

double sgm_energy(const CostVolume& cv, const DisparityMap& dmap, const SgmParams& params) {
  const int w = cv.width();
  const int h = cv.height();
  const DisparityRange range = cv.range();
  auto level = [&](int x, int y) -> std::optional<int> {
    const float d = dmap.at(x, y);
    if (is_hole(d)) return std::nullopt;
    return std::clamp(static_cast<int>(std::lround(d)), range.lo, range.hi);
  };
  double energy = 0.0;
  constexpr std::array<std::array<int, 2>, 4> kNeighbors{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto dp = level(x, y);
      if (!dp) continue;
      energy += cv.at(x, y, *dp);
      for (const auto& n : kNeighbors) {
        const int qx = x + n[0];
        const int qy = y + n[1];
        if (qx < 0 || qy < 0 || qx >= w || qy >= h) continue;
        const auto dq = level(qx, qy);
        if (!dq) continue;
        const int jump = std::abs(*dp - *dq);
        if (jump == 1) energy += params.p1;
        else if (jump > 1) energy += params.p2;
      }
    }
  }
  return energy;
}

// Subpixel ------------------------------------------------------------------

double parabola_offset(double c_prev, double c_mid, double c_next) noexcept {
  const double denom = c_prev - 2.0 * c_mid + c_next;
  if (!(denom > 0.0)) return 0.0;
  return std::clamp((c_prev - c_next) / (2.0 * denom), -0.5, 0.5);
}

DisparityMap subpixel(const CostVolume& cv, const DisparityMap& dmap) {
  DisparityMap out = dmap;
  const DisparityRange range = cv.range();
  parallel_rows(0, cv.height(), [&](int y) {
    for (int x = 0; x < cv.width(); ++x) {
      const float d = dmap.at(x, y);
      if (is_hole(d)) continue;
      const int k = static_cast<int>(std::lround(d));
      if (k <= range.lo || k >= range.hi) continue;
      const double off = parabola_offset(cv.at(x, y, k - 1), cv.at(x, y, k), cv.at(x, y, k + 1));
      out.at(x, y) = static_cast<float>(k + off);
    }
  });
  return out;
}

// Median + bilateral -----------------------------------------------------------

DisparityMap refine_filters(const DisparityMap& dmap, const ViewImage& guide, const FilterParams& params) {
  if (!dmap.disp.same_size(guide)) throw Error(ErrorKind::kDimensionMismatch, "guide and disparity differ in size");
  if (params.median_size < 1 || params.median_size % 2 == 0) {
    throw Error(ErrorKind::kInvalidArgument, "median window must be odd");
  }
  const int w = dmap.width();
  const int h = dmap.height();
  const int mr = params.median_size / 2;

  DisparityMap med = dmap;
  parallel_rows(0, h, [&](int y) {
    std::vector<float> window;
    window.reserve(static_cast<std::size_t>(params.median_size) * params.median_size);
    for (int x = 0; x < w; ++x) {
      if (is_hole(dmap.at(x, y))) continue;
      window.clear();
      for (int yy = std::max(0, y - mr); yy <= std::min(h - 1, y + mr); ++yy) {
        for (int xx = std::max(0, x - mr); xx <= std::min(w - 1, x + mr); ++xx) {
          const float v = dmap.at(xx, yy);
          if (!is_hole(v)) window.push_back(v);
        }
      }
      auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
      std::nth_element(window.begin(), mid, window.end());
      med.at(x, y) = *mid;
    }
  });

  const int br = params.bilateral_radius;
  const int ch = guide.channels();
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * M_PI);
  DisparityMap out = med;
  parallel_rows(0, h, [&](int y) {
    for (int x = 0; x < w; ++x) {
      if (is_hole(med.at(x, y))) continue;
      double num = 0.0;
      double norm = 0.0;
      for (int yy = std::max(0, y - br); yy <= std::min(h - 1, y + br); ++yy) {
        for (int xx = std::max(0, x - br); xx <= std::min(w - 1, x + br); ++xx) {
          const float v = med.at(xx, yy);
          if (is_hole(v)) continue;
          const bool center = xx == x && yy == y;
          if (!center) {
            float diff = 0.0f;
            for (int c = 0; c < ch; ++c) diff = std::max(diff, std::abs(guide.at(x, y, c) - guide.at(xx, yy, c)));
            if (!(diff < params.eps_i)) continue;
          }
          const double dist2 = static_cast<double>((xx - x) * (xx - x) + (yy - y) * (yy - y));
          const double g = inv_sqrt_2pi * std::exp(-0.5 * dist2);
          num += g * v;
          norm += g;
        }
      }
      out.at(x, y) = static_cast<float>(num / norm);
    }
  });
  return out;
}

// Multi-view consistency -------------------------------------------------------

namespace {

bool agrees(const Neighbor& n, int x, int y, double d) {
  if (!n.map) return false;
  const long xn = std::lround(x + n.offset * d);
  if (xn < 0 || xn >= n.map->width()) return false;
  const float dn = n.map->at(static_cast<int>(xn), y);
  return !is_hole(dn) && std::abs(d - dn) <= 1.0;
}

}  // namespace

ConsistencyLabels consistency_label(const DisparityMap& ref, const Neighbor& near, const Neighbor& far,
                                    DisparityRange range, int margin) {
  if (!near.map) throw Error(ErrorKind::kMissingMaps, "consistency check needs a neighbour map");
  for (const Neighbor* n : {&near, &far}) {
    if (n->map && !n->map->disp.same_size(ref.disp)) throw Error(ErrorKind::kDimensionMismatch, "neighbour size differs");
  }
  const int w = ref.width();
  ConsistencyLabels labels(w, ref.height(), 1, static_cast<std::uint8_t>(Consistency::kOcclusion));
  parallel_rows(0, ref.height(), [&](int y) {
    for (int x = 0; x < w; ++x) {
      // Pixels whose match may leave the partner view cannot be verified.
      const bool in_margin = near.offset > 0 ? x >= w - margin : x < margin;
      if (in_margin) continue;
      const float d = ref.at(x, y);
      if (!is_hole(d) && (agrees(near, x, y, d) || agrees(far, x, y, d))) {
        labels.at(x, y) = static_cast<std::uint8_t>(Consistency::kCorrect);
        continue;
      }
      const long own = is_hole(d) ? std::numeric_limits<long>::min() : std::lround(d);
      for (int k = range.lo; k <= range.hi; ++k) {
        if (k == own) continue;
        if (agrees(near, x, y, k) || agrees(far, x, y, k)) {
          labels.at(x, y) = static_cast<std::uint8_t>(Consistency::kMismatch);
          break;
        }
      }
    }
  });
  return labels;
}

namespace {

bool is_correct(const ConsistencyLabels& labels, int x, int y) {
  return labels.at(x, y) == static_cast<std::uint8_t>(Consistency::kCorrect);
}

// Linear search in the neighbour for a trusted pixel whose disparity maps it onto x.
std::optional<float> search_neighbor(const Neighbor& n, int x, int y, DisparityRange range) {
  if (!n.map) return std::nullopt;
  const int w = n.map->width();
  const int dir = n.offset > 0 ? 1 : -1;
  const int first = x + n.offset * range.lo;
  const int last = x + n.offset * range.hi;
  for (int xp = first;; xp += dir) {
    if (xp >= 0 && xp < w) {
      const float dn = n.map->at(xp, y);
      const bool trusted = n.labels ? is_correct(*n.labels, xp, y) : !is_hole(dn);
      if (trusted && !is_hole(dn) && std::abs(xp - n.offset * dn - x) < 0.5) return dn;
    }
    if (xp == last) break;
  }
  return std::nullopt;
}

constexpr std::array<std::array<int, 2>, 16> kRays{{{1, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 1}, {-1, 2}, {-1, 1}, {-2, 1},
                                                    {-1, 0}, {-2, -1}, {-1, -1}, {-1, -2}, {0, -1}, {1, -2}, {1, -1}, {2, -1}}};

std::optional<float> ray_median(const DisparityMap& ref, const ConsistencyLabels& labels, int x, int y) {
  std::vector<float> found;
  for (const auto& ray : kRays) {
    for (int step = 1;; ++step) {
      const int qx = x + step * ray[0];
      const int qy = y + step * ray[1];
      if (!labels.contains(qx, qy)) break;
      if (is_correct(labels, qx, qy)) {
        found.push_back(ref.at(qx, qy));
        break;
      }
    }
  }
  if (found.empty()) return std::nullopt;
  std::sort(found.begin(), found.end());
  const std::size_t n = found.size();
  return n % 2 ? found[n / 2] : 0.5f * (found[n / 2 - 1] + found[n / 2]);
}

}  // namespace

DisparityMap occlusion_fill(const DisparityMap& ref, const ConsistencyLabels& labels, const Neighbor& near,
                            const Neighbor& far, DisparityRange range, const std::vector<Neighbor>& fallback,
                            FillReport* report) {
  if (!labels.same_size(ref.disp)) throw Error(ErrorKind::kDimensionMismatch, "labels and disparity differ in size");
  const int w = ref.width();
  const int h = ref.height();
  DisparityMap out = ref;
  FillReport local;

  std::vector<char> row_has_correct(static_cast<std::size_t>(h), 0);
  bool any_correct = false;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w && !row_has_correct[static_cast<std::size_t>(y)]; ++x) {
      if (is_correct(labels, x, y)) row_has_correct[static_cast<std::size_t>(y)] = 1;
    }
    any_correct = any_correct || row_has_correct[static_cast<std::size_t>(y)];
  }
  if (!any_correct) {
    if (report) *report = local;
    return out;
  }

  std::vector<const Neighbor*> order{&near, &far};
  for (const Neighbor& n : fallback) order.push_back(&n);

  std::vector<FillReport> per_row(static_cast<std::size_t>(h));
  parallel_rows(0, h, [&](int y) {
    FillReport& rep = per_row[static_cast<std::size_t>(y)];
    for (int x = 0; x < w; ++x) {
      const auto lab = static_cast<Consistency>(labels.at(x, y));
      if (lab == Consistency::kCorrect) continue;
      std::optional<float> value;
      if (lab == Consistency::kOcclusion) {
        for (const Neighbor* n : order) {
          if ((value = search_neighbor(*n, x, y, range))) break;
        }
        if (value) {
          ++rep.searched;
        } else {
          std::optional<float> left, right;
          for (int xx = x - 1; xx >= 0 && !left; --xx) {
            if (is_correct(labels, xx, y)) left = ref.at(xx, y);
          }
          for (int xx = x + 1; xx < w && !right; ++xx) {
            if (is_correct(labels, xx, y)) right = ref.at(xx, y);
          }
          if (left && right) value = std::min(*left, *right);
          else if (left) value = left;
          else value = right;
          if (value) ++rep.background;
        }
      } else {
        value = ray_median(ref, labels, x, y);
        if (value) ++rep.interpolated;
      }
      out.at(x, y) = value ? *value : kHole;
    }
  });
  for (const FillReport& r : per_row) {
    local.searched += r.searched;
    local.background += r.background;
    local.interpolated += r.interpolated;
  }

  // Rows without any correct pixel borrow from the nearest row that has one.
  for (int y = 0; y < h; ++y) {
    if (row_has_correct[static_cast<std::size_t>(y)]) continue;
    int src = -1;
    for (int dist = 1; src < 0; ++dist) {
      if (y - dist >= 0 && row_has_correct[static_cast<std::size_t>(y - dist)]) src = y - dist;
      else if (y + dist < h && row_has_correct[static_cast<std::size_t>(y + dist)]) src = y + dist;
    }
    for (int x = 0; x < w; ++x) {
      if (is_hole(out.at(x, y))) {
        out.at(x, y) = out.at(x, src);
        ++local.row_copied;
      }
    }
  }
  // Any survivors (rays that found nothing) take the row's background value.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!is_hole(out.at(x, y))) continue;
      for (int dist = 1; dist < w; ++dist) {
        if (x - dist >= 0 && !is_hole(out.at(x - dist, y))) {
          out.at(x, y) = out.at(x - dist, y);
          break;
        }
        if (x + dist < w && !is_hole(out.at(x + dist, y))) {
          out.at(x, y) = out.at(x + dist, y);
          break;
        }
      }
    }
  }
  if (report) *report = local;
  return out;
}

// Full light-field pipeline --------------------------------------------------------

DisparityMap pair_disparity(const ViewImage& ref, const ViewImage& other, int step, DisparityRange range,
                            const StereoParams& params) {
  const CostVolume raw = matching_cost(ref, other, range, step, params.match);
  const CostVolume agg = aggregate_cross(raw, ref, params.cross);
  const CostVolume path = sgm_aggregate(agg, params.sgm);
  const DisparityMap wta = winner_take_all(path);
  const DisparityMap sub = subpixel(path, wta);
  return refine_filters(sub, ref, params.filter);
}

std::vector<DisparityMap> lf_disparity(const LightField& lf, const StereoParams& params) {
  if (lf.cols() < 3) throw Error(ErrorKind::kGridTooSmall, "stereo needs at least 3 grid columns");
  const DisparityRange range = params.range.value_or(range_for(lf.calibration()));
  const int cols = lf.cols();
  const int rows = lf.rows();
  const auto index = [cols](int s, int t) { return static_cast<std::size_t>(t) * cols + s; };

  // Forward neighbours at +1/+2 where they exist, mirrored at the right end.
  auto forward_sign = [cols](int s) { return s + 2 < cols ? 1 : -1; };

  std::vector<DisparityMap> raw(static_cast<std::size_t>(cols) * rows);
  tbb::parallel_for(0, cols * rows, [&](int i) {
    const int s = i % cols;
    const int t = i / cols;
    // The view at s + 1 sees points shifted by +d.
    const int step = forward_sign(s);
    DisparityMap d = pair_disparity(lf.view(s, t), lf.view(s + step, t), step, range, params);
    d.s = s;
    d.t = t;
    raw[static_cast<std::size_t>(i)] = std::move(d);
  });

  // The second neighbour is absent on three-column grids for the middle view.
  auto in_grid = [cols](int s) { return s >= 0 && s < cols; };
  auto neighbors = [&](int s, int t, int sign) {
    const int far = s + 2 * sign;
    return std::array<Neighbor, 2>{Neighbor{&raw[index(s + sign, t)], sign, nullptr},
                                   Neighbor{in_grid(far) ? &raw[index(far, t)] : nullptr, 2 * sign, nullptr}};
  };
  std::vector<ConsistencyLabels> labels(raw.size());
  tbb::parallel_for(0, cols * rows, [&](int i) {
    const int s = i % cols;
    const int t = i / cols;
    const auto nb = neighbors(s, t, forward_sign(s));
    labels[static_cast<std::size_t>(i)] = consistency_label(raw[static_cast<std::size_t>(i)], nb[0], nb[1], range, range.hi);
  });

  std::vector<DisparityMap> filled(raw.size());
  tbb::parallel_for(0, cols * rows, [&](int i) {
    const int s = i % cols;
    const int t = i / cols;
    const int sign = forward_sign(s);
    auto nb = neighbors(s, t, sign);
    nb[0].labels = &labels[index(s + sign, t)];
    if (nb[1].map) nb[1].labels = &labels[index(s + 2 * sign, t)];
    std::vector<Neighbor> fallback;
    for (int k : {1, 2}) {
      const int so = s - sign * k;
      if (in_grid(so)) fallback.push_back(Neighbor{&raw[index(so, t)], -sign * k, &labels[index(so, t)]});
    }
    filled[static_cast<std::size_t>(i)] =
        occlusion_fill(raw[static_cast<std::size_t>(i)], labels[static_cast<std::size_t>(i)], nb[0], nb[1], range, fallback);
  });
  return filled;
}

}  // namespace sstlf

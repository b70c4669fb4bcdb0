#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "sstlf/lightfield.hpp"
#include "sstlf/synth.hpp"

namespace testing {

namespace fs = std::filesystem;

/// Fresh per-test scratch directory under $SSTLF_TMP (or the system temp dir).
inline fs::path scratch(const std::string& name) {
  const char* root = std::getenv("SSTLF_TMP");
  const fs::path dir = (root ? fs::path(root) : fs::temp_directory_path() / "sstlf_tests") / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline sstlf::Calibration calibration(int cols, int rows, double dmin, double dmax) {
  sstlf::Calibration c;
  c.grid_cols = cols;
  c.grid_rows = rows;
  c.disparity_min = dmin;
  c.disparity_max = dmax;
  return c;
}

/// Uniform random view with values in [0,1].
inline sstlf::ViewImage random_view(int w, int h, int ch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  sstlf::ViewImage img(w, h, ch);
  for (float& v : img.data()) v = u(rng);
  return img;
}

/// Single textured plane with the given disparity, no mask.
inline sstlf::synth::SceneSpec plane_scene(int w, int h, int cols, int rows, double d, double dmin, double dmax) {
  sstlf::synth::SceneSpec s;
  s.width = w;
  s.height = h;
  s.grid_cols = cols;
  s.grid_rows = rows;
  s.disparity_range = {dmin, dmax};
  s.classes = {"background", "plane"};
  sstlf::synth::Layer l;
  l.name = "plane";
  l.label = 1;
  l.disparity = d;
  l.texture.seed = 3;
  l.texture.scale = 4.0;
  s.layers.push_back(l);
  return s;
}

}  // namespace testing

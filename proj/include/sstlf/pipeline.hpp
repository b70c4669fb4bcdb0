#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sstlf/refine.hpp"
#include "sstlf/render.hpp"
#include "sstlf/semantics.hpp"
#include "sstlf/stereo.hpp"

namespace sstlf {

namespace fs = std::filesystem;

// Dataset directories ----------------------------------------------------------

/// Per-view files named <prefix><s>_<t><ext> inside dir.
fs::path view_file(const fs::path& dir, const std::string& prefix, int s, int t, const std::string& ext);

void save_disparity_dir(const fs::path& dir, const std::vector<DisparityMap>& maps, int cols);
std::vector<DisparityMap> load_disparity_dir(const fs::path& dir, int cols, int rows, const std::string& prefix = "disp_");

void save_label_dir(const fs::path& dir, const std::string& prefix, const std::vector<LabelMap>& maps, int cols,
                    const Palette& palette);
std::vector<LabelMap> load_label_dir(const fs::path& dir, int cols, int rows, const std::string& prefix);

/// A prepared light field with per-view disparity and label maps.
struct Dataset {
  std::string id;
  LightField lightfield;
  SceneMaps maps;
  Palette palette;
};

/// Loads lf/ plus disparity from disp/ (else gt/disp_*) and labels from
/// sem/ (else gt/sem_*). The palette comes from the label directory's
/// palette.json, else probs/classes.json.
Dataset load_dataset(const fs::path& dir);

// Hashing ----------------------------------------------------------------------

std::string sha256_hex(const std::vector<std::uint8_t>& bytes);
std::string sha256_file(const fs::path& path);
/// Digest over the sorted (relative path, file digest) pairs of a tree.
std::string sha256_tree(const fs::path& dir);

// Configuration ------------------------------------------------------------------

/// Flat `key = value` config with optional [section] headers, comments
/// starting with '#', quoted strings, numbers and booleans. Keys are
/// returned as "section.key".
std::map<std::string, std::string> parse_flat_toml(const std::string& text);

struct PipelineConfig {
  struct Stages {
    bool synth = true;
    bool stereo = true;
    bool semantics = true;
    bool refine = true;
    bool render = true;
  } stages;

  std::string synth_spec;  // relative paths resolve against base_dir
  StereoParams stereo;
  double m = kDefaultScoreExponent;
  std::optional<double> epsilon_h;  // unset: sweep against gt/sem_*
  RefineParams refine;
  std::string ground;  // class name overriding palette detection
  std::optional<double> d_f;  // unset: middle of the calibrated range
  WeightParams weights;
  std::string target;  // class name or index
  std::string aperture = "full";
  std::string mode = "sst";
  fs::path base_dir = ".";

  /// Applies one "section.key" = raw value. Throws BadConfig on unknown keys
  /// and unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Throws BadConfig when a value lies outside its documented range.
  void validate() const;
  nlohmann::json to_json() const;
};

/// Defaults, then the config file, then overrides (each "key=value").
PipelineConfig load_config(const std::optional<fs::path>& path, const std::vector<std::string>& overrides = {});

/// Error raised by run_pipeline; names the stage that failed.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(cause.kind(), "stage " + stage + ": " + cause.what()), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct StageRecord {
  std::string name;
  std::string status;  // ran | skipped | disabled
  std::string key;     // digest of inputs and parameters
  std::map<std::string, std::string> outputs;  // relative path -> digest
};

struct PipelineResult {
  std::vector<StageRecord> stages;
  fs::path manifest;
};

/// synth -> stereo -> semantics -> refine -> render inside workdir. Stages
/// whose input digest matches the previous manifest and whose outputs are
/// intact are skipped. Throws StageError.
PipelineResult run_pipeline(const PipelineConfig& config, const fs::path& workdir, std::ostream* log = nullptr);

/// Resolves a class name or numeric index against a palette.
std::optional<int> resolve_label(const Palette& palette, const std::string& name_or_index);

}  // namespace sstlf

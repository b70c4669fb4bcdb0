#include "sstlf/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>

#include <tbb/parallel_for.h>

#include "sstlf/synth.hpp"

namespace sstlf {

using nlohmann::json;

// Dataset directories ----------------------------------------------------------

fs::path view_file(const fs::path& dir, const std::string& prefix, int s, int t, const std::string& ext) {
  return dir / (prefix + std::to_string(s) + "_" + std::to_string(t) + ext);
}

void save_disparity_dir(const fs::path& dir, const std::vector<DisparityMap>& maps, int cols) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const int s = static_cast<int>(i) % cols;
    const int t = static_cast<int>(i) / cols;
    io::write_pfm(view_file(dir, "disp_", s, t, ".pfm"), maps[i].disp);
  }
}

std::vector<DisparityMap> load_disparity_dir(const fs::path& dir, int cols, int rows, const std::string& prefix) {
  std::vector<DisparityMap> out;
  for (int t = 0; t < rows; ++t) {
    for (int s = 0; s < cols; ++s) {
      const fs::path file = view_file(dir, prefix, s, t, ".pfm");
      if (!fs::exists(file)) throw Error(ErrorKind::kMissingMaps, "missing disparity map " + file.string());
      out.push_back({io::read_pfm(file), s, t});
    }
  }
  return out;
}

void save_label_dir(const fs::path& dir, const std::string& prefix, const std::vector<LabelMap>& maps, int cols,
                    const Palette& palette) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const int s = static_cast<int>(i) % cols;
    const int t = static_cast<int>(i) / cols;
    write_label_map(view_file(dir, prefix, s, t, ".png"), maps[i], palette);
  }
  save_palette(dir / "palette.json", palette);
}

std::vector<LabelMap> load_label_dir(const fs::path& dir, int cols, int rows, const std::string& prefix) {
  std::vector<LabelMap> out;
  for (int t = 0; t < rows; ++t) {
    for (int s = 0; s < cols; ++s) {
      const fs::path file = view_file(dir, prefix, s, t, ".png");
      if (!fs::exists(file)) throw Error(ErrorKind::kMissingMaps, "missing label map " + file.string());
      out.push_back(read_label_map(file));
    }
  }
  return out;
}

namespace {

Palette palette_for(const fs::path& root) {
  for (const fs::path& p : {root / "sem" / "palette.json", root / "gt" / "palette.json"}) {
    if (fs::exists(p)) return load_palette(p);
  }
  return Palette::with_names(load_class_sidecar(root / "probs"));
}

}  // namespace

Dataset load_dataset(const fs::path& dir) {
  LightField lf = load_lightfield(dir / "lf");
  const int cols = lf.cols();
  const int rows = lf.rows();
  SceneMaps maps;
  maps.disparity = fs::exists(dir / "disp") ? load_disparity_dir(dir / "disp", cols, rows)
                                            : load_disparity_dir(dir / "gt", cols, rows);
  maps.labels = fs::exists(dir / "sem") ? load_label_dir(dir / "sem", cols, rows, "sem_")
                                        : load_label_dir(dir / "gt", cols, rows, "sem_");
  check_scene_maps(lf, maps);
  return Dataset{dir.filename().string(), std::move(lf), std::move(maps), palette_for(dir)};
}

// Hashing ----------------------------------------------------------------------

namespace {

struct Sha256 {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx{EVP_MD_CTX_new(), &EVP_MD_CTX_free};

  Sha256() {
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error(ErrorKind::kIo, "sha256 init failed");
  }
  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx.get(), data, n); }
  void update(const std::string& s) { update(s.data(), s.size()); }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md, &len);
    static const char* kDigits = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
      out += kDigits[md[i] >> 4];
      out += kDigits[md[i] & 15];
    }
    return out;
  }
};

std::string sha256_string(const std::string& s) {
  Sha256 h;
  h.update(s);
  return h.hex();
}

std::vector<fs::path> sorted_files(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::exists(dir)) return files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), dir));
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  Sha256 h;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

std::string sha256_tree(const fs::path& dir) {
  Sha256 h;
  for (const fs::path& rel : sorted_files(dir)) {
    h.update(rel.generic_string());
    h.update("\n");
    h.update(sha256_file(dir / rel));
    h.update("\n");
  }
  return h.hex();
}

// Configuration ------------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_config(const std::string& msg) { throw Error(ErrorKind::kBadConfig, msg); }

std::string strip_comment(const std::string& line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote) {
      if (c == '\\' && quote == '"') ++i;
      else if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

std::string unquote(const std::string& raw, int line_no) {
  if (raw.empty()) bad_config("line " + std::to_string(line_no) + ": missing value");
  const char q = raw.front();
  if (q != '"' && q != '\'') return raw;
  if (raw.size() < 2 || raw.back() != q) bad_config("line " + std::to_string(line_no) + ": unterminated string");
  const std::string body = raw.substr(1, raw.size() - 2);
  if (q == '\'') return body;
  std::string out;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] != '\\' || i + 1 == body.size()) {
      out += body[i];
      continue;
    }
    switch (body[++i]) {
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      default: out += body[i];
    }
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_config(key + ": expected a number, got '" + v + "'");
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_config(key + ": expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  bad_config(key + ": expected true or false, got '" + v + "'");
}

}  // namespace

std::map<std::string, std::string> parse_flat_toml(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(strip_comment(line));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') bad_config("line " + std::to_string(line_no) + ": bad section header");
      section = trim(std::string_view(body).substr(1, body.size() - 2));
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) bad_config("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) bad_config("line " + std::to_string(line_no) + ": empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (out.count(full)) bad_config("line " + std::to_string(line_no) + ": duplicate key " + full);
    out[full] = unquote(trim(std::string_view(body).substr(eq + 1)), line_no);
  }
  return out;
}

void PipelineConfig::set(const std::string& key, const std::string& v) {
  const std::map<std::string, std::function<void()>> table = {
      {"stages.synth", [&] { stages.synth = to_bool(key, v); }},
      {"stages.stereo", [&] { stages.stereo = to_bool(key, v); }},
      {"stages.semantics", [&] { stages.semantics = to_bool(key, v); }},
      {"stages.refine", [&] { stages.refine = to_bool(key, v); }},
      {"stages.render", [&] { stages.render = to_bool(key, v); }},
      {"synth.spec", [&] { synth_spec = v; }},
      {"stereo.p1", [&] { stereo.sgm.p1 = to_double(key, v); }},
      {"stereo.p2", [&] { stereo.sgm.p2 = to_double(key, v); }},
      {"stereo.alpha", [&] { stereo.match.alpha = to_double(key, v); }},
      {"stereo.eps_i", [&] { stereo.filter.eps_i = to_double(key, v); }},
      {"stereo.tau_c", [&] { stereo.cross.tau_c = static_cast<float>(to_double(key, v)); }},
      {"stereo.max_arm", [&] { stereo.cross.max_arm = to_int(key, v); }},
      {"semantics.m", [&] { m = to_double(key, v); }},
      {"semantics.epsilon_h", [&] { epsilon_h = to_double(key, v); }},
      {"refine.eps_d", [&] { refine.eps_d = to_double(key, v); }},
      {"refine.p_n", [&] { refine.p_n = to_double(key, v); }},
      {"refine.p_d", [&] { refine.p_d = to_double(key, v); }},
      {"refine.tau", [&] { refine.tau = to_double(key, v); }},
      {"refine.min_support", [&] { refine.min_support = to_int(key, v); }},
      {"refine.normal_gain", [&] { refine.normal_gain = to_double(key, v); }},
      {"refine.use_normals", [&] { refine.use_normals = to_bool(key, v); }},
      {"refine.ground", [&] { ground = v; }},
      {"render.d_f", [&] { d_f = to_double(key, v); }},
      {"render.sigma_d", [&] { weights.sigma_d = to_double(key, v); }},
      {"render.sigma_bypass", [&] { weights.sigma_bypass = to_bool(key, v); }},
      {"render.c1", [&] { weights.c1 = to_double(key, v); }},
      {"render.c2", [&] { weights.c2 = to_double(key, v); }},
      {"render.suppress_factor", [&] { weights.suppress_factor = to_double(key, v); }},
      {"render.target", [&] { target = v; }},
      {"render.aperture", [&] { aperture = v; }},
      {"render.mode", [&] { mode = v; }},
  };
  const auto it = table.find(key);
  if (it == table.end()) bad_config("unknown key " + key);
  it->second();
}

void PipelineConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) bad_config(msg);
  };
  require(stereo.sgm.p1 > 0.0, "stereo.p1 must be > 0");
  require(stereo.sgm.p2 >= stereo.sgm.p1, "stereo.p2 must be >= stereo.p1");
  require(stereo.match.alpha >= 0.0 && stereo.match.alpha <= 1.0, "stereo.alpha must lie in [0,1]");
  require(stereo.filter.eps_i > 0.0, "stereo.eps_i must be > 0");
  require(stereo.cross.tau_c > 0.0f, "stereo.tau_c must be > 0");
  require(stereo.cross.max_arm >= 1, "stereo.max_arm must be >= 1");
  require(m > 0.0, "semantics.m must be > 0");
  require(!epsilon_h || *epsilon_h > 0.0, "semantics.epsilon_h must be > 0");
  require(refine.eps_d > 0.0 && refine.eps_d <= 1.0, "refine.eps_d must lie in (0,1]");
  require(refine.p_n >= 0.0 && refine.p_d >= 0.0, "refine.p_n and refine.p_d must be >= 0");
  require(refine.tau > 0.0, "refine.tau must be > 0");
  require(refine.min_support >= 1, "refine.min_support must be >= 1");
  require(mode == "sst" || mode == "regular", "render.mode must be sst or regular");
  try {
    weights.validate();
    ApertureMask::parse(aperture, 3, 3);
  } catch (const Error& e) {
    bad_config(e.what());
  }
}

json PipelineConfig::to_json() const {
  json j = {{"stages",
             {{"synth", stages.synth},
              {"stereo", stages.stereo},
              {"semantics", stages.semantics},
              {"refine", stages.refine},
              {"render", stages.render}}},
            {"synth", {{"spec", synth_spec}}},
            {"stereo",
             {{"p1", stereo.sgm.p1},
              {"p2", stereo.sgm.p2},
              {"alpha", stereo.match.alpha},
              {"eps_i", stereo.filter.eps_i},
              {"tau_c", stereo.cross.tau_c},
              {"max_arm", stereo.cross.max_arm}}},
            {"semantics", {{"m", m}, {"epsilon_h", epsilon_h ? json(*epsilon_h) : json(nullptr)}}},
            {"refine",
             {{"eps_d", refine.eps_d},
              {"p_n", refine.p_n},
              {"p_d", refine.p_d},
              {"tau", refine.tau},
              {"min_support", refine.min_support},
              {"normal_gain", refine.normal_gain},
              {"use_normals", refine.use_normals},
              {"ground", ground}}},
            {"render",
             {{"d_f", d_f ? json(*d_f) : json(nullptr)},
              {"sigma_d", weights.sigma_d},
              {"sigma_bypass", weights.sigma_bypass},
              {"c1", weights.c1},
              {"c2", weights.c2},
              {"suppress_factor", weights.suppress_factor},
              {"target", target},
              {"aperture", aperture},
              {"mode", mode}}}};
  return j;
}

PipelineConfig load_config(const std::optional<fs::path>& path, const std::vector<std::string>& overrides) {
  PipelineConfig cfg;
  if (path) {
    std::ifstream in(*path);
    if (!in) bad_config("cannot open config " + path->string());
    std::stringstream ss;
    ss << in.rdbuf();
    for (const auto& [k, v] : parse_flat_toml(ss.str())) cfg.set(k, v);
    cfg.base_dir = path->parent_path().empty() ? fs::path(".") : path->parent_path();
  }
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) bad_config("override '" + o + "' must be key=value");
    cfg.set(trim(std::string_view(o).substr(0, eq)), unquote(trim(std::string_view(o).substr(eq + 1)), 0));
  }
  cfg.validate();
  return cfg;
}

std::optional<int> resolve_label(const Palette& palette, const std::string& name_or_index) {
  if (auto idx = palette.find(name_or_index)) return idx;
  int idx = 0;
  const auto [ptr, ec] = std::from_chars(name_or_index.data(), name_or_index.data() + name_or_index.size(), idx);
  if (ec == std::errc() && ptr == name_or_index.data() + name_or_index.size() && idx >= 0 && idx < palette.size()) {
    return idx;
  }
  return std::nullopt;
}

// Pipeline -------------------------------------------------------------------------

namespace {

std::map<std::string, std::string> hash_outputs(const fs::path& workdir, const std::vector<std::string>& outputs) {
  std::map<std::string, std::string> out;
  for (const std::string& o : outputs) {
    const fs::path p = workdir / o;
    if (fs::is_directory(p)) {
      for (const fs::path& rel : sorted_files(p)) out[(fs::path(o) / rel).generic_string()] = sha256_file(p / rel);
    } else if (fs::exists(p)) {
      out[o] = sha256_file(p);
    }
  }
  return out;
}

bool outputs_intact(const fs::path& workdir, const json& entry) {
  if (!entry.contains("outputs") || entry["outputs"].empty()) return false;
  for (const auto& [rel, digest] : entry["outputs"].items()) {
    const fs::path p = workdir / rel;
    if (!fs::exists(p) || sha256_file(p) != digest.get<std::string>()) return false;
  }
  return true;
}

struct StageContext {
  const PipelineConfig& cfg;
  fs::path workdir;

  fs::path lf() const { return workdir / "lf"; }
  fs::path gt() const { return workdir / "gt"; }
  fs::path probs() const { return workdir / "probs"; }
  fs::path disp() const { return workdir / "disp"; }
  fs::path hcsm() const { return workdir / "hcsm"; }
  fs::path sem() const { return workdir / "sem"; }
};

void reset_dir(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
}

void stage_synth(const StageContext& ctx) {
  if (ctx.cfg.synth_spec.empty()) throw Error(ErrorKind::kBadConfig, "synth stage enabled but synth.spec is empty");
  const fs::path spec_path = fs::path(ctx.cfg.synth_spec).is_absolute() ? fs::path(ctx.cfg.synth_spec)
                                                                         : ctx.cfg.base_dir / ctx.cfg.synth_spec;
  const synth::SceneSpec spec = synth::load_scene(spec_path);
  const synth::SceneData data = synth::render_scene(spec);
  for (const fs::path& d : {ctx.lf(), ctx.gt(), ctx.probs()}) reset_dir(d);
  synth::write_dataset(ctx.workdir, spec, data);
}

void stage_stereo(const StageContext& ctx) {
  if (!fs::exists(ctx.lf())) throw Error(ErrorKind::kMissingView, "no light field in " + ctx.lf().string());
  const LightField lf = load_lightfield(ctx.lf());
  const std::vector<DisparityMap> maps = lf_disparity(lf, ctx.cfg.stereo);
  reset_dir(ctx.disp());
  save_disparity_dir(ctx.disp(), maps, lf.cols());
}

void stage_semantics(const StageContext& ctx) {
  if (!fs::exists(ctx.probs() / "classes.json")) {
    throw Error(ErrorKind::kMissingMaps, "no probability volumes in " + ctx.probs().string());
  }
  const Calibration calib = load_manifest(ctx.lf() / "manifest.json");
  const std::vector<std::string> classes = load_class_sidecar(ctx.probs());
  const Palette palette = palette_for(ctx.workdir);
  const int cols = calib.grid_cols;
  const auto n = static_cast<std::size_t>(cols) * calib.grid_rows;
  const int num_classes = static_cast<int>(classes.size());
  auto load = [&](std::size_t i) {
    return load_probability_volume(ctx.probs(), static_cast<int>(i) % cols, static_cast<int>(i) / cols, num_classes);
  };

  // The threshold comes from the one labelled (central) view and is shared by all views.
  ThresholdScore score;
  if (ctx.cfg.epsilon_h) {
    score.epsilon_h = *ctx.cfg.epsilon_h;
  } else {
    const int cs = (cols - 1) / 2;
    const int ct = (calib.grid_rows - 1) / 2;
    const fs::path gt = view_file(ctx.gt(), "sem_", cs, ct, ".png");
    if (!fs::exists(gt)) throw Error(ErrorKind::kMissingMaps, "epsilon_h unset and no ground truth " + gt.string());
    const LabelProbabilityVolume vol = load(static_cast<std::size_t>(ct) * cols + cs);
    score = score_threshold(vol, map_labels(vol), read_label_map(gt), ctx.cfg.m);
  }
  std::vector<LabelMap> hcsm(n);
  for (std::size_t i = 0; i < n; ++i) {
    const LabelProbabilityVolume vol = load(i);
    hcsm[i] = apply_confidence(map_labels(vol), hcsm_filter(vol, score.epsilon_h));
  }
  reset_dir(ctx.hcsm());
  save_label_dir(ctx.hcsm(), "hcsm_", hcsm, cols, palette);
  const json thresholds = {{"epsilon_h", score.epsilon_h},
                           {"accuracy", score.accuracy},
                           {"coverage", score.coverage},
                           {"score", score.score}};
  std::ofstream(ctx.hcsm() / "threshold.json") << thresholds.dump(2) << "\n";
}

RefineParams refine_params(const PipelineConfig& cfg, const Palette& palette) {
  RefineParams p = cfg.refine;
  if (!cfg.ground.empty()) {
    p.ground_label = resolve_label(palette, cfg.ground);
    if (!p.ground_label) throw Error(ErrorKind::kBadConfig, "ground label '" + cfg.ground + "' not in palette");
  } else {
    p.ground_label = palette.ground_label();
  }
  return p;
}

void stage_refine(const StageContext& ctx) {
  const Calibration calib = load_manifest(ctx.lf() / "manifest.json");
  const Palette palette = load_palette(ctx.hcsm() / "palette.json");
  const RefineParams params = refine_params(ctx.cfg, palette);
  const std::vector<LabelMap> hcsm = load_label_dir(ctx.hcsm(), calib.grid_cols, calib.grid_rows, "hcsm_");
  const std::vector<DisparityMap> disp = load_disparity_dir(ctx.disp(), calib.grid_cols, calib.grid_rows);
  std::vector<LabelMap> refined(hcsm.size());
  tbb::parallel_for(std::size_t{0}, hcsm.size(), [&](std::size_t i) { refined[i] = refine_labels(hcsm[i], disp[i], params); });
  reset_dir(ctx.sem());
  save_label_dir(ctx.sem(), "sem_", refined, calib.grid_cols, palette);
}

void stage_render(const StageContext& ctx) {
  const Dataset ds = load_dataset(ctx.workdir);
  const LightField& lf = ds.lightfield;
  const Calibration& calib = lf.calibration();
  const double d_f = ctx.cfg.d_f.value_or(0.5 * (calib.disparity_min + calib.disparity_max));
  const ApertureMask aperture = ApertureMask::parse(ctx.cfg.aperture, lf.cols(), lf.rows());
  RenderResult result;
  if (ctx.cfg.mode == "regular") {
    result = refocus(lf, RenderRequest{d_f, aperture});
  } else {
    WeightParams params = ctx.cfg.weights;
    if (!ctx.cfg.target.empty()) {
      params.target_label = resolve_label(ds.palette, ctx.cfg.target);
      if (!params.target_label) throw Error(ErrorKind::kBadConfig, "target '" + ctx.cfg.target + "' not in palette");
    }
    result = sst_render(lf, ds.maps, SSTRequest{d_f, aperture, params});
  }
  const fs::path out = ctx.workdir / "render";
  reset_dir(out);
  io::write_png(out / "render.png", result.image);
  io::write_pfm(out / "render.pfm", result.image);
  ViewImage mask(result.valid.width(), result.valid.height(), 1);
  for (std::size_t i = 0; i < mask.data().size(); ++i) mask.data()[i] = result.valid.data()[i] ? 1.0f : 0.0f;
  io::write_png(out / "render_mask.png", mask);
}

struct StageDef {
  std::string name;
  bool enabled;
  std::vector<std::string> inputs;   // workdir-relative trees hashed into the key
  std::vector<std::string> outputs;  // workdir-relative trees recorded in the manifest
  json params;
  std::function<void(const StageContext&)> run;
};

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, const fs::path& workdir, std::ostream* log) {
  cfg.validate();
  fs::create_directories(workdir);
  const StageContext ctx{cfg, workdir};
  const json cj = cfg.to_json();

  json synth_params = cj["synth"];
  if (cfg.stages.synth) {
    const fs::path spec_path = fs::path(cfg.synth_spec).is_absolute() ? fs::path(cfg.synth_spec)
                                                                      : cfg.base_dir / cfg.synth_spec;
    synth_params["spec_digest"] = fs::exists(spec_path) ? sha256_file(spec_path) : std::string("missing");
  }
  const std::vector<StageDef> stages = {
      {"synth", cfg.stages.synth, {}, {"lf", "gt", "probs", "scene.json"}, synth_params, stage_synth},
      {"stereo", cfg.stages.stereo, {"lf"}, {"disp"}, cj["stereo"], stage_stereo},
      {"semantics", cfg.stages.semantics, {"lf/manifest.json", "probs", "gt"}, {"hcsm"}, cj["semantics"],
       stage_semantics},
      {"refine", cfg.stages.refine, {"lf/manifest.json", "hcsm", "disp"}, {"sem"}, cj["refine"], stage_refine},
      {"render", cfg.stages.render, {"lf", "disp", "sem", "gt", "probs/classes.json"}, {"render"}, cj["render"],
       stage_render},
  };

  json previous = json::object();
  const fs::path manifest_path = workdir / "manifest.json";
  if (fs::exists(manifest_path)) {
    try {
      std::ifstream in(manifest_path);
      const json m = json::parse(in);
      for (const json& s : m.at("stages")) previous[s.at("name").get<std::string>()] = s;
    } catch (const json::exception&) {
      previous = json::object();
    }
  }

  PipelineResult result;
  result.manifest = manifest_path;
  json manifest_stages = json::array();
  for (const StageDef& st : stages) {
    StageRecord rec;
    rec.name = st.name;
    if (!st.enabled) {
      rec.status = "disabled";
      result.stages.push_back(rec);
      if (log) *log << "[" << st.name << "] disabled\n";
      continue;
    }
    try {
      json key_src = {{"stage", st.name}, {"params", st.params}, {"inputs", json::object()}};
      for (const std::string& in : st.inputs) {
        const fs::path p = workdir / in;
        key_src["inputs"][in] = fs::is_directory(p) ? sha256_tree(p) : fs::exists(p) ? sha256_file(p) : "missing";
      }
      rec.key = sha256_string(key_src.dump());
      const bool skip = previous.contains(st.name) && previous[st.name].value("key", "") == rec.key &&
                        outputs_intact(workdir, previous[st.name]);
      if (skip) {
        rec.status = "skipped";
        rec.outputs = previous[st.name]["outputs"].get<std::map<std::string, std::string>>();
      } else {
        st.run(ctx);
        rec.status = "ran";
        rec.outputs = hash_outputs(workdir, st.outputs);
      }
    } catch (const StageError&) {
      throw;
    } catch (const Error& e) {
      throw StageError(st.name, e);
    } catch (const std::exception& e) {
      throw StageError(st.name, Error(ErrorKind::kIo, e.what()));
    }
    if (log) *log << "[" << st.name << "] " << rec.status << "\n";
    manifest_stages.push_back({{"name", rec.name}, {"key", rec.key}, {"outputs", rec.outputs}});
    result.stages.push_back(std::move(rec));
    // Written after every stage so a later failure keeps earlier records.
    std::ofstream(manifest_path) << json{{"stages", manifest_stages}}.dump(2) << "\n";
  }
  std::ofstream(manifest_path) << json{{"stages", manifest_stages}}.dump(2) << "\n";
  return result;
}

}  // namespace sstlf

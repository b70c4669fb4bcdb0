// sstlf: command-line front end for every pipeline stage.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <regex>

#include <CLI11.hpp>

#include "sstlf/pipeline.hpp"
#include "sstlf/server.hpp"
#include "sstlf/synth.hpp"

namespace fs = std::filesystem;
using namespace sstlf;

namespace {

HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

std::pair<int, int> parse_view(const std::string& v) {
  const std::regex re(R"((\d+)[_,](\d+))");
  std::smatch m;
  if (!std::regex_match(v, m, re)) throw Error(ErrorKind::kInvalidArgument, "view must be <s>_<t>");
  return {std::stoi(m[1]), std::stoi(m[2])};
}

/// Per-view files <prefix><s>_<t><ext> present in dir, sorted by (t, s).
std::vector<std::pair<int, int>> list_views(const fs::path& dir, const std::string& prefix, const std::string& ext) {
  const std::regex re(prefix + R"((\d+)_(\d+))" + std::regex_replace(ext, std::regex(R"(\.)"), R"(\.)"));
  std::vector<std::pair<int, int>> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (std::regex_match(name, m, re)) out.emplace_back(std::stoi(m[1]), std::stoi(m[2]));
  }
  std::sort(out.begin(), out.end(), [](auto a, auto b) { return std::tie(a.second, a.first) < std::tie(b.second, b.first); });
  return out;
}

fs::path indexed_path(const fs::path& out, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_%03zu", i);
  return out.parent_path() / (out.stem().string() + buf + out.extension().string());
}

void write_mask(const fs::path& path, const Image<std::uint8_t>& valid) {
  ViewImage mask(valid.width(), valid.height(), 1);
  for (std::size_t i = 0; i < mask.data().size(); ++i) mask.data()[i] = valid.data()[i] ? 1.0f : 0.0f;
  io::write_png(path, mask);
}

std::vector<double> parse_sweep(const std::string& spec) {
  const std::regex re(R"(([^:]+):([^:]+):(\d+))");
  std::smatch m;
  if (!std::regex_match(spec, m, re)) throw Error(ErrorKind::kInvalidArgument, "sweep must be d0:d1:n");
  const double d0 = std::stod(m[1]);
  const double d1 = std::stod(m[2]);
  const int n = std::stoi(m[3]);
  if (n < 1) throw Error(ErrorKind::kInvalidArgument, "sweep needs n >= 1");
  std::vector<double> out;
  for (int i = 0; i < n; ++i) out.push_back(n == 1 ? d0 : d0 + (d1 - d0) * i / (n - 1));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic see-through light-field rendering"};
  app.require_subcommand(1);

  // synth
  std::string spec_path, out;
  auto* synth_cmd = app.add_subcommand("synth", "Render a synthetic light-field dataset");
  synth_cmd->add_option("--spec", spec_path, "Scene spec JSON")->required()->check(CLI::ExistingFile);
  synth_cmd->add_option("-o,--out", out, "Output directory")->required();

  // refocus
  std::string lf_dir, aperture = "full";
  double d_f = 0.0;
  bool allow_oor = false;
  auto* refocus_cmd = app.add_subcommand("refocus", "Regular synthetic-aperture refocus");
  refocus_cmd->add_option("--lf", lf_dir, "Light-field directory")->required()->check(CLI::ExistingDirectory);
  refocus_cmd->add_option("--df", d_f, "Focal disparity")->required();
  refocus_cmd->add_option("--aperture", aperture, "full|center|radius:<r>");
  refocus_cmd->add_flag("--allow-out-of-range", allow_oor, "Accept d_f outside the calibrated range");
  refocus_cmd->add_option("-o,--out", out, "Output image (.png or .pfm)")->required();

  // stereo
  StereoParams stereo;
  auto* stereo_cmd = app.add_subcommand("stereo", "Per-view disparity maps");
  stereo_cmd->add_option("--lf", lf_dir, "Light-field directory")->required()->check(CLI::ExistingDirectory);
  stereo_cmd->add_option("--p1", stereo.sgm.p1, "SGM small-jump penalty")->check(CLI::PositiveNumber);
  stereo_cmd->add_option("--p2", stereo.sgm.p2, "SGM large-jump penalty")->check(CLI::PositiveNumber);
  stereo_cmd->add_option("--alpha", stereo.match.alpha, "Census share of the matching cost")->check(CLI::Range(0.0, 1.0));
  stereo_cmd->add_option("--eps-i", stereo.filter.eps_i, "Bilateral intensity gate")->check(CLI::PositiveNumber);
  stereo_cmd->add_option("-o,--out", out, "Output directory")->required();

  // semantics hcsm
  auto* sem_cmd = app.add_subcommand("semantics", "Semantic label confidence");
  sem_cmd->require_subcommand(1);
  std::string probs_dir, gt_path, view;
  double m = kDefaultScoreExponent;
  std::optional<double> eps_h;
  auto* hcsm_cmd = sem_cmd->add_subcommand("hcsm", "High-confidence semantic map of one view");
  hcsm_cmd->add_option("--probs", probs_dir, "Probability volume directory")->required()->check(CLI::ExistingDirectory);
  hcsm_cmd->add_option("--gt", gt_path, "Ground-truth label PNG for the threshold sweep")->check(CLI::ExistingFile);
  hcsm_cmd->add_option("--epsilon-h", eps_h, "Fixed entropy threshold instead of the sweep");
  hcsm_cmd->add_option("--m", m, "Accuracy exponent of the score")->check(CLI::PositiveNumber);
  hcsm_cmd->add_option("--view", view, "View as <s>_<t> (default: centre)");
  hcsm_cmd->add_option("-o,--out", out, "Output label PNG")->required();

  // refine
  std::string hcsm_dir, disp_dir, ground;
  RefineParams refine;
  bool no_normals = false;
  auto* refine_cmd = app.add_subcommand("refine", "Fill unconfident labels from disparity");
  refine_cmd->add_option("--hcsm", hcsm_dir, "Directory of hcsm_<s>_<t>.png")->required()->check(CLI::ExistingDirectory);
  refine_cmd->add_option("--disp", disp_dir, "Directory of disp_<s>_<t>.pfm")->required()->check(CLI::ExistingDirectory);
  refine_cmd->add_option("--eps-d", refine.eps_d, "Label density threshold")->check(CLI::Range(0.0, 1.0));
  refine_cmd->add_option("--pn", refine.p_n, "Normal term weight")->check(CLI::NonNegativeNumber);
  refine_cmd->add_option("--pd", refine.p_d, "Distance term weight")->check(CLI::NonNegativeNumber);
  refine_cmd->add_option("--tau", refine.tau, "Normal term saturation")->check(CLI::PositiveNumber);
  refine_cmd->add_option("--ground", ground, "Ground class name or index");
  refine_cmd->add_flag("--no-normals", no_normals, "Disable the ground normal term");
  refine_cmd->add_option("-o,--out", out, "Output directory")->required();

  // sst
  std::string sem_dir, target, sweep, mask_out;
  WeightParams weights;
  auto* sst_cmd = app.add_subcommand("sst", "Semantic see-through render");
  sst_cmd->add_option("--lf", lf_dir, "Light-field directory")->required()->check(CLI::ExistingDirectory);
  sst_cmd->add_option("--disp", disp_dir, "Directory of disp_<s>_<t>.pfm")->required()->check(CLI::ExistingDirectory);
  sst_cmd->add_option("--sem", sem_dir, "Directory of sem_<s>_<t>.png")->required()->check(CLI::ExistingDirectory);
  auto* df_opt = sst_cmd->add_option("--df", d_f, "Focal disparity");
  sst_cmd->add_option("--sigma-d", weights.sigma_d, "Depth weight width")->check(CLI::PositiveNumber);
  sst_cmd->add_flag("--sigma-bypass", weights.sigma_bypass, "Depth weight identically 1");
  sst_cmd->add_option("--c1", weights.c1, "Depth weight floor")->check(CLI::Range(0.0, 1.0));
  sst_cmd->add_option("--c2", weights.c2, "Semantic weight floor")->check(CLI::Range(0.0, 1.0));
  sst_cmd->add_option("--suppress", weights.suppress_factor, "Down-weighting of overlapping labels");
  sst_cmd->add_option("--target", target, "Target class name or index");
  sst_cmd->add_option("--aperture", aperture, "full|center|radius:<r>");
  auto* sweep_opt = sst_cmd->add_option("--sweep", sweep, "Focal sweep d0:d1:n; frames get a _NNN suffix");
  sst_cmd->add_option("--mask", mask_out, "Validity mask PNG");
  sst_cmd->add_flag("--allow-out-of-range", allow_oor, "Accept d_f outside the calibrated range");
  sst_cmd->add_option("-o,--out", out, "Output image (.png or .pfm)")->required();
  df_opt->excludes(sweep_opt);

  // run
  std::string config_path, workdir;
  std::vector<std::string> overrides;
  auto* run_cmd = app.add_subcommand("run", "Run the whole pipeline");
  run_cmd->add_option("--config", config_path, "Pipeline TOML")->check(CLI::ExistingFile);
  run_cmd->add_option("--workdir", workdir, "Working directory")->required();
  run_cmd->add_option("--set", overrides, "Override a config key: section.key=value");

  // serve
  ServerOptions server;
  std::string ui_dir;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP render service");
  serve_cmd->add_option("--data", server.data_dir, "Dataset directory")->required();
  serve_cmd->add_option("--port", server.port, "Port (0 picks a free one)");
  serve_cmd->add_option("--host", server.host, "Bind address");
  serve_cmd->add_option("--workers", server.workers, "Request worker threads");
  serve_cmd->add_option("--ui", ui_dir, "Static viewer assets served under /ui");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) {
      const synth::SceneSpec spec = synth::load_scene(spec_path);
      synth::write_dataset(out, spec, synth::render_scene(spec));
    } else if (*refocus_cmd) {
      const LightField lf = load_lightfield(lf_dir);
      const RenderResult r = refocus(lf, {d_f, ApertureMask::parse(aperture, lf.cols(), lf.rows()), allow_oor});
      io::write_image(out, r.image);
    } else if (*stereo_cmd) {
      const LightField lf = load_lightfield(lf_dir);
      save_disparity_dir(out, lf_disparity(lf, stereo), lf.cols());
    } else if (*hcsm_cmd) {
      const std::vector<std::string> classes = load_class_sidecar(probs_dir);
      int s = 0, t = 0;
      if (view.empty()) {
        const auto views = list_views(probs_dir, "probs_", "_0.pfm");
        if (views.empty()) throw Error(ErrorKind::kMissingMaps, "no probability volumes in " + probs_dir);
        int cols = 0, rows = 0;
        for (auto [vs, vt] : views) cols = std::max(cols, vs + 1), rows = std::max(rows, vt + 1);
        s = (cols - 1) / 2;
        t = (rows - 1) / 2;
      } else {
        std::tie(s, t) = parse_view(view);
      }
      const LabelProbabilityVolume vol = load_probability_volume(probs_dir, s, t, static_cast<int>(classes.size()));
      const LabelMap labels = map_labels(vol);
      double eps = 0.0;
      if (eps_h) {
        eps = *eps_h;
      } else if (!gt_path.empty()) {
        const ThresholdScore sc = score_threshold(vol, labels, read_label_map(gt_path), m);
        eps = sc.epsilon_h;
        std::cout << "epsilon_h " << sc.epsilon_h << " accuracy " << sc.accuracy << " coverage " << sc.coverage
                  << " score " << sc.score << "\n";
      } else {
        throw Error(ErrorKind::kInvalidArgument, "need --gt or --epsilon-h");
      }
      const fs::path palette_file = fs::path(probs_dir).parent_path() / "gt" / "palette.json";
      const Palette palette = fs::exists(palette_file) ? load_palette(palette_file) : Palette::with_names(classes);
      write_label_map(out, apply_confidence(labels, hcsm_filter(vol, eps)), palette);
      save_palette(fs::absolute(out).parent_path() / "palette.json", palette);
    } else if (*refine_cmd) {
      const fs::path palette_file = fs::path(hcsm_dir) / "palette.json";
      const Palette palette = fs::exists(palette_file) ? load_palette(palette_file) : Palette{};
      refine.use_normals = !no_normals;
      refine.ground_label = ground.empty() ? palette.ground_label() : resolve_label(palette, ground);
      if (!ground.empty() && !refine.ground_label) throw Error(ErrorKind::kInvalidArgument, "unknown ground class " + ground);
      const auto views = list_views(hcsm_dir, "hcsm_", ".png");
      if (views.empty()) throw Error(ErrorKind::kMissingMaps, "no hcsm_<s>_<t>.png in " + hcsm_dir);
      fs::create_directories(out);
      for (auto [s, t] : views) {
        const LabelMap hcsm = read_label_map(view_file(hcsm_dir, "hcsm_", s, t, ".png"));
        const fs::path dfile = view_file(disp_dir, "disp_", s, t, ".pfm");
        if (!fs::exists(dfile)) throw Error(ErrorKind::kMissingMaps, "missing " + dfile.string());
        const DisparityMap dmap{io::read_pfm(dfile), s, t};
        write_label_map(view_file(out, "sem_", s, t, ".png"), refine_labels(hcsm, dmap, refine), palette);
      }
      if (palette.size() > 0) save_palette(fs::path(out) / "palette.json", palette);
    } else if (*sst_cmd) {
      const LightField lf = load_lightfield(lf_dir);
      SceneMaps maps{load_disparity_dir(disp_dir, lf.cols(), lf.rows()), load_label_dir(sem_dir, lf.cols(), lf.rows(), "sem_")};
      if (!target.empty()) {
        const fs::path palette_file = fs::path(sem_dir) / "palette.json";
        const Palette palette = fs::exists(palette_file) ? load_palette(palette_file) : Palette{};
        weights.target_label = resolve_label(palette, target);
        if (!weights.target_label) {
          int idx = -1;
          if (std::sscanf(target.c_str(), "%d", &idx) == 1 && idx >= 0 && idx < 255) weights.target_label = idx;
          else throw Error(ErrorKind::kInvalidArgument, "unknown target class " + target);
        }
      }
      const ApertureMask mask = ApertureMask::parse(aperture, lf.cols(), lf.rows());
      if (!sweep.empty()) {
        const std::vector<double> focal = parse_sweep(sweep);
        const auto frames = focal_sweep(lf, maps, focal, mask, weights, allow_oor);
        for (std::size_t i = 0; i < frames.size(); ++i) {
          io::write_image(indexed_path(out, i), frames[i].image);
          if (!mask_out.empty()) write_mask(indexed_path(mask_out, i), frames[i].valid);
        }
      } else {
        if (!*df_opt) throw Error(ErrorKind::kInvalidArgument, "need --df or --sweep");
        const RenderResult r = sst_render(lf, maps, SSTRequest{d_f, mask, weights, allow_oor});
        io::write_image(out, r.image);
        if (!mask_out.empty()) write_mask(mask_out, r.valid);
      }
    } else if (*run_cmd) {
      const PipelineConfig cfg =
          load_config(config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path), overrides);
      const PipelineResult r = run_pipeline(cfg, workdir, &std::cerr);
      std::cout << r.manifest.string() << "\n";
    } else if (*serve_cmd) {
      server.ui_dir = ui_dir;
      HttpServer http(server);
      const int port = http.bind();
      g_server = &http;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on " << server.host << ":" << port << " with " << http.service().size()
                << " dataset(s)" << std::endl;
      http.serve();
      g_server = nullptr;
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

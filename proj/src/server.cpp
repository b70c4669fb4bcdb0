#include "sstlf/server.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <thread>

#include <httplib.h>
#include <tbb/global_control.h>

namespace sstlf {

using nlohmann::json;

namespace {

HttpReply json_reply(int status, const json& body) {
  return HttpReply{status, "application/json", body.dump(), {}};
}

HttpReply error_reply(int status, const std::string& message) { return json_reply(status, {{"error", message}}); }

bool has_dataset(const fs::path& dir) { return fs::exists(dir / "lf" / "manifest.json"); }

}  // namespace

RenderService::RenderService(const fs::path& data_dir) {
  std::vector<fs::path> roots;
  if (has_dataset(data_dir)) {
    roots.push_back(data_dir);
  } else if (fs::is_directory(data_dir)) {
    for (const auto& e : fs::directory_iterator(data_dir)) {
      if (e.is_directory() && fs::exists(e.path() / "lf")) roots.push_back(e.path());
    }
    std::sort(roots.begin(), roots.end());
  } else {
    warnings_.push_back("data directory " + data_dir.string() + " does not exist");
  }
  for (const fs::path& root : roots) {
    try {
      Dataset ds = load_dataset(root);
      const LightField& lf = ds.lightfield;
      const std::string prefix = fs::exists(root / "sem") ? "sem" : "gt";
      fs::path label_file = view_file(root / prefix, "sem_", lf.center_s(), lf.center_t(), ".png");
      ds.id = fs::weakly_canonical(root).filename().string();
      datasets_.push_back(std::make_unique<Entry>(Entry{std::move(ds), root, std::move(label_file)}));
    } catch (const std::exception& e) {
      warnings_.push_back("skipping dataset " + root.string() + ": " + e.what());
    }
  }
}

const RenderService::Entry* RenderService::find(const std::string& id) const {
  for (const auto& e : datasets_) {
    if (e->data.id == id) return e.get();
  }
  return nullptr;
}

HttpReply RenderService::list_datasets() const {
  json out = json::array();
  for (const auto& e : datasets_) {
    const LightField& lf = e->data.lightfield;
    const Calibration& c = lf.calibration();
    json palette = json::array();
    for (int i = 0; i < e->data.palette.size(); ++i) {
      const auto& rgb = e->data.palette.colors[static_cast<std::size_t>(i)];
      palette.push_back({{"label", i}, {"name", e->data.palette.names[static_cast<std::size_t>(i)]}, {"color", rgb}});
    }
    out.push_back({{"id", e->data.id},
                   {"grid_rows", lf.rows()},
                   {"grid_cols", lf.cols()},
                   {"width", lf.width()},
                   {"height", lf.height()},
                   {"channels", lf.channels()},
                   {"disparity_range", {c.disparity_min, c.disparity_max}},
                   {"palette", palette}});
  }
  return json_reply(200, out);
}

HttpReply RenderService::render(const std::string& body) const {
  json req;
  try {
    req = json::parse(body);
  } catch (const json::parse_error& e) {
    return error_reply(400, std::string("invalid JSON: ") + e.what());
  }
  if (!req.is_object()) return error_reply(400, "body must be a JSON object");

  std::string dataset;
  std::string mode = "sst";
  std::string format = "png";
  std::string aperture = "full";
  double d_f = 0.0;
  WeightParams params;
  json target = nullptr;
  try {
    dataset = req.at("dataset").get<std::string>();
    d_f = req.at("d_f").get<double>();
    params.sigma_d = req.value("sigma_d", params.sigma_d);
    params.sigma_bypass = req.value("sigma_bypass", params.sigma_bypass);
    params.c1 = req.value("c1", params.c1);
    params.c2 = req.value("c2", params.c2);
    params.suppress_factor = req.value("suppress_factor", params.suppress_factor);
    mode = req.value("mode", mode);
    format = req.value("format", format);
    aperture = req.value("aperture", aperture);
    if (req.contains("target_label")) target = req["target_label"];
  } catch (const json::exception& e) {
    return error_reply(400, std::string("bad request field: ") + e.what());
  }
  if (mode != "sst" && mode != "regular") return error_reply(400, "mode must be sst or regular");
  if (format != "png" && format != "pfm") return error_reply(400, "format must be png or pfm");
  try {
    params.validate();
  } catch (const Error& e) {
    return error_reply(400, e.what());
  }

  const Entry* entry = find(dataset);
  if (!entry) return error_reply(404, "unknown dataset '" + dataset + "'");
  const LightField& lf = entry->data.lightfield;
  if (!std::isfinite(d_f) || !lf.calibration().focal_in_range(d_f)) {
    return error_reply(400, "d_f outside the dataset's disparity range");
  }
  if (!target.is_null()) {
    std::optional<int> label;
    if (target.is_number_integer()) {
      label = resolve_label(entry->data.palette, std::to_string(target.get<long long>()));
    } else if (target.is_string()) {
      label = resolve_label(entry->data.palette, target.get<std::string>());
    } else {
      return error_reply(400, "target_label must be an integer, a class name or null");
    }
    if (!label) return error_reply(422, "target_label not in palette");
    params.target_label = label;
  }

  try {
    const ApertureMask mask = ApertureMask::parse(aperture, lf.cols(), lf.rows());
    const auto start = std::chrono::steady_clock::now();
    const RenderResult result = mode == "regular" ? refocus(lf, RenderRequest{d_f, mask})
                                                  : sst_render(lf, entry->data.maps, SSTRequest{d_f, mask, params});
    const std::vector<std::uint8_t> bytes =
        format == "png" ? io::encode_png(result.image) : io::encode_pfm(result.image);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    HttpReply reply{200, format == "png" ? "image/png" : "application/x-portable-floatmap",
                    std::string(bytes.begin(), bytes.end()), {}};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", ms);
    reply.headers["X-Render-Time-Ms"] = buf;
    return reply;
  } catch (const Error& e) {
    const int status = e.kind() == ErrorKind::kInvalidArgument || e.kind() == ErrorKind::kEmptyAperture ? 400 : 500;
    return error_reply(status, e.what());
  }
}

HttpReply RenderService::labels_png(const std::string& id) const {
  const Entry* entry = find(id);
  if (!entry) return error_reply(404, "unknown dataset '" + id + "'");
  try {
    const std::vector<std::uint8_t> bytes = io::read_bytes(entry->label_file);
    return HttpReply{200, "image/png", std::string(bytes.begin(), bytes.end()), {}};
  } catch (const std::exception& e) {
    return error_reply(500, e.what());
  }
}

HttpReply RenderService::label_at(const std::string& id, int x, int y) const {
  const Entry* entry = find(id);
  if (!entry) return error_reply(404, "unknown dataset '" + id + "'");
  const LightField& lf = entry->data.lightfield;
  if (x < 0 || y < 0 || x >= lf.width() || y >= lf.height()) return error_reply(400, "pixel outside the image");
  const std::size_t ref = static_cast<std::size_t>(lf.center_t()) * lf.cols() + lf.center_s();
  const int label = entry->data.maps.labels[ref].at(x, y);
  json name = nullptr;
  if (label < entry->data.palette.size()) name = entry->data.palette.names[static_cast<std::size_t>(label)];
  return json_reply(200, {{"x", x}, {"y", y}, {"label", label}, {"name", name}});
}

// Transport ----------------------------------------------------------------------

struct HttpServer::Impl {
  httplib::Server http;
  std::unique_ptr<tbb::global_control> limit;
};

namespace {

void send(httplib::Response& res, const HttpReply& reply) {
  res.status = reply.status;
  for (const auto& [k, v] : reply.headers) res.set_header(k, v);
  res.set_content(reply.body, reply.content_type);
}

}  // namespace

HttpServer::HttpServer(ServerOptions options)
    : options_(std::move(options)),
      service_(std::make_unique<RenderService>(options_.data_dir)),
      impl_(std::make_unique<Impl>()) {
  for (const std::string& w : service_->warnings()) std::cerr << "warning: " << w << "\n";
  const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const int workers = options_.workers > 0 ? std::min(options_.workers, hw) : hw;
  impl_->limit = std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism,
                                                       static_cast<std::size_t>(hw));
  impl_->http.new_task_queue = [workers] { return new httplib::ThreadPool(static_cast<std::size_t>(workers)); };

  auto& http = impl_->http;
  http.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                            {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                            {"Access-Control-Allow-Headers", "Content-Type"},
                            {"Access-Control-Expose-Headers", "X-Render-Time-Ms"}});
  http.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  const RenderService* svc = service_.get();
  http.Get("/datasets", [svc](const httplib::Request&, httplib::Response& res) { send(res, svc->list_datasets()); });
  http.Post("/render", [svc](const httplib::Request& req, httplib::Response& res) { send(res, svc->render(req.body)); });
  http.Get(R"(/datasets/([^/]+)/labels\.png)", [svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc->labels_png(req.matches[1]));
  });
  http.Get(R"(/datasets/([^/]+)/label)", [svc](const httplib::Request& req, httplib::Response& res) {
    try {
      send(res, svc->label_at(req.matches[1], std::stoi(req.get_param_value("x")), std::stoi(req.get_param_value("y"))));
    } catch (const std::exception&) {
      send(res, error_reply(400, "x and y query parameters required"));
    }
  });
  if (!options_.ui_dir.empty() && fs::is_directory(options_.ui_dir)) {
    http.set_mount_point("/ui", options_.ui_dir.string());
  }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  int port = options_.port;
  if (port == 0) {
    port = impl_->http.bind_to_any_port(options_.host);
  } else if (!impl_->http.bind_to_port(options_.host, port)) {
    port = -1;
  }
  if (port < 0) throw Error(ErrorKind::kIo, "cannot bind " + options_.host + ":" + std::to_string(options_.port));
  return port;
}

void HttpServer::serve() { impl_->http.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->http.is_running()) impl_->http.stop();
}

}  // namespace sstlf

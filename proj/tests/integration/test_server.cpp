#include <doctest.h>
#include <httplib.h>

#include <fstream>
#include <thread>

#include "sstlf/server.hpp"
#include "sstlf/synth.hpp"
#include "support.hpp"

using namespace sstlf;
using nlohmann::json;

namespace {

synth::SceneSpec scene() {
  synth::SceneSpec s = testing::plane_scene(40, 32, 3, 3, 2.0, 0.0, 8.0);
  s.classes = {"background", "wall", "bar"};
  s.layers[0].name = "wall";
  synth::Layer bar;
  bar.name = "bar";
  bar.label = 2;
  bar.disparity = 6.0;
  bar.texture.color = {0.9, 0.1, 0.1};
  bar.mask.kind = synth::MaskSpec::Kind::kRect;
  bar.mask.rect = {16, 0, 22, 32};
  s.layers.push_back(bar);
  return s;
}

// Data root with one good dataset ("scene") and one corrupt one ("broken").
fs::path make_root() {
  static const fs::path root = [] {
    const fs::path r = testing::scratch("server_root");
    const synth::SceneSpec s = scene();
    synth::write_dataset(r / "scene", s, synth::render_scene(s));
    fs::create_directories(r / "broken" / "lf");
    std::ofstream(r / "broken" / "lf" / "manifest.json") << "{ not json";
    return r;
  }();
  return root;
}

struct Running {
  HttpServer server;
  int port;
  std::thread thread;

  explicit Running(const fs::path& root) : server(ServerOptions{root, "127.0.0.1", 0, 4, {}}), port(server.bind()) {
    thread = std::thread([this] { server.serve(); });
  }
  ~Running() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    return c;
  }
};

Running& server() {
  static Running r(make_root());
  return r;
}

httplib::Result post(const json& body) { return server().client().Post("/render", body.dump(), "application/json"); }

}  // namespace

TEST_CASE("service lists loadable datasets and warns about corrupt ones") {
  const RenderService svc(make_root());
  CHECK(svc.size() == 1);
  REQUIRE(svc.warnings().size() == 1);
  CHECK(svc.warnings()[0].find("broken") != std::string::npos);
  const json list = json::parse(svc.list_datasets().body);
  REQUIRE(list.size() == 1);
  CHECK(list[0]["id"] == "scene");
  CHECK(list[0]["grid_rows"] == 3);
  CHECK(list[0]["grid_cols"] == 3);
  CHECK(list[0]["width"] == 40);
  CHECK(list[0]["height"] == 32);
  CHECK(list[0]["disparity_range"] == json::array({0.0, 8.0}));
  CHECK(list[0]["palette"].size() == 3);
  CHECK(list[0]["palette"][2]["name"] == "bar");
}

TEST_CASE("empty data directory lists nothing") {
  const RenderService svc(testing::scratch("server_empty"));
  CHECK(svc.list_datasets().body == "[]");
}

TEST_CASE("GET /datasets over HTTP carries CORS headers") {
  auto res = server().client().Get("/datasets");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
  CHECK(json::parse(res->body).size() == 1);
  auto pre = server().client().Options("/render");
  REQUIRE(pre);
  CHECK(pre->status == 204);
  CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);
}

TEST_CASE("POST /render returns a PNG with timing") {
  auto res = post({{"dataset", "scene"}, {"d_f", 2.0}});
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type") == "image/png");
  CHECK(res->has_header("X-Render-Time-Ms"));
  CHECK(std::stod(res->get_header_value("X-Render-Time-Ms")) >= 0.0);
  const ViewImage img = io::decode_png({res->body.begin(), res->body.end()});
  CHECK(img.width() == 40);
  CHECK(img.height() == 32);
}

TEST_CASE("render request errors map to status codes") {
  auto bad_json = server().client().Post("/render", "{nope", "application/json");
  REQUIRE(bad_json);
  CHECK(bad_json->status == 400);
  CHECK(json::parse(bad_json->body).contains("error"));
  CHECK(post({{"dataset", "scene"}, {"d_f", 20.0}})->status == 400);
  CHECK(post({{"dataset", "scene"}})->status == 400);
  CHECK(post({{"dataset", "scene"}, {"d_f", 2.0}, {"mode", "blur"}})->status == 400);
  CHECK(post({{"dataset", "scene"}, {"d_f", 2.0}, {"c1", 3.0}})->status == 400);
  CHECK(post({{"dataset", "nope"}, {"d_f", 2.0}})->status == 404);
  CHECK(post({{"dataset", "scene"}, {"d_f", 2.0}, {"target_label", "sky"}})->status == 422);
  CHECK(post({{"dataset", "scene"}, {"d_f", 2.0}, {"target_label", 9}})->status == 422);
}

TEST_CASE("regular mode equals SST with degraded parameters") {
  auto reg = post({{"dataset", "scene"}, {"d_f", 2.0}, {"mode", "regular"}, {"format", "pfm"}});
  auto deg = post({{"dataset", "scene"}, {"d_f", 2.0}, {"sigma_bypass", true}, {"c2", 1.0}, {"format", "pfm"}});
  REQUIRE(reg);
  REQUIRE(deg);
  const FloatMap a = io::decode_pfm({reg->body.begin(), reg->body.end()});
  const FloatMap b = io::decode_pfm({deg->body.begin(), deg->body.end()});
  REQUIRE(a.same_shape(b));
  double max_err = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) max_err = std::max(max_err, double(std::abs(a.data()[i] - b.data()[i])));
  CHECK(max_err < 1e-6);
}

TEST_CASE("SST over HTTP matches the library render") {
  auto res = post({{"dataset", "scene"}, {"d_f", 2.0}, {"format", "pfm"}, {"c1", 0.05}, {"c2", 0.05}});
  REQUIRE(res);
  const FloatMap img = io::decode_pfm({res->body.begin(), res->body.end()});
  const Dataset ds = load_dataset(make_root() / "scene");
  WeightParams p;
  p.c1 = p.c2 = 0.05;
  const RenderResult direct = sst_render(ds.lightfield, ds.maps, {2.0, ApertureMask::full(3, 3), p});
  CHECK(img == direct.image);
}

TEST_CASE("targets resolve by name, index or null") {
  auto by_name = post({{"dataset", "scene"}, {"d_f", 2.0}, {"target_label", "wall"}, {"format", "pfm"}});
  auto by_index = post({{"dataset", "scene"}, {"d_f", 2.0}, {"target_label", 1}, {"format", "pfm"}});
  auto none = post({{"dataset", "scene"}, {"d_f", 2.0}, {"target_label", nullptr}, {"format", "pfm"}});
  auto omitted = post({{"dataset", "scene"}, {"d_f", 2.0}, {"format", "pfm"}});
  REQUIRE(by_name);
  REQUIRE(by_index);
  CHECK(by_name->status == 200);
  CHECK(by_name->body == by_index->body);
  CHECK(none->body == omitted->body);
}

TEST_CASE("concurrent renders are deterministic and leave the data untouched") {
  const std::string before = sha256_tree(make_root() / "scene");
  const json req = {{"dataset", "scene"}, {"d_f", 3.5}, {"format", "pfm"}};
  std::vector<std::string> bodies(8);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    threads.emplace_back([&, i] {
      auto res = post(req);
      if (res && res->status == 200) bodies[i] = res->body;
    });
  }
  for (auto& t : threads) t.join();
  for (const std::string& b : bodies) {
    CHECK_FALSE(b.empty());
    CHECK(b == bodies[0]);
  }
  CHECK(sha256_tree(make_root() / "scene") == before);
}

TEST_CASE("label lookups") {
  auto png = server().client().Get("/datasets/scene/labels.png");
  REQUIRE(png);
  CHECK(png->status == 200);
  CHECK(png->get_header_value("Content-Type") == "image/png");
  const fs::path tmp = testing::scratch("server_labels") / "l.png";
  std::ofstream(tmp, std::ios::binary) << png->body;
  const LabelMap labels = read_label_map(tmp);
  CHECK(labels.at(18, 5) == 2);
  CHECK(labels.at(3, 5) == 1);

  auto at = server().client().Get("/datasets/scene/label?x=18&y=5");
  REQUIRE(at);
  const json j = json::parse(at->body);
  CHECK(j["label"] == 2);
  CHECK(j["name"] == "bar");
  CHECK(server().client().Get("/datasets/scene/label?x=99&y=5")->status == 400);
  CHECK(server().client().Get("/datasets/scene/label")->status == 400);
  CHECK(server().client().Get("/datasets/zzz/labels.png")->status == 404);
}

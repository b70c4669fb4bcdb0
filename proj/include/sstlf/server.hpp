#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sstlf/pipeline.hpp"

namespace sstlf {

namespace fs = std::filesystem;

struct HttpReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::map<std::string, std::string> headers;
};

/// Request handling independent of the transport. Datasets are loaded once
/// and shared read-only between concurrent requests.
class RenderService {
 public:
  /// Loads every dataset under data_dir: the directory itself when it holds
  /// lf/, otherwise each child that does. Corrupt datasets are skipped and
  /// reported through warnings().
  explicit RenderService(const fs::path& data_dir);

  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  std::size_t size() const noexcept { return datasets_.size(); }

  /// GET /datasets
  HttpReply list_datasets() const;
  /// POST /render
  HttpReply render(const std::string& body) const;
  /// GET /datasets/<id>/labels.png: label map of the central view.
  HttpReply labels_png(const std::string& id) const;
  /// GET /datasets/<id>/label?x=&y=
  HttpReply label_at(const std::string& id, int x, int y) const;

 private:
  struct Entry {
    Dataset data;
    fs::path root;
    fs::path label_file;
  };
  const Entry* find(const std::string& id) const;

  std::vector<std::unique_ptr<Entry>> datasets_;
  std::vector<std::string> warnings_;
};

struct ServerOptions {
  fs::path data_dir;
  std::string host = "0.0.0.0";
  int port = 8080;  // 0 picks a free port
  int workers = 0;  // 0: hardware threads
  fs::path ui_dir;  // served under /ui when set
};

/// HTTP/1.1 front end with permissive CORS.
class HttpServer {
 public:
  explicit HttpServer(ServerOptions options);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  const RenderService& service() const noexcept { return *service_; }
  /// Binds the socket; returns the bound port. Throws Io on failure.
  int bind();
  /// Blocks until stop().
  void serve();
  void stop();

 private:
  struct Impl;
  ServerOptions options_;
  std::unique_ptr<RenderService> service_;
  std::unique_ptr<Impl> impl_;
};

}  // namespace sstlf

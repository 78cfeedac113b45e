#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include <nlohmann/json_fwd.hpp>

#include "agro/error.hpp"
#include "agro/registry.hpp"
#include "agro/voice_io.hpp"

namespace agro {

struct ApiRequest {
  std::string method;  // GET, POST
  std::string path;    // without query string
  std::map<std::string, std::string> query;
  std::string body;
};

struct ApiResponse {
  int status = 200;
  std::string body;  // always JSON
};

/// HTTP status used for an error code.
int http_status(Errc code);

/// `{"code", "message", "details"}` body.
nlohmann::json api_error(std::string_view code, std::string_view message,
                         const nlohmann::json& details = nullptr);

/// Transport-independent request handler. Holds no per-request state; each
/// call works on the registry snapshot current at its start.
class ApiHandler {
 public:
  explicit ApiHandler(RegistryHandle& registry, IntentKeywords keywords = default_intent_keywords());

  ApiResponse handle(const ApiRequest& request) const;

 private:
  ApiResponse route(const ApiRequest& request) const;

  RegistryHandle& registry_;
  IntentKeywords keywords_;
};

/// Endpoint listing for /api/v1 in OpenAPI 3 form.
nlohmann::json openapi_document();

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string cors_origin;
  std::filesystem::path ui_dir;  // served under /ui when set
};

/// httplib front end for ApiHandler.
class HttpServer {
 public:
  HttpServer(const ApiHandler& handler, ServerOptions options);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds and starts serving on a background thread; returns the port.
  int start();
  /// Binds and serves on the calling thread until stop().
  void run();
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  void bind();

  std::unique_ptr<Impl> impl_;
  ServerOptions options_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace agro

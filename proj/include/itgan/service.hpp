#pragma once

#include <memory>
#include <optional>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "itgan/nn.hpp"

namespace itgan {

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// Request handling for the inference API, independent of the transport.
/// The bundle is fixed at construction; requests only read it.
///
///   GET  /health      {status, model_loaded, image_size, attribute_count}
///   GET  /attributes  {attributes: [{name, index}]}
///   POST /encode      {image} -> {z, c}
///   POST /generate    {c, seed?} -> {image, seed}
///   POST /transform   {image, edits, return_identity_score?} -> {image, c, c_edited, identity_score?}
///
/// Images travel as {png_base64, width, height}. Errors are {error, detail}:
/// 400 malformed request, 422 image geometry, 503 no model loaded.
class Service {
 public:
  explicit Service(std::optional<Bundle> bundle);

  HttpResponse handle(const std::string& method, const std::string& path, const std::string& body);

  bool loaded() const { return bundle_.has_value(); }

 private:
  HttpResponse health() const;
  HttpResponse attributes() const;
  HttpResponse encode(const nlohmann::json& req);
  HttpResponse generate(const nlohmann::json& req);
  HttpResponse transform(const nlohmann::json& req);

  std::optional<Bundle> bundle_;
};

/// Socket front end over a Service: CORS headers on every response.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  /// Port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  bool listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Listens until the process is stopped. Returns a process exit code.
int serve(std::optional<Bundle> bundle, const std::string& bind, int port, std::ostream& log);

}  // namespace itgan

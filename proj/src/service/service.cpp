#include "itgan/service.hpp"

#include <httplib.h>

#include <random>

#include "itgan/cli.hpp"
#include "itgan/data.hpp"
#include "itgan/eval.hpp"
#include "itgan/image.hpp"

namespace itgan {

using nlohmann::json;

namespace {

HttpResponse error(int status, const std::string& code, const std::string& detail, json extra = json::object()) {
  json body = {{"error", code}, {"detail", detail}};
  body.update(extra);
  return {status, body.dump()};
}

HttpResponse ok(const json& body) { return {200, body.dump()}; }

// 400 for anything wrong with the request itself.
class BadRequest : public std::runtime_error {
 public:
  BadRequest(const std::string& what, json extra = json::object())
      : std::runtime_error(what), extra(std::move(extra)) {}
  json extra;
};

json api_image(const TensorF& chw) {
  const Image im = tensor_to_image(chw);
  return {{"png_base64", base64_encode(encode_png(im))}, {"width", im.width}, {"height", im.height}};
}

// Decodes {png_base64, width?, height?}; geometry is checked by the caller.
Image read_api_image(const json& req) {
  if (!req.contains("image") || !req["image"].is_object()) throw BadRequest("missing 'image' object");
  const json& j = req["image"];
  if (!j.contains("png_base64") || !j["png_base64"].is_string()) throw BadRequest("image.png_base64 must be a string");
  Image im;
  try {
    im = decode_image(base64_decode(j["png_base64"].get<std::string>()));
  } catch (const ParseError& e) {
    throw BadRequest(std::string("undecodable image: ") + e.what());
  }
  for (const char* k : {"width", "height"}) {
    if (!j.contains(k)) continue;
    if (!j[k].is_number_integer()) throw BadRequest(std::string("image.") + k + " must be an integer");
    const int declared = j[k].get<int>();
    const int actual = std::string(k) == "width" ? im.width : im.height;
    if (declared != actual) {
      throw BadRequest(std::string("image.") + k + " is " + std::to_string(declared) + " but the PNG is " +
                       std::to_string(actual));
    }
  }
  return im;
}

json floats(const TensorF& t) { return std::vector<float>(t.data().begin(), t.data().end()); }

}  // namespace

Service::Service(std::optional<Bundle> bundle) : bundle_(std::move(bundle)) {}

HttpResponse Service::handle(const std::string& method, const std::string& path, const std::string& body) {
  if (method == "OPTIONS") return {204, "", "text/plain"};
  const bool is_get = path == "/health" || path == "/attributes";
  const bool is_post = path == "/encode" || path == "/generate" || path == "/transform";
  if (!is_get && !is_post) return error(404, "not_found", "no endpoint " + path);
  if ((is_get && method != "GET") || (is_post && method != "POST")) {
    return error(405, "method_not_allowed", path + " expects " + (is_get ? "GET" : "POST"));
  }
  if (path == "/health") return health();
  if (!bundle_) return error(503, "model_not_loaded", "the service was started without a checkpoint");
  if (path == "/attributes") return attributes();

  json req;
  try {
    req = json::parse(body);
  } catch (const json::parse_error& e) {
    return error(400, "bad_request", std::string("body is not JSON: ") + e.what());
  }
  if (!req.is_object()) return error(400, "bad_request", "body must be a JSON object");
  try {
    if (path == "/encode") return encode(req);
    if (path == "/generate") return generate(req);
    return transform(req);
  } catch (const BadRequest& e) {
    return error(400, "bad_request", e.what(), e.extra);
  } catch (const DimensionError& e) {
    return error(422, "bad_geometry", e.what());
  } catch (const ArgumentError& e) {
    return error(400, "bad_request", e.what());
  } catch (const NumericalError& e) {
    return error(500, "numerical_failure", e.what());
  }
}

HttpResponse Service::health() const {
  json j = {{"status", "ok"}, {"model_loaded", loaded()}, {"image_size", nullptr}, {"attribute_count", nullptr}};
  if (bundle_) {
    j["image_size"] = bundle_->arch.image_size;
    j["attribute_count"] = bundle_->attributes.size();
  }
  return ok(j);
}

HttpResponse Service::attributes() const {
  json list = json::array();
  for (std::size_t i = 0; i < bundle_->attributes.size(); ++i)
    list.push_back({{"name", bundle_->attributes[i]}, {"index", i}});
  return ok({{"attributes", list}});
}

HttpResponse Service::encode(const json& req) {
  const auto x = preprocess(read_api_image(req), bundle_->arch.image_size, bundle_->arch.image_size);
  NoGradGuard guard;
  auto code = itgan::encode(*bundle_, reshape(x, Shape{1, 3, x.dim(1), x.dim(2)}), Mode::Eval);
  return ok({{"z", floats(code.z)}, {"c", floats(code.c)}});
}

HttpResponse Service::generate(const json& req) {
  const std::size_t d = bundle_->attributes.size();
  if (!req.contains("c") || !req["c"].is_array()) throw BadRequest("'c' must be an array of 0/1 values");
  const json& cj = req["c"];
  if (cj.size() != d) {
    throw BadRequest("'c' has " + std::to_string(cj.size()) + " entries, the model has " + std::to_string(d));
  }
  TensorF c({1, static_cast<Index>(d)});
  for (std::size_t i = 0; i < d; ++i) {
    const json& v = cj[i];
    if (v.is_boolean()) c.data()[i] = v.get<bool>() ? 1.f : 0.f;
    else if (v.is_number_integer() && (v.get<long>() == 0 || v.get<long>() == 1)) c.data()[i] = static_cast<float>(v.get<long>());
    else throw BadRequest("'c' entries must be 0 or 1");
  }
  std::uint64_t seed;
  if (req.contains("seed") && !req["seed"].is_null()) {
    if (!req["seed"].is_number_unsigned()) throw BadRequest("'seed' must be a non-negative integer");
    seed = req["seed"].get<std::uint64_t>();
  } else {
    seed = (static_cast<std::uint64_t>(std::random_device{}()) << 32) | std::random_device{}();
  }
  // Same z stream as the first image of `itgan generate --seed`.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(std::nextafter(-1.0f, 0.0f), 1.0f);
  TensorF z({1, kLatentDim});
  for (auto& v : z.data()) v = u(rng);
  NoGradGuard guard;
  auto img = bundle_->generator.forward(z, c, Mode::Eval);
  return ok({{"image", api_image(reshape(img, Shape{3, img.dim(2), img.dim(3)}))}, {"seed", seed}});
}

HttpResponse Service::transform(const json& req) {
  std::vector<Edit> edits;
  if (req.contains("edits") && !req["edits"].is_null()) {
    if (!req["edits"].is_object()) throw BadRequest("'edits' must map attribute names to 0, 1 or \"flip\"");
    for (auto it = req["edits"].begin(); it != req["edits"].end(); ++it) {
      const auto& names = bundle_->attributes;
      if (std::find(names.begin(), names.end(), it.key()) == names.end()) {
        throw BadRequest("unknown attribute '" + it.key() + "'; valid names: " + valid_names(names),
                         {{"attribute", it.key()}, {"valid_attributes", names}});
      }
      edits.push_back(make_edit(it.key(), *it, names));
    }
  }
  bool want_score = false;
  if (req.contains("return_identity_score")) {
    if (!req["return_identity_score"].is_boolean()) throw BadRequest("'return_identity_score' must be a boolean");
    want_score = req["return_identity_score"].get<bool>();
  }
  const auto x = preprocess(read_api_image(req), bundle_->arch.image_size, bundle_->arch.image_size);
  auto r = itgan::transform(*bundle_, x, edits);
  json out = {{"image", api_image(r.image)}, {"c", floats(r.code.c)}, {"c_edited", floats(r.edited_c)}};
  if (edits.size() > kEditWarningThreshold) {
    out["warning"] = std::to_string(edits.size()) + " simultaneous edits; quality degrades beyond " +
                     std::to_string(kEditWarningThreshold);
  }
  if (want_score) out["identity_score"] = r.identity;
  return ok(out);
}

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>()) {
  auto route = [&service](const httplib::Request& req, httplib::Response& res) {
    auto r = service.handle(req.method, req.path, req.body);
    res.status = r.status;
    if (!r.body.empty()) res.set_content(r.body, r.content_type);
  };
  auto& server = impl_->server;
  const char* any = R"(/.*)";
  server.Get(any, route);
  server.Post(any, route);
  server.Put(any, route);
  server.Delete(any, route);
  server.Options(any, route);
  server.set_post_routing_handler([](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
  return bound;
}

bool HttpServer::listen() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

int serve(std::optional<Bundle> bundle, const std::string& bind, int port, std::ostream& log) {
  // Seeded /generate must give the same bytes however requests interleave.
  set_deterministic(true);
  Service service(std::move(bundle));
  HttpServer server(service);
  const int bound = server.bind(bind, port);
  log << "listening on http://" << bind << ":" << bound << (service.loaded() ? "" : " (no model loaded)") << "\n"
      << std::flush;
  return server.listen() ? kExitOk : kExitIo;
}

}  // namespace itgan

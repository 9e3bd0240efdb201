#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "doctest.h"
#include "itgan/checkpoint.hpp"
#include "itgan/data.hpp"
#include "itgan/eval.hpp"
#include "itgan/image.hpp"
#include "itgan/service.hpp"

using namespace itgan;
using nlohmann::json;

namespace {

const std::filesystem::path kFixtures = ITGAN_FIXTURES;
const std::filesystem::path kGolden = ITGAN_GOLDEN;

Bundle tiny() { return checkpoint_load(kFixtures / "tiny.ckpt").bundle; }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Compares against tests/golden/<name>; ITGAN_UPDATE_GOLDEN=1 rewrites it instead.
void check_golden(const std::string& name, const std::string& bytes) {
  const auto path = kGolden / name;
  if (std::getenv("ITGAN_UPDATE_GOLDEN")) {
    std::ofstream(path, std::ios::binary) << bytes;
    return;
  }
  REQUIRE(std::filesystem::exists(path));
  CHECK(slurp(path) == bytes);
}

json api_png(const Image& im) {
  return {{"png_base64", base64_encode(encode_png(im))}, {"width", im.width}, {"height", im.height}};
}

Image sprite(Index i) { return tensor_to_image(synth_render(SyntheticSpec{32, 11, 0.5}, i).pixels); }

struct Fixture {
  Fixture() : service(tiny()) { set_deterministic(true); }
  Service service;
  HttpResponse post(const std::string& path, const json& body) { return service.handle("POST", path, body.dump()); }
  HttpResponse get(const std::string& path) { return service.handle("GET", path, ""); }
};

Image decode_api(const json& img) { return decode_image(base64_decode(img["png_base64"].get<std::string>())); }

}  // namespace

TEST_CASE("no model loaded") {
  Service s(std::nullopt);
  auto h = s.handle("GET", "/health", "");
  CHECK(h.status == 200);
  auto j = json::parse(h.body);
  CHECK(j["model_loaded"] == false);
  CHECK(j["image_size"].is_null());
  for (auto [method, path] : {std::pair{"GET", "/attributes"}, {"POST", "/encode"}, {"POST", "/generate"},
                              {"POST", "/transform"}}) {
    auto r = s.handle(method, path, "{}");
    CHECK(r.status == 503);
    auto e = json::parse(r.body);
    CHECK(e.contains("error"));
    CHECK(e.contains("detail"));
  }
}

TEST_CASE_FIXTURE(Fixture, "health and attributes") {
  auto h = get("/health");
  CHECK(h.status == 200);
  CHECK(get("/health").body == h.body);
  auto j = json::parse(h.body);
  CHECK(j["status"] == "ok");
  CHECK(j["model_loaded"] == true);
  CHECK(j["image_size"] == 32);
  CHECK(j["attribute_count"] == 8);
  check_golden("health.json", h.body);

  auto a = get("/attributes");
  CHECK(a.status == 200);
  auto list = json::parse(a.body)["attributes"];
  REQUIRE(list.size() == 8);
  CHECK(list[0]["name"] == "round_face");
  for (std::size_t i = 0; i < list.size(); ++i) {
    CHECK(list[i]["index"] == i);
    CHECK(list[i]["name"] == synthetic_attributes()[i]);
  }
  check_golden("attributes.json", a.body);
}

TEST_CASE_FIXTURE(Fixture, "encode") {
  const json req = {{"image", api_png(sprite(0))}};
  auto r = post("/encode", req);
  REQUIRE(r.status == 200);
  auto j = json::parse(r.body);
  REQUIRE(j["z"].size() == 100);
  REQUIRE(j["c"].size() == 8);
  for (double v : j["z"]) CHECK((v > -1 && v < 1));
  for (double v : j["c"]) CHECK((v > 0 && v < 1));
  CHECK(post("/encode", req).body == r.body);
  check_golden("encode_sprite0.json", r.body);

  // A larger portrait is cropped and resized to S.
  auto big = post("/encode", {{"image", api_png(read_image(kFixtures / "portrait.jpg"))}});
  CHECK(big.status == 200);
}

TEST_CASE_FIXTURE(Fixture, "generate") {
  const json req = {{"c", {1, 0, 1, 0, 0, 1, 0, 0}}, {"seed", 7}};
  auto r = post("/generate", req);
  REQUIRE(r.status == 200);
  auto j = json::parse(r.body);
  CHECK(j["seed"] == 7);
  CHECK(j["image"]["width"] == 32);
  CHECK(j["image"]["height"] == 32);
  const auto png = base64_decode(j["image"]["png_base64"].get<std::string>());
  auto im = decode_image(png);
  CHECK(im.width == 32);
  CHECK(im.height == 32);
  CHECK(post("/generate", req).body == r.body);
  check_golden("generate_seed7.png", std::string(png.begin(), png.end()));

  CHECK(post("/generate", {{"c", {0, 0, 0, 0, 0, 0, 0, 0}}, {"seed", 1}}).status == 200);
  auto unseeded = json::parse(post("/generate", {{"c", {0, 0, 0, 0, 0, 0, 0, 0}}}).body);
  CHECK(unseeded["seed"].is_number_unsigned());

  CHECK(post("/generate", {{"c", {1, 0, 1}}, {"seed", 7}}).status == 400);
  CHECK(post("/generate", {{"c", {2, 0, 1, 0, 0, 1, 0, 0}}, {"seed", 7}}).status == 400);
  CHECK(post("/generate", {{"seed", 7}}).status == 400);
  CHECK(post("/generate", {{"c", {1, 0, 1, 0, 0, 1, 0, 0}}, {"seed", -3}}).status == 400);
}

TEST_CASE_FIXTURE(Fixture, "transform") {
  Bundle judge = tiny();
  const Image src = sprite(3);
  auto r = post("/transform", {{"image", api_png(src)}, {"edits", json::object()}, {"return_identity_score", true}});
  REQUIRE(r.status == 200);
  auto j = json::parse(r.body);
  const double score = j["identity_score"];
  CHECK(score >= 0.0);
  // Re-scoring the returned PNG against the input gives the reported value.
  const auto out = image_to_tensor(decode_api(j["image"]));
  CHECK(identity_score(image_to_tensor(src), out, judge) == doctest::Approx(score).epsilon(1e-9));
  CHECK(j["c"] == j["c_edited"]);
  CHECK_FALSE(j.contains("warning"));

  auto no_score = json::parse(post("/transform", {{"image", api_png(src)}}).body);
  CHECK_FALSE(no_score.contains("identity_score"));

  auto flip = json::parse(post("/transform", {{"image", api_png(src)}, {"edits", {{"glasses", "flip"}, {"hat", 1}}}}).body);
  const double g = flip["c"][1];
  CHECK(flip["c_edited"][1] == 1.0 - std::round(g));
  CHECK(flip["c_edited"][6] == 1.0);
  auto scored = post("/transform", {{"image", api_png(src)}, {"edits", {{"glasses", "flip"}, {"hat", 1}}},
                                    {"return_identity_score", true}});
  check_golden("transform_sprite3.json", scored.body);

  auto many = json::parse(
      post("/transform", {{"image", api_png(src)},
                          {"edits", {{"glasses", 1}, {"hat", 1}, {"smile", 0}, {"bangs", "flip"}}}})
          .body);
  CHECK(many.contains("warning"));

  auto bad = post("/transform", {{"image", api_png(src)}, {"edits", {{"beard", 1}}}});
  CHECK(bad.status == 400);
  auto e = json::parse(bad.body);
  CHECK(e["valid_attributes"].size() == 8);
  CHECK(e["detail"].get<std::string>().find("round_face") != std::string::npos);
  CHECK(post("/transform", {{"image", api_png(src)}, {"edits", {{"glasses", 3}}}}).status == 400);
}

TEST_CASE_FIXTURE(Fixture, "request errors") {
  CHECK(service.handle("POST", "/encode", "{not json").status == 400);
  CHECK(post("/encode", json::object()).status == 400);
  CHECK(post("/encode", {{"image", {{"png_base64", "%%%"}}}}).status == 400);
  CHECK(post("/encode", {{"image", {{"png_base64", base64_encode(std::vector<std::uint8_t>{1, 2, 3, 4})}}}}).status ==
        400);
  auto mismatch = api_png(sprite(0));
  mismatch["width"] = 31;
  CHECK(post("/encode", {{"image", mismatch}}).status == 400);

  Image small{16, 16, std::vector<std::uint8_t>(16 * 16 * 3, 90)};
  auto r = post("/encode", {{"image", api_png(small)}});
  CHECK(r.status == 422);
  CHECK(json::parse(r.body)["error"] == "bad_geometry");
  CHECK(post("/transform", {{"image", api_png(small)}}).status == 422);

  CHECK(get("/nope").status == 404);
  CHECK(service.handle("GET", "/encode", "").status == 405);
  CHECK(service.handle("POST", "/health", "").status == 405);
  CHECK(service.handle("OPTIONS", "/encode", "").status == 204);
}

TEST_CASE_FIXTURE(Fixture, "every endpoint answers within a second") {
  const json img = api_png(sprite(5));
  const std::vector<std::pair<std::string, json>> calls = {
      {"/encode", {{"image", img}}},
      {"/generate", {{"c", {0, 1, 0, 1, 0, 1, 0, 1}}, {"seed", 3}}},
      {"/transform", {{"image", img}, {"edits", {{"smile", "flip"}}}, {"return_identity_score", true}}}};
  for (const auto& [path, body] : calls) {
    const auto t0 = std::chrono::steady_clock::now();
    CHECK(post(path, body).status == 200);
    CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(1));
  }
}

TEST_CASE("over a socket, with CORS") {
  set_deterministic(true);
  Service service(tiny());
  HttpServer server(service);
  const int port = server.bind("127.0.0.1", 0);
  std::thread t([&] { server.listen(); });
  httplib::Client client("127.0.0.1", port);
  client.set_connection_timeout(5);
  httplib::Result h;
  for (int i = 0; i < 50 && !h; ++i) {
    h = client.Get("/health");
    if (!h) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  REQUIRE(h);
  CHECK(h->status == 200);
  CHECK(h->get_header_value("Access-Control-Allow-Origin") == "*");
  CHECK(json::parse(h->body)["attribute_count"] == 8);

  auto g = client.Post("/generate", json{{"c", {1, 0, 1, 0, 0, 1, 0, 0}}, {"seed", 7}}.dump(), "application/json");
  REQUIRE(g);
  CHECK(g->body == service.handle("POST", "/generate", json{{"c", {1, 0, 1, 0, 0, 1, 0, 0}}, {"seed", 7}}.dump()).body);
  auto missing = client.Get("/missing");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  CHECK(json::parse(missing->body)["error"] == "not_found");
  server.stop();
  t.join();
}

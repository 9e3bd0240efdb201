#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "itgan/cli.hpp"
#include "itgan/data.hpp"
#include "itgan/image.hpp"

using namespace itgan;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = ITGAN_FIXTURES;

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "itgan");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("itgan_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::string> tiny_train(const fs::path& out, long iters) {
  return {"train", "--synthetic", "--synthetic-count", "64", "--iters", std::to_string(iters), "--batch-size", "8",
          "--width", "0.0625", "--seed", "7", "--deterministic", "--sample-every", "3", "--out", out.string()};
}

std::string tiny_ckpt() { return (kFixtures / "tiny.ckpt").string(); }

std::string sprite_png(const fs::path& dir) {
  fs::create_directories(dir);
  auto path = dir / "sprite.png";
  write_png(path, tensor_to_image(synth_render(SyntheticSpec{32, 11, 0.5}, 2).pixels));
  return path.string();
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(cli({"train", "--synthetic", "--lr", "-1"}).code == 2);
  CHECK(cli({"train"}).code == 2);  // no data source
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({}).code == 2);
  CHECK(cli({"--help"}).code == 0);
  auto cfg = scratch("badcfg.json");
  std::ofstream(cfg) << R"({"train": {"learning_rate": 0.1}})";
  auto r = cli({"train", "--synthetic", "--config", cfg.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("learning_rate") != std::string::npos);
}

TEST_CASE("I/O errors exit with 4") {
  CHECK(cli({"generate", "--checkpoint", "/nonexistent/model.ckpt"}).code == 4);
  CHECK(cli({"train", "--synthetic", "--config", "/nonexistent/config.json"}).code == 4);
  auto dir = scratch("io");
  fs::create_directories(dir);
  std::ofstream(dir / "junk.png") << "not an image";
  CHECK(cli({"rebuild", "--checkpoint", tiny_ckpt(), "--image", (dir / "junk.png").string(), "--out",
             (dir / "o.png").string()})
            .code == 4);
}

TEST_CASE("numerical failure exits with 3") {
  auto dir = scratch("nan");
  auto args = tiny_train(dir, 40);
  args.push_back("--lr");
  args.push_back("1e30");
  auto r = cli(args);
  CHECK(r.code == 3);
  CHECK(r.err.find("iteration") != std::string::npos);
}

TEST_CASE("train echoes the effective config and is reproducible") {
  auto a = scratch("train_a"), b = scratch("train_b");
  auto ra = cli(tiny_train(a, 6));
  REQUIRE(ra.code == 0);
  REQUIRE(cli(tiny_train(b, 6)).code == 0);
  CHECK(slurp(a / "losses.jsonl") == slurp(b / "losses.jsonl"));
  CHECK(slurp(a / "model.ckpt") == slurp(b / "model.ckpt"));
  CHECK(fs::exists(a / "samples" / "iter_000003.png"));
  CHECK(fs::exists(a / "samples" / "iter_000006.png"));

  auto cfg = json::parse(slurp(a / "config.json"));
  CHECK(cfg["train"]["lr"] == 2e-4);
  CHECK(cfg["train"]["beta1"] == 0.5);
  CHECK(cfg["train"]["beta2"] == 0.999);
  CHECK(cfg["train"]["weights"]["per"] == 2.0);
  CHECK(cfg["train"]["weights"]["pix"] == 0.5);
  CHECK(cfg["train"]["weights"]["z"] == 1.0);
  CHECK(cfg["train"]["seed"] == 7);
  CHECK(cfg["arch"]["image_size"] == 32);
  CHECK(cfg["arch"]["attr_count"] == 8);
  CHECK(cfg["data"]["synthetic"] == true);

  int lines = 0;
  std::istringstream log(slurp(a / "losses.jsonl"));
  for (std::string l; std::getline(log, l); ++lines) CHECK(json::parse(l).contains("l_adv_d"));
  CHECK(lines == 6);

  // The echoed config reproduces the run.
  auto c = scratch("train_c");
  REQUIRE(cli({"train", "--config", (a / "config.json").string(), "--sample-every", "0", "--out", c.string()}).code ==
          0);
  CHECK(slurp(c / "losses.jsonl") == slurp(a / "losses.jsonl"));
}

TEST_CASE("flags override the config file") {
  auto dir = scratch("override");
  fs::create_directories(dir);
  std::ofstream(dir / "cfg.json") << R"({"train": {"lr": 0.001, "batch_size": 8}, "arch": {"width": 0.0625},
                                        "data": {"synthetic": true, "count": 32}})";
  auto r = cli({"train", "--config", (dir / "cfg.json").string(), "--lr", "0.0005", "--iters", "1", "--sample-every",
                "0", "--out", (dir / "run").string()});
  REQUIRE(r.code == 0);
  auto cfg = json::parse(slurp(dir / "run" / "config.json"));
  CHECK(cfg["train"]["lr"] == 0.0005);
  CHECK(cfg["train"]["batch_size"] == 8);
  CHECK(cfg["arch"]["width"] == 0.0625);
  CHECK(cfg["data"]["count"] == 32);
}

TEST_CASE("resume continues bit-for-bit") {
  auto a = scratch("resume_a"), b = scratch("resume_b");
  REQUIRE(cli(tiny_train(a, 10)).code == 0);
  REQUIRE(cli(tiny_train(b, 4)).code == 0);
  auto args = tiny_train(b, 10);
  args.push_back("--checkpoint");
  args.push_back((b / "model.ckpt").string());
  REQUIRE(cli(args).code == 0);
  CHECK(slurp(a / "losses.jsonl") == slurp(b / "losses.jsonl"));
  CHECK(slurp(a / "model.ckpt") == slurp(b / "model.ckpt"));
}

TEST_CASE("generate") {
  auto dir = scratch("generate");
  auto r1 = cli({"generate", "--checkpoint", tiny_ckpt(), "--set", "glasses=1", "--seed", "5", "--out",
                 (dir / "a.png").string()});
  REQUIRE(r1.code == 0);
  auto j = json::parse(r1.out);
  CHECK(j["c"] == json({0, 1, 0, 0, 0, 0, 0, 0}));
  REQUIRE(cli({"generate", "--checkpoint", tiny_ckpt(), "--set", "glasses=1", "--seed", "5", "--out",
               (dir / "b.png").string()})
              .code == 0);
  CHECK(slurp(dir / "a.png") == slurp(dir / "b.png"));
  auto grid = read_image(dir / "a.png");
  CHECK(grid.width == 8 * 32 + 9);
  CHECK(grid.height == 8 * 32 + 9);

  REQUIRE(cli({"generate", "--checkpoint", tiny_ckpt(), "--count", "3", "--out", (dir / "c.png").string()}).code == 0);
  CHECK(read_image(dir / "c.png").width == 3 * 32 + 4);
  CHECK(read_image(dir / "c.png").height == 32 + 2);

  auto bad = cli({"generate", "--checkpoint", tiny_ckpt(), "--set", "beard=1", "--out", (dir / "d.png").string()});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("round_face") != std::string::npos);
  CHECK(cli({"generate", "--checkpoint", tiny_ckpt(), "--set", "hat=flip"}).code == 2);
}

TEST_CASE("transform and rebuild") {
  auto dir = scratch("transform");
  const auto img = sprite_png(dir);
  auto rb = cli({"rebuild", "--checkpoint", tiny_ckpt(), "--image", img, "--out", (dir / "rebuilt.png").string()});
  REQUIRE(rb.code == 0);
  auto none = cli({"transform", "--checkpoint", tiny_ckpt(), "--image", img, "--out", (dir / "t0.png").string()});
  REQUIRE(none.code == 0);
  CHECK(slurp(dir / "rebuilt.png") == slurp(dir / "t0.png"));
  const double score = json::parse(rb.out)["identity_score"];
  CHECK(score >= 0.0);
  CHECK(score <= 2.0);

  auto flip = cli({"transform", "--checkpoint", tiny_ckpt(), "--image", img, "--edit", "glasses=flip", "--out",
                   (dir / "t1.png").string()});
  REQUIRE(flip.code == 0);
  auto j = json::parse(flip.out);
  CHECK(j["c_edited"][1] == 1.0 - std::round(j["c_tilde"][1].get<double>()));
  CHECK(flip.err.empty());

  auto many = cli({"transform", "--checkpoint", tiny_ckpt(), "--image", img, "--edit", "glasses=1", "--edit", "hat=1",
                   "--edit", "smile=0", "--edit", "bangs=flip", "--out", (dir / "t2.png").string()});
  CHECK(many.code == 0);
  CHECK(many.err.find("warning") != std::string::npos);

  auto unknown = cli({"transform", "--checkpoint", tiny_ckpt(), "--image", img, "--edit", "beard=1"});
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("big_eyes") != std::string::npos);
}

TEST_CASE("evaluate") {
  auto r = cli({"evaluate", "--checkpoint", tiny_ckpt(), "--synthetic", "--synthetic-count", "16", "--limit", "32"});
  REQUIRE(r.code == 0);
  auto j = json::parse(r.out);
  CHECK(j["count"] == 32);
  CHECK(j["hamming"] >= 0.0);
  CHECK(j["hamming"] <= 1.0);
  CHECK(j["identity_mean"] >= 0.0);
}

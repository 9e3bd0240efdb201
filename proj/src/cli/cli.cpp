#include "itgan/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <optional>
#include <random>

#include "itgan/checkpoint.hpp"
#include "itgan/config.hpp"
#include "itgan/eval.hpp"
#include "itgan/image.hpp"
#include "itgan/service.hpp"

namespace itgan {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- configuration -------------------------------------------------------------

json to_json(const DataConfig& d) {
  return {{"synthetic", d.synthetic}, {"count", d.count},       {"test_count", d.test_count}, {"seed", d.seed},
          {"p", d.p},                 {"data_dir", d.data_dir}, {"attrs_file", d.attrs_file}};
}

void merge_json(const json& j, DataConfig& d) {
  if (!j.is_object()) throw ArgumentError("data config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    try {
      if (k == "synthetic") d.synthetic = it->get<bool>();
      else if (k == "count") d.count = it->get<Index>();
      else if (k == "test_count") d.test_count = it->get<Index>();
      else if (k == "seed") d.seed = it->get<std::uint64_t>();
      else if (k == "p") d.p = it->get<double>();
      else if (k == "data_dir") d.data_dir = it->get<std::string>();
      else if (k == "attrs_file") d.attrs_file = it->get<std::string>();
      else throw ArgumentError("unknown data field '" + k + "'");
    } catch (const json::exception&) {
      throw ArgumentError("config field '" + k + "' has the wrong type");
    }
  }
}

json to_json(const RunConfig& r) {
  return {{"arch", to_json(r.arch)}, {"train", to_json(r.train)}, {"data", to_json(r.data)}};
}

void merge_json(const json& j, RunConfig& r) {
  if (!j.is_object()) throw ArgumentError("config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "arch") merge_json(*it, r.arch);
    else if (it.key() == "train") merge_json(*it, r.train);
    else if (it.key() == "data") merge_json(*it, r.data);
    else throw ArgumentError("unknown config section '" + it.key() + "'");
  }
}

RunConfig default_run_config() { return RunConfig{}; }

Datasets make_datasets(const DataConfig& d, int image_size) {
  Datasets out;
  if (d.synthetic) {
    if (d.count < 1 || d.test_count < 1) throw ArgumentError("synthetic counts must be positive");
    SyntheticSpec spec{image_size, d.seed, d.p};
    auto all = synth_dataset(spec, d.count + d.test_count);
    std::vector<Index> train(static_cast<std::size_t>(d.count)), test(static_cast<std::size_t>(d.test_count));
    std::iota(train.begin(), train.end(), Index{0});
    std::iota(test.begin(), test.end(), d.count);
    out.train = std::make_shared<SubsetDataset>(all, train);
    out.test = std::make_shared<SubsetDataset>(all, test);
    return out;
  }
  if (d.data_dir.empty()) throw ArgumentError("need --synthetic or --data-dir");
  const fs::path attrs = d.attrs_file.empty() ? fs::path(d.data_dir) / "list_attr_celeba.txt" : fs::path(d.attrs_file);
  auto all = std::make_shared<CelebaDataset>(d.data_dir, attrs, image_size);
  if (all->size() < 2) throw IoError("no usable images under " + d.data_dir);
  auto split = split_indices(all->size(), d.seed);
  out.train = std::make_shared<SubsetDataset>(all, split.train);
  out.test = std::make_shared<SubsetDataset>(all, split.test);
  return out;
}

TensorF load_model_image(const fs::path& path, int image_size) {
  return preprocess(read_image(path), image_size, image_size);
}

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ArgumentError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw IoError("cannot write " + path.string());
}

// Flags shared by the commands that build a model or a dataset. Unset flags
// leave the config file (or default) value alone.
struct RunFlags {
  std::string config;
  bool synthetic = false;
  std::optional<Index> synthetic_count;
  std::optional<std::string> data_dir, attrs_file;
  std::optional<int> image_size, batch_size;
  std::optional<long> iters, warmup;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed, data_seed;
  bool deterministic = false;
  std::optional<double> lr, width;

  void add(CLI::App* app) {
    app->add_option("--config", config, "JSON file with arch/train/data sections");
    app->add_flag("--synthetic", synthetic, "Train on generated sprites");
    app->add_option("--synthetic-count", synthetic_count, "Number of synthetic training images");
    app->add_option("--data-dir", data_dir, "Directory of CelebA images");
    app->add_option("--attrs-file", attrs_file, "Attribute list (default <data-dir>/list_attr_celeba.txt)");
    app->add_option("--image-size", image_size, "Image side S (32, 64 or 128)");
    app->add_option("--iters", iters, "Total iterations (overrides --epochs)");
    app->add_option("--epochs", epochs, "Epochs when --iters is not given");
    app->add_option("--seed", seed, "Training seed");
    app->add_option("--data-seed", data_seed, "Synthetic rendering / split seed");
    app->add_flag("--deterministic", deterministic, "Single-threaded, bit-reproducible run");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--batch-size", batch_size, "Batch size");
    app->add_option("--width", width, "Channel width multiplier");
    app->add_option("--warmup", warmup, "Stage-1-only iterations before stage 2 (-1: one epoch)");
  }

  RunConfig resolve() const {
    RunConfig r = default_run_config();
    json file;
    if (!config.empty()) {
      file = read_json_file(config);
      merge_json(file, r);
    }
    if (synthetic) r.data.synthetic = true;
    // Sprites default to the desk-scale model unless the file or flags say otherwise.
    const bool file_arch = file.contains("arch");
    if (r.data.synthetic && !(file_arch && file["arch"].contains("image_size"))) r.arch.image_size = 32;
    if (r.data.synthetic && !(file_arch && file["arch"].contains("width"))) r.arch.width = 0.25;
    if (synthetic_count) r.data.count = *synthetic_count;
    if (data_dir) r.data.data_dir = *data_dir;
    if (attrs_file) r.data.attrs_file = *attrs_file;
    if (data_seed) r.data.seed = *data_seed;
    if (image_size) r.arch.image_size = *image_size;
    if (width) r.arch.width = *width;
    if (iters) r.train.iters = *iters;
    if (epochs) r.train.epochs = *epochs;
    if (seed) r.train.seed = *seed;
    if (deterministic) r.train.deterministic = true;
    if (lr) r.train.lr = *lr;
    if (batch_size) r.train.batch_size = *batch_size;
    if (warmup) r.train.warmup_iters = *warmup;
    r.arch.attr_count = r.data.synthetic ? static_cast<int>(synthetic_attributes().size()) : kCelebaAttributeCount;
    r.arch.validate();
    r.train.validate();
    return r;
  }
};

long total_iters(const TrainConfig& c, const Dataset& data) {
  if (c.iters > 0) return c.iters;
  return static_cast<long>(c.epochs) * (data.size() / c.batch_size);
}

TensorF uniform_z(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(std::nextafter(-1.0f, 0.0f), 1.0f);
  TensorF z({n, kLatentDim});
  for (auto& v : z.data()) v = u(rng);
  return z;
}

Bundle load_bundle(const std::string& path) {
  if (path.empty()) throw ArgumentError("--checkpoint is required");
  return checkpoint_load(path).bundle;
}

void write_tensor_png(const fs::path& path, const TensorF& chw) { write_png(path, tensor_to_image(chw)); }

// ---- commands --------------------------------------------------------------------

struct TrainArgs {
  RunFlags run;
  std::string out = "runs/train";
  std::string resume;
  long sample_every = 500;
  long checkpoint_every = 0;
  long log_every = 50;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig cfg = a.run.resolve();
  std::optional<Checkpoint> resumed;
  if (!a.resume.empty()) {
    resumed = checkpoint_load(a.resume);
    if (!resumed->training) throw ArgumentError(a.resume + " holds no training state to resume");
    const long iters = cfg.train.iters;
    const int epochs = cfg.train.epochs;
    cfg.train = resumed->training->config;
    cfg.train.iters = iters;
    cfg.train.epochs = epochs;
    cfg.arch = resumed->bundle.arch;
    resumed->training->config = cfg.train;
  }
  const fs::path dir = a.out;
  fs::create_directories(dir / "samples");
  write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");

  auto data = make_datasets(cfg.data, cfg.arch.image_size);
  if (resumed && resumed->bundle.attributes != data.train->attributes()) {
    throw ArgumentError("checkpoint attributes do not match the dataset");
  }
  std::optional<Trainer> trainer;
  if (resumed) trainer.emplace(std::move(resumed->bundle), *resumed->training);
  else trainer.emplace(init_params<float>(cfg.arch, data.train->attributes(), cfg.train.seed), cfg.train);

  const long total = total_iters(cfg.train, *data.train);
  const Index k = std::min<Index>(64, data.test->size());
  std::vector<Index> rows(static_cast<std::size_t>(k));
  std::iota(rows.begin(), rows.end(), Index{0});
  TensorF sx, sc;
  load_rows(*data.test, rows, sx, sc);
  const TensorF sz = uniform_z(k, cfg.train.seed ^ 0x5a4dULL);

  std::ofstream log(dir / "losses.jsonl", resumed ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write " + (dir / "losses.jsonl").string());
  std::optional<LossReport> last;
  auto save = [&](const fs::path& path) {
    const auto state = trainer->state();
    checkpoint_save(path, trainer->bundle(), &state);
  };
  try {
    trainer->run(*data.train, total, [&](const LossReport& r) {
      last = r;
      log << to_json(r).dump() << "\n";
      const long done = r.iteration + 1;
      if (a.log_every > 0 && done % a.log_every == 0) {
        out << "iter " << done << "/" << total << " d " << r.l_adv_d << " g " << r.l_adv_g << " label " << r.l_label;
        if (r.l_inte) out << " inte " << *r.l_inte;
        out << "\n";
      }
      if (a.sample_every > 0 && done % a.sample_every == 0) {
        NoGradGuard guard;
        auto grid = image_grid(trainer->bundle().generator.forward(sz, sc, Mode::Eval));
        char name[32];
        std::snprintf(name, sizeof name, "iter_%06ld.png", done);
        write_png(dir / "samples" / name, grid);
      }
      if (a.checkpoint_every > 0 && done % a.checkpoint_every == 0) save(dir / "model.ckpt");
    });
  } catch (const NumericalError& e) {
    log.flush();
    err << "numerical failure: " << e.what() << "\n";
    if (last) err << "last report: " << to_json(*last).dump() << "\n";
    return kExitNumerical;
  }
  log.flush();
  if (!log) throw IoError("failed writing the loss log");
  save(dir / "model.ckpt");
  out << "wrote " << (dir / "model.ckpt").string() << " after " << trainer->iteration() << " iterations\n";
  return kExitOk;
}

std::vector<Edit> parse_edits(const std::vector<std::string>& texts, const Bundle& b, std::ostream& err) {
  std::vector<Edit> edits;
  for (const auto& t : texts) edits.push_back(parse_edit(t, b.attributes));
  if (edits.size() > kEditWarningThreshold) {
    err << "warning: " << edits.size() << " simultaneous edits; image quality degrades beyond "
        << kEditWarningThreshold << "\n";
  }
  return edits;
}

json vec_json(const TensorF& t) { return std::vector<float>(t.data().begin(), t.data().end()); }

int cmd_transform(const std::string& checkpoint, const std::string& image, const std::vector<std::string>& edit_texts,
                  const std::string& out_path, std::ostream& out, std::ostream& err) {
  Bundle b = load_bundle(checkpoint);
  const auto edits = parse_edits(edit_texts, b, err);
  if (image.empty()) throw ArgumentError("--image is required");
  auto x = load_model_image(image, b.arch.image_size);
  auto r = transform(b, x, edits);
  write_tensor_png(out_path, r.image);
  out << json{{"output", out_path},
              {"identity_score", r.identity},
              {"c_tilde", vec_json(r.code.c)},
              {"c_edited", vec_json(r.edited_c)}}
             .dump()
      << "\n";
  return kExitOk;
}

int cmd_generate(const std::string& checkpoint, const std::vector<std::string>& sets, Index count, std::uint64_t seed,
                 const std::string& out_path, std::ostream& out) {
  Bundle b = load_bundle(checkpoint);
  if (count < 1) throw ArgumentError("--count must be positive");
  TensorF c = TensorF::zeros({1, static_cast<Index>(b.attributes.size())});
  std::vector<Edit> edits;
  for (const auto& s : sets) {
    auto e = parse_edit(s, b.attributes);
    if (e.kind == EditKind::Flip) throw ArgumentError("generate: '" + s + "' must assign 0 or 1");
    edits.push_back(e);
  }
  apply_edits(c, edits);
  TensorF cs({count, c.dim(1)});
  for (Index r = 0; r < count; ++r) std::copy(c.data().begin(), c.data().end(), cs.data().begin() + r * c.dim(1));
  NoGradGuard guard;
  auto imgs = b.generator.forward(uniform_z(count, seed), cs, Mode::Eval);
  write_png(out_path, image_grid(imgs));
  out << json{{"output", out_path}, {"count", count}, {"seed", seed}, {"c", vec_json(c)}}.dump() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Iterative GAN: attribute-conditioned face generation, rebuilding and editing"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train a model and write a checkpoint");
  train.run.add(c_train);
  c_train->add_option("--out", train.out, "Run directory");
  c_train->add_option("--checkpoint", train.resume, "Resume from this checkpoint");
  c_train->add_option("--sample-every", train.sample_every, "Write a sample grid every k iterations (0: never)");
  c_train->add_option("--checkpoint-every", train.checkpoint_every, "Also checkpoint every k iterations");
  c_train->add_option("--log-every", train.log_every, "Progress line every k iterations");

  std::string checkpoint, image, out_path;
  std::vector<std::string> edits;
  auto* c_rebuild = app.add_subcommand("rebuild", "Encode an image and decode it unchanged");
  c_rebuild->add_option("--checkpoint", checkpoint)->required();
  c_rebuild->add_option("--image", image)->required();
  c_rebuild->add_option("--out", out_path)->default_val("rebuilt.png");

  auto* c_transform = app.add_subcommand("transform", "Edit attributes of an image");
  c_transform->add_option("--checkpoint", checkpoint)->required();
  c_transform->add_option("--image", image)->required();
  c_transform->add_option("--edit", edits, "name=0|1|flip, repeatable");
  c_transform->add_option("--out", out_path)->default_val("transformed.png");

  Index count = 64;
  std::uint64_t seed = 0;
  auto* c_generate = app.add_subcommand("generate", "Sample new faces for an attribute assignment");
  c_generate->add_option("--checkpoint", checkpoint)->required();
  c_generate->add_option("--set", edits, "name=0|1, repeatable; unassigned attributes are 0");
  c_generate->add_option("--count", count, "Images in the grid");
  c_generate->add_option("--seed", seed, "Seed for z");
  c_generate->add_option("--out", out_path)->default_val("generated.png");

  RunFlags eval_flags;
  Index limit = 0;
  auto* c_eval = app.add_subcommand("evaluate", "Held-out hamming loss, rebuild error and identity scores");
  c_eval->add_option("--checkpoint", checkpoint)->required();
  eval_flags.add(c_eval);
  c_eval->add_option("--limit", limit, "Score at most this many held-out images");
  c_eval->add_option("--out", out_path, "Also write the report here");

  RunFlags ablate_flags;
  AblationOptions ablation;
  std::string ablate_dir = "runs/ablation";
  auto* c_ablate = app.add_subcommand("ablate", "Compare pixel_only, z_only, pixel_plus_z and integrated");
  ablate_flags.add(c_ablate);
  c_ablate->add_option("--eval-limit", ablation.eval_limit, "Held-out images scored per setting");
  c_ablate->add_option("--out", ablate_dir, "Output directory");

  std::string bind = "127.0.0.1";
  int port = 8080;
  auto* c_serve = app.add_subcommand("serve", "HTTP inference service");
  c_serve->add_option("--checkpoint", checkpoint, "Model to serve (without it every model endpoint returns 503)");
  c_serve->add_option("--port", port);
  c_serve->add_option("--bind", bind);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*c_train) return cmd_train(train, out, err);
    if (*c_rebuild) return cmd_transform(checkpoint, image, {}, out_path, out, err);
    if (*c_transform) return cmd_transform(checkpoint, image, edits, out_path, out, err);
    if (*c_generate) return cmd_generate(checkpoint, edits, count, seed, out_path, out);
    if (*c_eval) {
      Bundle b = load_bundle(checkpoint);
      RunConfig cfg = eval_flags.resolve();
      auto data = make_datasets(cfg.data, b.arch.image_size);
      if (data.test->attributes() != b.attributes) throw ArgumentError("checkpoint attributes do not match the dataset");
      auto r = evaluate(b, b, *data.test, cfg.train.seed, limit);
      const auto text = to_json(r).dump(2);
      if (!out_path.empty()) write_text(out_path, text + "\n");
      out << text << "\n";
      return kExitOk;
    }
    if (*c_ablate) {
      RunConfig cfg = ablate_flags.resolve();
      const fs::path dir = ablate_dir;
      fs::create_directories(dir);
      write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
      auto data = make_datasets(cfg.data, cfg.arch.image_size);
      ablation.iters = total_iters(cfg.train, *data.train);
      ablation.warmup = cfg.train.warmup_iters;
      ablation.progress = [&](AblationSetting s, const LossReport& r) {
        if ((r.iteration + 1) % 250 == 0) out << to_string(s) << " iter " << r.iteration + 1 << "\n";
      };
      auto report =
          run_ablation(*data.train, *data.test, init_params<float>(cfg.arch, data.train->attributes(), cfg.train.seed),
                       cfg.train, ablation);
      write_text(dir / "ablation.json", to_json(report).dump(2) + "\n");
      write_text(dir / "ablation.txt", format_table(report));
      write_png(dir / "ablation.png", ablation_sheet(report));
      out << format_table(report);
      return kExitOk;
    }
    if (*c_serve) {
      std::optional<Bundle> b;
      if (!checkpoint.empty()) b = load_bundle(checkpoint);
      return serve(std::move(b), bind, port, out);
    }
  } catch (const ArgumentError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ParseError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}

}  // namespace itgan

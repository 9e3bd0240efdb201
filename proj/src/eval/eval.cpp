#include "itgan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "itgan/config.hpp"

namespace itgan {

namespace {

constexpr Index kChunk = 64;

TensorF as_batch(const TensorF& x) {
  if (x.rank() == 3) return reshape(x, Shape{1, x.dim(0), x.dim(1), x.dim(2)});
  if (x.rank() != 4) throw DimensionError("expected an image [3,S,S] or a batch [N,3,S,S]");
  return x;
}

TensorF image_of(const TensorF& batch, Index row) {
  auto one = slice_rows(batch, row, row + 1);
  return reshape(one, Shape{batch.dim(1), batch.dim(2), batch.dim(3)});
}

// z ~ U(−1,1) on the open interval, same convention as training.
TensorF uniform_z(Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> u(std::nextafter(-1.0f, 0.0f), 1.0f);
  TensorF z({n, kLatentDim});
  for (auto& v : z.data()) v = u(rng);
  return z;
}

std::string hex(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

}  // namespace

double hamming_loss(const TensorF& predicted, const TensorF& truth, double threshold) {
  if (predicted.shape() != truth.shape()) {
    throw DimensionError("hamming_loss: prediction " + shape_str(predicted.shape()) + " vs truth " +
                         shape_str(truth.shape()));
  }
  if (predicted.numel() == 0) return 0.0;
  Index wrong = 0;
  for (Index i = 0; i < predicted.numel(); ++i) {
    const bool p = predicted.data()[i] > threshold;
    const bool t = truth.data()[i] > 0.5f;
    wrong += p != t;
  }
  return static_cast<double>(wrong) / static_cast<double>(predicted.numel());
}

std::vector<double> identity_scores(const TensorF& a_in, const TensorF& b_in, Bundle& judge) {
  const TensorF a = as_batch(a_in), b = as_batch(b_in);
  if (a.shape() != b.shape()) {
    throw DimensionError("identity_score: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  NoGradGuard guard;
  const Index n = a.dim(0);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Index s = 0; s < n; s += kChunk) {
    const Index e = std::min(n, s + kChunk);
    auto ea = judge.discriminator.forward(slice_rows(a, s, e), Mode::Eval).shared;
    auto eb = judge.discriminator.forward(slice_rows(b, s, e), Mode::Eval).shared;
    const Index k = ea.dim(1);
    for (Index r = 0; r < e - s; ++r) {
      const float* pa = ea.data().data() + r * k;
      const float* pb = eb.data().data() + r * k;
      double dot = 0, na = 0, nb = 0;
      for (Index j = 0; j < k; ++j) {
        dot += static_cast<double>(pa[j]) * pb[j];
        na += static_cast<double>(pa[j]) * pa[j];
        nb += static_cast<double>(pb[j]) * pb[j];
      }
      if (na < 1e-24 || nb < 1e-24) {
        throw DegenerateEmbeddingError("identity_score: zero-norm embedding for sample " + std::to_string(s + r));
      }
      out.push_back(std::clamp(1.0 - dot / std::sqrt(na * nb), 0.0, 2.0));
    }
  }
  return out;
}

double identity_score(const TensorF& a, const TensorF& b, Bundle& judge) {
  if (a.rank() == 4 && a.dim(0) != 1) throw DimensionError("identity_score: expected a single image");
  return identity_scores(a, b, judge).at(0);
}

std::vector<float> classify(const TensorF& x, Bundle& bundle) {
  auto batch = as_batch(x);
  if (batch.dim(0) != 1) throw DimensionError("classify: expected a single image");
  NoGradGuard guard;
  auto e = encode(bundle, batch, Mode::Eval);
  return {e.c.data().begin(), e.c.data().end()};
}

// ---- edits -------------------------------------------------------------------

std::string valid_names(const std::vector<std::string>& names) {
  std::string s;
  for (const auto& n : names) s += (s.empty() ? "" : ", ") + n;
  return s;
}

namespace {

int attribute_index(const std::string& name, const std::vector<std::string>& names) {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    throw ArgumentError("unknown attribute '" + name + "'; valid names: " + valid_names(names));
  }
  return static_cast<int>(it - names.begin());
}

}  // namespace

Edit parse_edit(const std::string& text, const std::vector<std::string>& names) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ArgumentError("edit '" + text + "' is not name=0|1|flip");
  const std::string name = text.substr(0, eq), value = text.substr(eq + 1);
  Edit e{attribute_index(name, names), EditKind::On};
  if (value == "0") e.kind = EditKind::Off;
  else if (value == "1") e.kind = EditKind::On;
  else if (value == "flip") e.kind = EditKind::Flip;
  else throw ArgumentError("edit '" + text + "': value must be 0, 1 or flip");
  return e;
}

Edit make_edit(const std::string& name, const nlohmann::json& value, const std::vector<std::string>& names) {
  Edit e{attribute_index(name, names), EditKind::On};
  if (value.is_string() && value.get<std::string>() == "flip") e.kind = EditKind::Flip;
  else if (value.is_boolean()) e.kind = value.get<bool>() ? EditKind::On : EditKind::Off;
  else if (value.is_number_integer() && (value.get<long>() == 0 || value.get<long>() == 1))
    e.kind = value.get<long>() == 1 ? EditKind::On : EditKind::Off;
  else throw ArgumentError("edit for '" + name + "' must be 0, 1 or \"flip\"");
  return e;
}

void apply_edits(TensorF& c, const std::vector<Edit>& edits) {
  if (c.rank() != 2) throw DimensionError("apply_edits: expected [N,d]");
  const Index d = c.dim(1);
  for (Index r = 0; r < c.dim(0); ++r) {
    for (const auto& e : edits) {
      if (e.index < 0 || e.index >= d) throw ArgumentError("edit index out of range");
      float& v = c.data()[r * d + e.index];
      switch (e.kind) {
        case EditKind::Off: v = 0.f; break;
        case EditKind::On: v = 1.f; break;
        case EditKind::Flip: v = 1.f - std::round(v); break;
      }
    }
  }
}

TransformResult transform(Bundle& bundle, const TensorF& x, const std::vector<Edit>& edits) {
  auto batch = as_batch(x);
  if (batch.dim(0) != 1) throw DimensionError("transform: expected a single image");
  NoGradGuard guard;
  TransformResult out;
  out.code = encode(bundle, batch, Mode::Eval);
  out.edited_c = out.code.c.clone();
  apply_edits(out.edited_c, edits);
  auto img = bundle.generator.forward(out.code.z, out.edited_c, Mode::Eval);
  // Score the 8-bit image that is actually handed out.
  out.image = image_to_tensor(tensor_to_image(image_of(img, 0)));
  out.identity = identity_score(batch, out.image, bundle);
  return out;
}

// ---- evaluation ----------------------------------------------------------------

EvalReport evaluate(Bundle& bundle, Bundle& judge, const Dataset& data, std::uint64_t seed, Index limit) {
  const Index n = limit > 0 ? std::min(limit, data.size()) : data.size();
  if (n == 0) throw ArgumentError("evaluate: empty dataset");
  NoGradGuard guard;
  std::mt19937_64 rng(seed);
  EvalReport r;
  r.count = n;
  Index wrong = 0;
  double sq = 0, lat = 0;
  TensorF x, c;
  for (Index s = 0; s < n; s += kChunk) {
    const Index e = std::min(n, s + kChunk);
    std::vector<Index> rows(static_cast<std::size_t>(e - s));
    std::iota(rows.begin(), rows.end(), s);
    load_rows(data, rows, x, c);

    auto code = encode(bundle, x, Mode::Eval);
    wrong += static_cast<Index>(std::llround(hamming_loss(code.c, c) * static_cast<double>(c.numel())));
    auto rebuilt = bundle.generator.forward(code.z, code.c, Mode::Eval);
    for (Index i = 0; i < x.numel(); ++i) {
      const double dl = static_cast<double>(x.data()[i]) - rebuilt.data()[i];
      sq += dl * dl;
    }
    auto scores = identity_scores(x, rebuilt, judge);
    r.identity_scores.insert(r.identity_scores.end(), scores.begin(), scores.end());

    auto z = uniform_z(e - s, rng);
    auto fake = bundle.generator.forward(z, c, Mode::Eval);
    auto zt = encode(bundle, fake, Mode::Eval).z;
    for (Index i = 0; i < z.numel(); ++i) {
      const double dl = static_cast<double>(zt.data()[i]) - z.data()[i];
      lat += dl * dl;
    }
  }
  const auto d = static_cast<double>(data.attributes().size());
  r.hamming = static_cast<double>(wrong) / (static_cast<double>(n) * d);
  r.pixel_mse = sq / (static_cast<double>(n) * 3.0 * data.image_size() * data.image_size());
  r.latent_error = lat / static_cast<double>(n);
  double total = 0;
  for (double v : r.identity_scores) total += v;
  r.identity_mean = total / static_cast<double>(n);
  return r;
}

nlohmann::json to_json(const EvalReport& r, bool with_scores) {
  nlohmann::json j = {{"count", r.count},
                      {"hamming", r.hamming},
                      {"identity_metric", "1 - cosine(discriminator embedding); FaceNet substitute"},
                      {"identity_mean", r.identity_mean},
                      {"pixel_mse", r.pixel_mse},
                      {"latent_error", r.latent_error}};
  if (with_scores) j["identity_scores"] = r.identity_scores;
  return j;
}

// ---- ablation ------------------------------------------------------------------

std::string to_string(AblationSetting s) {
  switch (s) {
    case AblationSetting::PixelOnly: return "pixel_only";
    case AblationSetting::ZOnly: return "z_only";
    case AblationSetting::PixelPlusZ: return "pixel_plus_z";
    case AblationSetting::Integrated: return "integrated";
  }
  return "?";
}

AblationSetting parse_ablation_setting(const std::string& s) {
  for (auto v : kAblationSettings)
    if (to_string(v) == s) return v;
  throw ArgumentError("unknown ablation setting '" + s + "'");
}

LossWeights ablation_weights(AblationSetting s, const LossWeights& base) {
  LossWeights w = base;
  switch (s) {
    case AblationSetting::PixelOnly: w.per = 0; w.z = 0; break;
    case AblationSetting::ZOnly: w.per = 0; w.pix = 0; break;
    case AblationSetting::PixelPlusZ: w.per = 0; break;
    case AblationSetting::Integrated: break;
  }
  return w;
}

const SettingResult& AblationReport::at(AblationSetting s) const {
  for (const auto& r : settings)
    if (r.setting == s) return r;
  throw ArgumentError("ablation report has no setting " + to_string(s));
}

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t bundle_digest(const Bundle& b) {
  std::uint64_t h = fnv1a(nullptr, 0);
  for (const auto& [name, t] : b.state()) {
    h = fnv1a(name.data(), name.size(), h);
    h = fnv1a(t.data().data(), t.data().size() * sizeof(float), h);
  }
  return h;
}

AblationReport run_ablation(const Dataset& train, const Dataset& heldout, Bundle init, TrainConfig base,
                            const AblationOptions& options, std::vector<Bundle>* trained) {
  base.validate();
  if (heldout.size() == 0) throw ArgumentError("ablation: empty held-out set");
  AblationReport report;
  report.init_digest = bundle_digest(init);

  const BatchIterator probe(train, base.batch_size, base.seed, 0);
  if (probe.batches() == 0) throw ArgumentError("ablation: training set smaller than one batch");
  base.warmup_iters = options.warmup >= 0 ? options.warmup : static_cast<long>(probe.batches());
  base.stage2_enabled = true;
  report.warmup = base.warmup_iters;
  report.iters = std::max(options.iters, report.warmup);

  // Stage 1 ignores the integrated-loss weights, so one warm-up serves all four.
  std::uint64_t warm_digest = fnv1a(nullptr, 0);
  auto hasher = [](std::uint64_t& h) {
    return [&h](const TensorF& x, const TensorF& c) {
      h = fnv1a(x.data().data(), x.data().size() * sizeof(float), h);
      h = fnv1a(c.data().data(), c.data().size() * sizeof(float), h);
    };
  };
  Trainer warm(std::move(init), base);
  warm.set_batch_observer(hasher(warm_digest));
  warm.run(train, report.warmup, [&](const LossReport& r) {
    if (options.progress) options.progress(AblationSetting::Integrated, r);
  });
  Bundle judge = warm.bundle().clone();
  report.judge = "warm-up model after " + std::to_string(report.warmup) +
                 " stage-1 iterations; 1 - cosine of its discriminator embedding (FaceNet substitute)";
  const TrainingState branch = warm.state();

  const Index k = std::min<Index>(options.preview, heldout.size());
  std::vector<Index> first(static_cast<std::size_t>(k));
  std::iota(first.begin(), first.end(), Index{0});
  TensorF px, pc;
  if (k > 0) {
    load_rows(heldout, first, px, pc);
    report.targets = px;
  }

  for (auto setting : kAblationSettings) {
    TrainingState st = branch;
    st.config.weights = ablation_weights(setting, base.weights);
    Trainer t(warm.bundle().clone(), st);
    SettingResult res;
    res.setting = setting;
    res.weights = st.config.weights;
    res.data_digest = warm_digest;
    t.set_batch_observer(hasher(res.data_digest));
    t.run(train, report.iters, [&](const LossReport& r) {
      if (options.progress) options.progress(setting, r);
    });
    res.eval = evaluate(t.bundle(), judge, heldout, base.seed + 1, options.eval_limit);
    if (k > 0) {
      NoGradGuard guard;
      res.preview = rebuild(t.bundle(), px, Mode::Eval);
    }
    report.settings.push_back(std::move(res));
    if (trained) trained->push_back(std::move(t.bundle()));
  }
  return report;
}

nlohmann::json to_json(const AblationReport& r) {
  nlohmann::json settings = nlohmann::json::array();
  for (const auto& s : r.settings) {
    settings.push_back({{"setting", to_string(s.setting)},
                        {"weights", to_json(s.weights)},
                        {"eval", to_json(s.eval)},
                        {"data_digest", hex(s.data_digest)}});
  }
  return {{"judge", r.judge},
          {"warmup_iters", r.warmup},
          {"iters", r.iters},
          {"init_digest", hex(r.init_digest)},
          {"settings", settings}};
}

std::string format_table(const AblationReport& r) {
  std::ostringstream out;
  out << "identity: " << r.judge << "\n";
  out << std::left << std::setw(14) << "setting" << std::right << std::setw(6) << "per" << std::setw(6) << "pix"
      << std::setw(6) << "z" << std::setw(11) << "identity" << std::setw(11) << "pixel_mse" << std::setw(11)
      << "latent" << std::setw(9) << "hamming" << "\n";
  out << std::fixed;
  for (const auto& s : r.settings) {
    out << std::left << std::setw(14) << to_string(s.setting) << std::right << std::setprecision(2) << std::setw(6)
        << s.weights.per << std::setw(6) << s.weights.pix << std::setw(6) << s.weights.z << std::setprecision(5)
        << std::setw(11) << s.eval.identity_mean << std::setw(11) << s.eval.pixel_mse << std::setw(11)
        << s.eval.latent_error << std::setprecision(4) << std::setw(9) << s.eval.hamming << "\n";
  }
  return out.str();
}

Image ablation_sheet(const AblationReport& r) {
  if (!r.targets.defined()) throw StateError("ablation_sheet: no preview images");
  const Index k = r.targets.dim(0);
  const Index row = r.targets.numel() / k;
  TensorF all({static_cast<Index>(k * (1 + r.settings.size())), r.targets.dim(1), r.targets.dim(2),
               r.targets.dim(3)});
  auto dst = all.data().begin();
  dst = std::copy(r.targets.data().begin(), r.targets.data().end(), dst);
  for (const auto& s : r.settings) {
    if (s.preview.numel() != k * row) throw StateError("ablation_sheet: preview size mismatch");
    dst = std::copy(s.preview.data().begin(), s.preview.data().end(), dst);
  }
  return image_grid(all, static_cast<int>(k));
}

}  // namespace itgan

#include "itgan/config.hpp"

#include "itgan/errors.hpp"

namespace itgan {

using nlohmann::json;

namespace {

const char* distance_name(Distance d) { return d == Distance::MeanSquared ? "mse" : "mae"; }

Distance parse_distance(const std::string& s) {
  if (s == "mse") return Distance::MeanSquared;
  if (s == "mae") return Distance::MeanAbsolute;
  throw ArgumentError("distance must be \"mse\" or \"mae\", got \"" + s + "\"");
}

const char* pairing_name(LatentPairing p) { return p == LatentPairing::Fake ? "fake" : "rebuild"; }

LatentPairing parse_pairing(const std::string& s) {
  if (s == "fake") return LatentPairing::Fake;
  if (s == "rebuild") return LatentPairing::Rebuild;
  throw ArgumentError("latent_pairing must be \"fake\" or \"rebuild\", got \"" + s + "\"");
}

// Reads j[key] into out when present, with a readable error on type mismatch.
template <class T>
void read(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ArgumentError(std::string("config field '") + key + "' has the wrong type");
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* what) {
  if (!j.is_object()) throw ArgumentError(std::string(what) + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ArgumentError(std::string("unknown ") + what + " field '" + it.key() + "'");
  }
}

}  // namespace

json to_json(const ArchConfig& a) {
  return {{"image_size", a.image_size}, {"attr_count", a.attr_count}, {"z_dim", a.z_dim}, {"width", a.width}};
}

json to_json(const LossWeights& w) {
  return {{"per", w.per}, {"pix", w.pix}, {"z", w.z}, {"alpha", w.alpha}, {"distance", distance_name(w.distance)}};
}

json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"iters", c.iters},
          {"balance_ratio", c.balance_ratio},
          {"max_extra_updates", c.max_extra_updates},
          {"ema_decay", c.ema_decay},
          {"stage2_enabled", c.stage2_enabled},
          {"stage2_update_dc", c.stage2_update_dc},
          {"stage2_dc_scale", c.stage2_dc_scale},
          {"warmup_iters", c.warmup_iters},
          {"latent_pairing", pairing_name(c.latent_pairing)},
          {"freeze_generator", c.freeze_generator},
          {"seed", c.seed},
          {"deterministic", c.deterministic},
          {"weights", to_json(c.weights)}};
}

json to_json(const LossReport& r) {
  json j = {{"iteration", r.iteration}, {"epoch", r.epoch},       {"l_adv_d", r.l_adv_d},
            {"l_adv_g", r.l_adv_g},     {"l_label", r.l_label},   {"total", r.total},
            {"d_updates", r.d_updates}, {"g_updates", r.g_updates}};
  auto opt = [&](const char* k, const std::optional<double>& v) { j[k] = v ? json(*v) : json(nullptr); };
  opt("l_pix", r.l_pix);
  opt("l_per", r.l_per);
  opt("l_z", r.l_z);
  opt("l_inte", r.l_inte);
  return j;
}

LossReport report_from_json(const json& j) {
  LossReport r;
  r.iteration = j.at("iteration").get<long>();
  r.epoch = j.at("epoch").get<int>();
  r.l_adv_d = j.at("l_adv_d").get<double>();
  r.l_adv_g = j.at("l_adv_g").get<double>();
  r.l_label = j.at("l_label").get<double>();
  r.total = j.at("total").get<double>();
  r.d_updates = j.at("d_updates").get<int>();
  r.g_updates = j.at("g_updates").get<int>();
  auto opt = [&](const char* k, std::optional<double>& v) {
    if (j.contains(k) && !j[k].is_null()) v = j[k].get<double>();
  };
  opt("l_pix", r.l_pix);
  opt("l_per", r.l_per);
  opt("l_z", r.l_z);
  opt("l_inte", r.l_inte);
  return r;
}

void merge_json(const json& j, ArchConfig& a) {
  reject_unknown(j, {"image_size", "attr_count", "z_dim", "width"}, "arch");
  read(j, "image_size", a.image_size);
  read(j, "attr_count", a.attr_count);
  read(j, "z_dim", a.z_dim);
  read(j, "width", a.width);
}

void merge_json(const json& j, LossWeights& w) {
  reject_unknown(j, {"per", "pix", "z", "alpha", "distance"}, "weights");
  read(j, "per", w.per);
  read(j, "pix", w.pix);
  read(j, "z", w.z);
  read(j, "alpha", w.alpha);
  if (j.contains("distance")) {
    std::string d;
    read(j, "distance", d);
    w.distance = parse_distance(d);
  }
}

void merge_json(const json& j, TrainConfig& c) {
  reject_unknown(j,
                 {"lr", "beta1", "beta2", "adam_eps", "batch_size", "epochs", "iters", "balance_ratio",
                  "max_extra_updates", "ema_decay", "stage2_enabled", "stage2_update_dc", "stage2_dc_scale",
                  "warmup_iters", "latent_pairing", "freeze_generator", "seed", "deterministic", "weights"},
                 "train");
  read(j, "lr", c.lr);
  read(j, "beta1", c.beta1);
  read(j, "beta2", c.beta2);
  read(j, "adam_eps", c.adam_eps);
  read(j, "batch_size", c.batch_size);
  read(j, "epochs", c.epochs);
  read(j, "iters", c.iters);
  read(j, "balance_ratio", c.balance_ratio);
  read(j, "max_extra_updates", c.max_extra_updates);
  read(j, "ema_decay", c.ema_decay);
  read(j, "stage2_enabled", c.stage2_enabled);
  read(j, "stage2_update_dc", c.stage2_update_dc);
  read(j, "stage2_dc_scale", c.stage2_dc_scale);
  read(j, "warmup_iters", c.warmup_iters);
  if (j.contains("latent_pairing")) {
    std::string p;
    read(j, "latent_pairing", p);
    c.latent_pairing = parse_pairing(p);
  }
  read(j, "freeze_generator", c.freeze_generator);
  read(j, "seed", c.seed);
  read(j, "deterministic", c.deterministic);
  if (j.contains("weights")) merge_json(j["weights"], c.weights);
}

}  // namespace itgan

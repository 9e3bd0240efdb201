#include "itgan/trainer.hpp"

#include <cmath>
#include <sstream>

#include "itgan/errors.hpp"

namespace itgan {

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ArgumentError(msg); };
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be positive, got " + std::to_string(lr));
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1 must be in [0,1), got " + std::to_string(beta1));
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2 must be in [0,1), got " + std::to_string(beta2));
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
  if (batch_size < 1) fail("batch_size must be at least 1, got " + std::to_string(batch_size));
  if (epochs < 0) fail("epochs must be non-negative");
  if (iters < 0) fail("iters must be non-negative");
  if (!(balance_ratio >= 1.0)) fail("balance_ratio must be at least 1, got " + std::to_string(balance_ratio));
  if (max_extra_updates < 0) fail("max_extra_updates must be non-negative");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) fail("ema_decay must be in [0,1)");
  if (!(stage2_dc_scale >= 0.0)) fail("stage2_dc_scale must be non-negative");
  if (warmup_iters < -1) fail("warmup_iters must be -1 or non-negative");
  weights.validate();
}

AdamConfig TrainConfig::adam(double lr_scale) const { return {lr * lr_scale, beta1, beta2, adam_eps}; }

namespace {

template <class T>
void append(NamedTensors<T>& to, const NamedTensors<T>& from, const std::string& prefix,
            const std::string& skip = "") {
  for (const auto& [name, t] : from)
    if (skip.empty() || name.rfind(skip, 0) != 0) to.emplace_back(prefix + name, t);
}

}  // namespace

Trainer::Trainer(Bundle bundle, TrainConfig config)
    : bundle_(std::move(bundle)), config_(config), rng_(config.seed) {
  if (config_.lr < 0.0 || !std::isfinite(config_.lr)) throw ArgumentError("lr must be non-negative");
  auto checked = config_;
  checked.lr = checked.lr > 0 ? checked.lr : 1.0;  // lr = 0 freezes every network
  checked.validate();
  set_deterministic(config_.deterministic);
  warmup_ = config_.warmup_iters;
  build_optimizers();
}

Trainer::Trainer(Bundle bundle, const TrainingState& state) : Trainer(std::move(bundle), state.config) {
  iteration_ = state.iteration;
  epoch_ = state.epoch;
  position_ = state.position;
  ema_ready_ = state.ema_ready;
  ema_d_ = state.ema_d;
  ema_g_ = state.ema_g;
  std::istringstream in(state.rng);
  in >> rng_;
  if (!in) throw ParseError("training state: malformed RNG state");
  Adam<float>* opts[] = {&opt_g_, &opt_d_, &opt_c_, &opt_dc2_};
  const char* names[] = {"g", "d", "c", "dc2"};
  if (state.optimizers.size() != 4) throw ParseError("training state: expected 4 optimizers");
  for (int k = 0; k < 4; ++k) {
    const auto& s = state.optimizers[k];
    if (s.name != names[k]) throw ParseError("training state: optimizer " + s.name + " out of order");
    auto& m = opts[k]->first_moments();
    auto& v = opts[k]->second_moments();
    if (s.m.size() != m.size() || s.v.size() != v.size()) {
      throw DimensionError("training state: optimizer " + s.name + " layout differs from the bundle");
    }
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (s.m[i].size() != m[i].size() || s.v[i].size() != v[i].size()) {
        throw DimensionError("training state: optimizer " + s.name + " moment size mismatch");
      }
    }
    m = s.m;
    v = s.v;
    opts[k]->set_steps(s.steps);
  }
}

void Trainer::build_optimizers() {
  NamedTensors<float> g, d, c, dc2;
  append(g, bundle_.generator.parameters(), "g.");
  append(d, bundle_.discriminator.parameters(), "d.");
  // Stage 1 trains only the label head of C; the z head learns from the latent term.
  append(c, bundle_.classifier.parameters(), "c.", "z_head");
  append(dc2, bundle_.discriminator.parameters(), "d.", "source");
  append(dc2, bundle_.classifier.parameters(), "c.");
  const double g_scale = config_.freeze_generator ? 0.0 : 1.0;
  opt_g_ = Adam<float>(g, config_.adam(g_scale));
  opt_d_ = Adam<float>(d, config_.adam());
  opt_c_ = Adam<float>(c, config_.adam());
  opt_dc2_ = Adam<float>(dc2, config_.adam(config_.stage2_dc_scale));
}

void Trainer::zero_all_grads() {
  for (auto& [name, t] : bundle_.generator.parameters()) t.zero_grad();
  for (auto& [name, t] : bundle_.discriminator.parameters()) t.zero_grad();
  for (auto& [name, t] : bundle_.classifier.parameters()) t.zero_grad();
}

void Trainer::check_finite(const char* where) const {
  for (const auto& [name, t] : bundle_.state()) {
    for (float v : t.data()) {
      if (!std::isfinite(v)) {
        throw NumericalError("iteration " + std::to_string(iteration_) + " (" + where + "): non-finite value in " +
                             name);
      }
    }
  }
}

TensorF Trainer::sample_z(Index n) {
  std::uniform_real_distribution<float> u(std::nextafter(-1.0f, 0.0f), 1.0f);
  TensorF z({n, static_cast<Index>(bundle_.arch.z_dim)});
  for (auto& v : z.data()) v = u(rng_);
  return z;
}

Trainer::StageOne Trainer::discriminator_step(const TensorF& x, const TensorF& c, const TensorF& z) {
  zero_all_grads();
  TensorF fake;
  {
    NoGradGuard guard;
    fake = bundle_.generator.forward(z, c, Mode::Train);
  }
  auto dr = bundle_.discriminator.forward(x, Mode::Train);
  auto df = bundle_.discriminator.forward(fake, Mode::Train);
  auto er = bundle_.classifier.forward(dr.shared);
  auto ef = bundle_.classifier.forward(df.shared.detach());
  auto l_adv = adv_loss_d(dr.source, df.source);
  auto l_real = label_loss(er.c, c);
  auto l_fake = label_loss(ef.c, c);
  const std::vector<TensorF> terms = {l_adv, l_real, l_fake};
  weighted_sum<float>(terms, std::vector<double>{1.0, 1.0, 1.0}).backward();
  opt_d_.step();
  opt_c_.step();
  check_finite("discriminator update");
  return {l_adv.item(), l_real.item(), l_fake.item()};
}

Trainer::GeneratorStep Trainer::generator_step(const TensorF& c, const TensorF& z) {
  zero_all_grads();
  auto fake = bundle_.generator.forward(z, c, Mode::Train);
  auto df = bundle_.discriminator.forward(fake, Mode::Train);
  auto ef = bundle_.classifier.forward(df.shared);
  auto l_adv = adv_loss_g(df.source);
  auto l_label = label_loss(ef.c, c);
  add(l_adv, l_label).backward();
  opt_g_.step();
  check_finite("generator update");
  return {l_adv.item(), l_label.item()};
}

Trainer::StageTwo Trainer::stage2_step(const TensorF& x, const TensorF& c, const TensorF& z) {
  zero_all_grads();
  const LossWeights& w = config_.weights;
  const Distance dist = w.distance;
  StageTwo out;
  TensorF l_per = TensorF::scalar(0.f), l_pix = TensorF::scalar(0.f), l_z = TensorF::scalar(0.f);
  const bool need_rebuild = w.per > 0 || w.pix > 0 || config_.latent_pairing == LatentPairing::Rebuild;
  Encoding<float> enc;
  DiscriminatorOutput<float> dreb;
  if (need_rebuild) {
    auto dr = bundle_.discriminator.forward(x, Mode::Train);
    enc = bundle_.classifier.forward(dr.shared);
    auto rebuilt = bundle_.generator.forward(enc.z, enc.c, Mode::Train);
    if (w.per > 0 || config_.latent_pairing == LatentPairing::Rebuild) {
      dreb = bundle_.discriminator.forward(rebuilt, Mode::Train);
    }
    if (w.per > 0) {
      l_per = perceptual_loss<float>(dr.hidden, dreb.hidden, w.alpha, dist);
      out.l_per = l_per.item();
    }
    if (w.pix > 0) {
      l_pix = pixel_loss(x, rebuilt, dist);
      out.l_pix = l_pix.item();
    }
  }
  if (w.z > 0) {
    if (config_.latent_pairing == LatentPairing::Fake) {
      auto fake = bundle_.generator.forward(z, c, Mode::Train);
      auto df = bundle_.discriminator.forward(fake, Mode::Train);
      l_z = latent_loss(bundle_.classifier.forward(df.shared).z, z, dist);
    } else {
      l_z = latent_loss(bundle_.classifier.forward(dreb.shared).z, enc.z.detach(), dist);
    }
    out.l_z = l_z.item();
  }
  auto total = integrated_loss(l_per, l_pix, l_z, w);
  out.l_inte = total.item();
  if (!std::isfinite(out.l_inte)) {
    throw NumericalError("iteration " + std::to_string(iteration_) + ": integrated loss is not finite");
  }
  if (total.requires_grad()) {
    total.backward();
    opt_g_.step();
    if (config_.stage2_update_dc) opt_dc2_.step();
    check_finite("stage-2 update");
  }
  return out;
}

LossReport Trainer::step(const TensorF& x, const TensorF& c) {
  const Index B = x.dim(0);
  LossReport r;
  r.iteration = iteration_;
  r.epoch = static_cast<int>(epoch_);

  auto one = discriminator_step(x, c, sample_z(B));
  auto gen = generator_step(c, sample_z(B));
  r.d_updates = 1;
  r.g_updates = 1;
  const double a = config_.ema_decay;
  if (!ema_ready_) {
    ema_d_ = one.l_adv_d;
    ema_g_ = gen.l_adv_g;
    ema_ready_ = true;
  } else {
    ema_d_ = a * ema_d_ + (1 - a) * one.l_adv_d;
    ema_g_ = a * ema_g_ + (1 - a) * gen.l_adv_g;
  }
  const double rho = config_.balance_ratio;
  while (ema_d_ > rho * ema_g_ && r.d_updates <= config_.max_extra_updates) {
    one = discriminator_step(x, c, sample_z(B));
    ema_d_ = a * ema_d_ + (1 - a) * one.l_adv_d;
    ++r.d_updates;
  }
  while (ema_g_ > rho * ema_d_ && r.g_updates <= config_.max_extra_updates) {
    gen = generator_step(c, sample_z(B));
    ema_g_ = a * ema_g_ + (1 - a) * gen.l_adv_g;
    ++r.g_updates;
  }
  r.l_adv_d = one.l_adv_d;
  r.l_adv_g = gen.l_adv_g;
  r.l_label = one.l_label_real + one.l_label_fake_c;
  r.total = gen.l_adv_g + r.l_label;

  if (config_.stage2_enabled && warmup_ >= 0 && iteration_ >= warmup_) {
    auto two = stage2_step(x, c, sample_z(B));
    r.l_per = two.l_per;
    r.l_pix = two.l_pix;
    r.l_z = two.l_z;
    r.l_inte = two.l_inte;
    r.total += two.l_inte;
    const double err = r.decomposition_error(config_.weights);
    if (err > 1e-6) {
      throw NumericalError("iteration " + std::to_string(iteration_) + ": l_inte decomposition off by " +
                           std::to_string(err));
    }
  }
  for (double v : {r.l_adv_d, r.l_adv_g, r.l_label}) {
    if (!std::isfinite(v)) throw NumericalError("iteration " + std::to_string(iteration_) + ": loss is not finite");
  }
  ++iteration_;
  return r;
}

long Trainer::warmup_for(Index batches_per_epoch) const {
  return config_.warmup_iters >= 0 ? config_.warmup_iters : static_cast<long>(batches_per_epoch);
}

std::vector<LossReport> Trainer::balanced_epoch(const Dataset& data) {
  std::vector<LossReport> out;
  BatchIterator it(data, config_.batch_size, config_.seed, epoch_);
  warmup_ = warmup_for(it.batches());
  it.seek(position_);
  TensorF x, c;
  while (it.next(x, c)) {
    out.push_back(step(x, c));
    position_ = it.position();
  }
  ++epoch_;
  position_ = 0;
  return out;
}

void Trainer::run(const Dataset& data, long total, const std::function<void(const LossReport&)>& sink) {
  TensorF x, c;
  while (iteration_ < total) {
    BatchIterator it(data, config_.batch_size, config_.seed, epoch_);
    if (it.batches() == 0) throw ArgumentError("dataset smaller than one batch");
    warmup_ = warmup_for(it.batches());
    it.seek(position_);
    while (iteration_ < total && it.next(x, c)) {
      if (observer_) observer_(x, c);
      auto r = step(x, c);
      position_ = it.position();
      if (sink) sink(r);
    }
    if (position_ >= it.batches()) {
      ++epoch_;
      position_ = 0;
    }
  }
}

TrainingState Trainer::state() const {
  TrainingState s;
  s.config = config_;
  s.iteration = iteration_;
  s.epoch = epoch_;
  s.position = position_;
  s.ema_ready = ema_ready_;
  s.ema_d = ema_d_;
  s.ema_g = ema_g_;
  std::ostringstream out;
  out << rng_;
  s.rng = out.str();
  const Adam<float>* opts[] = {&opt_g_, &opt_d_, &opt_c_, &opt_dc2_};
  const char* names[] = {"g", "d", "c", "dc2"};
  for (int k = 0; k < 4; ++k) {
    s.optimizers.push_back({names[k], opts[k]->steps(), opts[k]->first_moments(), opts[k]->second_moments()});
  }
  return s;
}

}  // namespace itgan

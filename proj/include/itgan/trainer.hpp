#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "itgan/data.hpp"
#include "itgan/losses.hpp"
#include "itgan/nn.hpp"
#include "itgan/optim.hpp"

namespace itgan {

/// Which z the latent term compares against.
///  Fake: z̃ = C(D(G(z,c))).z against the sampled z.
///  Rebuild: z̃ of the rebuilt image against the z̃ encoded from x_real.
enum class LatentPairing { Fake, Rebuild };

struct TrainConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 32;
  int epochs = 1;
  long iters = 0;  // when positive, overrides epochs
  double balance_ratio = 2.0;
  int max_extra_updates = 3;
  double ema_decay = 0.9;
  bool stage2_enabled = true;
  bool stage2_update_dc = true;
  double stage2_dc_scale = 0.1;
  long warmup_iters = -1;  // −1: one epoch of stage 1 only
  LatentPairing latent_pairing = LatentPairing::Fake;
  bool freeze_generator = false;
  std::uint64_t seed = 0;
  bool deterministic = false;
  LossWeights weights;

  /// Throws ArgumentError naming the offending field.
  void validate() const;
  AdamConfig adam(double lr_scale = 1.0) const;
  bool operator==(const TrainConfig&) const = default;
};

/// Adam moments and step count under a stable name.
struct OptimizerState {
  std::string name;
  long steps = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
};

/// Everything besides the bundle needed to continue a run bit-for-bit.
struct TrainingState {
  TrainConfig config;
  long iteration = 0;
  long epoch = 0;
  Index position = 0;  // next batch within the epoch
  bool ema_ready = false;
  double ema_d = 0.0;
  double ema_g = 0.0;
  std::string rng;
  std::vector<OptimizerState> optimizers;
};

/// Two-stage iterative trainer. Owns the bundle and the optimizer state.
class Trainer {
 public:
  Trainer(Bundle bundle, TrainConfig config);
  /// Continue from saved state; optimizer layout must match.
  Trainer(Bundle bundle, const TrainingState& state);

  /// One iteration on a batch: balanced stage 1, then stage 2 once warm-up is over.
  LossReport step(const TensorF& x, const TensorF& c);

  /// The remainder of the current epoch.
  std::vector<LossReport> balanced_epoch(const Dataset& data);
  /// Iterate until `total` iterations have run in all.
  void run(const Dataset& data, long total, const std::function<void(const LossReport&)>& sink);
  /// Called by run() with every batch before it is trained on.
  void set_batch_observer(std::function<void(const TensorF& x, const TensorF& c)> fn) { observer_ = std::move(fn); }

  // Individual updates, exposed for tests.
  struct StageOne {
    double l_adv_d = 0, l_label_real = 0, l_label_fake_c = 0;
  };
  StageOne discriminator_step(const TensorF& x, const TensorF& c, const TensorF& z);
  struct GeneratorStep {
    double l_adv_g = 0, l_label_fake = 0;
  };
  GeneratorStep generator_step(const TensorF& c, const TensorF& z);
  struct StageTwo {
    std::optional<double> l_per, l_pix, l_z;
    double l_inte = 0;
  };
  StageTwo stage2_step(const TensorF& x, const TensorF& c, const TensorF& z);

  /// z ~ U(−1,1)^{n×100} from the trainer's stream.
  TensorF sample_z(Index n);

  Bundle& bundle() { return bundle_; }
  const Bundle& bundle() const { return bundle_; }
  const TrainConfig& config() const { return config_; }
  long iteration() const { return iteration_; }
  long epoch() const { return epoch_; }
  /// First iteration that runs stage 2, given a dataset's batches per epoch.
  long warmup_for(Index batches_per_epoch) const;

  TrainingState state() const;

 private:
  void build_optimizers();
  void check_finite(const char* where) const;
  void zero_all_grads();

  Bundle bundle_;
  TrainConfig config_;
  std::mt19937_64 rng_;
  Adam<float> opt_g_, opt_d_, opt_c_, opt_dc2_;
  long iteration_ = 0;
  long epoch_ = 0;
  Index position_ = 0;
  long warmup_ = -1;
  bool ema_ready_ = false;
  double ema_d_ = 0.0, ema_g_ = 0.0;
  std::function<void(const TensorF&, const TensorF&)> observer_;
};

}  // namespace itgan

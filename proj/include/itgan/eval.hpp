#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "itgan/data.hpp"
#include "itgan/image.hpp"
#include "itgan/nn.hpp"
#include "itgan/trainer.hpp"

namespace itgan {

/// Shared embedding has (numerically) zero norm, so no cosine is defined.
class DegenerateEmbeddingError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Fraction of (sample, attribute) pairs where (predicted > threshold) ≠ truth.
double hamming_loss(const TensorF& predicted, const TensorF& truth, double threshold = 0.5);

/// Stand-in for a face-recognition distance: 1 − cos(shared(a), shared(b)) with
/// the judge's discriminator in eval mode. Range [0,2].
double identity_score(const TensorF& a, const TensorF& b, Bundle& judge);
/// Row-wise scores of two [N,3,S,S] batches.
std::vector<double> identity_scores(const TensorF& a, const TensorF& b, Bundle& judge);

/// c̃ = C(D(x)) in eval mode for one [3,S,S] image.
std::vector<float> classify(const TensorF& x, Bundle& bundle);

// ---- attribute edits ---------------------------------------------------------

enum class EditKind { Off, On, Flip };
struct Edit {
  int index = 0;
  EditKind kind = EditKind::On;
  bool operator==(const Edit&) const = default;
};

/// More simultaneous edits than this degrade quality; callers warn.
inline constexpr std::size_t kEditWarningThreshold = 3;

/// `name=0|1|flip`. Unknown names raise ArgumentError listing the valid ones.
Edit parse_edit(const std::string& text, const std::vector<std::string>& names);
/// Same for a JSON value: 0, 1, true, false or "flip".
Edit make_edit(const std::string& name, const nlohmann::json& value, const std::vector<std::string>& names);
std::string valid_names(const std::vector<std::string>& names);
/// Edits rows of c in place. flip writes 1 − round(c̃).
void apply_edits(TensorF& c, const std::vector<Edit>& edits);

struct TransformResult {
  TensorF image;         // [3,S,S], quantised to 8 bits
  Encoding<float> code;  // encoding of the input
  TensorF edited_c;      // [1,d] as fed to G
  double identity = 0.0;
};
/// encode → edit → decode; identity of input vs output, judged by the same bundle.
TransformResult transform(Bundle& bundle, const TensorF& x, const std::vector<Edit>& edits);

// ---- held-out evaluation -----------------------------------------------------

struct EvalReport {
  Index count = 0;
  double hamming = 0.0;
  std::vector<double> identity_scores;
  double identity_mean = 0.0;
  double pixel_mse = 0.0;
  /// mean ‖z̃ − z‖² over fresh fakes G(z, c_real), summed over the 100 dims.
  double latent_error = 0.0;
};

/// `judge` scores x against rebuild(x); pass the evaluated bundle itself when no
/// separate judge is wanted. z for the latent error comes from `seed`.
EvalReport evaluate(Bundle& bundle, Bundle& judge, const Dataset& data, std::uint64_t seed, Index limit = 0);
nlohmann::json to_json(const EvalReport& r, bool with_scores = false);

// ---- loss ablation -----------------------------------------------------------

enum class AblationSetting { PixelOnly, ZOnly, PixelPlusZ, Integrated };
inline constexpr std::array<AblationSetting, 4> kAblationSettings = {
    AblationSetting::PixelOnly, AblationSetting::ZOnly, AblationSetting::PixelPlusZ, AblationSetting::Integrated};
std::string to_string(AblationSetting s);
AblationSetting parse_ablation_setting(const std::string& s);
/// (0,λ2,0), (0,0,λ3), (0,λ2,λ3), (λ1,λ2,λ3) taken from `base`.
LossWeights ablation_weights(AblationSetting s, const LossWeights& base);

struct AblationOptions {
  long iters = 3000;         // total iterations per setting, warm-up included
  long warmup = -1;          // −1: one epoch; shared by every setting
  Index eval_limit = 512;    // held-out images scored
  int preview = 8;           // rebuilt samples kept for the contact sheet
  std::function<void(AblationSetting, const LossReport&)> progress;
};

struct SettingResult {
  AblationSetting setting = AblationSetting::Integrated;
  LossWeights weights;
  EvalReport eval;
  std::uint64_t data_digest = 0;  // hash of every batch the setting trained on
  TensorF preview;                // [k,3,S,S] rebuilds of the first held-out images
};

struct AblationReport {
  std::string judge;
  long warmup = 0;
  long iters = 0;
  std::uint64_t init_digest = 0;
  TensorF targets;  // [k,3,S,S]
  std::vector<SettingResult> settings;
  const SettingResult& at(AblationSetting s) const;
};

/// Trains the four settings from one shared initialisation and warm-up, then
/// evaluates each on `heldout`. Identity scores are judged by the warm-up model,
/// which all settings share and none of them trains further.
AblationReport run_ablation(const Dataset& train, const Dataset& heldout, Bundle init, TrainConfig base,
                            const AblationOptions& options, std::vector<Bundle>* trained = nullptr);
nlohmann::json to_json(const AblationReport& r);
std::string format_table(const AblationReport& r);
/// Targets on the first row, then one row of rebuilds per setting.
Image ablation_sheet(const AblationReport& r);

/// FNV-1a over raw bytes; used for batch and parameter digests.
std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 1469598103934665603ull);
std::uint64_t bundle_digest(const Bundle& b);

}  // namespace itgan

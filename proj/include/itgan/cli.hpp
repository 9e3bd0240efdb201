#pragma once

#include <filesystem>
#include <memory>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "itgan/data.hpp"
#include "itgan/nn.hpp"
#include "itgan/trainer.hpp"

namespace itgan {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitIo = 4;

/// Where training and held-out images come from.
struct DataConfig {
  bool synthetic = false;
  Index count = 4000;       // synthetic training images
  Index test_count = 512;   // synthetic held-out images (the indices after `count`)
  std::uint64_t seed = 0;   // synthetic rendering / CelebA split seed
  double p = 0.5;
  std::string data_dir;
  std::string attrs_file;
  bool operator==(const DataConfig&) const = default;
};

nlohmann::json to_json(const DataConfig& d);
void merge_json(const nlohmann::json& j, DataConfig& d);

struct Datasets {
  std::shared_ptr<const Dataset> train;
  std::shared_ptr<const Dataset> test;
};
/// Synthetic sprites or a CelebA-layout directory split into train/test.
Datasets make_datasets(const DataConfig& d, int image_size);

/// Effective run configuration: {"arch", "train", "data"}.
struct RunConfig {
  ArchConfig arch;
  TrainConfig train;
  DataConfig data;
};
nlohmann::json to_json(const RunConfig& r);
void merge_json(const nlohmann::json& j, RunConfig& r);
RunConfig default_run_config();

/// Reads an image file and brings it to the model's S×S input.
TensorF load_model_image(const std::filesystem::path& path, int image_size);

/// Entry point of the `itgan` tool. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace itgan

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "itgan/errors.hpp"
#include "itgan/nn.hpp"
#include "itgan/trainer.hpp"

namespace itgan {

/// 7-byte magic; the trailing digits are the format version.
inline constexpr char kCheckpointMagic[] = "ITGAN01";

class CheckpointError : public IoError {
 public:
  using IoError::IoError;
};

/// File written by another format version.
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// Stored CRC32 does not match the content.
class CheckpointChecksumError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// File ends before the declared content; also a checksum failure.
class CheckpointTruncatedError : public CheckpointChecksumError {
 public:
  using CheckpointChecksumError::CheckpointChecksumError;
};

struct Checkpoint {
  Bundle bundle;
  std::optional<TrainingState> training;
};

/// magic · u64 LE header length · JSON header · LE f32 payloads · CRC32 LE.
std::vector<std::uint8_t> checkpoint_bytes(const Bundle& bundle, const TrainingState* training = nullptr);
Checkpoint checkpoint_parse(std::span<const std::uint8_t> bytes);

/// Writes through a temporary file and renames, so readers never see a partial file.
void checkpoint_save(const std::filesystem::path& path, const Bundle& bundle,
                     const TrainingState* training = nullptr);
Checkpoint checkpoint_load(const std::filesystem::path& path);

}  // namespace itgan

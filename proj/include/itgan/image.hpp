#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "itgan/tensor.hpp"

namespace itgan {

/// Pixels are kept this far inside (−1,1).
inline constexpr float kPixelEps = 1e-6f;

/// 8-bit interleaved RGB raster.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // height·width·3, row-major

  std::uint8_t at(int y, int x, int ch) const { return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + ch]; }
  bool operator==(const Image&) const = default;
};

/// PNG or JPEG, detected by signature.
Image decode_image(std::span<const std::uint8_t> bytes);
Image read_image(const std::filesystem::path& path);

/// Deterministic PNG encoding (fixed compression level, no timestamps).
std::vector<std::uint8_t> encode_png(const Image& image);
void write_png(const std::filesystem::path& path, const Image& image);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// [3,S,S] tensor in (−1,1) → image; values map through (v+1)·127.5, rounded.
Image tensor_to_image(const TensorF& chw);
/// Image → [3,H,W] with x/127.5 − 1 clamped strictly inside (−1,1).
TensorF image_to_tensor(const Image& image);

/// Contact sheet of [N,3,S,S] images, `per_row` cells per row, 1-pixel gutters.
Image image_grid(const TensorF& batch, int per_row = 8);

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws ParseError on characters outside the alphabet or bad padding.
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace itgan

#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "itgan/image.hpp"
#include "itgan/tensor.hpp"

namespace itgan {

/// One image with its {0,1} attribute labels.
struct LabeledImage {
  TensorF pixels;            // [3,S,S] in (−1,1)
  std::vector<float> attrs;  // length d, values 0 or 1
  std::string id;
};

/// Read-only random-access image source.
class Dataset {
 public:
  virtual ~Dataset() = default;
  virtual Index size() const = 0;
  virtual int image_size() const = 0;
  virtual const std::vector<std::string>& attributes() const = 0;
  /// Writes 3·S·S pixels and d labels.
  virtual void load(Index i, float* pixels, float* attrs) const = 0;
  virtual std::string id(Index i) const = 0;

  LabeledImage get(Index i) const;
};

class InMemoryDataset : public Dataset {
 public:
  InMemoryDataset(std::vector<std::string> attributes, int image_size);
  void add(const LabeledImage& item);

  Index size() const override { return static_cast<Index>(ids_.size()); }
  int image_size() const override { return size_; }
  const std::vector<std::string>& attributes() const override { return names_; }
  void load(Index i, float* pixels, float* attrs) const override;
  std::string id(Index i) const override { return ids_.at(static_cast<std::size_t>(i)); }

 private:
  std::vector<std::string> names_;
  int size_;
  std::vector<float> pixels_;
  std::vector<float> labels_;
  std::vector<std::string> ids_;
};

/// Selected rows of another dataset.
class SubsetDataset : public Dataset {
 public:
  SubsetDataset(std::shared_ptr<const Dataset> base, std::vector<Index> rows);

  Index size() const override { return static_cast<Index>(rows_.size()); }
  int image_size() const override { return base_->image_size(); }
  const std::vector<std::string>& attributes() const override { return base_->attributes(); }
  void load(Index i, float* pixels, float* attrs) const override;
  std::string id(Index i) const override { return base_->id(rows_.at(static_cast<std::size_t>(i))); }
  const std::vector<Index>& rows() const { return rows_; }

 private:
  std::shared_ptr<const Dataset> base_;
  std::vector<Index> rows_;
};

// ---- synthetic sprites ---------------------------------------------------

/// round_face, glasses, bangs, smile, mustache, dark_hair, hat, big_eyes.
const std::vector<std::string>& synthetic_attributes();

struct SyntheticSpec {
  int image_size = 32;
  std::uint64_t seed = 0;
  double p = 0.5;
  bool operator==(const SyntheticSpec&) const = default;
};

/// Rendering of sample `index`; identical for identical (spec, index).
LabeledImage synth_render(const SyntheticSpec& spec, Index index);
/// Same nuisance draw as synth_render(spec, index) but with the given labels.
LabeledImage synth_render(const SyntheticSpec& spec, Index index, const std::vector<int>& attrs);
std::vector<LabeledImage> synth_generate(const SyntheticSpec& spec, Index n);
std::shared_ptr<InMemoryDataset> synth_dataset(const SyntheticSpec& spec, Index n);

/// Pixel rectangle [x0,x1) × [y0,y1) that contains every pixel the glasses touch.
struct PixelBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};
PixelBox glasses_box(const SyntheticSpec& spec, Index index);

/// Hand-written reader of the sprite geometry; returns 0/1 per attribute.
std::vector<int> detect_attributes(const TensorF& pixels);

// ---- CelebA-format ingestion ---------------------------------------------

inline constexpr int kCelebaAttributeCount = 40;

/// ±1 external encoding ↔ {0,1} stored form.
float decode_label(int v);
int encode_label(float v);

struct AttributeTable {
  std::vector<std::string> names;
  std::vector<std::string> files;
  std::vector<std::vector<float>> labels;  // {0,1}
};

/// Count line, name line, then `file v1 .. vd` rows with v ∈ {−1,1}.
/// Errors name the 1-based line.
AttributeTable parse_attribute_list(std::istream& in, int expected_count = kCelebaAttributeCount);
AttributeTable read_attribute_list(const std::filesystem::path& path,
                                   int expected_count = kCelebaAttributeCount);
void write_attribute_list(std::ostream& out, const AttributeTable& table);

/// Minimum source side for the face crop.
inline constexpr int kCelebaMinSide = 178;

/// Centre square crop (vertical centre for portrait sources), bilinear resize
/// to size×size, x/127.5 − 1 clamped inside (−1,1).
TensorF preprocess(const Image& image, int size, int min_side = kCelebaMinSide);

/// Bilinear resize with half-pixel centres and clamped edges, float RGB planes.
std::vector<float> resize_bilinear(const std::vector<float>& planes, int channels, int in_h, int in_w,
                                   int out_h, int out_w);

/// Lazily decoded image directory + attribute list.
class CelebaDataset : public Dataset {
 public:
  /// Rows whose image file is missing are skipped and counted.
  CelebaDataset(const std::filesystem::path& image_dir, const std::filesystem::path& attr_file,
                int image_size, int expected_count = kCelebaAttributeCount);

  Index size() const override { return static_cast<Index>(table_.files.size()); }
  int image_size() const override { return size_; }
  const std::vector<std::string>& attributes() const override { return table_.names; }
  void load(Index i, float* pixels, float* attrs) const override;
  std::string id(Index i) const override { return table_.files.at(static_cast<std::size_t>(i)); }
  Index missing() const { return missing_; }

 private:
  std::filesystem::path dir_;
  AttributeTable table_;
  int size_;
  Index missing_ = 0;
};

// ---- splitting and batching -------------------------------------------------

inline constexpr Index kFullTrain = 185000;
inline constexpr Index kFullTest = 15000;

struct Split {
  std::vector<Index> train;
  std::vector<Index> test;
};

/// 185000/15000 once n reaches their sum, otherwise 92.5% / 7.5%.
Split split_indices(Index n, std::uint64_t seed);

/// Epoch-deterministic shuffled batches; the final partial batch is dropped.
class BatchIterator {
 public:
  BatchIterator(const Dataset& data, Index batch_size, std::uint64_t seed, long epoch);

  Index batches() const { return static_cast<Index>(order_.size()) / batch_; }
  /// Fills x [B,3,S,S] and c [B,d]; false once the epoch is exhausted.
  bool next(TensorF& x, TensorF& c);
  /// Jump to batch `b` of this epoch (used when resuming).
  void seek(Index b) { cursor_ = b; }
  Index position() const { return cursor_; }
  const std::vector<Index>& order() const { return order_; }

 private:
  const Dataset& data_;
  Index batch_;
  std::vector<Index> order_;
  Index cursor_ = 0;
};

/// Loads rows [begin,end) of `data` as one batch.
void load_rows(const Dataset& data, const std::vector<Index>& rows, TensorF& x, TensorF& c);

}  // namespace itgan

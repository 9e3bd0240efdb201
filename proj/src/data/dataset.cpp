#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "itgan/data.hpp"
#include "itgan/errors.hpp"

namespace itgan {

LabeledImage Dataset::get(Index i) const {
  const int S = image_size();
  LabeledImage out;
  out.pixels = TensorF({3, S, S});
  out.attrs.resize(attributes().size());
  load(i, out.pixels.data().data(), out.attrs.data());
  out.id = id(i);
  return out;
}

InMemoryDataset::InMemoryDataset(std::vector<std::string> attributes, int image_size)
    : names_(std::move(attributes)), size_(image_size) {}

void InMemoryDataset::add(const LabeledImage& item) {
  if (item.pixels.shape() != Shape{3, size_, size_}) {
    throw DimensionError("dataset expects [3," + std::to_string(size_) + "," + std::to_string(size_) + "], got " +
                         shape_str(item.pixels.shape()));
  }
  if (item.attrs.size() != names_.size()) {
    throw DimensionError("dataset expects " + std::to_string(names_.size()) + " labels, got " +
                         std::to_string(item.attrs.size()));
  }
  pixels_.insert(pixels_.end(), item.pixels.data().begin(), item.pixels.data().end());
  labels_.insert(labels_.end(), item.attrs.begin(), item.attrs.end());
  ids_.push_back(item.id);
}

void InMemoryDataset::load(Index i, float* pixels, float* attrs) const {
  if (i < 0 || i >= size()) throw ArgumentError("dataset index " + std::to_string(i) + " out of range");
  const std::size_t n = static_cast<std::size_t>(3) * size_ * size_;
  const std::size_t d = names_.size();
  std::copy_n(pixels_.begin() + static_cast<std::ptrdiff_t>(n * i), n, pixels);
  std::copy_n(labels_.begin() + static_cast<std::ptrdiff_t>(d * i), d, attrs);
}

SubsetDataset::SubsetDataset(std::shared_ptr<const Dataset> base, std::vector<Index> rows)
    : base_(std::move(base)), rows_(std::move(rows)) {
  for (Index r : rows_) {
    if (r < 0 || r >= base_->size()) throw ArgumentError("subset row " + std::to_string(r) + " out of range");
  }
}

void SubsetDataset::load(Index i, float* pixels, float* attrs) const {
  base_->load(rows_.at(static_cast<std::size_t>(i)), pixels, attrs);
}

// ---- labels ---------------------------------------------------------------

float decode_label(int v) {
  if (v == 1) return 1.0f;
  if (v == -1) return 0.0f;
  throw ArgumentError("attribute value must be -1 or 1, got " + std::to_string(v));
}

int encode_label(float v) {
  if (v == 1.0f) return 1;
  if (v == 0.0f) return -1;
  throw ArgumentError("stored attribute must be 0 or 1, got " + std::to_string(v));
}

AttributeTable parse_attribute_list(std::istream& in, int expected_count) {
  AttributeTable table;
  std::string line;
  long line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
  };
  if (!next_line()) throw ParseError("line 1: missing image count");
  long declared = 0;
  {
    std::istringstream ss(line);
    std::string extra;
    if (!(ss >> declared) || (ss >> extra) || declared < 0) {
      throw ParseError("line " + std::to_string(line_no) + ": expected an image count, got '" + line + "'");
    }
  }
  if (!next_line()) throw ParseError("line " + std::to_string(line_no + 1) + ": missing attribute names");
  {
    std::istringstream ss(line);
    std::string name;
    while (ss >> name) table.names.push_back(name);
  }
  if (static_cast<int>(table.names.size()) != expected_count) {
    throw FormatError("line " + std::to_string(line_no) + ": expected " + std::to_string(expected_count) +
                      " attribute names, got " + std::to_string(table.names.size()));
  }
  const std::size_t d = table.names.size();
  while (next_line()) {
    std::istringstream ss(line);
    std::string file;
    ss >> file;
    std::vector<float> labels;
    std::string tok;
    while (ss >> tok) {
      int v = 0;
      if (tok == "1") v = 1;
      else if (tok == "-1") v = -1;
      else throw ParseError("line " + std::to_string(line_no) + ": attribute value '" + tok + "' is not -1 or 1");
      labels.push_back(decode_label(v));
    }
    if (labels.size() != d) {
      throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(d) + " values, got " +
                       std::to_string(labels.size()));
    }
    table.files.push_back(file);
    table.labels.push_back(std::move(labels));
  }
  if (static_cast<long>(table.files.size()) != declared) {
    throw ParseError("line 1: declared " + std::to_string(declared) + " images but found " +
                     std::to_string(table.files.size()) + " rows");
  }
  return table;
}

AttributeTable read_attribute_list(const std::filesystem::path& path, int expected_count) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open attribute list " + path.string());
  return parse_attribute_list(in, expected_count);
}

void write_attribute_list(std::ostream& out, const AttributeTable& table) {
  out << table.files.size() << "\n";
  for (std::size_t i = 0; i < table.names.size(); ++i) out << (i ? " " : "") << table.names[i];
  out << "\n";
  for (std::size_t r = 0; r < table.files.size(); ++r) {
    out << table.files[r];
    for (float v : table.labels[r]) out << (encode_label(v) > 0 ? "  1" : " -1");
    out << "\n";
  }
}

// ---- preprocessing ----------------------------------------------------------

std::vector<float> resize_bilinear(const std::vector<float>& planes, int channels, int in_h, int in_w, int out_h,
                                   int out_w) {
  if (in_h < 1 || in_w < 1 || out_h < 1 || out_w < 1) throw DimensionError("resize_bilinear: empty extent");
  std::vector<float> out(static_cast<std::size_t>(channels) * out_h * out_w);
  const double sy = static_cast<double>(in_h) / out_h, sx = static_cast<double>(in_w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in_h - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, in_h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in_w - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, in_w - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < channels; ++ch) {
        const float* p = planes.data() + static_cast<std::size_t>(ch) * in_h * in_w;
        const double top = p[y0 * in_w + x0] * (1 - wx) + p[y0 * in_w + x1] * wx;
        const double bot = p[y1 * in_w + x0] * (1 - wx) + p[y1 * in_w + x1] * wx;
        out[(static_cast<std::size_t>(ch) * out_h + y) * out_w + x] = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

TensorF preprocess(const Image& image, int size, int min_side) {
  if (size < 1) throw ArgumentError("preprocess: size must be positive");
  if (image.width < min_side || image.height < min_side) {
    throw DimensionError("preprocess: image " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                         " is smaller than " + std::to_string(min_side) + "x" + std::to_string(min_side));
  }
  const int side = std::min(image.width, image.height);
  const int ox = (image.width - side) / 2, oy = (image.height - side) / 2;
  std::vector<float> planes(static_cast<std::size_t>(3) * side * side);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      for (int ch = 0; ch < 3; ++ch)
        planes[(static_cast<std::size_t>(ch) * side + y) * side + x] = image.at(oy + y, ox + x, ch);
  auto resized = side == size ? planes : resize_bilinear(planes, 3, side, side, size, size);
  for (auto& v : resized) v = std::clamp(v / 127.5f - 1.0f, -1.0f + kPixelEps, 1.0f - kPixelEps);
  return TensorF({3, size, size}, std::move(resized));
}

CelebaDataset::CelebaDataset(const std::filesystem::path& image_dir, const std::filesystem::path& attr_file,
                             int image_size, int expected_count)
    : dir_(image_dir), size_(image_size) {
  AttributeTable all = read_attribute_list(attr_file, expected_count);
  table_.names = all.names;
  for (std::size_t i = 0; i < all.files.size(); ++i) {
    if (std::filesystem::exists(dir_ / all.files[i])) {
      table_.files.push_back(all.files[i]);
      table_.labels.push_back(std::move(all.labels[i]));
    } else {
      ++missing_;
    }
  }
}

void CelebaDataset::load(Index i, float* pixels, float* attrs) const {
  const auto k = static_cast<std::size_t>(i);
  const TensorF t = preprocess(read_image(dir_ / table_.files.at(k)), size_);
  std::copy(t.data().begin(), t.data().end(), pixels);
  std::copy(table_.labels[k].begin(), table_.labels[k].end(), attrs);
}

// ---- splitting and batching -------------------------------------------------

Split split_indices(Index n, std::uint64_t seed) {
  if (n < 2) throw ArgumentError("split_indices: need at least 2 samples, got " + std::to_string(n));
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  Index train = 0, test = 0;
  if (n >= kFullTrain + kFullTest) {
    train = kFullTrain;
    test = kFullTest;
  } else {
    train = std::clamp<Index>(static_cast<Index>(std::llround(0.925 * static_cast<double>(n))), 1, n - 1);
    test = n - train;
  }
  Split s;
  s.train.assign(perm.begin(), perm.begin() + train);
  s.test.assign(perm.begin() + train, perm.begin() + train + test);
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

BatchIterator::BatchIterator(const Dataset& data, Index batch_size, std::uint64_t seed, long epoch)
    : data_(data), batch_(batch_size) {
  if (data.size() == 0) throw ArgumentError("batch_iter: dataset is empty");
  if (batch_size < 1 || batch_size > data.size()) {
    throw ArgumentError("batch_iter: batch size " + std::to_string(batch_size) + " not in [1, " +
                        std::to_string(data.size()) + "]");
  }
  order_.resize(static_cast<std::size_t>(data.size()));
  std::iota(order_.begin(), order_.end(), Index{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(static_cast<std::uint64_t>(epoch) >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(order_.begin(), order_.end(), rng);
}

bool BatchIterator::next(TensorF& x, TensorF& c) {
  if (cursor_ >= batches()) return false;
  std::vector<Index> rows(order_.begin() + cursor_ * batch_, order_.begin() + (cursor_ + 1) * batch_);
  load_rows(data_, rows, x, c);
  ++cursor_;
  return true;
}

void load_rows(const Dataset& data, const std::vector<Index>& rows, TensorF& x, TensorF& c) {
  const Index B = static_cast<Index>(rows.size());
  const Index S = data.image_size();
  const Index d = static_cast<Index>(data.attributes().size());
  x = TensorF({B, 3, S, S});
  c = TensorF({B, d});
  for (Index b = 0; b < B; ++b) {
    data.load(rows[static_cast<std::size_t>(b)], x.data().data() + b * 3 * S * S, c.data().data() + b * d);
  }
}

}  // namespace itgan

#include "itgan/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "itgan/config.hpp"
#include "itgan/image.hpp"

namespace itgan {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

namespace {

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;
constexpr std::size_t kPrefix = kMagicLen + 8;

std::uint32_t crc_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = crc32(crc, bytes.data() + pos, static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

struct Blob {
  std::string name;
  Shape shape;
  const float* data;
  std::size_t count;
};

}  // namespace

std::vector<std::uint8_t> checkpoint_bytes(const Bundle& bundle, const TrainingState* training) {
  std::vector<Blob> blobs;
  const auto state = bundle.state();
  for (const auto& [name, t] : state) blobs.push_back({name, t.shape(), t.data().data(), t.data().size()});
  if (training) {
    for (const auto& opt : training->optimizers) {
      for (std::size_t i = 0; i < opt.m.size(); ++i) {
        const std::string base = "opt." + opt.name + "." + std::to_string(i);
        blobs.push_back({base + ".m", {static_cast<Index>(opt.m[i].size())}, opt.m[i].data(), opt.m[i].size()});
        blobs.push_back({base + ".v", {static_cast<Index>(opt.v[i].size())}, opt.v[i].data(), opt.v[i].size()});
      }
    }
  }

  json dir = json::array();
  std::uint64_t offset = 0;
  for (const auto& b : blobs) {
    dir.push_back({{"name", b.name}, {"dtype", "f32"}, {"shape", b.shape}, {"offset", offset}});
    offset += b.count * sizeof(float);
  }
  json header = {{"format_version", 1},
                 {"arch", to_json(bundle.arch)},
                 {"attributes", bundle.attributes},
                 {"tensors", dir},
                 {"payload_bytes", offset}};
  if (training) {
    json opts = json::array();
    for (const auto& o : training->optimizers) opts.push_back({{"name", o.name}, {"steps", o.steps}, {"count", o.m.size()}});
    header["training"] = {{"config", to_json(training->config)},
                          {"iteration", training->iteration},
                          {"epoch", training->epoch},
                          {"position", training->position},
                          {"ema_ready", training->ema_ready},
                          {"ema_d", training->ema_d},
                          {"ema_g", training->ema_g},
                          {"rng", training->rng},
                          {"optimizers", opts}};
  } else {
    header["training"] = nullptr;
  }
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.reserve(kPrefix + text.size() + offset + 4);
  out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + kMagicLen);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& b : blobs) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(b.data);
    out.insert(out.end(), p, p + b.count * sizeof(float));
  }
  const std::uint32_t crc = crc_of(out);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
  return out;
}

Checkpoint checkpoint_parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPrefix) throw CheckpointTruncatedError("checkpoint: file ends inside the preamble");
  if (std::memcmp(bytes.data(), "ITGAN", 5) != 0) throw CheckpointError("checkpoint: bad magic, not a checkpoint file");
  if (std::memcmp(bytes.data(), kCheckpointMagic, kMagicLen) != 0) {
    throw CheckpointVersionError("checkpoint: format version " + std::string(bytes.begin() + 5, bytes.begin() + 7) +
                                 " is not supported (expected " + std::string(kCheckpointMagic + 5) + ")");
  }
  const std::uint64_t hlen = get_u64(bytes.data() + kMagicLen);
  if (hlen > bytes.size() || kPrefix + hlen + 4 > bytes.size()) {
    throw CheckpointTruncatedError("checkpoint: file ends inside the header");
  }
  const std::uint32_t stored = static_cast<std::uint32_t>(bytes[bytes.size() - 4]) |
                               static_cast<std::uint32_t>(bytes[bytes.size() - 3]) << 8 |
                               static_cast<std::uint32_t>(bytes[bytes.size() - 2]) << 16 |
                               static_cast<std::uint32_t>(bytes[bytes.size() - 1]) << 24;
  const bool crc_ok = crc_of(bytes.first(bytes.size() - 4)) == stored;

  json header;
  try {
    header = json::parse(bytes.begin() + kPrefix, bytes.begin() + kPrefix + hlen);
  } catch (const json::exception&) {
    if (!crc_ok) throw CheckpointChecksumError("checkpoint: CRC32 mismatch");
    throw CheckpointError("checkpoint: malformed header");
  }
  try {
    const std::uint64_t payload = header.at("payload_bytes").get<std::uint64_t>();
    const std::uint64_t expected = kPrefix + hlen + payload + 4;
    if (bytes.size() < expected) {
      throw CheckpointTruncatedError("checkpoint: file has " + std::to_string(bytes.size()) + " bytes, header declares " +
                                     std::to_string(expected));
    }
    if (bytes.size() > expected) throw CheckpointChecksumError("checkpoint: trailing bytes after the CRC");
    if (!crc_ok) throw CheckpointChecksumError("checkpoint: CRC32 mismatch");
    if (header.at("format_version").get<int>() != 1) throw CheckpointVersionError("checkpoint: header version mismatch");

    ArchConfig arch;
    merge_json(header.at("arch"), arch);
    auto attributes = header.at("attributes").get<std::vector<std::string>>();
    Checkpoint ck{init_params<float>(arch, attributes, 0), std::nullopt};

    std::map<std::string, std::pair<Shape, std::uint64_t>> dir;
    for (const auto& e : header.at("tensors")) {
      if (e.at("dtype").get<std::string>() != "f32") throw CheckpointError("checkpoint: unsupported dtype");
      dir[e.at("name").get<std::string>()] = {e.at("shape").get<Shape>(), e.at("offset").get<std::uint64_t>()};
    }
    const std::uint8_t* base = bytes.data() + kPrefix + hlen;
    auto fetch = [&](const std::string& name, const Shape& shape, float* dst) {
      auto it = dir.find(name);
      if (it == dir.end()) throw CheckpointError("checkpoint: tensor " + name + " is missing");
      if (it->second.first != shape) {
        throw CheckpointError("checkpoint: tensor " + name + " has shape " + shape_str(it->second.first) +
                              ", expected " + shape_str(shape));
      }
      const std::uint64_t n = static_cast<std::uint64_t>(shape_numel(shape)) * sizeof(float);
      if (it->second.second + n > payload) throw CheckpointError("checkpoint: tensor " + name + " overruns payload");
      std::memcpy(dst, base + it->second.second, n);
      dir.erase(it);
    };
    for (auto& [name, t] : ck.bundle.state()) fetch(name, t.shape(), t.data().data());

    const json& tr = header.at("training");
    if (!tr.is_null()) {
      TrainingState s;
      merge_json(tr.at("config"), s.config);
      s.iteration = tr.at("iteration").get<long>();
      s.epoch = tr.at("epoch").get<long>();
      s.position = tr.at("position").get<Index>();
      s.ema_ready = tr.at("ema_ready").get<bool>();
      s.ema_d = tr.at("ema_d").get<double>();
      s.ema_g = tr.at("ema_g").get<double>();
      s.rng = tr.at("rng").get<std::string>();
      for (const auto& o : tr.at("optimizers")) {
        OptimizerState os;
        os.name = o.at("name").get<std::string>();
        os.steps = o.at("steps").get<long>();
        const auto count = o.at("count").get<std::size_t>();
        for (std::size_t i = 0; i < count; ++i) {
          const std::string stem = "opt." + os.name + "." + std::to_string(i);
          const auto& sm = dir.count(stem + ".m") ? dir[stem + ".m"].first : Shape{};
          if (sm.size() != 1) throw CheckpointError("checkpoint: tensor " + stem + ".m is missing");
          std::vector<float> m(static_cast<std::size_t>(sm[0])), v(static_cast<std::size_t>(sm[0]));
          fetch(stem + ".m", sm, m.data());
          fetch(stem + ".v", Shape{sm[0]}, v.data());
          os.m.push_back(std::move(m));
          os.v.push_back(std::move(v));
        }
        s.optimizers.push_back(std::move(os));
      }
      ck.training = std::move(s);
    }
    if (!dir.empty()) throw CheckpointError("checkpoint: unexpected tensor " + dir.begin()->first);
    return ck;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: invalid header content: ") + e.what());
  }
}

void checkpoint_save(const std::filesystem::path& path, const Bundle& bundle, const TrainingState* training) {
  const auto bytes = checkpoint_bytes(bundle, training);
  auto tmp = path;
  tmp += ".tmp";
  write_file(tmp, bytes);
  std::filesystem::rename(tmp, path);
}

Checkpoint checkpoint_load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return checkpoint_parse(bytes);
}

}  // namespace itgan

#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dqbc/schema.hpp"
#include "dqbc/synthesis.hpp"

namespace dqbc {

// Single-file tensor container: 4-byte magic "DQBW", 4-byte little-endian
// version, 8-byte little-endian header length, UTF-8 JSON header mapping
// names to {shape, dtype:"f32le", offset}, then the raw payload. Offsets are
// byte offsets into the payload. Save-then-load is bitwise identity.
struct WeightArchive {
  struct Entry {
    std::string name;
    std::vector<int> shape;
    uint64_t offset = 0;  // bytes into payload

    size_t element_count() const {
      size_t n = 1;
      for (int d : shape) n *= static_cast<size_t>(d);
      return n;
    }
  };

  std::vector<Entry> entries;
  std::vector<uint8_t> payload;

  static constexpr char kMagic[4] = {'D', 'Q', 'B', 'W'};
  static constexpr uint32_t kVersion = 1;

  const Entry* find(const std::string& name) const {
    for (const auto& e : entries) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }

  // Appends a named f32 tensor, laying its data out after everything already
  // stored.
  Entry& add(const std::string& name, std::vector<int> shape,
             const std::vector<float>& values) {
    Entry e;
    e.name = name;
    e.shape = std::move(shape);
    e.offset = payload.size();
    if (values.size() != e.element_count()) {
      throw ConfigError("WeightArchive::add: " + name + " shape/data mismatch");
    }
    payload.resize(payload.size() + values.size() * 4);
    uint8_t* dst = payload.data() + e.offset;
    for (float v : values) {
      const uint32_t bits = std::bit_cast<uint32_t>(v);
      dst[0] = static_cast<uint8_t>(bits);
      dst[1] = static_cast<uint8_t>(bits >> 8);
      dst[2] = static_cast<uint8_t>(bits >> 16);
      dst[3] = static_cast<uint8_t>(bits >> 24);
      dst += 4;
    }
    entries.push_back(std::move(e));
    return entries.back();
  }

  std::vector<float> read(const Entry& e) const {
    const size_t n = e.element_count();
    if (e.offset + n * 4 > payload.size()) {
      throw FormatError("WeightArchive: entry " + e.name +
                        " offset out of bounds");
    }
    std::vector<float> out(n);
    const uint8_t* src = payload.data() + e.offset;
    for (size_t i = 0; i < n; ++i) {
      const uint32_t bits = static_cast<uint32_t>(src[0]) |
                            static_cast<uint32_t>(src[1]) << 8 |
                            static_cast<uint32_t>(src[2]) << 16 |
                            static_cast<uint32_t>(src[3]) << 24;
      out[i] = std::bit_cast<float>(bits);
      src += 4;
    }
    return out;
  }
};

namespace detail {
inline void put_u32le(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 24));
}

inline void put_u64le(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
}  // namespace detail

inline std::vector<uint8_t> serialize_archive(const WeightArchive& archive) {
  nlohmann::json header = nlohmann::json::object();
  for (const auto& e : archive.entries) {
    header[e.name] = {{"shape", e.shape},
                      {"dtype", "f32le"},
                      {"offset", e.offset}};
  }
  const std::string header_text = header.dump();
  std::vector<uint8_t> out;
  out.reserve(16 + header_text.size() + archive.payload.size());
  out.insert(out.end(), WeightArchive::kMagic, WeightArchive::kMagic + 4);
  detail::put_u32le(out, WeightArchive::kVersion);
  detail::put_u64le(out, header_text.size());
  out.insert(out.end(), header_text.begin(), header_text.end());
  out.insert(out.end(), archive.payload.begin(), archive.payload.end());
  return out;
}

inline void save_archive(const WeightArchive& archive, const std::string& path) {
  const std::vector<uint8_t> bytes = serialize_archive(archive);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("save_archive: cannot open " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("save_archive: write failed for " + path);
}

inline WeightArchive parse_archive(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), WeightArchive::kMagic, 4) != 0) {
    throw FormatError("archive: bad magic");
  }
  uint32_t version = 0;
  for (int i = 0; i < 4; ++i) version |= static_cast<uint32_t>(bytes[4 + i]) << (8 * i);
  if (version != WeightArchive::kVersion) {
    throw FormatError("archive: unsupported version " + std::to_string(version));
  }
  uint64_t header_len = 0;
  for (int i = 0; i < 8; ++i) header_len |= static_cast<uint64_t>(bytes[8 + i]) << (8 * i);
  if (16 + header_len > bytes.size()) {
    throw FormatError("archive: header length exceeds file size");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16,
                                   bytes.begin() + 16 + static_cast<size_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("archive: malformed header: ") + e.what());
  }
  if (!header.is_object()) throw FormatError("archive: header is not an object");

  WeightArchive archive;
  archive.payload.assign(bytes.begin() + 16 + static_cast<size_t>(header_len),
                         bytes.end());
  for (auto it = header.begin(); it != header.end(); ++it) {
    const nlohmann::json& v = it.value();
    if (!v.contains("shape") || !v.contains("dtype") || !v.contains("offset")) {
      throw FormatError("archive: entry " + it.key() + " missing fields");
    }
    if (v["dtype"].get<std::string>() != "f32le") {
      throw FormatError("archive: entry " + it.key() + " has unsupported dtype");
    }
    WeightArchive::Entry e;
    e.name = it.key();
    e.shape = v["shape"].get<std::vector<int>>();
    e.offset = v["offset"].get<uint64_t>();
    if (e.offset + e.element_count() * 4 > archive.payload.size()) {
      throw FormatError("archive: entry " + e.name + " offset out of bounds");
    }
    archive.entries.push_back(std::move(e));
  }

  std::vector<std::pair<uint64_t, uint64_t>> spans;  // offset, end
  spans.reserve(archive.entries.size());
  for (const auto& e : archive.entries) {
    spans.emplace_back(e.offset, e.offset + e.element_count() * 4);
  }
  std::sort(spans.begin(), spans.end());
  for (size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].first < spans[i - 1].second) {
      throw FormatError("archive: overlapping tensor payloads");
    }
  }
  return archive;
}

inline WeightArchive load_archive(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("load_archive: cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  return parse_archive(bytes);
}

// ---- Deterministic initialization ------------------------------------------

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline double splitmix64_unit(uint64_t& state) {
  return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
}

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

inline uint64_t fnv1a64_bytes(const std::vector<uint8_t>& bytes) {
  uint64_t h = 0xCBF29CE484222325ull;
  for (uint8_t c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

// Uniform kernels in +-sqrt(6 / fan_in), zero biases. Each tensor's stream
// is seeded from the global seed and the tensor name, so archives are
// bitwise reproducible across platforms.
inline WeightArchive init_weights(const std::vector<ConvDecl>& schema,
                                  uint64_t seed) {
  WeightArchive archive;
  for (const auto& d : schema) {
    const size_t fan_in =
        static_cast<size_t>(d.in_channels) * d.kernel * d.kernel;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    uint64_t state = seed ^ fnv1a64(d.name + ".kernel");
    std::vector<float> kernel(static_cast<size_t>(d.out_channels) *
                              d.in_channels * d.kernel * d.kernel);
    for (auto& v : kernel) {
      v = static_cast<float>((2.0 * splitmix64_unit(state) - 1.0) * bound);
    }
    archive.add(d.name + ".kernel",
                {d.out_channels, d.in_channels, d.kernel, d.kernel}, kernel);
    archive.add(d.name + ".bias", {d.out_channels},
                std::vector<float>(static_cast<size_t>(d.out_channels), 0.0f));
  }
  return archive;
}

inline WeightArchive zero_weights(const std::vector<ConvDecl>& schema) {
  WeightArchive archive;
  for (const auto& d : schema) {
    archive.add(d.name + ".kernel",
                {d.out_channels, d.in_channels, d.kernel, d.kernel},
                std::vector<float>(static_cast<size_t>(d.out_channels) *
                                       d.in_channels * d.kernel * d.kernel,
                                   0.0f));
    archive.add(d.name + ".bias", {d.out_channels},
                std::vector<float>(static_cast<size_t>(d.out_channels), 0.0f));
  }
  return archive;
}

// ---- Validation and unpacking ----------------------------------------------

inline void validate_archive(const WeightArchive& archive,
                             const std::vector<ConvDecl>& schema) {
  std::vector<std::string> problems;
  auto check = [&](const std::string& name, const std::vector<int>& shape) {
    const WeightArchive::Entry* e = archive.find(name);
    if (e == nullptr) {
      problems.push_back(name + " (missing)");
      return;
    }
    if (e->shape != shape) {
      problems.push_back(name + " (shape mismatch)");
    }
  };
  for (const auto& d : schema) {
    check(d.name + ".kernel", {d.out_channels, d.in_channels, d.kernel, d.kernel});
    check(d.name + ".bias", {d.out_channels});
  }
  if (!problems.empty()) {
    std::string msg = "archive validation failed for tensors:";
    for (const auto& p : problems) msg += " " + p;
    throw ValidationError(msg);
  }
}

template <typename T>
struct ModelWeights {
  FeatureExtractorWeights<T> extractor;
  EnhanceWeights<T> enhance;
  MgmWeights<T> mgm;
  ContextNetWeights<T> context;
  MrmWeights<T> mrm;
  SynthWeights<T> synth;
};

namespace detail {
template <typename T>
ConvSpec<T> unpack_conv(const WeightArchive& archive, const ConvDecl& d) {
  const WeightArchive::Entry* k = archive.find(d.name + ".kernel");
  const WeightArchive::Entry* b = archive.find(d.name + ".bias");
  ConvSpec<T> spec;
  spec.out_channels = d.out_channels;
  spec.in_channels = d.in_channels;
  spec.kernel_h = d.kernel;
  spec.kernel_w = d.kernel;
  spec.stride = d.stride;
  spec.padding = d.padding;
  const std::vector<float> kv = archive.read(*k);
  const std::vector<float> bv = archive.read(*b);
  spec.kernel.assign(kv.begin(), kv.end());
  spec.bias.assign(bv.begin(), bv.end());
  return spec;
}
}  // namespace detail

// Validates the archive against the schema and materializes typed per-stage
// weights (widened to T).
template <typename T>
ModelWeights<T> unpack_weights(const WeightArchive& archive,
                               const PyramidConfig& config,
                               const ModelDims& dims) {
  const std::vector<ConvDecl> schema = build_schema(config, dims);
  validate_archive(archive, schema);
  auto conv = [&](const std::string& name) -> ConvSpec<T> {
    for (const auto& d : schema) {
      if (d.name == name) return detail::unpack_conv<T>(archive, d);
    }
    throw ConfigError("unpack_weights: unknown layer " + name);
  };

  ModelWeights<T> w;
  for (int i = 0; i < 3; ++i) {
    w.extractor.convs.push_back(conv("dqbc.extractor.conv" + std::to_string(i)));
  }
  w.enhance.conv0 = conv("dqbc.enhance.conv0");
  w.enhance.conv1 = conv("dqbc.enhance.conv1");
  for (int i = 0; i < 3; ++i) {
    w.mgm.context.push_back(conv("mgm.context.conv" + std::to_string(i)));
  }
  for (int i = 0; i < 2; ++i) {
    w.mgm.reduce.push_back(conv("mgm.reduce.conv" + std::to_string(i)));
    w.mgm.generate.push_back(conv("mgm.generate.conv" + std::to_string(i)));
  }
  for (int b = 0; b < 3; ++b) {
    const std::string base = "context.down" + std::to_string(b);
    w.context.blocks.push_back({conv(base + ".conv0"), conv(base + ".conv1")});
  }
  for (int b = 1; b <= 3; ++b) {
    const std::string base = "mrm.up" + std::to_string(b);
    UpBlockWeights<T> block;
    if (b > 1) block.hidden = conv(base + ".hidden");
    block.trunk0 = conv(base + ".trunk0");
    block.trunk1 = conv(base + ".trunk1");
    block.head = conv(base + ".head");
    w.mrm.blocks.push_back(std::move(block));
  }
  w.mrm.occlusion = conv("mrm.occlusion");
  for (int b = 0; b < 3; ++b) {
    const std::string base = "synth.down" + std::to_string(b);
    w.synth.down.push_back({conv(base + ".conv0"), conv(base + ".conv1")});
  }
  for (int b = 0; b < 3; ++b) {
    const std::string base = "synth.up" + std::to_string(b);
    SynthUpWeights<T> block;
    block.fuse = conv(base + ".fuse");
    block.rb0 = conv(base + ".rb0");
    block.rb1 = conv(base + ".rb1");
    w.synth.up.push_back(std::move(block));
  }
  w.synth.head = conv("synth.head");
  return w;
}

}  // namespace dqbc

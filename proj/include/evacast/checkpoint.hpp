#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "evacast/adam.hpp"
#include "evacast/tensor.hpp"
#include "evacast/version.hpp"

namespace evacast {

// Checkpoint container: a JSON metadata blob (model configuration,
// normalization statistics, etc.), named parameter tensors, and optionally
// the optimizer moments. The on-disk format is binary and little-endian:
//
//   "EVC1"                      magic
//   u32   format version
//   u64   meta length, then meta JSON bytes
//   u32   tensor count
//   per tensor: u32 name length, name bytes, u32 rank, u64 dims[rank],
//               f64 values[numel] (raw IEEE-754 bits)
//   u8    optimizer-state flag
//   if set: u64 step, then per tensor f64 m[numel] and f64 v[numel]
//   u64   FNV-1a hash of everything above
//
// Doubles round-trip bit-exactly; the trailing hash doubles as the
// checkpoint's content identity.
struct OptimizerSnapshot {
  std::uint64_t step = 0;
  std::vector<AdamSlot> slots;  // aligned with the tensor list
};

struct Checkpoint {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::optional<OptimizerSnapshot> optimizer;

  const Tensor& tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw std::runtime_error("checkpoint: no tensor named '" + name + "'");
  }
};

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace ckdetail {

template <typename T>
void put(std::string& buf, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.append(raw, sizeof(T));
}

inline void put_bytes(std::string& buf, const std::string& s) {
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(s.size()));
  buf.append(s);
}

inline void put_doubles(std::string& buf, const std::vector<double>& v) {
  const char* raw = reinterpret_cast<const char*>(v.data());
  buf.append(raw, v.size() * sizeof(double));
}

struct Cursor {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated file");
  }

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }

  std::string get_bytes() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }

  std::vector<double> get_doubles(std::size_t n) {
    need(n * sizeof(double));
    std::vector<double> v(n);
    std::memcpy(v.data(), buf.data() + pos, n * sizeof(double));
    pos += n * sizeof(double);
    return v;
  }
};

}  // namespace ckdetail

inline std::string encode_checkpoint(const Checkpoint& cp) {
  std::string buf;
  buf.append("EVC1");
  ckdetail::put<std::uint32_t>(buf, kCheckpointFormatVersion);
  ckdetail::put<std::uint64_t>(buf, 0);  // placeholder, patched below
  const std::string meta = cp.meta.dump();
  std::uint64_t meta_len = meta.size();
  std::memcpy(buf.data() + 8, &meta_len, sizeof(meta_len));
  buf.append(meta);
  ckdetail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(cp.tensors.size()));
  for (const auto& [name, t] : cp.tensors) {
    ckdetail::put_bytes(buf, name);
    ckdetail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.rank()));
    for (const std::size_t d : t.shape()) ckdetail::put<std::uint64_t>(buf, d);
    ckdetail::put_doubles(buf, t.values());
  }
  if (cp.optimizer) {
    if (cp.optimizer->slots.size() != cp.tensors.size())
      throw std::logic_error("checkpoint: optimizer slots do not match tensors");
    ckdetail::put<std::uint8_t>(buf, 1);
    ckdetail::put<std::uint64_t>(buf, cp.optimizer->step);
    for (const AdamSlot& s : cp.optimizer->slots) {
      ckdetail::put_doubles(buf, s.m);
      ckdetail::put_doubles(buf, s.v);
    }
  } else {
    ckdetail::put<std::uint8_t>(buf, 0);
  }
  ckdetail::put<std::uint64_t>(buf, fnv1a64(buf));
  return buf;
}

// Writes the checkpoint and returns its content hash.
inline std::uint64_t save_checkpoint(const std::string& path, const Checkpoint& cp) {
  const std::string buf = encode_checkpoint(cp);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
  std::uint64_t hash;
  std::memcpy(&hash, buf.data() + buf.size() - sizeof(hash), sizeof(hash));
  return hash;
}

struct LoadedCheckpoint {
  Checkpoint checkpoint;
  std::uint64_t content_hash = 0;
};

inline LoadedCheckpoint decode_checkpoint(const std::string& buf, const std::string& what) {
  if (buf.size() < 4 + 4 + 8 + 4 + 1 + 8 || buf.compare(0, 4, "EVC1") != 0)
    throw std::runtime_error("not a checkpoint file: " + what);
  std::uint64_t stored_hash;
  std::memcpy(&stored_hash, buf.data() + buf.size() - sizeof(stored_hash), sizeof(stored_hash));
  const std::string body = buf.substr(0, buf.size() - sizeof(stored_hash));
  if (fnv1a64(body) != stored_hash)
    throw std::runtime_error("checkpoint hash mismatch (corrupt file): " + what);

  ckdetail::Cursor cur{body, 4};
  const auto version = cur.get<std::uint32_t>();
  if (version != kCheckpointFormatVersion)
    throw std::runtime_error("unsupported checkpoint format version " + std::to_string(version) +
                             " in " + what);
  const auto meta_len = cur.get<std::uint64_t>();
  cur.need(meta_len);
  LoadedCheckpoint out;
  out.content_hash = stored_hash;
  out.checkpoint.meta = nlohmann::json::parse(body.substr(cur.pos, meta_len));
  cur.pos += meta_len;

  const auto count = cur.get<std::uint32_t>();
  std::vector<std::size_t> numels;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = cur.get_bytes();
    const auto rank = cur.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(cur.get<std::uint64_t>());
    const std::size_t numel = shape_numel(shape);
    numels.push_back(numel);
    out.checkpoint.tensors.emplace_back(std::move(name),
                                        Tensor(std::move(shape), cur.get_doubles(numel)));
  }
  if (cur.get<std::uint8_t>() != 0) {
    OptimizerSnapshot opt;
    opt.step = cur.get<std::uint64_t>();
    for (std::uint32_t i = 0; i < count; ++i)
      opt.slots.push_back(AdamSlot{cur.get_doubles(numels[i]), cur.get_doubles(numels[i])});
    out.checkpoint.optimizer = std::move(opt);
  }
  if (cur.pos != body.size()) throw std::runtime_error("checkpoint has trailing bytes: " + what);
  return out;
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(buf, path);
}

}  // namespace evacast

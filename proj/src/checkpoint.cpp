// SPDX-License-Identifier: Apache-2.0
#include "dftr/checkpoint.hpp"

#include <openssl/evp.h>
#include <zlib.h>

#include <bit>
#include <cstring>
#include <map>

namespace dftr {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(std::string_view data, const std::string& source) : data_(data), source_(source) {}

  void bytes(void* p, std::size_t n, const char* what) {
    if (data_.size() - pos_ < n)
      throw CheckpointError(source_ + ": truncated at byte " + std::to_string(pos_) + " while reading " + what +
                            " (need " + std::to_string(n) + " bytes, " + std::to_string(data_.size() - pos_) +
                            " left)");
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    bytes(&v, 4, what);
    return v;
  }
  std::uint64_t u64(const char* what) {
    std::uint64_t v;
    bytes(&v, 8, what);
    return v;
  }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    std::string s(n, '\0');
    bytes(s.data(), n, what);
    return s;
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string_view data_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

std::uint32_t payload_crc(const std::vector<float>& v) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(v.data()), static_cast<uInt>(v.size() * sizeof(float))));
}

CheckpointTensor to_entry(const std::string& name, const Shape& shape, std::span<const double> values) {
  CheckpointTensor t;
  t.name = name;
  for (auto d : shape) t.shape.push_back(static_cast<std::uint32_t>(d));
  t.values.reserve(values.size());
  for (double v : values) t.values.push_back(static_cast<float>(v));
  return t;
}

Shape to_shape(const std::vector<std::uint32_t>& s) { return Shape(s.begin(), s.end()); }

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.str(ckpt.config_digest);
  w.u64(ckpt.step);
  for (auto s : ckpt.rng) w.u64(s);
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.u32(d);
    w.u32(payload_crc(t.values));
    w.bytes(t.values.data(), t.values.size() * sizeof(float));
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source) {
  Reader r(bytes, source);
  char magic[8];
  r.bytes(magic, 8, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 8) != 0) throw CheckpointError(source + ": not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw CheckpointError(source + ": checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  Checkpoint c;
  c.config_digest = r.str("config digest");
  c.step = r.u64("step counter");
  for (auto& s : c.rng) s = r.u64("rng state");
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    t.name = r.str("tensor name");
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank > 8) throw CheckpointError(source + ": tensor " + t.name + " has implausible rank " + std::to_string(rank));
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.shape.push_back(r.u32("tensor extent"));
      n *= t.shape.back();
    }
    const std::uint32_t crc = r.u32("tensor checksum");
    if (n > bytes.size()) throw CheckpointError(source + ": tensor " + t.name + " is larger than the file");
    t.values.resize(n);
    r.bytes(t.values.data(), n * sizeof(float), "tensor payload");
    if (payload_crc(t.values) != crc) throw CheckpointError(source + ": checksum mismatch in tensor " + t.name);
    c.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw CheckpointError(source + ": trailing bytes after byte " + std::to_string(r.pos()));
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

Checkpoint capture(const DftrModel& model, const TrainState& state, const std::string& config_digest) {
  Checkpoint c;
  c.config_digest = config_digest;
  c.step = state.step;
  c.rng = state.rng.state();
  const auto& entries = model.params().entries();
  for (const auto& p : entries) c.tensors.push_back(to_entry(p.name, p.value.shape(), p.value.data()));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    std::vector<double> zeros;
    std::span<const double> v;
    if (i < state.sgd.velocity.size()) {
      v = state.sgd.velocity[i];
    } else {
      zeros.assign(entries[i].value.numel(), 0.0);
      v = zeros;
    }
    c.tensors.push_back(to_entry(std::string(kVelocityPrefix) + entries[i].name, entries[i].value.shape(), v));
  }
  return c;
}

void restore(DftrModel& model, TrainState& state, const Checkpoint& ckpt, const std::string& config_digest) {
  if (ckpt.config_digest != config_digest)
    throw ConfigMismatchError("checkpoint was written for config " + ckpt.config_digest + ", current config is " +
                              config_digest);
  auto& entries = model.params().entries();
  std::map<std::string, std::size_t, std::less<>> index;
  for (std::size_t i = 0; i < entries.size(); ++i) index[entries[i].name] = i;

  std::vector<bool> seen_param(entries.size(), false);
  SgdState sgd;
  sgd.ensure(model.params());
  for (const auto& t : ckpt.tensors) {
    std::string_view name = t.name;
    const bool velocity = name.starts_with(kVelocityPrefix);
    if (velocity) name.remove_prefix(kVelocityPrefix.size());
    const auto it = index.find(name);
    if (it == index.end()) throw CheckpointError("checkpoint holds unknown tensor " + t.name);
    const Parameter& p = entries[it->second];
    if (to_shape(t.shape) != p.value.shape())
      throw ConfigMismatchError("tensor " + t.name + " has shape " + to_string(to_shape(t.shape)) +
                                " in the checkpoint, model expects " + to_string(p.value.shape()));
    if (velocity) {
      auto& v = sgd.velocity[it->second];
      for (std::size_t k = 0; k < v.size(); ++k) v[k] = t.values[k];
    } else {
      Tensor value = p.value;
      auto dst = value.mutable_data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = t.values[k];
      seen_param[it->second] = true;
    }
  }
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (!seen_param[i]) throw ConfigMismatchError("checkpoint lacks parameter " + entries[i].name);
  state.step = ckpt.step;
  state.rng.set_state(ckpt.rng);
  state.sgd = std::move(sgd);
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string parameter_digest(const ParamStore& params) {
  Writer w;
  for (const auto& p : params.entries()) {
    w.str(p.name);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : p.value.data()) {
      const float f = static_cast<float>(v);
      w.bytes(&f, sizeof f);
    }
  }
  return sha256_hex(w.take());
}

}  // namespace dftr

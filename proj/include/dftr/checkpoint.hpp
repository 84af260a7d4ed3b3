// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dftr/decoder.hpp"
#include "dftr/image.hpp"
#include "dftr/train.hpp"

namespace dftr {

inline constexpr char kCheckpointMagic[8] = {'D', 'F', 'T', 'R', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
/// Prefix of the momentum buffer stored for each parameter.
inline constexpr std::string_view kVelocityPrefix = "sgd.velocity.";

struct CheckpointError : IoError {
  using IoError::IoError;
};

/// Checkpoint does not belong to the configuration it is loaded with.
struct ConfigMismatchError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointTensor {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<float> values;
};

struct Checkpoint {
  std::string config_digest;
  std::uint64_t step = 0;
  Rng::State rng{};
  std::vector<CheckpointTensor> tensors;
};

/// Binary layout (little-endian): magic, u32 version, u32 digest length +
/// digest, u64 step, 4 x u64 rng state, u32 tensor count, then per tensor
/// u32 name length + name, u32 rank + u32 extents, u32 crc32 of the payload,
/// f32 payload.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes, const std::string& source = "<memory>");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint capture(const DftrModel& model, const TrainState& state, const std::string& config_digest);
/// Copies parameters and optimizer state back. Unknown names raise
/// CheckpointError; digest or shape disagreement raises ConfigMismatchError.
void restore(DftrModel& model, TrainState& state, const Checkpoint& ckpt,
             const std::string& config_digest);

std::string sha256_hex(std::string_view bytes);
/// SHA-256 over parameter names, shapes and f32 values in registration order.
std::string parameter_digest(const ParamStore& params);

}  // namespace dftr

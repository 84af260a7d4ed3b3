// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "dftr/data.hpp"
#include "dftr/decoder.hpp"
#include "dftr/train.hpp"

namespace dftr {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Flat `key = value` run configuration with encoder./decoder./train./data. keys.
struct RunConfig {
  DftrConfig model;
  TrainConfig train;
  data::AugmentConfig augment;

  void validate() const;
};

/// Sets one key; unknown keys and unparsable values raise ConfigError.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);
/// Parses "key = value" lines; '#' starts a comment.
void apply_config_text(RunConfig& cfg, std::string_view text, const std::string& source = "<config>");
/// "key=value" override as given on the command line.
void apply_override(RunConfig& cfg, std::string_view assignment);

RunConfig load_run_config(const std::filesystem::path& path);
/// Every key, one per line, in a fixed order; parses back to the same config.
std::string resolved_text(const RunConfig& cfg);
/// SHA-256 (hex) of resolved_text.
std::string config_digest(const RunConfig& cfg);

}  // namespace dftr

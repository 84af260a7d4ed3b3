// SPDX-License-Identifier: Apache-2.0
#include "dftr/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "dftr/checkpoint.hpp"

namespace dftr {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const auto t = trim(text);
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc{} || end != t.data() + t.size() || t.empty())
    throw ConfigError(std::string(key) + ": cannot parse '" + std::string(text) + "'");
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const auto t = trim(text);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw ConfigError(std::string(key) + ": expected true or false, got '" + std::string(text) + "'");
}

template <typename T>
std::vector<T> parse_list(std::string_view key, std::string_view text) {
  std::vector<T> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto piece = text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    out.push_back(parse_number<T>(key, piece));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::array<int, 4> parse_four(std::string_view key, std::string_view text) {
  const auto v = parse_list<int>(key, text);
  if (v.size() != 4) throw ConfigError(std::string(key) + ": expected 4 comma-separated values");
  return {v[0], v[1], v[2], v[3]};
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T, std::size_t N>
std::string join(const std::array<T, N>& a) {
  std::string s;
  for (std::size_t i = 0; i < N; ++i) {
    if (i) s += ',';
    if constexpr (std::is_floating_point_v<T>)
      s += fmt_double(a[i]);
    else
      s += std::to_string(a[i]);
  }
  return s;
}

struct Field {
  std::function<void(RunConfig&, std::string_view key, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string b2s(bool b) { return b ? "true" : "false"; }

const std::vector<std::pair<std::string, Field>>& fields() {
  using K = std::string_view;
  using V = std::string_view;
  static const std::vector<std::pair<std::string, Field>> table = {
      {"encoder.img_size", {[](RunConfig& c, K k, V v) { c.model.encoder.img_size = parse_number<int>(k, v); },
                            [](const RunConfig& c) { return std::to_string(c.model.encoder.img_size); }}},
      {"encoder.patch_size", {[](RunConfig& c, K k, V v) { c.model.encoder.patch_size = parse_number<int>(k, v); },
                              [](const RunConfig& c) { return std::to_string(c.model.encoder.patch_size); }}},
      {"encoder.embed_dim", {[](RunConfig& c, K k, V v) { c.model.encoder.embed_dim = parse_number<int>(k, v); },
                             [](const RunConfig& c) { return std::to_string(c.model.encoder.embed_dim); }}},
      {"encoder.depths", {[](RunConfig& c, K k, V v) { c.model.encoder.depths = parse_four(k, v); },
                          [](const RunConfig& c) { return join(c.model.encoder.depths); }}},
      {"encoder.heads", {[](RunConfig& c, K k, V v) { c.model.encoder.heads = parse_four(k, v); },
                         [](const RunConfig& c) { return join(c.model.encoder.heads); }}},
      {"encoder.window", {[](RunConfig& c, K k, V v) { c.model.encoder.window = parse_number<int>(k, v); },
                          [](const RunConfig& c) { return std::to_string(c.model.encoder.window); }}},
      {"encoder.mlp_ratio", {[](RunConfig& c, K k, V v) { c.model.encoder.mlp_ratio = parse_number<int>(k, v); },
                             [](const RunConfig& c) { return std::to_string(c.model.encoder.mlp_ratio); }}},
      {"encoder.rel_pos_bias", {[](RunConfig& c, K k, V v) { c.model.encoder.rel_pos_bias = parse_bool(k, v); },
                                [](const RunConfig& c) { return b2s(c.model.encoder.rel_pos_bias); }}},
      {"decoder.down", {[](RunConfig& c, K k, V v) { c.model.decoder.down = parse_number<int>(k, v); },
                        [](const RunConfig& c) { return std::to_string(c.model.decoder.down); }}},
      {"decoder.block_depth", {[](RunConfig& c, K k, V v) { c.model.decoder.block_depth = parse_number<int>(k, v); },
                               [](const RunConfig& c) { return std::to_string(c.model.decoder.block_depth); }}},
      {"decoder.use_mfa", {[](RunConfig& c, K k, V v) { c.model.decoder.use_mfa = parse_bool(k, v); },
                           [](const RunConfig& c) { return b2s(c.model.decoder.use_mfa); }}},
      {"decoder.use_depth_stream", {[](RunConfig& c, K k, V v) { c.model.decoder.use_depth_stream = parse_bool(k, v); },
                                    [](const RunConfig& c) { return b2s(c.model.decoder.use_depth_stream); }}},
      {"decoder.use_mff", {[](RunConfig& c, K k, V v) { c.model.decoder.use_mff = parse_bool(k, v); },
                           [](const RunConfig& c) { return b2s(c.model.decoder.use_mff); }}},
      {"decoder.use_mls", {[](RunConfig& c, K k, V v) { c.model.decoder.use_mls = parse_bool(k, v); },
                           [](const RunConfig& c) { return b2s(c.model.decoder.use_mls); }}},
      {"train.epochs", {[](RunConfig& c, K k, V v) { c.train.epochs = parse_number<int>(k, v); },
                        [](const RunConfig& c) { return std::to_string(c.train.epochs); }}},
      {"train.batch_size", {[](RunConfig& c, K k, V v) { c.train.batch_size = parse_number<int>(k, v); },
                            [](const RunConfig& c) { return std::to_string(c.train.batch_size); }}},
      {"train.max_lr_backbone", {[](RunConfig& c, K k, V v) { c.train.max_lr_backbone = parse_number<double>(k, v); },
                                 [](const RunConfig& c) { return fmt_double(c.train.max_lr_backbone); }}},
      {"train.max_lr_other", {[](RunConfig& c, K k, V v) { c.train.max_lr_other = parse_number<double>(k, v); },
                              [](const RunConfig& c) { return fmt_double(c.train.max_lr_other); }}},
      {"train.momentum", {[](RunConfig& c, K k, V v) { c.train.momentum = parse_number<double>(k, v); },
                          [](const RunConfig& c) { return fmt_double(c.train.momentum); }}},
      {"train.weight_decay", {[](RunConfig& c, K k, V v) { c.train.weight_decay = parse_number<double>(k, v); },
                              [](const RunConfig& c) { return fmt_double(c.train.weight_decay); }}},
      {"train.grad_clip", {[](RunConfig& c, K k, V v) { c.train.grad_clip = parse_number<double>(k, v); },
                           [](const RunConfig& c) { return fmt_double(c.train.grad_clip); }}},
      {"train.seed", {[](RunConfig& c, K k, V v) { c.train.seed = parse_number<std::uint64_t>(k, v); },
                      [](const RunConfig& c) { return std::to_string(c.train.seed); }}},
      {"train.checkpoint_every", {[](RunConfig& c, K k, V v) { c.train.checkpoint_every = parse_number<int>(k, v); },
                                  [](const RunConfig& c) { return std::to_string(c.train.checkpoint_every); }}},
      {"train.augment", {[](RunConfig& c, K k, V v) { c.train.augment = parse_bool(k, v); },
                         [](const RunConfig& c) { return b2s(c.train.augment); }}},
      {"train.threads", {[](RunConfig& c, K k, V v) { c.train.threads = parse_number<int>(k, v); },
                         [](const RunConfig& c) { return std::to_string(c.train.threads); }}},
      {"train.loss_weights", {[](RunConfig& c, K k, V v) {
                                const auto l = parse_list<double>(k, v);
                                if (l.size() != 4) throw ConfigError(std::string(k) + ": expected 4 values");
                                std::copy(l.begin(), l.end(), c.train.loss.lambda.begin());
                              },
                              [](const RunConfig& c) { return join(c.train.loss.lambda); }}},
      {"data.flip_probability", {[](RunConfig& c, K k, V v) { c.augment.flip_probability = parse_number<double>(k, v); },
                                 [](const RunConfig& c) { return fmt_double(c.augment.flip_probability); }}},
      {"data.min_crop", {[](RunConfig& c, K k, V v) { c.augment.min_crop = parse_number<double>(k, v); },
                         [](const RunConfig& c) { return fmt_double(c.augment.min_crop); }}},
      {"data.scales", {[](RunConfig& c, K k, V v) { c.augment.scales = parse_list<double>(k, v); },
                       [](const RunConfig& c) {
                         std::string s;
                         for (std::size_t i = 0; i < c.augment.scales.size(); ++i)
                           s += (i ? "," : "") + fmt_double(c.augment.scales[i]);
                         return s;
                       }}},
      {"data.snap", {[](RunConfig& c, K k, V v) { c.augment.snap = parse_number<std::size_t>(k, v); },
                     [](const RunConfig& c) { return std::to_string(c.augment.snap); }}},
  };
  return table;
}

}  // namespace

void RunConfig::validate() const {
  try {
    model.validate();
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (augment.scales.empty()) throw ConfigError("data.scales must not be empty");
  for (double s : augment.scales)
    if (!(s > 0)) throw ConfigError("data.scales must be positive");
  if (!(augment.min_crop > 0 && augment.min_crop <= 1)) throw ConfigError("data.min_crop must be in (0, 1]");
  if (!(augment.flip_probability >= 0 && augment.flip_probability <= 1))
    throw ConfigError("data.flip_probability must be in [0, 1]");
  if (augment.snap == 0) throw ConfigError("data.snap must be positive");
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& [name, field] : fields())
    if (name == key) {
      field.set(cfg, key, value);
      return;
    }
  throw ConfigError("unknown configuration key '" + std::string(key) + "'");
}

void apply_config_text(RunConfig& cfg, std::string_view text, const std::string& source) {
  std::size_t line_no = 0, start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(start, nl - start);
    start = nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    try {
      apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
  apply_setting(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig cfg;
  apply_config_text(cfg, read_file(path), path.string());
  return cfg;
}

std::string resolved_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(cfg) + '\n';
  return out;
}

std::string config_digest(const RunConfig& cfg) { return sha256_hex(resolved_text(cfg)); }

}  // namespace dftr

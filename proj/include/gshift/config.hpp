// SPDX-License-Identifier: Apache-2.0
#pragma once

// Config documents are flat text:
//
//   # comment
//   section.key = value        # trailing comments allowed
//   section.list = 1, 2, 3
//
// Keys are `[a-z0-9_]+(\.[a-z0-9_]+)+`. Values run to the end of the line
// (or a `#`) with surrounding blanks trimmed. A key may appear once per
// document; overrides given separately replace document values.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gshift/error.hpp"
#include "gshift/net.hpp"
#include "gshift/rng.hpp"

namespace gshift {

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline bool valid_key(std::string_view key) {
  if (key.empty() || key.front() == '.' || key.back() == '.' || key.find('.') == std::string_view::npos) return false;
  char prev = 0;
  for (char c : key) {
    const bool ok = std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) ||
                    c == '_' || c == '.';
    if (!ok || (c == '.' && prev == '.')) return false;
    prev = c;
  }
  return true;
}

}  // namespace detail

/// Parsed key/value document. Reads mark keys as used; finish() rejects the
/// rest as unknown.
class ConfigDoc {
 public:
  ConfigDoc() = default;

  static ConfigDoc parse(std::string_view text) {
    ConfigDoc doc;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string body = detail::trim(line);
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string::npos)
        throw ConfigError("line " + std::to_string(lineno), "expected 'section.key = value', got '" + body + "'");
      const std::string key = detail::trim(std::string_view(body).substr(0, eq));
      const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
      if (!detail::valid_key(key)) throw ConfigError("line " + std::to_string(lineno), "malformed key '" + key + "'");
      if (doc.values_.count(key)) throw ConfigError(key, "duplicate key on line " + std::to_string(lineno));
      doc.values_[key] = value;
    }
    return doc;
  }

  /// Applies one `key=value` override.
  void set_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(std::string(assignment), "override must have the form key=value");
    const std::string key = detail::trim(assignment.substr(0, eq));
    if (!detail::valid_key(key)) throw ConfigError(key, "malformed override key");
    values_[key] = detail::trim(assignment.substr(eq + 1));
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  long long get_integer(const std::string& key, long long fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key, "");
    std::size_t pos = 0;
    long long out = 0;
    try {
      out = std::stoll(v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != v.size()) throw ConfigError(key, "expected an integer, got '" + v + "'");
    return out;
  }

  int get_int(const std::string& key, int fallback) const {
    const long long v = get_integer(key, fallback);
    if (v < -2147483647LL || v > 2147483647LL) throw ConfigError(key, "integer out of range");
    return static_cast<int>(v);
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key, "");
    std::size_t pos = 0;
    std::uint64_t out = 0;
    try {
      if (!v.empty() && v[0] != '-') out = std::stoull(v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != v.size()) throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
    return out;
  }

  double get_double(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key, "");
    std::size_t pos = 0;
    double out = 0;
    try {
      out = std::stod(v, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != v.size()) throw ConfigError(key, "expected a number, got '" + v + "'");
    return out;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key, "");
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(key, "expected true or false, got '" + v + "'");
  }

  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const {
    if (!has(key)) return fallback;
    std::vector<int> out;
    std::istringstream in(get_string(key, ""));
    std::string item;
    while (std::getline(in, item, ',')) {
      const std::string t = detail::trim(item);
      std::size_t pos = 0;
      int v = 0;
      try {
        v = std::stoi(t, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == 0 || pos != t.size()) throw ConfigError(key, "expected a comma list of integers, got '" + t + "'");
      out.push_back(v);
    }
    return out;
  }

  /// Chooses one of `options` by name.
  template <typename E>
  E get_enum(const std::string& key, E fallback, const std::vector<std::pair<std::string_view, E>>& options) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key, "");
    std::string names;
    for (const auto& [name, value] : options) {
      if (v == name) return value;
      names += (names.empty() ? "" : ", ") + std::string(name);
    }
    throw ConfigError(key, "unknown value '" + v + "' (expected one of: " + names + ")");
  }

  /// Throws ConfigError for the first key (in sorted order) no reader asked for,
  /// restricted to keys under `sections` when given.
  void finish(const std::vector<std::string>& sections = {}) const {
    for (const auto& [key, value] : values_) {
      if (used_.count(key)) continue;
      const std::string section = key.substr(0, key.find('.'));
      if (!sections.empty() && std::find(sections.begin(), sections.end(), section) == sections.end())
        throw ConfigError(key, "unknown section '" + section + "'");
      throw ConfigError(key, "unknown key");
    }
  }

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

inline const std::vector<std::pair<std::string_view, TemporalMode>>& temporal_mode_names() {
  static const std::vector<std::pair<std::string_view, TemporalMode>> names{
      {"alternating", TemporalMode::alternating},
      {"forward_only", TemporalMode::forward_only},
      {"tsm_bidirectional", TemporalMode::tsm_bidirectional},
      {"none", TemporalMode::none}};
  return names;
}

inline const std::vector<std::pair<std::string_view, SpatialMode>>& spatial_mode_names() {
  static const std::vector<std::pair<std::string_view, SpatialMode>> names{{"grouped_shift", SpatialMode::grouped_shift},
                                                                          {"none", SpatialMode::none}};
  return names;
}

inline const std::vector<std::pair<std::string_view, Placement>>& placement_names() {
  static const std::vector<std::pair<std::string_view, Placement>> names{
      {"all_scales_except_finest", Placement::all_scales_except_finest}, {"decoder_only", Placement::decoder_only}};
  return names;
}

template <typename E>
std::string enum_name(E value, const std::vector<std::pair<std::string_view, E>>& options) {
  for (const auto& [name, v] : options)
    if (v == value) return std::string(name);
  return "?";
}

inline std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + std::to_string(v[i]);
  return out;
}

/// Reads `model.*` keys on top of `model.preset` (default desk) and validates.
inline ModelConfig model_config_from(const ConfigDoc& doc) {
  ModelConfig c = ModelConfig::preset(doc.get_string("model.preset", "desk"));
  c.in_channels = doc.get_int("model.in_channels", c.in_channels);
  c.out_channels = doc.get_int("model.out_channels", c.out_channels);
  c.stage1_unets = doc.get_int("model.stage1_unets", c.stage1_unets);
  c.stage1_width = doc.get_int("model.stage1_width", c.stage1_width);
  c.stage3_unets = doc.get_int("model.stage3_unets", c.stage3_unets);
  c.stage3_width = doc.get_int("model.stage3_width", c.stage3_width);
  c.fusion_width = doc.get_int("model.fusion_width", c.fusion_width);
  c.unet_blocks = doc.get_int("model.unet_blocks", c.unet_blocks);
  c.gsts_blocks = doc.get_int("model.gsts_blocks", c.gsts_blocks);
  c.placement = doc.get_enum("model.placement", c.placement, placement_names());
  c.global_residual = doc.get_bool("model.global_residual", c.global_residual);
  c.gsts.spec.displacements = doc.get_int_list("model.displacements", c.gsts.spec.displacements);
  c.gsts.spec.base_length = doc.get_int("model.base_length", c.gsts.spec.base_length);
  c.gsts.spec.pre_shift_reduction = doc.get_bool("model.pre_shift_reduction", c.gsts.spec.pre_shift_reduction);
  c.gsts.temporal = doc.get_enum("model.temporal_mode", c.gsts.temporal, temporal_mode_names());
  c.gsts.spatial = doc.get_enum("model.spatial_mode", c.gsts.spatial, spatial_mode_names());
  c.gsts.fusion_kernel = doc.get_int("model.fusion_kernel", c.gsts.fusion_kernel);
  c.gsts.reparam_fusion = doc.get_bool("model.reparam_fusion", c.gsts.reparam_fusion);
  c.gsts.reparam_smoothing = doc.get_bool("model.reparam_smoothing", c.gsts.reparam_smoothing);
  c.validate();
  return c;
}

/// Canonical text of every model field, sorted by key. Parsing it back
/// yields the same configuration.
inline std::string model_config_text(const ModelConfig& c) {
  std::map<std::string, std::string> kv{
      {"model.base_length", std::to_string(c.gsts.spec.base_length)},
      {"model.displacements", join_ints(c.gsts.spec.displacements)},
      {"model.fusion_kernel", std::to_string(c.gsts.fusion_kernel)},
      {"model.fusion_width", std::to_string(c.fusion_width)},
      {"model.global_residual", c.global_residual ? "true" : "false"},
      {"model.gsts_blocks", std::to_string(c.gsts_blocks)},
      {"model.in_channels", std::to_string(c.in_channels)},
      {"model.out_channels", std::to_string(c.out_channels)},
      {"model.placement", enum_name(c.placement, placement_names())},
      {"model.pre_shift_reduction", c.gsts.spec.pre_shift_reduction ? "true" : "false"},
      {"model.reparam_fusion", c.gsts.reparam_fusion ? "true" : "false"},
      {"model.reparam_smoothing", c.gsts.reparam_smoothing ? "true" : "false"},
      {"model.spatial_mode", enum_name(c.gsts.spatial, spatial_mode_names())},
      {"model.stage1_unets", std::to_string(c.stage1_unets)},
      {"model.stage1_width", std::to_string(c.stage1_width)},
      {"model.stage3_unets", std::to_string(c.stage3_unets)},
      {"model.stage3_width", std::to_string(c.stage3_width)},
      {"model.temporal_mode", enum_name(c.gsts.temporal, temporal_mode_names())},
      {"model.unet_blocks", std::to_string(c.unet_blocks)},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

/// FNV-1a 64 of the canonical model text.
inline std::uint64_t config_digest(const ModelConfig& c) { return CounterRng::hash(model_config_text(c)); }

}  // namespace gshift

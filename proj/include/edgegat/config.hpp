#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <string_view>

#include "edgegat/nn/models.hpp"
#include "edgegat/train/trainer.hpp"

namespace edgegat {

/// Everything a command needs. Keys of the text format mirror the field names.
struct RunConfig {
  nn::ModelConfig model;
  train::TrainConfig train;
  std::string data_dir;
  std::string out_dir = ".";
  std::string checkpoint;
  std::string input;
  std::string output;

  void validate() const {
    model.validate();
    train.validate();
  }
};

namespace detail {

template <typename V>
V parse_config_number(std::string_view key, std::string_view s) {
  V v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError("invalid value '" + std::string(s) + "' for '" + std::string(key) + "'");
  }
  return v;
}

inline bool parse_config_bool(std::string_view key, std::string_view s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("invalid boolean '" + std::string(s) + "' for '" + std::string(key) + "'");
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

using Setter = std::function<void(RunConfig&, std::string_view key, std::string_view value)>;

template <typename V, typename Get>
Setter number_setter(Get get) {
  return [get](RunConfig& c, std::string_view k, std::string_view v) { get(c) = parse_config_number<V>(k, v); };
}

inline const std::map<std::string, Setter, std::less<>>& config_schema() {
  static const std::map<std::string, Setter, std::less<>> schema = [] {
    std::map<std::string, Setter, std::less<>> s;
    s["architecture"] = [](RunConfig& c, std::string_view, std::string_view v) {
      c.model.architecture = nn::parse_architecture(v);
    };
    s["feature_set"] = [](RunConfig& c, std::string_view, std::string_view v) {
      c.model.feature_set = parse_feature_set(v);
    };
    s["k_graph"] = number_setter<std::size_t>([](RunConfig& c) -> auto& { return c.model.k_graph; });
    s["dropout"] = number_setter<double>([](RunConfig& c) -> auto& { return c.model.dropout; });
    s["slope"] = number_setter<double>([](RunConfig& c) -> auto& { return c.model.slope; });
    s["dynamic_knn"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.model.dynamic_knn = parse_config_bool(k, v);
    };
    s["edge_hidden"] = number_setter<Index>([](RunConfig& c) -> auto& { return c.model.edge_hidden; });
    s["edge_out"] = number_setter<Index>([](RunConfig& c) -> auto& { return c.model.edge_out; });
    s["gat_width"] = number_setter<Index>([](RunConfig& c) -> auto& { return c.model.gat_width; });
    s["gat_heads"] = number_setter<Index>([](RunConfig& c) -> auto& { return c.model.gat_heads; });
    s["hidden"] = number_setter<Index>([](RunConfig& c) -> auto& { return c.model.hidden; });
    s["pool_ratio"] = number_setter<double>([](RunConfig& c) -> auto& { return c.model.pool_ratio; });
    s["pointnet_local"] = number_setter<Index>([](RunConfig& c) -> auto& { return c.model.pointnet_local; });
    s["pointnet_global"] = number_setter<Index>([](RunConfig& c) -> auto& { return c.model.pointnet_global; });
    s["lr"] = number_setter<double>([](RunConfig& c) -> auto& { return c.train.lr; });
    s["epochs"] = number_setter<std::size_t>([](RunConfig& c) -> auto& { return c.train.epochs; });
    s["batch_size"] = number_setter<std::size_t>([](RunConfig& c) -> auto& { return c.train.batch_size; });
    s["points_per_cloud"] = number_setter<std::size_t>([](RunConfig& c) -> auto& { return c.train.points_per_cloud; });
    s["k_features"] = number_setter<std::size_t>([](RunConfig& c) -> auto& { return c.train.k_features; });
    s["seed"] = number_setter<std::uint64_t>([](RunConfig& c) -> auto& { return c.train.seed; });
    s["adam_beta1"] = number_setter<double>([](RunConfig& c) -> auto& { return c.train.adam_beta1; });
    s["adam_beta2"] = number_setter<double>([](RunConfig& c) -> auto& { return c.train.adam_beta2; });
    s["adam_eps"] = number_setter<double>([](RunConfig& c) -> auto& { return c.train.adam_eps; });
    s["folds"] = number_setter<std::size_t>([](RunConfig& c) -> auto& { return c.train.folds; });
    s["augment"] = [](RunConfig& c, std::string_view k, std::string_view v) { c.train.augment = parse_config_bool(k, v); };
    s["time_epochs"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.train.time_epochs = parse_config_bool(k, v);
    };
    s["data_dir"] = [](RunConfig& c, std::string_view, std::string_view v) { c.data_dir = v; };
    s["out_dir"] = [](RunConfig& c, std::string_view, std::string_view v) { c.out_dir = v; };
    s["checkpoint"] = [](RunConfig& c, std::string_view, std::string_view v) { c.checkpoint = v; };
    s["input"] = [](RunConfig& c, std::string_view, std::string_view v) { c.input = v; };
    s["output"] = [](RunConfig& c, std::string_view, std::string_view v) { c.output = v; };
    return s;
  }();
  return schema;
}

}  // namespace detail

/// Applies one key=value pair; unknown keys are rejected.
inline void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  const auto& schema = detail::config_schema();
  const auto it = schema.find(key);
  if (it == schema.end()) throw ConfigError("unknown configuration key '" + std::string(key) + "'");
  it->second(config, key, value);
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : detail::config_schema()) keys.push_back(k);
  return keys;
}

/// Parses `key = value` lines ('#' starts a comment) on top of `base`.
inline RunConfig parse_config(std::string_view text, RunConfig base = {}) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      set_config_value(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

inline RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text, std::move(base));
}

}  // namespace edgegat

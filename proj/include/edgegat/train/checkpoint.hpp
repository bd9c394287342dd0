#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "edgegat/nn/models.hpp"

namespace edgegat::train {

// Layout:
//   edgegat-checkpoint 1\n
//   key=value\n ...            manifest
//   param <name> <rows> <cols>\n ...
//   end\n
//   payload: every parameter in header order, row-major, IEEE-754 float32 little-endian.

inline constexpr const char* kCheckpointMagic = "edgegat-checkpoint 1";

struct Checkpoint {
  nn::ModelConfig config;
  std::uint64_t seed = 0;
  std::map<std::string, Mat<float>> tensors;
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::map<std::string, std::string> manifest_of(const nn::ModelConfig& c, std::uint64_t seed) {
  return {
      {"architecture", std::string(nn::architecture_name(c.architecture))},
      {"feature_set", std::string(feature_set_name(c.feature_set))},
      {"k_graph", std::to_string(c.k_graph)},
      {"num_classes", std::to_string(c.num_classes)},
      {"dropout", fmt_double(c.dropout)},
      {"slope", fmt_double(c.slope)},
      {"dynamic_knn", c.dynamic_knn ? "1" : "0"},
      {"edge_hidden", std::to_string(c.edge_hidden)},
      {"edge_out", std::to_string(c.edge_out)},
      {"gat_width", std::to_string(c.gat_width)},
      {"gat_heads", std::to_string(c.gat_heads)},
      {"hidden", std::to_string(c.hidden)},
      {"pool_ratio", fmt_double(c.pool_ratio)},
      {"pointnet_local", std::to_string(c.pointnet_local)},
      {"pointnet_global", std::to_string(c.pointnet_global)},
      {"seed", std::to_string(seed)},
  };
}

template <typename V>
V manifest_number(const std::map<std::string, std::string>& m, const std::string& key) {
  const auto it = m.find(key);
  if (it == m.end()) throw CheckpointError("checkpoint manifest lacks '" + key + "'");
  V v{};
  const auto& s = it->second;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw CheckpointError("checkpoint manifest: bad value '" + s + "' for '" + key + "'");
  }
  return v;
}

inline void put_f32(std::string& out, float f) {
  const auto u = std::bit_cast<std::uint32_t>(f);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((u >> (8 * b)) & 0xFFu));
}

inline float get_f32(const unsigned char* p) {
  std::uint32_t u = 0;
  for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(p[b]) << (8 * b);
  return std::bit_cast<float>(u);
}

}  // namespace detail

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const nn::Model<T>& model, std::uint64_t seed) {
  const auto params = model.parameters();
  std::string header = std::string(kCheckpointMagic) + "\n";
  for (const auto& [k, v] : detail::manifest_of(model.config(), seed)) header += k + "=" + v + "\n";
  std::string payload;
  for (const auto& p : params) {
    header += "param " + p.name + " " + std::to_string(p.tensor.rows()) + " " + std::to_string(p.tensor.cols()) + "\n";
    const auto& v = p.tensor.value();
    for (Index i = 0; i < v.size(); ++i) detail::put_f32(payload, static_cast<float>(v.data()[i]));
  }
  header += "end\n";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) {
    throw CheckpointError("'" + path.string() + "' is not a checkpoint");
  }
  std::map<std::string, std::string> manifest;
  std::vector<std::tuple<std::string, Index, Index>> shapes;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    if (line.rfind("param ", 0) == 0) {
      std::istringstream ls(line.substr(6));
      std::string name;
      long long r = -1, c = -1;
      if (!(ls >> name >> r >> c) || r < 0 || c < 0) throw CheckpointError("bad parameter line '" + line + "'");
      shapes.emplace_back(name, r, c);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("bad manifest line '" + line + "'");
    manifest[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (!ended) throw CheckpointError("checkpoint header is truncated");

  Checkpoint ck;
  auto& c = ck.config;
  try {
    c.architecture = nn::parse_architecture(manifest["architecture"]);
    c.feature_set = parse_feature_set(manifest["feature_set"]);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint manifest: ") + e.what());
  }
  c.k_graph = detail::manifest_number<std::size_t>(manifest, "k_graph");
  c.num_classes = detail::manifest_number<Index>(manifest, "num_classes");
  c.dropout = detail::manifest_number<double>(manifest, "dropout");
  c.slope = detail::manifest_number<double>(manifest, "slope");
  c.dynamic_knn = detail::manifest_number<int>(manifest, "dynamic_knn") != 0;
  c.edge_hidden = detail::manifest_number<Index>(manifest, "edge_hidden");
  c.edge_out = detail::manifest_number<Index>(manifest, "edge_out");
  c.gat_width = detail::manifest_number<Index>(manifest, "gat_width");
  c.gat_heads = detail::manifest_number<Index>(manifest, "gat_heads");
  c.hidden = detail::manifest_number<Index>(manifest, "hidden");
  c.pool_ratio = detail::manifest_number<double>(manifest, "pool_ratio");
  c.pointnet_local = detail::manifest_number<Index>(manifest, "pointnet_local");
  c.pointnet_global = detail::manifest_number<Index>(manifest, "pointnet_global");
  ck.seed = detail::manifest_number<std::uint64_t>(manifest, "seed");

  std::vector<unsigned char> buf;
  for (const auto& [name, r, cols] : shapes) {
    const auto count = static_cast<std::size_t>(r * cols);
    buf.resize(count * 4);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size()) throw CheckpointError("checkpoint payload is truncated");
    Mat<float> m(r, cols);
    for (std::size_t i = 0; i < count; ++i) m.data()[i] = detail::get_f32(buf.data() + 4 * i);
    ck.tensors.emplace(name, std::move(m));
  }
  if (in.peek() != std::ifstream::traits_type::eof()) throw CheckpointError("trailing bytes after checkpoint payload");
  return ck;
}

/// Copies stored values into every parameter of `model`; names and shapes must match exactly.
template <typename T>
void load_parameters(nn::Model<T>& model, const std::map<std::string, Mat<float>>& tensors) {
  auto params = model.parameters();
  if (params.size() != tensors.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(tensors.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
  }
  for (auto& p : params) {
    const auto it = tensors.find(p.name);
    if (it == tensors.end()) throw CheckpointError("checkpoint lacks parameter '" + p.name + "'");
    if (it->second.rows() != p.tensor.rows() || it->second.cols() != p.tensor.cols()) {
      throw CheckpointError("parameter '" + p.name + "' has shape " + std::to_string(it->second.rows()) + "x" +
                            std::to_string(it->second.cols()) + ", model expects " + p.tensor.shape_string());
    }
    p.tensor.mutable_value() = it->second.template cast<T>();
  }
}

template <typename T>
std::unique_ptr<nn::Model<T>> model_from_checkpoint(const Checkpoint& ck) {
  auto model = nn::make_model<T>(ck.config, ck.seed);
  load_parameters(*model, ck.tensors);
  return model;
}

}  // namespace edgegat::train

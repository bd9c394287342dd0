#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "edgegat/cloud.hpp"
#include "edgegat/error.hpp"

namespace edgegat {

/// On-disk cloud formats.
///  - xyz_label: text, one `x y z [label]` record per line, '#' comments ignored.
///  - ply_ascii: ASCII PLY with a `vertex` element holding x,y,z and optional
///    uchar red,green,blue and int label. Writing always emits colors for labeled clouds.
enum class CloudFormat { xyz_label, ply_ascii };

/// Picks the format from the file extension (".ply" -> PLY, anything else -> xyz-label).
inline CloudFormat format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return ext == ".ply" ? CloudFormat::ply_ascii : CloudFormat::xyz_label;
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline double parse_double(std::string_view tok, std::size_t line) {
  double v = 0.0;
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError("cannot parse number '" + std::string(tok) + "'", line);
  }
  if (!std::isfinite(v)) throw ParseError("non-finite coordinate '" + std::string(tok) + "'", line);
  return v;
}

inline long long parse_int(std::string_view tok, std::size_t line) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError("cannot parse integer '" + std::string(tok) + "'", line);
  }
  return v;
}

/// Shortest representation that parses back to the same double.
inline void append_double(std::string& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

inline LabeledCloud read_xyz_label(std::istream& in) {
  LabeledCloud out;
  std::vector<ClassLabel> labels;
  int columns = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto toks = split_ws(line);
    if (toks.empty() || toks.front().front() == '#') continue;
    const int n = static_cast<int>(toks.size());
    if (n != 3 && n != 4) throw ParseError("expected 3 or 4 fields, found " + std::to_string(n), line_no);
    if (columns == 0) columns = n;
    if (n != columns) throw ParseError("inconsistent column count", line_no);
    out.cloud.points.emplace_back(parse_double(toks[0], line_no), parse_double(toks[1], line_no),
                                  parse_double(toks[2], line_no));
    if (n == 4) labels.push_back(label_from_id(parse_int(toks[3], line_no)));
  }
  if (out.cloud.points.empty()) throw ParseError("no points in file", 0);
  if (columns == 4) out.labels = std::move(labels);
  return out;
}

inline LabeledCloud read_ply_ascii(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  if (!next_line() || line != "ply") throw ParseError("missing 'ply' magic", line_no ? line_no : 1);

  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> properties;
  };
  std::vector<Element> elements;
  bool ascii = false;
  bool header_done = false;
  while (next_line()) {
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] == "format") {
      if (toks.size() < 2 || toks[1] != "ascii") throw ParseError("only ASCII PLY is supported", line_no);
      ascii = true;
    } else if (toks[0] == "comment" || toks[0] == "obj_info") {
      continue;
    } else if (toks[0] == "element") {
      if (toks.size() != 3) throw ParseError("malformed element line", line_no);
      elements.push_back({std::string(toks[1]), static_cast<std::size_t>(parse_int(toks[2], line_no)), {}});
    } else if (toks[0] == "property") {
      if (elements.empty()) throw ParseError("property before element", line_no);
      if (toks.size() >= 2 && toks[1] == "list") {
        if (toks.size() != 5) throw ParseError("malformed list property", line_no);
        elements.back().properties.emplace_back(toks[4]);
      } else {
        if (toks.size() != 3) throw ParseError("malformed property line", line_no);
        elements.back().properties.emplace_back(toks[2]);
      }
    } else if (toks[0] == "end_header") {
      header_done = true;
      break;
    } else {
      throw ParseError("unexpected header keyword '" + std::string(toks[0]) + "'", line_no);
    }
  }
  if (!header_done) throw ParseError("missing end_header", line_no);
  if (!ascii) throw ParseError("missing format line", line_no);

  LabeledCloud out;
  for (const auto& el : elements) {
    if (el.name != "vertex") {
      // Non-vertex elements (faces, ...) are skipped line by line.
      for (std::size_t i = 0; i < el.count; ++i) {
        if (!next_line()) throw ParseError("unexpected end of file in element '" + el.name + "'", line_no);
      }
      continue;
    }
    auto find = [&](std::string_view name) -> int {
      for (std::size_t i = 0; i < el.properties.size(); ++i) {
        if (el.properties[i] == name) return static_cast<int>(i);
      }
      return -1;
    };
    const int ix = find("x"), iy = find("y"), iz = find("z"), il = find("label");
    if (ix < 0 || iy < 0 || iz < 0) throw ParseError("vertex element lacks x/y/z", line_no);
    std::vector<ClassLabel> labels;
    out.cloud.points.reserve(el.count);
    for (std::size_t i = 0; i < el.count; ++i) {
      if (!next_line()) throw ParseError("unexpected end of file in vertex data", line_no + 1);
      auto toks = split_ws(line);
      if (toks.size() != el.properties.size()) {
        throw ParseError("expected " + std::to_string(el.properties.size()) + " vertex fields, found " +
                             std::to_string(toks.size()),
                         line_no);
      }
      out.cloud.points.emplace_back(parse_double(toks[ix], line_no), parse_double(toks[iy], line_no),
                                    parse_double(toks[iz], line_no));
      if (il >= 0) labels.push_back(label_from_id(parse_int(toks[il], line_no)));
    }
    if (il >= 0) out.labels = std::move(labels);
  }
  if (out.cloud.points.empty()) throw ParseError("no vertices in file", line_no);
  return out;
}

}  // namespace detail

/// Reads a cloud. Malformed content raises ParseError naming the line; labels
/// outside {0,1,2} raise DomainError; a missing file raises IoError.
inline LabeledCloud read_cloud(const std::filesystem::path& path, CloudFormat format) {
  auto in = detail::open_input(path);
  LabeledCloud out = format == CloudFormat::xyz_label ? detail::read_xyz_label(in) : detail::read_ply_ascii(in);
  out.validate();
  return out;
}

inline LabeledCloud read_cloud(const std::filesystem::path& path) { return read_cloud(path, format_from_path(path)); }

/// Serializes a cloud to a string in the given format.
inline std::string format_cloud(const LabeledCloud& cloud, CloudFormat format) {
  cloud.validate();
  std::string out;
  out.reserve(cloud.size() * 64);
  if (format == CloudFormat::xyz_label) {
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto& p = cloud.cloud.points[i];
      detail::append_double(out, p.x());
      out += ' ';
      detail::append_double(out, p.y());
      out += ' ';
      detail::append_double(out, p.z());
      if (cloud.labels) {
        out += ' ';
        out += std::to_string(class_index((*cloud.labels)[i]));
      }
      out += '\n';
    }
    return out;
  }

  out += "ply\nformat ascii 1.0\n";
  out += "element vertex " + std::to_string(cloud.size()) + "\n";
  out += "property double x\nproperty double y\nproperty double z\n";
  if (cloud.labels) {
    out += "property uchar red\nproperty uchar green\nproperty uchar blue\nproperty int label\n";
  }
  out += "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.cloud.points[i];
    detail::append_double(out, p.x());
    out += ' ';
    detail::append_double(out, p.y());
    out += ' ';
    detail::append_double(out, p.z());
    if (cloud.labels) {
      const auto label = (*cloud.labels)[i];
      const Rgb c = class_color(label);
      out += ' ' + std::to_string(c.r) + ' ' + std::to_string(c.g) + ' ' + std::to_string(c.b) + ' ' +
             std::to_string(class_index(label));
    }
    out += '\n';
  }
  return out;
}

/// Writes a cloud; throws IoError when the path cannot be written.
inline void write_cloud(const LabeledCloud& cloud, const std::filesystem::path& path, CloudFormat format) {
  const std::string text = format_cloud(cloud, format);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

/// Every cloud file (.xyz, .txt, .pts, .ply) directly inside `dir`, in file-name order.
inline std::vector<std::filesystem::path> list_cloud_files(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (ext == ".xyz" || ext == ".txt" || ext == ".pts" || ext == ".ply") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace edgegat

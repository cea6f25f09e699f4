#pragma once

#include <array>
#include <cctype>
#include <stdexcept>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "wrin/tensor.hpp"

namespace wrin {

/// One line of a KITTI object label (15 fields) or detection (16, score last).
struct KittiObject {
  std::string type;
  double truncated = 0;
  int occluded = 0;
  double alpha = 0;
  double left = 0, top = 0, right = 0, bottom = 0;
  double height3d = 0, width3d = 0, length3d = 0;
  double x = 0, y = 0, z = 0;
  double rotation_y = 0;
  std::optional<double> score;

  bool dont_care() const { return type == "DontCare"; }
  bool valid_box() const { return right > left && bottom > top; }
  double pixel_height() const { return bottom - top; }

  friend bool operator==(const KittiObject&, const KittiObject&) = default;
};

namespace detail {

inline double parse_number(std::string_view tok, std::size_t line) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw FormatError("line " + std::to_string(line) + ": invalid number '" + std::string(tok) + "'");
  }
  return v;
}

inline std::string format_number(double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace detail

inline std::vector<KittiObject> parse_kitti_labels(std::string_view text) {
  std::vector<KittiObject> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    std::vector<std::string_view> tok;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      const std::size_t start = i;
      while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      if (i > start) tok.push_back(line.substr(start, i - start));
    }
    if (tok.empty()) {
      if (end == text.size()) break;
      continue;
    }
    if (tok.size() != 15 && tok.size() != 16) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 15 or 16 fields, found " +
                        std::to_string(tok.size()));
    }
    KittiObject o;
    o.type = std::string(tok[0]);
    double f[15];
    for (std::size_t k = 1; k < tok.size(); ++k) f[k - 1] = detail::parse_number(tok[k], line_no);
    o.truncated = f[0];
    o.occluded = static_cast<int>(f[1]);
    if (static_cast<double>(o.occluded) != f[1]) {
      throw FormatError("line " + std::to_string(line_no) + ": occlusion must be an integer");
    }
    o.alpha = f[2];
    o.left = f[3];
    o.top = f[4];
    o.right = f[5];
    o.bottom = f[6];
    o.height3d = f[7];
    o.width3d = f[8];
    o.length3d = f[9];
    o.x = f[10];
    o.y = f[11];
    o.z = f[12];
    o.rotation_y = f[13];
    if (tok.size() == 16) o.score = f[14];
    out.push_back(std::move(o));
    if (end == text.size()) break;
  }
  return out;
}

/// Writes one object per line using shortest round-trip number formatting.
inline std::string serialize_kitti(const std::vector<KittiObject>& objects) {
  std::string out;
  for (const auto& o : objects) {
    out += o.type;
    for (double v : {o.truncated, static_cast<double>(o.occluded), o.alpha, o.left, o.top, o.right, o.bottom,
                     o.height3d, o.width3d, o.length3d, o.x, o.y, o.z, o.rotation_y}) {
      out += ' ';
      out += detail::format_number(v);
    }
    if (o.score) {
      out += ' ';
      out += detail::format_number(*o.score);
    }
    out += '\n';
  }
  return out;
}

enum class Difficulty { easy, moderate, hard, ignored };

inline const char* to_string(Difficulty d) {
  switch (d) {
    case Difficulty::easy: return "easy";
    case Difficulty::moderate: return "moderate";
    case Difficulty::hard: return "hard";
    case Difficulty::ignored: return "ignored";
  }
  return "?";
}

/// KITTI benchmark buckets: minimum box height (px), maximum occlusion level,
/// maximum truncation.
inline Difficulty kitti_difficulty(const KittiObject& o) {
  const double h = o.pixel_height();
  if (h >= 40 && o.occluded <= 0 && o.truncated <= 0.15) return Difficulty::easy;
  if (h >= 25 && o.occluded <= 1 && o.truncated <= 0.30) return Difficulty::moderate;
  if (h >= 25 && o.occluded <= 2 && o.truncated <= 0.50) return Difficulty::hard;
  return Difficulty::ignored;
}

/// Buckets are cumulative: an easy object counts for moderate and hard as well.
inline bool counts_for(Difficulty object, Difficulty level) {
  if (object == Difficulty::ignored) return false;
  return static_cast<int>(object) <= static_cast<int>(level);
}

/// Reads every `<id>.txt` in a directory, keyed by id.
inline std::map<std::string, std::vector<KittiObject>> read_kitti_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: '" + dir + "'");
  std::map<std::string, std::vector<KittiObject>> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    std::ifstream in(entry.path());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      out[entry.path().stem().string()] = parse_kitti_labels(ss.str());
    } catch (const FormatError& e) {
      throw FormatError(entry.path().string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace wrin

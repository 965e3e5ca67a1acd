// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "geoquery/error.hpp"
#include "geoquery/geo.hpp"
#include "json.hpp"

namespace geoquery::detail {

using json = nlohmann::json;

inline json key_to_json(const TileKey& k) {
  return json{{"col", k.tile.col}, {"row", k.tile.row}, {"season", std::string(to_string(k.season))}};
}

/// Reads col/row/season members from `j`; `where` prefixes error messages.
inline TileKey key_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw FormatError(where + ": expected an object");
  auto index = [&](const char* name) -> std::uint32_t {
    if (!j.contains(name) || !j[name].is_number_unsigned()) {
      throw FormatError(where + ": '" + name + "' must be a non-negative integer");
    }
    const auto v = j[name].get<std::uint64_t>();
    if (v > std::numeric_limits<std::uint32_t>::max()) throw FormatError(where + ": '" + name + "' too large");
    return static_cast<std::uint32_t>(v);
  };
  if (!j.contains("season") || !j["season"].is_string()) {
    throw FormatError(where + ": 'season' must be a string Q1..Q4");
  }
  const auto season = parse_season(j["season"].get<std::string>());
  if (!season) throw FormatError(where + ": invalid season '" + j["season"].get<std::string>() + "'");
  return TileKey{{index("col"), index("row")}, *season};
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw InputError("write to '" + path.string() + "' failed");
}

/// 1-based line of byte `offset` in `text`.
inline std::size_t line_of(const std::string& text, std::size_t offset) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) line += text[i] == '\n';
  return line;
}

inline json parse_json_file(const std::filesystem::path& path) {
  const auto text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what() + " (line " +
                      std::to_string(line_of(text, e.byte)) + ")");
  }
}

}  // namespace geoquery::detail

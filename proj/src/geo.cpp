// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#include "geoquery/geo.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>

#include "geoquery/error.hpp"

namespace geoquery {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

double normalise_lon(double lon) {
  if (lon >= -180.0 && lon < 180.0) return lon;
  double r = std::fmod(lon + 180.0, 360.0);
  if (r < 0) r += 360.0;
  r -= 180.0;
  // fmod rounding can land exactly on 180
  return r >= 180.0 ? -180.0 : r;
}

}  // namespace

GeoPoint::GeoPoint(double lat_deg, double lon_deg) {
  if (!std::isfinite(lat_deg) || !std::isfinite(lon_deg)) {
    throw InputError("GeoPoint coordinates must be finite");
  }
  if (lat_deg < -90.0 || lat_deg > 90.0) {
    throw InputError("latitude " + std::to_string(lat_deg) + " outside [-90, 90]");
  }
  lat_ = lat_deg;
  lon_ = normalise_lon(lon_deg);
}

std::string_view to_string(Season s) {
  switch (s) {
    case Season::Q1: return "Q1";
    case Season::Q2: return "Q2";
    case Season::Q3: return "Q3";
    case Season::Q4: return "Q4";
  }
  return "Q?";
}

std::optional<Season> parse_season(std::string_view text) {
  if (text.size() != 2 || std::toupper(static_cast<unsigned char>(text[0])) != 'Q') return std::nullopt;
  if (text[1] < '1' || text[1] > '4') return std::nullopt;
  return static_cast<Season>(text[1] - '1');
}

std::string to_string(const TileKey& key) {
  return std::to_string(key.tile.col) + "/" + std::to_string(key.tile.row) + "/" +
         std::string(to_string(key.season));
}

GridSpec::GridSpec(double tile_size_deg) : size_(tile_size_deg) {
  if (!std::isfinite(tile_size_deg) || tile_size_deg <= 0.0 || tile_size_deg > 10.0) {
    throw InputError("tile_size_deg must lie in (0, 10]");
  }
  cols_ = static_cast<std::uint32_t>(std::ceil(360.0 / size_));
  rows_ = static_cast<std::uint32_t>(std::ceil(180.0 / size_));
  // ceil() of an inexact quotient can overshoot by one empty cell
  while (cols_ > 1 && cell_west(cols_ - 1) >= 180.0) --cols_;
  while (rows_ > 1 && cell_south(rows_ - 1) >= 90.0) --rows_;
}

TileId tile_of(const GridSpec& grid, const GeoPoint& p) {
  const double size = grid.tile_size_deg();
  auto index = [size](double offset, std::uint32_t n, auto lower_edge, double coord) {
    auto i = static_cast<std::int64_t>(std::floor(offset / size));
    i = std::clamp<std::int64_t>(i, 0, n - 1);
    // reconcile the quotient with the edges used by tile_bounds
    while (i > 0 && coord < lower_edge(static_cast<std::uint32_t>(i))) --i;
    while (i + 1 < n && coord >= lower_edge(static_cast<std::uint32_t>(i + 1))) ++i;
    return static_cast<std::uint32_t>(i);
  };
  const auto col = index(p.lon() + 180.0, grid.columns(),
                         [&grid](std::uint32_t c) { return grid.cell_west(c); }, p.lon());
  const auto row = index(p.lat() + 90.0, grid.rows(),
                         [&grid](std::uint32_t r) { return grid.cell_south(r); }, p.lat());
  return TileId{col, row};
}

TileBounds tile_bounds(const GridSpec& grid, TileId t) {
  if (!grid.contains(t)) {
    throw RangeError("tile " + std::to_string(t.col) + "/" + std::to_string(t.row) +
                     " outside grid extent");
  }
  const double west = grid.cell_west(t.col);
  const double south = grid.cell_south(t.row);
  const double east = t.col + 1 == grid.columns() ? 180.0 : grid.cell_west(t.col + 1);
  const double north = t.row + 1 == grid.rows() ? 90.0 : grid.cell_south(t.row + 1);
  return TileBounds{south, west, north, east};
}

GeoPoint tile_centre(const GridSpec& grid, TileId t) {
  const auto b = tile_bounds(grid, t);
  return GeoPoint(0.5 * (b.south + b.north), 0.5 * (b.west + b.east));
}

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  const double lat1 = a.lat() * kDegToRad;
  const double lat2 = b.lat() * kDegToRad;
  const double s_lat = std::sin(0.5 * (lat2 - lat1));
  const double s_lon = std::sin(0.5 * (b.lon() - a.lon()) * kDegToRad);
  double h = s_lat * s_lat + std::cos(lat1) * std::cos(lat2) * (s_lon * s_lon);
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

}  // namespace geoquery

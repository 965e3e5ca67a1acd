// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace geoquery {

/// Mean Earth radius (IUGG), kilometres.
inline constexpr double kEarthRadiusKm = 6371.0088;

/// A point on the sphere. Longitude is normalised into [-180, 180) on
/// construction; latitude must lie in [-90, 90].
class GeoPoint {
 public:
  GeoPoint(double lat_deg, double lon_deg);

  double lat() const noexcept { return lat_; }
  double lon() const noexcept { return lon_; }

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;

 private:
  double lat_;
  double lon_;
};

struct TileId {
  std::uint32_t col = 0;
  std::uint32_t row = 0;

  friend auto operator<=>(const TileId&, const TileId&) = default;
};

enum class Season : std::uint8_t { Q1 = 0, Q2 = 1, Q3 = 2, Q4 = 3 };

inline constexpr int kSeasonCount = 4;

std::string_view to_string(Season s);
/// Accepts "Q1".."Q4" (case-insensitive).
std::optional<Season> parse_season(std::string_view text);

struct TileKey {
  TileId tile;
  Season season = Season::Q1;

  friend auto operator<=>(const TileKey&, const TileKey&) = default;
};

std::string to_string(const TileKey& key);

struct TileKeyHash {
  std::size_t operator()(const TileKey& k) const noexcept {
    std::uint64_t h = (std::uint64_t{k.tile.col} << 34) ^ (std::uint64_t{k.tile.row} << 2) ^
                      static_cast<std::uint64_t>(k.season);
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return static_cast<std::size_t>(h);
  }
};

struct TileBounds {
  double south;
  double west;
  double north;
  double east;
};

/// Global equal-angle grid. Cells are half-open [lon0, lon0+size) x
/// [lat0, lat0+size); the last column/row is clipped at 180 / 90.
class GridSpec {
 public:
  static constexpr double kDefaultTileSizeDeg = 0.046;

  GridSpec() : GridSpec(kDefaultTileSizeDeg) {}
  explicit GridSpec(double tile_size_deg);

  double tile_size_deg() const noexcept { return size_; }
  std::uint32_t columns() const noexcept { return cols_; }
  std::uint32_t rows() const noexcept { return rows_; }
  bool contains(TileId t) const noexcept { return t.col < cols_ && t.row < rows_; }

  double cell_west(std::uint32_t col) const noexcept { return -180.0 + col * size_; }
  double cell_south(std::uint32_t row) const noexcept { return -90.0 + row * size_; }

 private:
  double size_;
  std::uint32_t cols_;
  std::uint32_t rows_;
};

TileId tile_of(const GridSpec& grid, const GeoPoint& p);

/// Midpoint of the (clipped) cell. Throws RangeError outside the grid.
GeoPoint tile_centre(const GridSpec& grid, TileId t);

TileBounds tile_bounds(const GridSpec& grid, TileId t);

/// Great-circle distance on a sphere of radius kEarthRadiusKm.
double haversine_km(const GeoPoint& a, const GeoPoint& b);

}  // namespace geoquery

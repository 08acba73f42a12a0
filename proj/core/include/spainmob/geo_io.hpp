#pragma once

// Geometry file formats: GeoJSON (RFC 7946) and ESRI shapefile (.shp + .dbf).

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "spainmob/geometry.hpp"

namespace spainmob {

// One input feature before zone semantics are applied. Coordinates are still
// in the source CRS; properties are stringified.
struct RawFeature {
  std::map<std::string, std::string> properties;
  std::vector<std::vector<std::vector<XY>>> polygons;  // polygon -> rings -> points
  bool multi = false;
};

// Throws GeometryParseError naming the feature index.
std::vector<RawFeature> read_geojson_features(std::string_view text);
std::vector<RawFeature> read_geojson_file(const std::filesystem::path& path);

// Shapefile polygons (types 5, 15, 25). Rings are grouped into polygons by
// orientation (clockwise exterior) and containment. Attribute strings that are
// not valid UTF-8 are decoded as Latin-1.
std::vector<RawFeature> read_shapefile(const std::filesystem::path& shp, const std::filesystem::path& dbf);

struct DbfTable {
  std::vector<std::string> fields;
  std::vector<std::vector<std::string>> rows;
  std::vector<bool> deleted;
};
DbfTable read_dbf(const std::filesystem::path& dbf);

std::string latin1_to_utf8_if_needed(std::string_view s);

}  // namespace spainmob

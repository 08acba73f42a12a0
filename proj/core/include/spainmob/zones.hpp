#pragma once

// Study-area tessellations, the cross-level relation table and aggregation of
// mobility tables along the district < municipality < GAU hierarchy.

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spainmob/catalog.hpp"
#include "spainmob/fetcher.hpp"
#include "spainmob/geo_io.hpp"
#include "spainmob/geometry.hpp"
#include "spainmob/records.hpp"

namespace spainmob {

struct ZoneGeometry {
  ZoneId zone_id;
  std::string name;
  ZoneLevel level = ZoneLevel::Districts;
  Geometry geometry;  // WGS84 lon/lat, repaired
  double area_km2 = 0.0;
};

// Sorted by ascending zone_id; ids are unique.
struct ZoneCollection {
  ZoneLevel level = ZoneLevel::Districts;
  DatasetVersion version = DatasetVersion::V2;
  std::vector<ZoneGeometry> zones;

  const ZoneGeometry* find(const ZoneId& id) const;
};

struct ZoneSourceOptions {
  std::string id_property = "id";
  std::string name_property = "name";
  std::string crs = "EPSG:4326";
};

// Repairs, reprojects and measures every feature. Throws GeometryParseError
// naming the feature index for unusable features and duplicate ids.
ZoneCollection build_zone_collection(const std::vector<RawFeature>& features, ZoneLevel level,
                                     DatasetVersion version, const ZoneSourceOptions& options);
ZoneCollection load_zones_geojson(const std::filesystem::path& path, ZoneLevel level,
                                  DatasetVersion version, const ZoneSourceOptions& options = {});
// Reads a file produced by write_zones_geojson.
ZoneCollection read_zones_geojson(const std::filesystem::path& path);

// RFC 7946 FeatureCollection with properties zone_id, name, level, version
// and area_km2.
std::string zones_to_geojson(const ZoneCollection& zones);
void write_zones_geojson(const ZoneCollection& zones, const std::filesystem::path& path);
std::filesystem::path zones_geojson_path(const std::filesystem::path& out_dir, ZoneLevel level,
                                         DatasetVersion version);

// Fetches the catalog geometry source for (level, version) into `cache_root`
// and loads it. Throws VersionZoneConflict for V1 + GAU.
ZoneCollection get_zone_geodataframe(ZoneLevel level, DatasetVersion version,
                                     const CatalogConfig& catalog, const FetchPolicy& policy,
                                     const std::filesystem::path& cache_root,
                                     const FetchContext& ctx = default_fetch_context());

// Arithmetic mean of area_km2. Throws EmptyCollection, and InvalidArgument
// for mixed levels.
double mean_area_by_level(std::span<const ZoneGeometry> zones);

// ---------------------------------------------------------------------------
// Relations
// ---------------------------------------------------------------------------

struct ZoneRelation {
  ZoneId district_id;
  ZoneId municipality_id;
  std::optional<ZoneId> gau_id;
  std::vector<std::string> census_refs;

  friend bool operator==(const ZoneRelation&, const ZoneRelation&) = default;
};

class ZoneRelations {
 public:
  ZoneRelations() = default;

  // Merges rows sharing a district (census refs united). Throws
  // RelationIntegrityError when a district has conflicting parents.
  static ZoneRelations build(const std::vector<ZoneRelation>& raw_rows);

  // One row per district, ascending district_id.
  const std::vector<ZoneRelation>& rows() const { return rows_; }

  std::optional<ZoneId> municipality_of(const ZoneId& district) const;
  // Empty when the district is unknown or outside every GAU.
  std::optional<ZoneId> gau_of(const ZoneId& district) const;
  // Empty for unknown municipalities.
  std::vector<ZoneId> districts_of(const ZoneId& municipality) const;
  bool has_district(const ZoneId& district) const;
  bool has_municipality(const ZoneId& municipality) const;
  // Throws RelationIntegrityError when the municipality's districts disagree.
  std::optional<ZoneId> gau_of_municipality(const ZoneId& municipality) const;

 private:
  std::vector<ZoneRelation> rows_;
  std::map<ZoneId, std::size_t> by_district_;
  std::map<ZoneId, std::vector<ZoneId>> by_municipality_;
};

// Delimited relation file (plain or gzip) laid out per a Relations schema.
ZoneRelations parse_relations_file(const std::filesystem::path& path, const SchemaMap& schema);
ZoneRelations get_zone_relations(const CatalogConfig& catalog, const FetchPolicy& policy,
                                 const std::filesystem::path& cache_root,
                                 const FetchContext& ctx = default_fetch_context());

// Columns district_id, municipality_id, gau_id (empty when none) and
// census_refs (';'-separated). Format from the extension.
void write_relations(const ZoneRelations& relations, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

enum class MappingMode { Strict, Lenient };

// Bucket for zones outside every GAU during GAU aggregation.
inline constexpr std::string_view kNonGauZone = "NON_GAU";
// Bucket for zones missing from the relation table in Lenient mode.
inline constexpr std::string_view kUnmappedZone = "UNMAPPED";

// Re-keys zones to `target` and sums measures per re-keyed group. Throws
// LevelNotFiner unless the table's level is strictly finer than `target`,
// and UnmappedZone in Strict mode for zones missing from `relations`.
OdTable aggregate_to_level(const OdTable& table, const ZoneRelations& relations, ZoneLevel target,
                           MappingMode mode = MappingMode::Strict);
TripsTable aggregate_to_level(const TripsTable& table, const ZoneRelations& relations, ZoneLevel target,
                              MappingMode mode = MappingMode::Strict);
OvernightTable aggregate_to_level(const OvernightTable& table, const ZoneRelations& relations,
                                  ZoneLevel target, MappingMode mode = MappingMode::Strict);

}  // namespace spainmob

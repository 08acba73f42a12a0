#pragma once

// Source catalog: maps validated requests onto concrete remote resources.
// All URL patterns, availability windows and raw schemas come from a JSON
// config so that portal layout changes never require code changes.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "spainmob/model.hpp"
#include "spainmob/schema.hpp"

namespace spainmob {

enum class ChecksumMode { None, SizeOnly, Digest };

struct ResourceDescriptor {
  std::string url;
  // Empty for geometry and relation-table resources.
  std::optional<DatasetKind> kind;
  DatasetVersion version = DatasetVersion::V2;
  std::optional<ZoneLevel> level;
  std::optional<Date> day;
  std::string relative_cache_path;
  std::string schema_id;
  // Pinned lowercase hex SHA-256, only in ChecksumMode::Digest.
  std::optional<std::string> digest;

  friend bool operator==(const ResourceDescriptor&, const ResourceDescriptor&) = default;
};

struct TemplateKey {
  DatasetVersion version;
  DatasetKind kind;
  ZoneLevel level;

  friend auto operator<=>(const TemplateKey&, const TemplateKey&) = default;
};

struct DatasetTemplate {
  std::string url_template;
  std::string schema_id;
};

// Geometry schema ids select the parser.
inline constexpr std::string_view kGeoJsonSchema = "geometry:geojson";
inline constexpr std::string_view kShapefileSchema = "geometry:shapefile";

struct GeometrySource {
  std::string url;
  std::string format = "geojson";  // "geojson" | "shapefile"
  std::string crs = "EPSG:4326";   // source CRS; reprojected to WGS84 at load
  std::string id_property = "id";
  std::string name_property = "name";
};

struct RelationsSource {
  std::string url;
  std::string schema_id;
};

struct CatalogConfig {
  std::map<TemplateKey, DatasetTemplate> url_templates;
  AvailabilityTable availability;
  std::map<std::pair<DatasetVersion, ZoneLevel>, GeometrySource> geometry_sources;
  RelationsSource relations;
  ChecksumMode checksum_mode = ChecksumMode::SizeOnly;
  // url -> sha256 hex, consulted in ChecksumMode::Digest
  std::map<std::string, std::string> pinned_digests;
  std::map<std::string, SchemaMap> schemas;

  const SchemaMap& schema(const std::string& schema_id) const;
  const GeometrySource& geometry(DatasetVersion version, ZoneLevel level) const;
};

// Parses and fully validates a catalog document. `origin` names the source in
// error messages.
CatalogConfig parse_catalog(std::string_view json_text, std::string_view origin = "<memory>");
CatalogConfig load_catalog(const std::filesystem::path& config_path);
// Catalog compiled into the library, matching the portal layout observed at
// build time (best effort).
CatalogConfig default_catalog();
std::string_view default_catalog_json();

inline constexpr const char* kCatalogEnvVar = "SPAINMOB_CATALOG";

struct CatalogSelection {
  CatalogConfig config;
  std::string source;  // "flag:<path>", "env:<path>" or "bundled"
};

// Discovery order: explicit path > environment variable > bundled default.
CatalogSelection discover_catalog(const std::optional<std::filesystem::path>& flag_path,
                                  const std::optional<std::string>& env_value);

// Expands {date:YYYY}, {date:MM}, {date:DD} and {date:YYYYMMDD}. Any other
// placeholder throws ConfigParseError.
std::string expand_date_template(std::string_view tmpl, const Date& day);

std::vector<ResourceDescriptor> resolve_resources(const DatasetRequest& request,
                                                  const CatalogConfig& catalog);
ResourceDescriptor resolve_geometry(ZoneLevel level, DatasetVersion version,
                                    const CatalogConfig& catalog);
ResourceDescriptor resolve_relations(const CatalogConfig& catalog);

// Companion file of a shapefile descriptor (".dbf").
ResourceDescriptor shapefile_companion(const ResourceDescriptor& shp, std::string_view extension);

}  // namespace spainmob

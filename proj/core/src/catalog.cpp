#include "spainmob/catalog.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "spainmob/error.hpp"

namespace spainmob {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(std::string_view origin, const std::string& msg) {
  fail(Errc::ConfigParseError, std::string(origin) + ": " + msg);
}

const json& require(const json& obj, const char* key, std::string_view origin, std::string_view ctx) {
  if (!obj.is_object() || !obj.contains(key))
    config_error(origin, std::string(ctx) + ": missing key '" + key + "'");
  return obj.at(key);
}

std::string require_string(const json& obj, const char* key, std::string_view origin,
                           std::string_view ctx) {
  const json& v = require(obj, key, origin, ctx);
  if (!v.is_string()) config_error(origin, std::string(ctx) + ": '" + key + "' must be a string");
  return v.get<std::string>();
}

std::string optional_string(const json& obj, const char* key, std::string fallback) {
  if (obj.contains(key) && obj.at(key).is_string()) return obj.at(key).get<std::string>();
  return fallback;
}

char single_char(const json& obj, const char* key, char fallback, std::string_view origin,
                 std::string_view ctx) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string() || v.get<std::string>().size() != 1)
    config_error(origin, std::string(ctx) + ": '" + key + "' must be a single character");
  return v.get<std::string>()[0];
}

ColumnRef column_ref(const json& v, std::string_view origin, std::string_view ctx) {
  ColumnRef ref;
  if (v.is_string()) {
    ref.name = v.get<std::string>();
  } else if (v.is_number_unsigned()) {
    ref.index = v.get<std::size_t>();
  } else {
    config_error(origin, std::string(ctx) + ": column binding must be a name or an index");
  }
  return ref;
}

SchemaTarget parse_target(const std::string& s, std::string_view origin, std::string_view ctx) {
  if (s == "od") return SchemaTarget::OriginDestination;
  if (s == "trips") return SchemaTarget::TripsPerPerson;
  if (s == "overnight") return SchemaTarget::OvernightStays;
  if (s == "relations") return SchemaTarget::Relations;
  config_error(origin, std::string(ctx) + ": unknown target '" + s + "'");
}

SchemaMap parse_schema(const std::string& id, const json& j, std::string_view origin) {
  const std::string ctx = "schemas." + id;
  if (!j.is_object()) config_error(origin, ctx + " must be an object");
  SchemaMap s;
  s.schema_id = id;
  s.target = parse_target(require_string(j, "target", origin, ctx), origin, ctx);
  s.delimiter = single_char(j, "delimiter", '|', origin, ctx);
  s.decimal_separator = single_char(j, "decimal_separator", '.', origin, ctx);
  if (j.contains("has_header")) {
    if (!j.at("has_header").is_boolean()) config_error(origin, ctx + ".has_header must be boolean");
    s.has_header = j.at("has_header").get<bool>();
  }
  s.date_format = optional_string(j, "date_format", s.date_format);
  s.zone_id_pattern = optional_string(j, "zone_id_pattern", "");
  for (const auto& [field, v] : require(j, "bindings", origin, ctx).items())
    s.bindings[field] = column_ref(v, origin, ctx + ".bindings." + field);
  if (j.contains("list_bindings")) {
    for (const auto& [field, arr] : j.at("list_bindings").items()) {
      if (!arr.is_array()) config_error(origin, ctx + ".list_bindings." + field + " must be an array");
      for (const json& v : arr) s.list_bindings[field].push_back(column_ref(v, origin, ctx));
    }
  }
  if (j.contains("value_maps")) {
    for (const auto& [field, table] : j.at("value_maps").items()) {
      if (!table.is_object()) config_error(origin, ctx + ".value_maps." + field + " must be an object");
      for (const auto& [raw, label] : table.items()) {
        if (!label.is_string()) config_error(origin, ctx + ".value_maps." + field + " labels must be strings");
        s.value_maps[field][raw] = label.get<std::string>();
      }
    }
  }
  if (j.contains("null_tokens")) {
    s.null_tokens.clear();
    for (const json& t : j.at("null_tokens")) s.null_tokens.push_back(t.get<std::string>());
  }
  validate_schema(s);
  return s;
}

Availability parse_availability(const json& j, std::string_view origin, std::string_view ctx) {
  Availability a;
  try {
    a.start = Date::parse_iso(require_string(j, "start", origin, ctx));
    if (j.contains("end") && !j.at("end").is_null())
      a.end = Date::parse_iso(j.at("end").get<std::string>());
  } catch (const Error& e) {
    config_error(origin, std::string(ctx) + ": " + e.what());
  }
  if (a.end && *a.end < a.start) config_error(origin, std::string(ctx) + ": end precedes start");
  return a;
}

void check_url(const std::string& url, std::string_view origin, std::string_view ctx) {
  if (!(url.starts_with("http://") || url.starts_with("https://")) || url.size() <= 8)
    config_error(origin, std::string(ctx) + ": url must be absolute http(s): '" + url + "'");
}

std::string sanitize(std::string_view s) {
  std::string out;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '.' || c == '-' || c == '_';
    out.push_back(ok ? c : '_');
  }
  if (out.empty() || out == "." || out == "..") out = "resource";
  return out;
}

std::string url_basename(std::string_view url) {
  auto q = url.find_first_of("?#");
  if (q != std::string_view::npos) url = url.substr(0, q);
  auto slash = url.rfind('/');
  return sanitize(slash == std::string_view::npos ? url : url.substr(slash + 1));
}

std::string extension_of(std::string_view url_template) {
  std::string base = url_basename(url_template);
  auto dot = base.find('.');
  if (dot == std::string::npos) return ".gz";
  return base.substr(dot);
}

std::string level_dir(ZoneLevel l) { return std::string(to_string(l)); }

}  // namespace

const SchemaMap& CatalogConfig::schema(const std::string& schema_id) const {
  auto it = schemas.find(schema_id);
  if (it == schemas.end()) fail(Errc::ConfigParseError, "catalog has no schema '" + schema_id + "'");
  return it->second;
}

const GeometrySource& CatalogConfig::geometry(DatasetVersion version, ZoneLevel level) const {
  if (!version_admits_level(version, level)) {
    fail(Errc::VersionZoneConflict,
         "dataset version 1 does not include greater urban areas (gau)");
  }
  auto it = geometry_sources.find({version, level});
  if (it == geometry_sources.end()) {
    fail(Errc::MissingTemplate, "catalog has no geometry source for version " +
                                    std::to_string(to_int(version)) + " " +
                                    std::string(to_string(level)));
  }
  return it->second;
}

std::string expand_date_template(std::string_view tmpl, const Date& day) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    auto open = tmpl.find('{', i);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(i));
      break;
    }
    out.append(tmpl.substr(i, open - i));
    auto close = tmpl.find('}', open);
    if (close == std::string_view::npos)
      fail(Errc::ConfigParseError, "unterminated placeholder in template '" + std::string(tmpl) + "'");
    std::string_view token = tmpl.substr(open + 1, close - open - 1);
    const std::string iso = day.iso();
    if (token == "date:YYYY") {
      out.append(iso.substr(0, 4));
    } else if (token == "date:MM") {
      out.append(iso.substr(5, 2));
    } else if (token == "date:DD") {
      out.append(iso.substr(8, 2));
    } else if (token == "date:YYYYMMDD") {
      out.append(day.compact());
    } else {
      fail(Errc::ConfigParseError, "unsupported placeholder {" + std::string(token) +
                                       "}; expected date:YYYY, date:MM, date:DD or date:YYYYMMDD");
    }
    i = close + 1;
  }
  return out;
}

CatalogConfig parse_catalog(std::string_view json_text, std::string_view origin) {
  json doc;
  try {
    doc = json::parse(json_text.begin(), json_text.end());
  } catch (const json::parse_error& e) {
    fail(Errc::ConfigParseError, std::string(origin) + " at byte " + std::to_string(e.byte) + ": " +
                                     e.what());
  }
  if (!doc.is_object()) config_error(origin, "top level must be an object");

  CatalogConfig cfg;
  try {
    if (doc.contains("checksum_mode")) {
      const std::string mode = doc.at("checksum_mode").get<std::string>();
      if (mode == "none") cfg.checksum_mode = ChecksumMode::None;
      else if (mode == "size_only") cfg.checksum_mode = ChecksumMode::SizeOnly;
      else if (mode == "digest") cfg.checksum_mode = ChecksumMode::Digest;
      else config_error(origin, "checksum_mode must be none, size_only or digest");
    }
    if (doc.contains("availability")) {
      for (const auto& [key, v] : doc.at("availability").items()) {
        if (key != "1" && key != "2") config_error(origin, "availability: unknown version '" + key + "'");
        cfg.availability.of(key == "1" ? DatasetVersion::V1 : DatasetVersion::V2) =
            parse_availability(v, origin, "availability." + key);
      }
    }
    for (const auto& [id, s] : require(doc, "schemas", origin, "catalog").items())
      cfg.schemas.emplace(id, parse_schema(id, s, origin));

    const json& datasets = require(doc, "datasets", origin, "catalog");
    if (!datasets.is_array()) config_error(origin, "datasets must be an array");
    for (std::size_t i = 0; i < datasets.size(); ++i) {
      const json& d = datasets[i];
      const std::string ctx = "datasets[" + std::to_string(i) + "]";
      TemplateKey key{parse_dataset_version(require(d, "version", origin, ctx).get<int>()),
                      parse_dataset_kind(require_string(d, "kind", origin, ctx)),
                      parse_zone_level(require_string(d, "level", origin, ctx))};
      if (!version_admits_level(key.version, key.level))
        config_error(origin, ctx + ": version 1 has no greater-urban-area datasets");
      DatasetTemplate t{require_string(d, "url", origin, ctx), require_string(d, "schema", origin, ctx)};
      check_url(t.url_template, origin, ctx);
      expand_date_template(t.url_template, Date(2022, 1, 1));
      auto sit = cfg.schemas.find(t.schema_id);
      if (sit == cfg.schemas.end()) config_error(origin, ctx + ": unknown schema '" + t.schema_id + "'");
      const SchemaTarget want = key.kind == DatasetKind::OriginDestination ? SchemaTarget::OriginDestination
                                : key.kind == DatasetKind::TripsPerPerson ? SchemaTarget::TripsPerPerson
                                                                           : SchemaTarget::OvernightStays;
      if (sit->second.target != want)
        config_error(origin, ctx + ": schema '" + t.schema_id + "' targets a different dataset kind");
      if (!cfg.url_templates.emplace(key, std::move(t)).second)
        config_error(origin, ctx + ": duplicate dataset entry");
    }

    if (doc.contains("geometries")) {
      const json& geoms = doc.at("geometries");
      for (std::size_t i = 0; i < geoms.size(); ++i) {
        const json& g = geoms[i];
        const std::string ctx = "geometries[" + std::to_string(i) + "]";
        const DatasetVersion v = parse_dataset_version(require(g, "version", origin, ctx).get<int>());
        const ZoneLevel l = parse_zone_level(require_string(g, "level", origin, ctx));
        if (!version_admits_level(v, l))
          config_error(origin, ctx + ": version 1 has no greater-urban-area geometry");
        GeometrySource src;
        src.url = require_string(g, "url", origin, ctx);
        check_url(src.url, origin, ctx);
        src.format = optional_string(g, "format", src.format);
        if (src.format != "geojson" && src.format != "shapefile")
          config_error(origin, ctx + ": format must be geojson or shapefile");
        src.crs = optional_string(g, "crs", src.crs);
        src.id_property = optional_string(g, "id_property", src.id_property);
        src.name_property = optional_string(g, "name_property", src.name_property);
        if (!cfg.geometry_sources.emplace(std::pair{v, l}, std::move(src)).second)
          config_error(origin, ctx + ": duplicate geometry entry");
      }
    }

    if (doc.contains("relations")) {
      const json& r = doc.at("relations");
      cfg.relations.url = require_string(r, "url", origin, "relations");
      check_url(cfg.relations.url, origin, "relations");
      cfg.relations.schema_id = require_string(r, "schema", origin, "relations");
      auto sit = cfg.schemas.find(cfg.relations.schema_id);
      if (sit == cfg.schemas.end() || sit->second.target != SchemaTarget::Relations)
        config_error(origin, "relations: schema must exist and target relations");
    }

    if (doc.contains("pinned_digests")) {
      for (const auto& [url, digest] : doc.at("pinned_digests").items())
        cfg.pinned_digests[url] = digest.get<std::string>();
    }
  } catch (const json::exception& e) {
    config_error(origin, e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::ConfigParseError) throw;
    config_error(origin, e.what());
  }

  for (DatasetVersion v : kAllVersions)
    for (DatasetKind k : kAllKinds)
      for (ZoneLevel l : kAllLevels) {
        if (!version_admits_level(v, l)) continue;
        if (!cfg.url_templates.contains(TemplateKey{v, k, l})) {
          fail(Errc::MissingTemplate, std::string(origin) + ": no url template for version " +
                                          std::to_string(to_int(v)) + " kind " +
                                          std::string(to_string(k)) + " level " +
                                          std::string(to_string(l)));
        }
      }
  return cfg;
}

CatalogConfig load_catalog(const std::filesystem::path& config_path) {
  std::ifstream in(config_path, std::ios::binary);
  if (!in) fail(Errc::ConfigParseError, "cannot open catalog '" + config_path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_catalog(ss.str(), config_path.string());
}

namespace detail {
extern const std::string_view kDefaultCatalogJson;
}  // namespace detail

std::string_view default_catalog_json() { return detail::kDefaultCatalogJson; }

CatalogConfig default_catalog() { return parse_catalog(default_catalog_json(), "bundled catalog"); }

CatalogSelection discover_catalog(const std::optional<std::filesystem::path>& flag_path,
                                  const std::optional<std::string>& env_value) {
  if (flag_path) return {load_catalog(*flag_path), "flag:" + flag_path->string()};
  if (env_value && !env_value->empty()) return {load_catalog(*env_value), "env:" + *env_value};
  return {default_catalog(), "bundled"};
}

std::vector<ResourceDescriptor> resolve_resources(const DatasetRequest& request,
                                                  const CatalogConfig& catalog) {
  const TemplateKey key{request.version(), request.kind(), request.level()};
  auto it = catalog.url_templates.find(key);
  if (it == catalog.url_templates.end())
    fail(Errc::MissingTemplate, "catalog has no template for the requested dataset");
  const DatasetTemplate& t = it->second;
  const std::string ext = extension_of(t.url_template);

  std::vector<ResourceDescriptor> out;
  for (const Date& day : enumerate_days(request.range())) {
    ResourceDescriptor d;
    d.url = expand_date_template(t.url_template, day);
    d.kind = request.kind();
    d.version = request.version();
    d.level = request.level();
    d.day = day;
    const std::string iso = day.iso();
    d.relative_cache_path = "v" + std::to_string(to_int(d.version)) + "/" +
                            std::string(to_string(request.kind())) + "/" + level_dir(request.level()) +
                            "/" + iso.substr(0, 7) + "/" + day.compact() + ext;
    d.schema_id = t.schema_id;
    if (catalog.checksum_mode == ChecksumMode::Digest) {
      auto pin = catalog.pinned_digests.find(d.url);
      if (pin != catalog.pinned_digests.end()) d.digest = pin->second;
    }
    out.push_back(std::move(d));
  }
  return out;
}

ResourceDescriptor resolve_geometry(ZoneLevel level, DatasetVersion version,
                                    const CatalogConfig& catalog) {
  const GeometrySource& src = catalog.geometry(version, level);
  ResourceDescriptor d;
  d.url = src.url;
  d.version = version;
  d.level = level;
  d.relative_cache_path = "v" + std::to_string(to_int(version)) + "/zones/" + level_dir(level) + "/" +
                          url_basename(src.url);
  d.schema_id = std::string(src.format == "shapefile" ? kShapefileSchema : kGeoJsonSchema);
  if (catalog.checksum_mode == ChecksumMode::Digest) {
    auto pin = catalog.pinned_digests.find(d.url);
    if (pin != catalog.pinned_digests.end()) d.digest = pin->second;
  }
  return d;
}

ResourceDescriptor resolve_relations(const CatalogConfig& catalog) {
  if (catalog.relations.url.empty())
    fail(Errc::MissingTemplate, "catalog has no relations source");
  ResourceDescriptor d;
  d.url = catalog.relations.url;
  d.version = DatasetVersion::V2;
  d.relative_cache_path = "relations/" + url_basename(d.url);
  d.schema_id = catalog.relations.schema_id;
  if (catalog.checksum_mode == ChecksumMode::Digest) {
    auto pin = catalog.pinned_digests.find(d.url);
    if (pin != catalog.pinned_digests.end()) d.digest = pin->second;
  }
  return d;
}

ResourceDescriptor shapefile_companion(const ResourceDescriptor& shp, std::string_view extension) {
  auto swap_ext = [&](const std::string& s) {
    auto dot = s.rfind('.');
    auto slash = s.rfind('/');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
      return s + std::string(extension);
    return s.substr(0, dot) + std::string(extension);
  };
  ResourceDescriptor d = shp;
  d.url = swap_ext(shp.url);
  d.relative_cache_path = swap_ext(shp.relative_cache_path);
  d.digest.reset();
  return d;
}

}  // namespace spainmob

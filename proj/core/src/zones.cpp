#include "spainmob/zones.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "spainmob/error.hpp"
#include "spainmob/gzip.hpp"
#include "spainmob/parquet.hpp"
#include "spainmob/table_io.hpp"

namespace spainmob {

using json = nlohmann::json;

const ZoneGeometry* ZoneCollection::find(const ZoneId& id) const {
  auto it = std::lower_bound(zones.begin(), zones.end(), id,
                             [](const ZoneGeometry& z, const ZoneId& k) { return z.zone_id < k; });
  return it != zones.end() && it->zone_id == id ? &*it : nullptr;
}

ZoneCollection build_zone_collection(const std::vector<RawFeature>& features, ZoneLevel level,
                                     DatasetVersion version, const ZoneSourceOptions& options) {
  check_crs(options.crs);
  ZoneCollection out;
  out.level = level;
  out.version = version;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const RawFeature& f = features[i];
    auto prop = [&](const std::string& key) -> std::optional<std::string> {
      auto it = f.properties.find(key);
      if (it == f.properties.end()) return std::nullopt;
      return it->second;
    };
    auto id = prop(options.id_property);
    if (!id || id->empty()) id = prop("@id");
    if (!id || id->empty())
      fail(Errc::GeometryParseError, "feature " + std::to_string(i) + ": no '" + options.id_property + "' property");
    ZoneGeometry z;
    z.zone_id = ZoneId(*id);
    z.name = options.name_property.empty() ? "" : prop(options.name_property).value_or("");
    z.level = level;
    z.geometry.multi = f.multi;
    for (const auto& poly : f.polygons) {
      Polygon p;
      for (std::size_t r = 0; r < poly.size(); ++r) {
        Ring ring;
        ring.reserve(poly[r].size());
        for (const XY& xy : poly[r]) ring.push_back(to_wgs84(xy, options.crs));
        if (r == 0) p.exterior = std::move(ring);
        else p.holes.push_back(std::move(ring));
      }
      z.geometry.polygons.push_back(std::move(p));
    }
    try {
      z.geometry = repair(std::move(z.geometry));
      z.area_km2 = compute_area_km2(z.geometry);
    } catch (const Error& e) {
      fail(e.code(), "feature " + std::to_string(i) + " (zone " + z.zone_id.value + "): " + e.what());
    }
    out.zones.push_back(std::move(z));
  }
  std::sort(out.zones.begin(), out.zones.end(),
            [](const ZoneGeometry& a, const ZoneGeometry& b) { return a.zone_id < b.zone_id; });
  for (std::size_t i = 1; i < out.zones.size(); ++i)
    if (out.zones[i].zone_id == out.zones[i - 1].zone_id)
      fail(Errc::GeometryParseError, "duplicate zone id '" + out.zones[i].zone_id.value + "'");
  return out;
}

ZoneCollection load_zones_geojson(const std::filesystem::path& path, ZoneLevel level,
                                  DatasetVersion version, const ZoneSourceOptions& options) {
  return build_zone_collection(read_geojson_file(path), level, version, options);
}

ZoneCollection read_zones_geojson(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const auto features = read_geojson_features(text);
  if (features.empty()) fail(Errc::EmptyCollection, path.string() + ": no features");
  const auto& p = features.front().properties;
  auto level_it = p.find("level");
  auto version_it = p.find("version");
  if (level_it == p.end() || version_it == p.end())
    fail(Errc::GeometryParseError, path.string() + ": missing level/version properties");
  const ZoneLevel level = parse_zone_level(level_it->second);
  const DatasetVersion version = parse_dataset_version(std::stoi(version_it->second));
  return build_zone_collection(features, level, version, {"zone_id", "name", "EPSG:4326"});
}

namespace {

json ring_json(const Ring& r) {
  json a = json::array();
  for (const LonLat& p : r) a.push_back({p.lon, p.lat});
  return a;
}

json polygon_json(const Polygon& p) {
  json a = json::array();
  a.push_back(ring_json(p.exterior));
  for (const Ring& h : p.holes) a.push_back(ring_json(h));
  return a;
}

}  // namespace

std::string zones_to_geojson(const ZoneCollection& zones) {
  json fc;
  fc["type"] = "FeatureCollection";
  fc["features"] = json::array();
  for (const ZoneGeometry& z : zones.zones) {
    json g;
    if (z.geometry.multi || z.geometry.polygons.size() > 1) {
      g["type"] = "MultiPolygon";
      g["coordinates"] = json::array();
      for (const Polygon& p : z.geometry.polygons) g["coordinates"].push_back(polygon_json(p));
    } else {
      g["type"] = "Polygon";
      g["coordinates"] = polygon_json(z.geometry.polygons.front());
    }
    json f;
    f["type"] = "Feature";
    f["properties"] = {{"zone_id", z.zone_id.value},
                       {"name", z.name},
                       {"level", std::string(to_string(z.level))},
                       {"version", to_int(zones.version)},
                       {"area_km2", z.area_km2}};
    f["geometry"] = std::move(g);
    fc["features"].push_back(std::move(f));
  }
  return fc.dump() + "\n";
}

void write_zones_geojson(const ZoneCollection& zones, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::Io, "cannot create " + tmp.string());
    out << zones_to_geojson(zones);
    if (!out) fail(Errc::Io, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::filesystem::path zones_geojson_path(const std::filesystem::path& out_dir, ZoneLevel level,
                                         DatasetVersion version) {
  return out_dir / ("zones_v" + std::to_string(to_int(version)) + "_" + std::string(to_string(level)) +
                    ".geojson");
}

ZoneCollection get_zone_geodataframe(ZoneLevel level, DatasetVersion version,
                                     const CatalogConfig& catalog, const FetchPolicy& policy,
                                     const std::filesystem::path& cache_root, const FetchContext& ctx) {
  const GeometrySource& src = catalog.geometry(version, level);
  const ResourceDescriptor main = resolve_geometry(level, version, catalog);
  const ZoneSourceOptions options{src.id_property, src.name_property, src.crs};
  if (main.schema_id == kShapefileSchema) {
    const auto entries = fetch_all({main, shapefile_companion(main, ".dbf")}, policy, cache_root, ctx);
    return build_zone_collection(read_shapefile(entries[0].local_path, entries[1].local_path), level,
                                 version, options);
  }
  const CacheEntry entry = fetch(main, policy, cache_root, ctx);
  return load_zones_geojson(entry.local_path, level, version, options);
}

double mean_area_by_level(std::span<const ZoneGeometry> zones) {
  if (zones.empty()) fail(Errc::EmptyCollection, "cannot average the area of an empty collection");
  double sum = 0;
  for (const ZoneGeometry& z : zones) {
    if (z.level != zones.front().level)
      fail(Errc::InvalidArgument, "collection mixes zone levels");
    sum += z.area_km2;
  }
  return sum / static_cast<double>(zones.size());
}

// ---------------------------------------------------------------------------
// Relations
// ---------------------------------------------------------------------------

ZoneRelations ZoneRelations::build(const std::vector<ZoneRelation>& raw_rows) {
  std::map<ZoneId, ZoneRelation> merged;
  std::map<ZoneId, std::set<std::string>> refs;
  for (const ZoneRelation& r : raw_rows) {
    if (r.district_id.empty() || r.municipality_id.empty())
      fail(Errc::RelationIntegrityError, "relation row with an empty district or municipality id");
    auto [it, inserted] = merged.try_emplace(r.district_id, r);
    if (!inserted) {
      ZoneRelation& m = it->second;
      if (m.municipality_id != r.municipality_id)
        fail(Errc::RelationIntegrityError, "district " + r.district_id.value + " belongs to municipalities " +
                                               m.municipality_id.value + " and " + r.municipality_id.value);
      if (m.gau_id != r.gau_id)
        fail(Errc::RelationIntegrityError,
             "district " + r.district_id.value + " belongs to GAUs " +
                 (m.gau_id ? m.gau_id->value : "(none)") + " and " + (r.gau_id ? r.gau_id->value : "(none)"));
    }
    refs[r.district_id].insert(r.census_refs.begin(), r.census_refs.end());
  }
  ZoneRelations t;
  for (auto& [district, row] : merged) {
    const auto& set = refs[district];
    row.census_refs.assign(set.begin(), set.end());
    t.by_district_[district] = t.rows_.size();
    t.by_municipality_[row.municipality_id].push_back(district);
    t.rows_.push_back(std::move(row));
  }
  return t;
}

std::optional<ZoneId> ZoneRelations::municipality_of(const ZoneId& district) const {
  auto it = by_district_.find(district);
  if (it == by_district_.end()) return std::nullopt;
  return rows_[it->second].municipality_id;
}

std::optional<ZoneId> ZoneRelations::gau_of(const ZoneId& district) const {
  auto it = by_district_.find(district);
  if (it == by_district_.end()) return std::nullopt;
  return rows_[it->second].gau_id;
}

std::vector<ZoneId> ZoneRelations::districts_of(const ZoneId& municipality) const {
  auto it = by_municipality_.find(municipality);
  return it == by_municipality_.end() ? std::vector<ZoneId>{} : it->second;
}

bool ZoneRelations::has_district(const ZoneId& district) const { return by_district_.count(district) > 0; }

bool ZoneRelations::has_municipality(const ZoneId& municipality) const {
  return by_municipality_.count(municipality) > 0;
}

std::optional<ZoneId> ZoneRelations::gau_of_municipality(const ZoneId& municipality) const {
  const auto districts = districts_of(municipality);
  std::optional<ZoneId> gau;
  for (std::size_t i = 0; i < districts.size(); ++i) {
    const auto g = gau_of(districts[i]);
    if (i == 0) gau = g;
    else if (g != gau)
      fail(Errc::RelationIntegrityError, "municipality " + municipality.value + " spans several GAUs");
  }
  return gau;
}

namespace {

std::string read_maybe_gzip(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  std::string bytes = ss.str();
  if (bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0x1f &&
      static_cast<unsigned char>(bytes[1]) == 0x8b)
    return gzip_decompress(bytes);
  return bytes;
}

std::size_t resolve_column(const ColumnRef& ref, const std::vector<std::string>& header,
                           const std::string& source) {
  if (ref.index) {
    if (!header.empty() && *ref.index >= header.size())
      fail(Errc::SchemaMismatch, source + ": column index " + std::to_string(*ref.index) + " out of range");
    return *ref.index;
  }
  auto it = std::find(header.begin(), header.end(), ref.name);
  if (it == header.end()) fail(Errc::SchemaMismatch, source + ": header lacks column '" + ref.name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

ZoneRelations parse_relations_file(const std::filesystem::path& path, const SchemaMap& schema) {
  if (schema.target != SchemaTarget::Relations)
    fail(Errc::SchemaMismatch, "schema '" + schema.schema_id + "' does not describe a relation table");
  const std::string source = path.string();
  auto rows = parse_csv(read_maybe_gzip(path), schema.delimiter);
  std::vector<std::string> header;
  std::size_t first = 0;
  if (schema.has_header) {
    if (rows.empty()) fail(Errc::SchemaMismatch, source + ": no header line");
    header = rows[0];
    if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);
    first = 1;
  }
  auto bound = [&](const std::string& field) -> std::optional<std::size_t> {
    auto it = schema.bindings.find(field);
    if (it == schema.bindings.end()) return std::nullopt;
    return resolve_column(it->second, header, source);
  };
  const std::size_t district_col = *bound("district");
  const std::size_t muni_col = *bound("municipality");
  const auto gau_col = bound("gau");
  std::vector<std::size_t> census_cols;
  if (auto it = schema.list_bindings.find("census_refs"); it != schema.list_bindings.end())
    for (const ColumnRef& ref : it->second) census_cols.push_back(resolve_column(ref, header, source));

  auto is_null = [&](const std::string& t) {
    return std::find(schema.null_tokens.begin(), schema.null_tokens.end(), t) != schema.null_tokens.end();
  };
  std::vector<ZoneRelation> raw;
  for (std::size_t r = first; r < rows.size(); ++r) {
    const auto& row = rows[r];
    auto cell = [&](std::size_t c) -> const std::string& {
      if (c >= row.size())
        fail(Errc::MalformedRow, source + ": row " + std::to_string(r + 1) + " has too few fields");
      return row[c];
    };
    ZoneRelation z;
    z.district_id = ZoneId(cell(district_col));
    z.municipality_id = ZoneId(cell(muni_col));
    if (gau_col && !is_null(cell(*gau_col))) z.gau_id = ZoneId(cell(*gau_col));
    for (std::size_t c : census_cols)
      if (!is_null(cell(c))) z.census_refs.push_back(cell(c));
    raw.push_back(std::move(z));
  }
  return ZoneRelations::build(raw);
}

ZoneRelations get_zone_relations(const CatalogConfig& catalog, const FetchPolicy& policy,
                                 const std::filesystem::path& cache_root, const FetchContext& ctx) {
  const ResourceDescriptor d = resolve_relations(catalog);
  const CacheEntry entry = fetch(d, policy, cache_root, ctx);
  return parse_relations_file(entry.local_path, catalog.schema(d.schema_id));
}

void write_relations(const ZoneRelations& relations, const std::filesystem::path& path) {
  std::vector<std::string> district, muni, gau, refs;
  for (const ZoneRelation& r : relations.rows()) {
    district.push_back(r.district_id.value);
    muni.push_back(r.municipality_id.value);
    gau.push_back(r.gau_id ? r.gau_id->value : "");
    std::string joined;
    for (std::size_t i = 0; i < r.census_refs.size(); ++i) joined += (i ? ";" : "") + r.census_refs[i];
    refs.push_back(std::move(joined));
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (format_for_path(path) == TableFormat::Csv) {
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) fail(Errc::Io, "cannot create " + tmp.string());
      write_csv_row(out, {"district_id", "municipality_id", "gau_id", "census_refs"});
      for (std::size_t i = 0; i < district.size(); ++i) write_csv_row(out, {district[i], muni[i], gau[i], refs[i]});
    }
    std::filesystem::rename(tmp, path);
    return;
  }
  using parquet::ColumnSpec;
  const auto s = [](const char* n) {
    return ColumnSpec{n, parquet::PhysicalType::ByteArray, parquet::LogicalKind::String};
  };
  parquet::WriterOptions opts;
  opts.key_value_metadata = {{"spainmob.table", "relations"}};
  parquet::Writer w(path, {s("district_id"), s("municipality_id"), s("gau_id"), s("census_refs")}, opts);
  w.write_row_group({std::move(district), std::move(muni), std::move(gau), std::move(refs)});
  w.close();
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

namespace {

class ZoneMapper {
 public:
  ZoneMapper(const ZoneRelations& rel, ZoneLevel from, ZoneLevel to, MappingMode mode)
      : rel_(rel), from_(from), to_(to), mode_(mode) {
    if (level_rank(from) >= level_rank(to))
      fail(Errc::LevelNotFiner, "cannot aggregate " + std::string(to_string(from)) + " to " +
                                    std::string(to_string(to)) + ": target level is not coarser");
  }

  const ZoneId& operator()(const ZoneId& zone) {
    auto it = cache_.find(zone);
    if (it != cache_.end()) return it->second;
    return cache_.emplace(zone, resolve(zone)).first->second;
  }

 private:
  ZoneId unmapped(const ZoneId& zone) const {
    if (mode_ == MappingMode::Strict)
      fail(Errc::UnmappedZone, "zone " + zone.value + " is not in the relation table");
    return ZoneId(std::string(kUnmappedZone));
  }

  ZoneId resolve(const ZoneId& zone) const {
    const bool gau = to_ == ZoneLevel::GreaterUrbanAreas;
    if (from_ == ZoneLevel::Districts) {
      if (!rel_.has_district(zone)) return unmapped(zone);
      if (!gau) return *rel_.municipality_of(zone);
      return rel_.gau_of(zone).value_or(ZoneId(std::string(kNonGauZone)));
    }
    if (!rel_.has_municipality(zone)) return unmapped(zone);
    return rel_.gau_of_municipality(zone).value_or(ZoneId(std::string(kNonGauZone)));
  }

  const ZoneRelations& rel_;
  ZoneLevel from_, to_;
  MappingMode mode_;
  std::map<ZoneId, ZoneId> cache_;
};

template <typename Row, typename Key, typename Merge>
std::vector<Row> regroup(std::vector<Row> rows, Key key, Merge merge) {
  std::stable_sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) { return key(a) < key(b); });
  std::vector<Row> out;
  for (Row& r : rows) {
    if (!out.empty() && key(out.back()) == key(r)) merge(out.back(), r);
    else out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

OdTable aggregate_to_level(const OdTable& table, const ZoneRelations& relations, ZoneLevel target,
                           MappingMode mode) {
  ZoneMapper map(relations, table.level, target, mode);
  std::vector<ODRecord> rows = table.rows;
  for (ODRecord& r : rows) {
    r.origin = map(r.origin);
    r.destination = map(r.destination);
  }
  OdTable out;
  out.level = target;
  out.has_activity = table.has_activity;
  out.rows = regroup(
      std::move(rows),
      [](const ODRecord& r) {
        return std::tie(r.day, r.hour, r.origin, r.destination, r.activity_origin, r.activity_destination,
                        r.age, r.gender, r.income, r.distance_band);
      },
      [](ODRecord& into, const ODRecord& r) {
        into.trips += r.trips;
        into.trips_km += r.trips_km;
      });
  return out;
}

TripsTable aggregate_to_level(const TripsTable& table, const ZoneRelations& relations, ZoneLevel target,
                              MappingMode mode) {
  ZoneMapper map(relations, table.level, target, mode);
  std::vector<TripsPerPersonRecord> rows = table.rows;
  for (auto& r : rows) r.zone = map(r.zone);
  TripsTable out;
  out.level = target;
  out.rows = regroup(
      std::move(rows),
      [](const TripsPerPersonRecord& r) { return std::tie(r.day, r.zone, r.age, r.gender, r.trips_band); },
      [](TripsPerPersonRecord& into, const TripsPerPersonRecord& r) { into.persons += r.persons; });
  return out;
}

OvernightTable aggregate_to_level(const OvernightTable& table, const ZoneRelations& relations,
                                  ZoneLevel target, MappingMode mode) {
  ZoneMapper map(relations, table.level, target, mode);
  std::vector<OvernightStayRecord> rows = table.rows;
  for (auto& r : rows) {
    r.residence_zone = map(r.residence_zone);
    r.overnight_zone = map(r.overnight_zone);
  }
  OvernightTable out;
  out.level = target;
  out.rows = regroup(
      std::move(rows),
      [](const OvernightStayRecord& r) { return std::tie(r.day, r.residence_zone, r.overnight_zone); },
      [](OvernightStayRecord& into, const OvernightStayRecord& r) { into.persons += r.persons; });
  return out;
}

}  // namespace spainmob

#include "spainmob/geo_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spainmob/error.hpp"

namespace spainmob {

using json = nlohmann::json;

namespace {

[[noreturn]] void feature_error(std::size_t index, const std::string& msg) {
  fail(Errc::GeometryParseError, "feature " + std::to_string(index) + ": " + msg);
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<XY> ring_from_json(const json& j, std::size_t index) {
  if (!j.is_array()) feature_error(index, "ring is not an array");
  std::vector<XY> ring;
  ring.reserve(j.size());
  for (const json& p : j) {
    if (!p.is_array() || p.size() < 2 || !p[0].is_number() || !p[1].is_number())
      feature_error(index, "position is not a coordinate pair");
    ring.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return ring;
}

std::vector<std::vector<XY>> polygon_from_json(const json& j, std::size_t index) {
  if (!j.is_array() || j.empty()) feature_error(index, "polygon has no rings");
  std::vector<std::vector<XY>> rings;
  for (const json& r : j) rings.push_back(ring_from_json(r, index));
  return rings;
}

std::string property_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "";
  return v.dump();
}

}  // namespace

std::vector<RawFeature> read_geojson_features(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(Errc::GeometryParseError, std::string("invalid GeoJSON: ") + e.what());
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" || !doc.contains("features") ||
      !doc["features"].is_array())
    fail(Errc::GeometryParseError, "GeoJSON document is not a FeatureCollection");
  std::vector<RawFeature> out;
  std::size_t index = 0;
  for (const json& f : doc["features"]) {
    if (!f.is_object() || f.value("type", "") != "Feature") feature_error(index, "not a Feature");
    RawFeature rf;
    if (f.contains("properties") && f["properties"].is_object())
      for (const auto& [k, v] : f["properties"].items()) rf.properties[k] = property_text(v);
    if (f.contains("id")) rf.properties["@id"] = property_text(f["id"]);
    if (!f.contains("geometry") || !f["geometry"].is_object()) feature_error(index, "missing geometry");
    const json& g = f["geometry"];
    const std::string type = g.value("type", "");
    if (!g.contains("coordinates")) feature_error(index, "geometry without coordinates");
    if (type == "Polygon") {
      rf.polygons.push_back(polygon_from_json(g["coordinates"], index));
    } else if (type == "MultiPolygon") {
      rf.multi = true;
      if (!g["coordinates"].is_array() || g["coordinates"].empty()) feature_error(index, "empty MultiPolygon");
      for (const json& p : g["coordinates"]) rf.polygons.push_back(polygon_from_json(p, index));
    } else {
      feature_error(index, "unsupported geometry type '" + type + "'");
    }
    out.push_back(std::move(rf));
    ++index;
  }
  return out;
}

std::vector<RawFeature> read_geojson_file(const std::filesystem::path& path) {
  return read_geojson_features(read_all(path));
}

// ---------------------------------------------------------------------------
// Shapefile
// ---------------------------------------------------------------------------

namespace {

std::int32_t be32(const char* p) {
  const auto* u = reinterpret_cast<const unsigned char*>(p);
  return static_cast<std::int32_t>((std::uint32_t(u[0]) << 24) | (std::uint32_t(u[1]) << 16) |
                                   (std::uint32_t(u[2]) << 8) | std::uint32_t(u[3]));
}

template <typename T>
T le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

double planar_signed_area(const std::vector<XY>& r) {
  double s = 0;
  for (std::size_t i = 0; i + 1 < r.size(); ++i) s += r[i].x * r[i + 1].y - r[i + 1].x * r[i].y;
  if (!r.empty() && !(r.front().x == r.back().x && r.front().y == r.back().y))
    s += r.back().x * r.front().y - r.front().x * r.back().y;
  return s / 2;
}

bool planar_contains(const std::vector<XY>& ring, const XY& p) {
  bool inside = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    if ((ring[i].y > p.y) != (ring[j].y > p.y) &&
        p.x < (ring[j].x - ring[i].x) * (p.y - ring[i].y) / (ring[j].y - ring[i].y) + ring[i].x)
      inside = !inside;
  }
  return inside;
}

std::vector<std::vector<std::vector<XY>>> group_rings(std::vector<std::vector<XY>> rings) {
  std::vector<std::size_t> outers, inners;
  for (std::size_t i = 0; i < rings.size(); ++i)
    (planar_signed_area(rings[i]) <= 0 ? outers : inners).push_back(i);
  std::vector<std::vector<std::vector<XY>>> polys;
  if (outers.empty()) {
    for (auto& r : rings) polys.push_back({std::move(r)});
    return polys;
  }
  std::vector<std::size_t> poly_of(rings.size());
  for (std::size_t k = 0; k < outers.size(); ++k) {
    poly_of[outers[k]] = k;
    polys.push_back({rings[outers[k]]});
  }
  for (std::size_t h : inners) {
    std::optional<std::size_t> best;
    double best_area = 0;
    for (std::size_t o : outers) {
      if (!planar_contains(rings[o], rings[h].front())) continue;
      const double a = std::abs(planar_signed_area(rings[o]));
      if (!best || a < best_area) {
        best = o;
        best_area = a;
      }
    }
    if (best) {
      polys[poly_of[*best]].push_back(std::move(rings[h]));
    } else {
      // Counter-clockwise ring outside every exterior: treat as an exterior.
      polys.push_back({std::move(rings[h])});
    }
  }
  return polys;
}

bool valid_utf8(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t n;
    if (c < 0x80) n = 0;
    else if ((c >> 5) == 6) n = 1;
    else if ((c >> 4) == 14) n = 2;
    else if ((c >> 3) == 30) n = 3;
    else return false;
    if (i + n >= s.size() && n > 0) return false;
    for (std::size_t k = 1; k <= n; ++k)
      if ((static_cast<unsigned char>(s[i + k]) >> 6) != 2) return false;
    i += n + 1;
  }
  return true;
}

std::string trim_spaces(std::string s) {
  const auto b = s.find_first_not_of(' ');
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(' ');
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string latin1_to_utf8_if_needed(std::string_view s) {
  if (valid_utf8(s)) return std::string(s);
  std::string out;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80) {
      out += ch;
    } else {
      out += static_cast<char>(0xC0 | (c >> 6));
      out += static_cast<char>(0x80 | (c & 0x3F));
    }
  }
  return out;
}

DbfTable read_dbf(const std::filesystem::path& dbf) {
  const std::string b = read_all(dbf);
  if (b.size() < 32) fail(Errc::GeometryParseError, dbf.string() + ": truncated dBASE header");
  const auto nrec = le<std::uint32_t>(b.data() + 4);
  const auto header_len = le<std::uint16_t>(b.data() + 8);
  const auto rec_len = le<std::uint16_t>(b.data() + 10);
  struct Field {
    std::string name;
    std::size_t len;
  };
  std::vector<Field> fields;
  for (std::size_t off = 32; off + 32 <= header_len && b[off] != '\x0D'; off += 32) {
    std::string name(b.data() + off, strnlen(b.data() + off, 11));
    fields.push_back({name, static_cast<unsigned char>(b[off + 16])});
  }
  DbfTable t;
  for (const auto& f : fields) t.fields.push_back(f.name);
  for (std::uint32_t r = 0; r < nrec; ++r) {
    const std::size_t off = header_len + std::size_t(r) * rec_len;
    if (off + rec_len > b.size()) fail(Errc::GeometryParseError, dbf.string() + ": truncated record " + std::to_string(r));
    t.deleted.push_back(b[off] == '*');
    std::vector<std::string> row;
    std::size_t pos = off + 1;
    for (const auto& f : fields) {
      row.push_back(latin1_to_utf8_if_needed(trim_spaces(std::string(b.data() + pos, f.len))));
      pos += f.len;
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::vector<RawFeature> read_shapefile(const std::filesystem::path& shp, const std::filesystem::path& dbf) {
  const std::string b = read_all(shp);
  if (b.size() < 100 || be32(b.data()) != 9994)
    fail(Errc::GeometryParseError, shp.string() + ": not a shapefile");
  const DbfTable table = read_dbf(dbf);

  std::vector<RawFeature> out;
  std::size_t pos = 100;
  std::size_t index = 0;
  while (pos + 8 <= b.size()) {
    const std::size_t content = static_cast<std::size_t>(be32(b.data() + pos + 4)) * 2;
    const char* p = b.data() + pos + 8;
    if (pos + 8 + content > b.size()) feature_error(index, "record exceeds file");
    pos += 8 + content;
    if (content < 4) feature_error(index, "empty record");
    const auto type = le<std::int32_t>(p);
    if (type == 0) feature_error(index, "null shape");
    if (type != 5 && type != 15 && type != 25) feature_error(index, "not a polygon shape");
    if (content < 44) feature_error(index, "truncated polygon");
    const auto nparts = le<std::int32_t>(p + 36);
    const auto npoints = le<std::int32_t>(p + 40);
    if (nparts <= 0 || npoints <= 0 ||
        44 + std::size_t(nparts) * 4 + std::size_t(npoints) * 16 > content)
      feature_error(index, "bad part or point count");
    std::vector<std::int32_t> starts(static_cast<std::size_t>(nparts));
    for (std::int32_t k = 0; k < nparts; ++k) starts[k] = le<std::int32_t>(p + 44 + 4 * k);
    const char* pts = p + 44 + 4 * nparts;
    std::vector<std::vector<XY>> rings;
    for (std::int32_t k = 0; k < nparts; ++k) {
      const std::int32_t s = starts[k];
      const std::int32_t e = k + 1 < nparts ? starts[k + 1] : npoints;
      if (s < 0 || e > npoints || s >= e) feature_error(index, "bad part index");
      std::vector<XY> ring;
      for (std::int32_t i = s; i < e; ++i)
        ring.push_back({le<double>(pts + 16 * i), le<double>(pts + 16 * i + 8)});
      rings.push_back(std::move(ring));
    }
    if (index >= table.rows.size()) feature_error(index, "no attribute record");
    if (!table.deleted[index]) {
      RawFeature f;
      for (std::size_t c = 0; c < table.fields.size(); ++c) f.properties[table.fields[c]] = table.rows[index][c];
      f.polygons = group_rings(std::move(rings));
      f.multi = f.polygons.size() > 1;
      out.push_back(std::move(f));
    }
    ++index;
  }
  return out;
}

}  // namespace spainmob

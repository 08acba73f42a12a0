#include "spainmob/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "spainmob/error.hpp"
#include "spainmob/parquet.hpp"
#include "spainmob/table_io.hpp"

namespace spainmob {

std::string_view to_string(Segment s) { return s == Segment::Weekday ? "weekday" : "weekend"; }

std::string_view to_string(Dimension d) {
  switch (d) {
    case Dimension::Age: return "age";
    case Dimension::Gender: return "gender";
    case Dimension::Income: return "income";
  }
  return "?";
}

Dimension parse_dimension(std::string_view text) {
  if (text == "age") return Dimension::Age;
  if (text == "gender") return Dimension::Gender;
  if (text == "income") return Dimension::Income;
  fail(Errc::UnknownDimension, "unknown dimension '" + std::string(text) + "' (age, gender, income)");
}

std::string_view dimension_label(const ODRecord& r, Dimension d) {
  switch (d) {
    case Dimension::Age: return to_string(r.age);
    case Dimension::Gender: return to_string(r.gender);
    case Dimension::Income: return to_string(r.income);
  }
  return "";
}

namespace {

int dimension_value(const ODRecord& r, Dimension d) {
  switch (d) {
    case Dimension::Age: return static_cast<int>(r.age);
    case Dimension::Gender: return static_cast<int>(r.gender);
    case Dimension::Income: return static_cast<int>(r.income);
  }
  return 0;
}

Segment segment_of(const Date& d) { return d.is_weekend() ? Segment::Weekend : Segment::Weekday; }

std::array<std::size_t, 2> segment_day_counts(const OdTable& table) {
  std::set<Date> days;
  for (const auto& r : table.rows) days.insert(r.day);
  std::array<std::size_t, 2> n{0, 0};
  for (const Date& d : days) ++n[static_cast<int>(segment_of(d))];
  return n;
}

void require_origin(const OdTable& table, const ZoneId& origin) {
  for (const auto& r : table.rows)
    if (r.origin == origin) return;
  fail(Errc::UnknownZone, "zone " + origin.value + " never appears as an origin");
}

std::size_t positive_destinations(const std::map<ZoneId, double>& totals) {
  return static_cast<std::size_t>(
      std::count_if(totals.begin(), totals.end(), [](const auto& kv) { return kv.second > 0; }));
}

}  // namespace

// ---------------------------------------------------------------------------
// Weekday / weekend
// ---------------------------------------------------------------------------

std::vector<FlowSummary> weekday_weekend_summary(const OdTable& table, const ZoneId& origin,
                                                 std::optional<Dimension> group_by) {
  require_origin(table, origin);
  const auto days = segment_day_counts(table);
  struct Acc {
    std::string label;
    std::array<double, 2> trips{0, 0};
    std::array<std::map<ZoneId, double>, 2> dest;
  };
  std::map<int, Acc> groups;
  for (const auto& r : table.rows) {
    if (r.origin != origin) continue;
    const int key = group_by ? dimension_value(r, *group_by) : 0;
    Acc& a = groups[key];
    if (group_by) a.label = std::string(dimension_label(r, *group_by));
    const int s = static_cast<int>(segment_of(r.day));
    a.trips[s] += r.trips;
    a.dest[s][r.destination] += r.trips;
  }
  std::vector<FlowSummary> out;
  for (const auto& [key, a] : groups) {
    for (Segment seg : {Segment::Weekday, Segment::Weekend}) {
      const int s = static_cast<int>(seg);
      FlowSummary f;
      f.segment = seg;
      if (group_by) f.group = a.label;
      f.avg_daily_trips = days[s] ? a.trips[s] / static_cast<double>(days[s]) : 0.0;
      f.distinct_destinations = positive_destinations(a.dest[s]);
      out.push_back(std::move(f));
    }
  }
  return out;
}

AnalyticsTable to_table(const std::vector<FlowSummary>& summaries, std::optional<Dimension> group_by) {
  AnalyticsTable t;
  if (group_by) t.key_columns.emplace_back(to_string(*group_by));
  t.key_columns.push_back("segment");
  t.measure_columns = {"avg_daily_trips", "distinct_destinations"};
  for (const auto& s : summaries) {
    AnalyticsTable::Row row;
    if (group_by) row.keys.push_back(s.group.value_or(""));
    row.keys.emplace_back(to_string(s.segment));
    row.measures = {s.avg_daily_trips, static_cast<double>(s.distinct_destinations)};
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Hourly profiles
// ---------------------------------------------------------------------------

std::vector<HourlyProfile> hourly_profile(const OdTable& table, const HourlyOptions& options) {
  if (options.destination) {
    const bool seen = std::any_of(table.rows.begin(), table.rows.end(),
                                  [&](const ODRecord& r) { return r.destination == *options.destination; });
    if (!seen) fail(Errc::UnknownZone, "zone " + options.destination->value + " never appears as a destination");
  }
  std::set<Date> days;
  for (const auto& r : table.rows) days.insert(r.day);

  std::map<int, HourlyProfile> groups;
  for (const auto& r : table.rows) {
    if (options.destination && r.destination != *options.destination) continue;
    if (options.exclude_internal && r.origin == r.destination) continue;
    const int key = options.group_by ? dimension_value(r, *options.group_by) : 0;
    HourlyProfile& p = groups[key];
    p.group_key = options.group_by ? std::string(dimension_label(r, *options.group_by)) : "all";
    p.values[static_cast<std::size_t>(r.hour)] += r.trips;
  }
  std::vector<HourlyProfile> out;
  for (auto& [key, p] : groups) {
    if (options.reducer == Reducer::MeanPerDay && !days.empty())
      for (double& v : p.values) v /= static_cast<double>(days.size());
    out.push_back(std::move(p));
  }
  return out;
}

AnalyticsTable to_table(const std::vector<HourlyProfile>& profiles) {
  AnalyticsTable t;
  t.key_columns = {"group", "hour"};
  t.measure_columns = {"trips"};
  for (const auto& p : profiles)
    for (int h = 0; h < 24; ++h)
      t.rows.push_back({{p.group_key, (h < 10 ? "0" : "") + std::to_string(h)}, {p.values[h]}});
  return t;
}

// ---------------------------------------------------------------------------
// Top-percentile flows
// ---------------------------------------------------------------------------

std::vector<FlowTotal> top_percentile_flows(const OdTable& table, const ZoneId& origin, double percentile_rank,
                                            PercentileBasis basis) {
  if (!(percentile_rank > 0 && percentile_rank <= 100))
    fail(Errc::InvalidArgument, "percentile must be in (0, 100]");
  require_origin(table, origin);
  std::map<ZoneId, double> totals;
  for (const auto& r : table.rows)
    if (r.origin == origin) totals[r.destination] += r.trips;
  std::vector<FlowTotal> ranked;
  for (const auto& [dest, total] : totals)
    if (total > 0) ranked.push_back({dest, total});
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const FlowTotal& a, const FlowTotal& b) { return a.total_trips > b.total_trips; });
  if (ranked.empty()) return ranked;

  std::size_t k = 0;
  if (basis == PercentileBasis::Destinations) {
    const double exact = static_cast<double>(ranked.size()) * percentile_rank / 100.0;
    k = static_cast<std::size_t>(std::ceil(exact - 1e-9 * exact));
  } else {
    double total = 0;
    for (const auto& f : ranked) total += f.total_trips;
    const double target = total * percentile_rank / 100.0;
    double cum = 0;
    while (k < ranked.size()) {
      cum += ranked[k++].total_trips;
      if (cum >= target * (1 - 1e-12)) break;
    }
  }
  k = std::clamp<std::size_t>(k, 1, ranked.size());
  const double cutoff = ranked[k - 1].total_trips;
  std::size_t end = k;
  while (end < ranked.size() && ranked[end].total_trips >= cutoff) ++end;
  ranked.resize(end);
  return ranked;
}

AnalyticsTable to_table(const std::vector<FlowTotal>& flows) {
  AnalyticsTable t;
  t.key_columns = {"destination"};
  t.measure_columns = {"total_trips"};
  for (const auto& f : flows) t.rows.push_back({{f.destination.value}, {f.total_trips}});
  return t;
}

// ---------------------------------------------------------------------------
// Quantile maps
// ---------------------------------------------------------------------------

std::vector<double> quantile_breaks(std::vector<double> values, int n_classes) {
  if (n_classes < 2) fail(Errc::InvalidArgument, "a quantile map needs at least 2 classes");
  std::vector<double> breaks;
  if (values.empty()) return breaks;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  for (int k = 1; k < n_classes; ++k) {
    // Type-1 quantile at p = k / n_classes: the ceil(n p)-th order statistic.
    const std::size_t rank = (n * static_cast<std::size_t>(k) + static_cast<std::size_t>(n_classes) - 1) /
                             static_cast<std::size_t>(n_classes);
    const double b = values[std::max<std::size_t>(rank, 1) - 1];
    if (breaks.empty() || b > breaks.back()) breaks.push_back(b);
  }
  return breaks;
}

int quantile_class(double value, const std::vector<double>& breaks) {
  return static_cast<int>(std::lower_bound(breaks.begin(), breaks.end(), value) - breaks.begin());
}

QuantileMap overnight_quantile_map(const OvernightTable& table, int n_classes, OvernightStatistic statistic) {
  if (n_classes < 2) fail(Errc::InvalidArgument, "a quantile map needs at least 2 classes");
  if (table.rows.empty()) fail(Errc::EmptyTable, "overnight table has no rows");
  std::set<Date> days;
  QuantileMap m;
  m.n_classes = n_classes;
  for (const auto& r : table.rows) {
    days.insert(r.day);
    m.values[r.overnight_zone] += r.persons;
  }
  if (statistic == OvernightStatistic::MeanPerDay)
    for (auto& [zone, v] : m.values) v /= static_cast<double>(days.size());
  std::vector<double> vals;
  for (const auto& [zone, v] : m.values) vals.push_back(v);
  m.breaks = quantile_breaks(vals, n_classes);
  for (const auto& [zone, v] : m.values) m.assignments[zone] = quantile_class(v, m.breaks);
  return m;
}

std::string quantile_map_geojson(const QuantileMap& map, const ZoneCollection& zones) {
  using nlohmann::json;
  json fc;
  fc["type"] = "FeatureCollection";
  fc["features"] = json::array();
  json breaks = json::array();
  for (double b : map.breaks) breaks.push_back(b);
  fc["breaks"] = breaks;
  fc["n_classes"] = map.n_classes;
  const json geometries = json::parse(zones_to_geojson(zones))["features"];
  for (std::size_t i = 0; i < zones.zones.size(); ++i) {
    const ZoneId& id = zones.zones[i].zone_id;
    json f;
    f["type"] = "Feature";
    auto v = map.values.find(id);
    f["properties"] = {{"zone_id", id.value},
                       {"value", v == map.values.end() ? json(nullptr) : json(v->second)},
                       {"class", v == map.values.end() ? kNoDataClass : map.assignments.at(id)}};
    f["geometry"] = geometries[i]["geometry"];
    fc["features"].push_back(std::move(f));
  }
  return fc.dump() + "\n";
}

AnalyticsTable to_table(const QuantileMap& map) {
  AnalyticsTable t;
  t.key_columns = {"zone_id"};
  t.measure_columns = {"value", "class"};
  for (const auto& [zone, v] : map.values)
    t.rows.push_back({{zone.value}, {v, static_cast<double>(map.assignments.at(zone))}});
  return t;
}

// ---------------------------------------------------------------------------
// Demographic breakdown
// ---------------------------------------------------------------------------

AnalyticsTable demographic_breakdown(const OdTable& table, const std::optional<ZoneId>& origin,
                                     const std::vector<Dimension>& dimensions) {
  if (dimensions.empty()) fail(Errc::InvalidArgument, "breakdown needs at least one dimension");
  if (origin) require_origin(table, *origin);
  const auto days = segment_day_counts(table);
  struct Acc {
    std::vector<std::string> labels;
    double trips = 0, km = 0;
    std::map<ZoneId, double> dest;
  };
  // (dimension values..., segment) -> accumulator
  std::map<std::vector<int>, Acc> groups;
  for (const auto& r : table.rows) {
    if (origin && r.origin != *origin) continue;
    std::vector<int> key;
    for (Dimension d : dimensions) key.push_back(dimension_value(r, d));
    key.push_back(static_cast<int>(segment_of(r.day)));
    Acc& a = groups[key];
    if (a.labels.empty())
      for (Dimension d : dimensions) a.labels.emplace_back(dimension_label(r, d));
    a.trips += r.trips;
    a.km += r.trips_km;
    a.dest[r.destination] += r.trips;
  }
  AnalyticsTable t;
  for (Dimension d : dimensions) t.key_columns.emplace_back(to_string(d));
  t.key_columns.push_back("segment");
  t.measure_columns = {"trips", "trips_km", "avg_daily_trips", "distinct_destinations"};
  for (const auto& [key, a] : groups) {
    const int s = key.back();
    AnalyticsTable::Row row;
    row.keys = a.labels;
    row.keys.emplace_back(to_string(static_cast<Segment>(s)));
    row.measures = {a.trips, a.km, days[s] ? a.trips / static_cast<double>(days[s]) : 0.0,
                    static_cast<double>(positive_destinations(a.dest))};
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

void write_analytics_table(const AnalyticsTable& table, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (format_for_path(path) == TableFormat::Csv) {
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) fail(Errc::Io, "cannot create " + tmp.string());
      std::vector<std::string> header = table.key_columns;
      header.insert(header.end(), table.measure_columns.begin(), table.measure_columns.end());
      write_csv_row(out, header);
      for (const auto& r : table.rows) {
        std::vector<std::string> f = r.keys;
        for (double v : r.measures) f.push_back(format_double(v));
        write_csv_row(out, f);
      }
      if (!out) fail(Errc::Io, "write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
    return;
  }
  std::vector<parquet::ColumnSpec> cols;
  std::vector<parquet::ColumnValues> values;
  for (std::size_t k = 0; k < table.key_columns.size(); ++k) {
    cols.push_back({table.key_columns[k], parquet::PhysicalType::ByteArray, parquet::LogicalKind::String});
    std::vector<std::string> v;
    for (const auto& r : table.rows) v.push_back(r.keys[k]);
    values.emplace_back(std::move(v));
  }
  for (std::size_t m = 0; m < table.measure_columns.size(); ++m) {
    cols.push_back({table.measure_columns[m], parquet::PhysicalType::Double, parquet::LogicalKind::None});
    std::vector<double> v;
    for (const auto& r : table.rows) v.push_back(r.measures[m]);
    values.emplace_back(std::move(v));
  }
  parquet::WriterOptions opts;
  opts.key_value_metadata = {{"spainmob.table", "analytics"}};
  parquet::Writer w(path, cols, opts);
  w.write_row_group(values);
  w.close();
}

}  // namespace spainmob

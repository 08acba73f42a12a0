#include "spainmob/normalizer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <mutex>
#include <regex>
#include <thread>
#include <unordered_set>

#include "spainmob/error.hpp"
#include "spainmob/gzip.hpp"
#include "spainmob/table_io.hpp"

namespace spainmob {

namespace {

struct RowError {
  std::string message;
};

[[noreturn]] void row_error(std::string message) { throw RowError{std::move(message)}; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

// Splits one physical line; double-quoted fields may contain the delimiter.
void split_line(std::string_view line, char delim, std::vector<std::string>& out) {
  out.clear();
  std::string field;
  bool quoted = false;
  bool at_start = true;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"' && at_start) {
      quoted = true;
      at_start = false;
    } else if (c == delim) {
      out.push_back(std::move(field));
      field.clear();
      at_start = true;
    } else {
      field += c;
      at_start = false;
    }
  }
  if (quoted) row_error("unterminated quoted field");
  out.push_back(std::move(field));
}

// Field name -> column position, resolved once per stream.
struct Binding {
  std::string field;
  std::size_t column = 0;
};

template <typename Record>
SchemaTarget target_of() {
  if constexpr (std::is_same_v<Record, ODRecord>) return SchemaTarget::OriginDestination;
  else if constexpr (std::is_same_v<Record, TripsPerPersonRecord>) return SchemaTarget::TripsPerPerson;
  else return SchemaTarget::OvernightStays;
}

}  // namespace

template <typename Record>
struct StreamParser<Record>::Impl {
  SchemaMap schema;
  ParseMode mode;
  RecordSink<Record> sink;
  std::string source;

  std::string carry;
  std::size_t line_no = 0;
  bool header_done = false;
  std::map<std::string, std::size_t> columns;  // field -> position
  std::size_t min_fields = 0;
  std::optional<std::regex> zone_re;
  std::unordered_set<std::string> zone_ok;
  ParseReport report;
  std::vector<std::string> fields;
  bool finished = false;

  Impl(const SchemaMap& s, ParseMode m, RecordSink<Record> k, std::string src)
      : schema(s), mode(m), sink(std::move(k)), source(std::move(src)) {
    if (schema.target != target_of<Record>())
      fail(Errc::SchemaMismatch, source + ": schema '" + schema.schema_id + "' targets " +
                                     std::string(to_string(schema.target)));
    if (!schema.zone_id_pattern.empty()) zone_re.emplace(schema.zone_id_pattern);
    if (!schema.has_header) bind({});
  }

  void bind(const std::vector<std::string>& header) {
    for (const auto& [field, ref] : schema.bindings) {
      std::size_t pos = 0;
      if (ref.index) {
        pos = *ref.index;
        if (schema.has_header && pos >= header.size())
          fail(Errc::SchemaMismatch, source + ": column index " + std::to_string(pos) + " for '" +
                                         field + "' beyond header width " +
                                         std::to_string(header.size()));
      } else {
        if (!schema.has_header)
          fail(Errc::SchemaMismatch, source + ": '" + field + "' bound by name but the file has no header");
        auto it = std::find_if(header.begin(), header.end(),
                               [&](const std::string& h) { return trim(h) == ref.name; });
        if (it == header.end())
          fail(Errc::SchemaMismatch, source + ": header lacks column '" + ref.name + "' for '" + field + "'");
        pos = static_cast<std::size_t>(it - header.begin());
      }
      columns[field] = pos;
      min_fields = std::max(min_fields, pos + 1);
    }
    header_done = true;
  }

  std::optional<std::size_t> col(const char* field) const {
    auto it = columns.find(field);
    if (it == columns.end()) return std::nullopt;
    return it->second;
  }

  std::string_view raw(const char* field) const { return trim(fields[columns.at(field)]); }

  Date day() const {
    const std::string_view t = raw("day");
    try {
      return schema.date_format == "YYYYMMDD" ? Date::parse_compact(t) : Date::parse_iso(t);
    } catch (const Error&) {
      row_error("bad date '" + std::string(t) + "'");
    }
  }

  int hour() const {
    const std::string_view t = raw("hour");
    int v = -1;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || ec != std::errc() || p != t.data() + t.size() || v < 0 || v > 23)
      row_error("bad hour '" + std::string(t) + "'");
    return v;
  }

  double real(const char* field) const {
    const std::string_view t = raw(field);
    std::string buf(t);
    if (schema.decimal_separator != '.') std::replace(buf.begin(), buf.end(), schema.decimal_separator, '.');
    double v = 0;
    auto [p, ec] = std::from_chars(buf.data(), buf.data() + buf.size(), v);
    if (buf.empty() || ec != std::errc() || p != buf.data() + buf.size())
      row_error("bad number '" + std::string(t) + "' in " + field);
    if (!std::isfinite(v) || v < 0) row_error("negative or non-finite " + std::string(field) + " '" + std::string(t) + "'");
    return v;
  }

  ZoneId zone(const char* field) {
    const std::string_view t = raw(field);
    if (t.empty()) row_error(std::string("empty ") + field);
    std::string id(t);
    if (zone_re && !zone_ok.count(id)) {
      if (!std::regex_match(id, *zone_re)) row_error("zone id '" + id + "' does not match the zone pattern");
      zone_ok.insert(id);
    }
    return ZoneId(std::move(id));
  }

  bool is_null(std::string_view t) const {
    return std::find(schema.null_tokens.begin(), schema.null_tokens.end(), t) != schema.null_tokens.end();
  }

  // Canonical label for a mapped field; empty optional means not disaggregated.
  std::optional<std::string> label(const char* field) const {
    if (!col(field)) return std::nullopt;
    const std::string_view t = raw(field);
    auto vm = schema.value_maps.find(field);
    if (vm != schema.value_maps.end()) {
      auto hit = vm->second.find(std::string(t));
      if (hit != vm->second.end()) return hit->second;
    }
    if (is_null(t)) return std::nullopt;
    row_error("unmapped " + std::string(field) + " token '" + std::string(t) + "'");
  }

  template <typename E, typename P>
  E mapped(const char* field, E null_value, P parse) const {
    auto l = label(field);
    return l ? parse(*l) : null_value;
  }

  Record build() {
    Record r;
    if constexpr (std::is_same_v<Record, ODRecord>) {
      r.day = day();
      r.hour = hour();
      r.origin = zone("origin");
      r.destination = zone("destination");
      r.activity_origin = mapped("activity_origin", ActivityKind::NotDisaggregated, parse_activity_label);
      r.activity_destination =
          mapped("activity_destination", ActivityKind::NotDisaggregated, parse_activity_label);
      r.age = mapped("age", AgeBand::NotDisaggregated, parse_age_label);
      r.gender = mapped("gender", Gender::NotDisaggregated, parse_gender_label);
      r.income = mapped("income", IncomeBand::NotDisaggregated, parse_income_label);
      if (col("distance_band")) r.distance_band = std::string(raw("distance_band"));
      r.trips = real("trips");
      r.trips_km = real("trips_km");
    } else if constexpr (std::is_same_v<Record, TripsPerPersonRecord>) {
      r.day = day();
      r.zone = zone("zone");
      r.age = mapped("age", AgeBand::NotDisaggregated, parse_age_label);
      r.gender = mapped("gender", Gender::NotDisaggregated, parse_gender_label);
      auto band = label("trips_band");
      if (!band) row_error("missing trips band");
      r.trips_band = parse_trips_band_label(*band);
      r.persons = real("persons");
    } else {
      r.day = day();
      r.residence_zone = zone("residence_zone");
      r.overnight_zone = zone("overnight_zone");
      r.persons = real("persons");
    }
    return r;
  }

  void record_error(std::size_t line, std::string message) {
    if (report.first_errors.size() < kMaxReportedErrors)
      report.first_errors.push_back({line, std::move(message)});
  }

  void line(std::string_view text) {
    ++line_no;
    if (!text.empty() && text.back() == '\r') text.remove_suffix(1);
    if (trim(text).empty()) return;
    if (!header_done) {
      std::vector<std::string> header;
      try {
        split_line(text, schema.delimiter, header);
      } catch (const RowError& e) {
        fail(Errc::SchemaMismatch, source + ": unreadable header: " + e.message);
      }
      if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);
      bind(header);
      return;
    }
    ++report.rows_read;
    try {
      split_line(text, schema.delimiter, fields);
      if (fields.size() < min_fields)
        row_error("expected at least " + std::to_string(min_fields) + " fields, got " +
                  std::to_string(fields.size()));
      Record r = build();
      ++report.rows_emitted;
      sink(std::move(r));
    } catch (const RowError& e) {
      if (mode == ParseMode::Strict)
        fail(Errc::MalformedRow, source + ":" + std::to_string(line_no) + ": " + e.message);
      ++report.rows_skipped;
      record_error(line_no, e.message);
    }
  }

  void feed(std::string_view chunk) {
    std::size_t start = 0;
    while (true) {
      const std::size_t nl = chunk.find('\n', start);
      if (nl == std::string_view::npos) break;
      if (carry.empty()) {
        line(chunk.substr(start, nl - start));
      } else {
        carry.append(chunk.substr(start, nl - start));
        line(carry);
        carry.clear();
      }
      start = nl + 1;
    }
    carry.append(chunk.substr(start));
  }
};

template <typename Record>
StreamParser<Record>::StreamParser(const SchemaMap& schema, ParseMode mode, RecordSink<Record> sink,
                                   std::string source_name)
    : impl_(std::make_unique<Impl>(schema, mode, std::move(sink), std::move(source_name))) {}

template <typename Record>
StreamParser<Record>::~StreamParser() = default;
template <typename Record>
StreamParser<Record>::StreamParser(StreamParser&&) noexcept = default;
template <typename Record>
StreamParser<Record>& StreamParser<Record>::operator=(StreamParser&&) noexcept = default;

template <typename Record>
void StreamParser<Record>::feed(std::string_view chunk) {
  impl_->feed(chunk);
}

template <typename Record>
ParseReport StreamParser<Record>::finish() {
  Impl& m = *impl_;
  if (!m.finished) {
    if (!m.carry.empty()) {
      std::string last = std::move(m.carry);
      m.carry.clear();
      m.line(last);
    }
    m.finished = true;
    if (!m.header_done) fail(Errc::SchemaMismatch, m.source + ": no header line");
  }
  return m.report;
}

template <typename Record>
void StreamParser<Record>::note_stream_error(const std::string& message) {
  // A partial trailing line from a damaged stream is never parsed.
  impl_->carry.clear();
  impl_->record_error(0, message);
}

template class StreamParser<ODRecord>;
template class StreamParser<TripsPerPersonRecord>;
template class StreamParser<OvernightStayRecord>;

namespace {

template <typename Record>
ParseReport parse_file(const CacheEntry& entry, const SchemaMap& schema, ParseMode mode,
                       const RecordSink<Record>& sink) {
  const std::string source = entry.local_path.string();
  if (!entry.descriptor.schema_id.empty() && entry.descriptor.schema_id != schema.schema_id)
    fail(Errc::SchemaMismatch, source + ": descriptor expects schema '" + entry.descriptor.schema_id +
                                   "', got '" + schema.schema_id + "'");
  StreamParser<Record> parser(schema, mode, sink, source);
  try {
    GzipFileReader reader(entry.local_path);
    std::vector<char> buf(1 << 16);
    while (std::size_t n = reader.read(buf.data(), buf.size())) parser.feed({buf.data(), n});
  } catch (const Error& e) {
    if (e.code() != Errc::GzipCorrupt || mode == ParseMode::Strict) throw;
    parser.note_stream_error(e.what());
    try {
      return parser.finish();
    } catch (const Error& inner) {
      if (inner.code() != Errc::SchemaMismatch) throw;
      // Nothing readable before the damage.
      ParseReport r;
      r.first_errors.push_back({0, e.what()});
      return r;
    }
  }
  return parser.finish();
}

template <typename Record>
Parsed<Record> parse_collect(const CacheEntry& entry, const SchemaMap& schema, ParseMode mode) {
  Parsed<Record> out;
  out.report = parse_file<Record>(entry, schema, mode,
                                  [&](Record&& r) { out.records.push_back(std::move(r)); });
  return out;
}

}  // namespace

ParseReport parse_od_file(const CacheEntry& entry, const SchemaMap& schema, ParseMode mode,
                          const RecordSink<ODRecord>& sink) {
  return parse_file<ODRecord>(entry, schema, mode, sink);
}
ParseReport parse_trips_file(const CacheEntry& entry, const SchemaMap& schema, ParseMode mode,
                             const RecordSink<TripsPerPersonRecord>& sink) {
  return parse_file<TripsPerPersonRecord>(entry, schema, mode, sink);
}
ParseReport parse_overnight_file(const CacheEntry& entry, const SchemaMap& schema, ParseMode mode,
                                 const RecordSink<OvernightStayRecord>& sink) {
  return parse_file<OvernightStayRecord>(entry, schema, mode, sink);
}

Parsed<ODRecord> parse_od_file(const CacheEntry& entry, const SchemaMap& schema, ParseMode mode) {
  return parse_collect<ODRecord>(entry, schema, mode);
}
Parsed<TripsPerPersonRecord> parse_trips_file(const CacheEntry& entry, const SchemaMap& schema,
                                              ParseMode mode) {
  return parse_collect<TripsPerPersonRecord>(entry, schema, mode);
}
Parsed<OvernightStayRecord> parse_overnight_file(const CacheEntry& entry, const SchemaMap& schema,
                                                 ParseMode mode) {
  return parse_collect<OvernightStayRecord>(entry, schema, mode);
}

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

std::filesystem::path default_cache_root(const DatasetRequest& request) {
  return request.output_directory() / "cache";
}

std::string export_stem(const DatasetRequest& request) {
  std::string kind;
  switch (request.kind()) {
    case DatasetKind::OriginDestination: kind = "od"; break;
    case DatasetKind::TripsPerPerson: kind = "trips"; break;
    case DatasetKind::OvernightStays: kind = "overnight"; break;
  }
  return kind + "_v" + std::to_string(to_int(request.version())) + "_" +
         std::string(to_string(request.level())) + "_" + request.range().start.compact() + "_" +
         request.range().end.compact();
}

namespace {

using Reports = std::vector<std::pair<std::filesystem::path, ParseReport>>;

void require_kind(const DatasetRequest& request, DatasetKind kind) {
  if (request.kind() != kind)
    fail(Errc::InvalidArgument, "request is for " + std::string(to_string(request.kind())) +
                                    " data, expected " + std::string(to_string(kind)));
}

std::vector<CacheEntry> fetch_request(const DatasetRequest& request, const CatalogConfig& catalog,
                                      const FetchPolicy& policy, const FetchContext& ctx,
                                      const DatasetOptions& options) {
  const auto descriptors = resolve_resources(request, catalog);
  const auto root = options.cache_root.empty() ? default_cache_root(request) : options.cache_root;
  return fetch_all(descriptors, policy, root, ctx);
}

// Parses files in windows of `workers` concurrent days and hands each day's
// rows to `consume` in day order.
template <typename Record>
void parse_days(const std::vector<CacheEntry>& entries, const CatalogConfig& catalog, ParseMode mode,
                int workers, Reports& reports,
                const std::function<void(std::vector<Record>&&)>& consume) {
  const std::size_t window = static_cast<std::size_t>(std::max(1, workers));
  for (std::size_t base = 0; base < entries.size(); base += window) {
    const std::size_t n = std::min(window, entries.size() - base);
    std::vector<Parsed<Record>> parsed(n);
    std::vector<std::exception_ptr> errors(n);
    auto work = [&](std::size_t i) {
      try {
        const CacheEntry& e = entries[base + i];
        parsed[i] = parse_collect<Record>(e, catalog.schema(e.descriptor.schema_id), mode);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    };
    if (n == 1) {
      work(0);
    } else {
      std::vector<std::thread> threads;
      for (std::size_t i = 0; i < n; ++i) threads.emplace_back(work, i);
      for (auto& t : threads) t.join();
    }
    for (std::size_t i = 0; i < n; ++i)
      if (errors[i]) std::rethrow_exception(errors[i]);
    for (std::size_t i = 0; i < n; ++i) {
      reports.emplace_back(entries[base + i].local_path, parsed[i].report);
      consume(std::move(parsed[i].records));
    }
  }
}

template <typename Record>
void sort_day(std::vector<Record>& rows, ZoneLevel level) {
  if constexpr (std::is_same_v<Record, ODRecord>) {
    OdTable t{level, true, std::move(rows)};
    sort_rows(t);
    rows = std::move(t.rows);
  } else if constexpr (std::is_same_v<Record, TripsPerPersonRecord>) {
    TripsTable t{level, std::move(rows)};
    sort_rows(t);
    rows = std::move(t.rows);
  } else {
    OvernightTable t{level, std::move(rows)};
    sort_rows(t);
    rows = std::move(t.rows);
  }
}

template <typename Record>
ExportedTable export_request(const DatasetRequest& request, bool keep_activity,
                             const CatalogConfig& catalog, const FetchPolicy& policy,
                             const FetchContext& ctx, const DatasetOptions& options) {
  const auto entries = fetch_request(request, catalog, policy, ctx, options);
  ExportedTable out;
  const auto dir = request.output_directory();
  std::filesystem::create_directories(dir);
  const std::string stem = export_stem(request);
  out.parquet_path = dir / (stem + ".parquet");
  if (options.write_csv) out.csv_path = dir / (stem + ".csv");

  TableWriter<Record> writer(out.parquet_path, out.csv_path, request.level(), keep_activity);
  parse_days<Record>(entries, catalog, options.mode, policy.max_concurrent, out.reports,
                     [&](std::vector<Record>&& rows) {
                       if constexpr (std::is_same_v<Record, ODRecord>) {
                         if (!keep_activity) {
                           OdTable t{request.level(), true, std::move(rows)};
                           rows = collapse_activity(t).rows;
                         }
                       }
                       sort_day(rows, request.level());
                       writer.append(rows);
                     });
  if (writer.rows() == 0)
    fail(Errc::EmptyResult, "every day of " + stem + " parsed to zero rows; the raw schema may have changed");
  writer.close();
  out.row_count = writer.rows();
  out.row_groups = writer.row_groups();
  for (const auto& c : writer.columns()) out.columns.push_back(c.name);
  return out;
}

}  // namespace

ExportedTable get_od_data(const DatasetRequest& request, bool keep_activity,
                          const CatalogConfig& catalog, const FetchPolicy& policy,
                          const FetchContext& ctx, const DatasetOptions& options) {
  require_kind(request, DatasetKind::OriginDestination);
  return export_request<ODRecord>(request, keep_activity, catalog, policy, ctx, options);
}

ExportedTable get_number_of_trips_data(const DatasetRequest& request, const CatalogConfig& catalog,
                                       const FetchPolicy& policy, const FetchContext& ctx,
                                       const DatasetOptions& options) {
  require_kind(request, DatasetKind::TripsPerPerson);
  return export_request<TripsPerPersonRecord>(request, true, catalog, policy, ctx, options);
}

ExportedTable get_overnight_stays_data(const DatasetRequest& request, const CatalogConfig& catalog,
                                       const FetchPolicy& policy, const FetchContext& ctx,
                                       const DatasetOptions& options) {
  require_kind(request, DatasetKind::OvernightStays);
  return export_request<OvernightStayRecord>(request, true, catalog, policy, ctx, options);
}

OdTable load_od_table(const DatasetRequest& request, bool keep_activity, const CatalogConfig& catalog,
                      const FetchPolicy& policy, const FetchContext& ctx,
                      const DatasetOptions& options, Reports* reports) {
  require_kind(request, DatasetKind::OriginDestination);
  const auto entries = fetch_request(request, catalog, policy, ctx, options);
  Reports local;
  OdTable table{request.level(), true, {}};
  parse_days<ODRecord>(entries, catalog, options.mode, policy.max_concurrent, reports ? *reports : local,
                       [&](std::vector<ODRecord>&& rows) {
                         table.rows.insert(table.rows.end(), std::make_move_iterator(rows.begin()),
                                           std::make_move_iterator(rows.end()));
                       });
  if (table.rows.empty())
    fail(Errc::EmptyResult, "every day of " + export_stem(request) + " parsed to zero rows");
  if (!keep_activity) return collapse_activity(table);
  sort_rows(table);
  return table;
}

}  // namespace spainmob

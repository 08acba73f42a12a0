#pragma once

// Streaming normalization of raw gzip-compressed delimited drops into typed
// record tables, plus the request-level pipelines that fetch, parse, merge and
// export a whole date range.

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spainmob/catalog.hpp"
#include "spainmob/fetcher.hpp"
#include "spainmob/records.hpp"
#include "spainmob/schema.hpp"

namespace spainmob {

enum class ParseMode { Strict, Lenient };

inline constexpr std::size_t kMaxReportedErrors = 100;

struct ParseError {
  std::size_t line = 0;  // 1-based physical line, 0 for stream-level errors
  std::string message;

  friend bool operator==(const ParseError&, const ParseError&) = default;
};

struct ParseReport {
  std::size_t rows_read = 0;
  std::size_t rows_emitted = 0;
  std::size_t rows_skipped = 0;
  std::vector<ParseError> first_errors;  // at most kMaxReportedErrors

  friend bool operator==(const ParseReport&, const ParseReport&) = default;
};

template <typename Record>
using RecordSink = std::function<void(Record&&)>;

// Push parser over decompressed text. Chunks may split lines anywhere; the
// emitted records and report do not depend on where.
template <typename Record>
class StreamParser {
 public:
  StreamParser(const SchemaMap& schema, ParseMode mode, RecordSink<Record> sink,
               std::string source_name = "<stream>");
  ~StreamParser();
  StreamParser(StreamParser&&) noexcept;
  StreamParser& operator=(StreamParser&&) noexcept;

  void feed(std::string_view chunk);
  // Flushes a final unterminated line and returns the report.
  ParseReport finish();
  // Stream-level failure (e.g. corrupt gzip) noted in Lenient mode.
  void note_stream_error(const std::string& message);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

extern template class StreamParser<ODRecord>;
extern template class StreamParser<TripsPerPersonRecord>;
extern template class StreamParser<OvernightStayRecord>;

template <typename Record>
struct Parsed {
  std::vector<Record> records;
  ParseReport report;
};

// Each throws SchemaMismatch when the header lacks a bound column, GzipCorrupt
// for a damaged stream (Strict) and MalformedRow on the first bad row (Strict).
ParseReport parse_od_file(const CacheEntry& entry, const SchemaMap& schema, ParseMode mode,
                          const RecordSink<ODRecord>& sink);
ParseReport parse_trips_file(const CacheEntry& entry, const SchemaMap& schema, ParseMode mode,
                             const RecordSink<TripsPerPersonRecord>& sink);
ParseReport parse_overnight_file(const CacheEntry& entry, const SchemaMap& schema, ParseMode mode,
                                 const RecordSink<OvernightStayRecord>& sink);

Parsed<ODRecord> parse_od_file(const CacheEntry& entry, const SchemaMap& schema, ParseMode mode);
Parsed<TripsPerPersonRecord> parse_trips_file(const CacheEntry& entry, const SchemaMap& schema,
                                              ParseMode mode);
Parsed<OvernightStayRecord> parse_overnight_file(const CacheEntry& entry, const SchemaMap& schema,
                                                 ParseMode mode);

// Handle to a written dataset.
struct ExportedTable {
  std::filesystem::path parquet_path;
  std::optional<std::filesystem::path> csv_path;
  std::size_t row_count = 0;
  std::size_t row_groups = 0;
  std::vector<std::string> columns;
  std::vector<std::pair<std::filesystem::path, ParseReport>> reports;  // per raw file
};

struct DatasetOptions {
  // Defaults to <output_directory>/cache when empty.
  std::filesystem::path cache_root;
  ParseMode mode = ParseMode::Strict;
  bool write_csv = false;
};

std::filesystem::path default_cache_root(const DatasetRequest& request);

// Fetch, parse, merge and export one request. Throws PartialFailure for
// missing remote files and EmptyResult when every day parsed to zero rows.
ExportedTable get_od_data(const DatasetRequest& request, bool keep_activity,
                          const CatalogConfig& catalog, const FetchPolicy& policy,
                          const FetchContext& ctx = default_fetch_context(),
                          const DatasetOptions& options = {});
ExportedTable get_number_of_trips_data(const DatasetRequest& request, const CatalogConfig& catalog,
                                       const FetchPolicy& policy,
                                       const FetchContext& ctx = default_fetch_context(),
                                       const DatasetOptions& options = {});
ExportedTable get_overnight_stays_data(const DatasetRequest& request, const CatalogConfig& catalog,
                                       const FetchPolicy& policy,
                                       const FetchContext& ctx = default_fetch_context(),
                                       const DatasetOptions& options = {});

// In-memory variants used by the exporting pipelines and by analytics.
OdTable load_od_table(const DatasetRequest& request, bool keep_activity, const CatalogConfig& catalog,
                      const FetchPolicy& policy, const FetchContext& ctx,
                      const DatasetOptions& options,
                      std::vector<std::pair<std::filesystem::path, ParseReport>>* reports = nullptr);

// File stem used for exports, e.g. "od_v2_municipalities_20220320_20220324".
std::string export_stem(const DatasetRequest& request);

}  // namespace spainmob

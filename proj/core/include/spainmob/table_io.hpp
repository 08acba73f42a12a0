#pragma once

// On-disk form of normalized tables. Column names and types are listed in
// docs/schema.md. Parquet files carry the zone level and dataset kind in
// key-value metadata; CSV files are RFC 4180, UTF-8, LF line endings.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spainmob/parquet.hpp"
#include "spainmob/records.hpp"

namespace spainmob {

enum class TableFormat { Parquet, Csv };

TableFormat parse_table_format(std::string_view text);
// From the file extension; ".csv" is CSV, anything else Parquet.
TableFormat format_for_path(const std::filesystem::path& path);

std::vector<parquet::ColumnSpec> od_columns(bool has_activity);
std::vector<parquet::ColumnSpec> trips_columns();
std::vector<parquet::ColumnSpec> overnight_columns();

std::vector<parquet::ColumnValues> to_columns(const std::vector<ODRecord>& rows, bool has_activity);
std::vector<parquet::ColumnValues> to_columns(const std::vector<TripsPerPersonRecord>& rows);
std::vector<parquet::ColumnValues> to_columns(const std::vector<OvernightStayRecord>& rows);

// Incremental writer producing a Parquet file and optionally a CSV twin.
// Each append becomes one Parquet row group.
template <typename Record>
class TableWriter {
 public:
  TableWriter(std::filesystem::path parquet_path, std::optional<std::filesystem::path> csv_path,
              ZoneLevel level, bool has_activity = true);
  ~TableWriter();
  TableWriter(const TableWriter&) = delete;
  TableWriter& operator=(const TableWriter&) = delete;

  void append(const std::vector<Record>& rows);
  void close();

  std::size_t rows() const { return rows_; }
  std::size_t row_groups() const { return groups_; }
  const std::vector<parquet::ColumnSpec>& columns() const { return columns_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::vector<parquet::ColumnSpec> columns_;
  bool has_activity_;
  std::size_t rows_ = 0;
  std::size_t groups_ = 0;
};

extern template class TableWriter<ODRecord>;
extern template class TableWriter<TripsPerPersonRecord>;
extern template class TableWriter<OvernightStayRecord>;

// One-shot writers choosing the format from the path extension.
void write_table(const OdTable& table, const std::filesystem::path& path);
void write_table(const TripsTable& table, const std::filesystem::path& path);
void write_table(const OvernightTable& table, const std::filesystem::path& path);

// Readers accept Parquet or CSV. The zone level comes from Parquet metadata;
// `fallback_level` applies to CSV input. Wrong columns throw SchemaMismatch.
OdTable read_od_table(const std::filesystem::path& path,
                      ZoneLevel fallback_level = ZoneLevel::Districts);
TripsTable read_trips_table(const std::filesystem::path& path,
                            ZoneLevel fallback_level = ZoneLevel::Districts);
OvernightTable read_overnight_table(const std::filesystem::path& path,
                                    ZoneLevel fallback_level = ZoneLevel::Districts);

// RFC 4180 helpers.
std::string csv_escape(std::string_view field);
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);
// Parses a whole document; throws MalformedRow on an unterminated quote.
std::vector<std::vector<std::string>> parse_csv(std::string_view text, char delimiter = ',');

// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace spainmob

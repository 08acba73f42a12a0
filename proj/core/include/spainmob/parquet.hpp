#pragma once

// Minimal Apache Parquet writer and reader.
//
// Written files use flat schemas of REQUIRED columns, PLAIN encoding, v1 data
// pages and GZIP (or no) compression; each row group is written with a fixed
// page size so output bytes depend only on the input values. The reader
// accepts exactly that subset.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace spainmob::parquet {

enum class PhysicalType { Int32, Int64, Double, ByteArray };
enum class LogicalKind { None, String, Date };
enum class Codec { Uncompressed, Gzip };

struct ColumnSpec {
  std::string name;
  PhysicalType type = PhysicalType::Int32;
  LogicalKind logical = LogicalKind::None;

  friend bool operator==(const ColumnSpec&, const ColumnSpec&) = default;
};

using ColumnValues = std::variant<std::vector<std::int32_t>, std::vector<std::int64_t>,
                                  std::vector<double>, std::vector<std::string>>;

std::size_t value_count(const ColumnValues& v);

struct WriterOptions {
  Codec codec = Codec::Gzip;
  std::size_t values_per_page = 1 << 17;
  std::vector<std::pair<std::string, std::string>> key_value_metadata;
  std::string created_by = "spainmob";
};

// Writes to "<path>.tmp" and renames into place on close(); an unclosed
// writer removes its temporary file.
class Writer {
 public:
  Writer(std::filesystem::path path, std::vector<ColumnSpec> schema, WriterOptions options = {});
  ~Writer();
  Writer(const Writer&) = delete;
  Writer& operator=(const Writer&) = delete;

  // An empty group is validated and then skipped.
  void write_row_group(const std::vector<ColumnValues>& columns);
  void close();

 private:
  struct ChunkMeta {
    std::int64_t num_values = 0;
    std::int64_t data_page_offset = 0;
    std::int64_t uncompressed = 0;
    std::int64_t compressed = 0;
  };
  struct GroupMeta {
    std::int64_t num_rows = 0;
    std::vector<ChunkMeta> chunks;
  };

  void append(const std::string& bytes);

  std::filesystem::path path_;
  std::filesystem::path tmp_path_;
  std::vector<ColumnSpec> schema_;
  WriterOptions options_;
  std::string buffer_;
  std::int64_t offset_ = 0;
  std::vector<GroupMeta> groups_;
  struct FileHandle;
  FileHandle* file_ = nullptr;
  bool closed_ = false;
};

struct File {
  std::vector<ColumnSpec> schema;
  std::int64_t num_rows = 0;
  std::vector<std::vector<ColumnValues>> row_groups;
  std::vector<std::pair<std::string, std::string>> key_value_metadata;
  std::string created_by;

  std::optional<std::size_t> column_index(const std::string& name) const;
  // All row groups of one column concatenated. Throws ParquetFormatError for
  // unknown names.
  ColumnValues column(const std::string& name) const;
};

// Throws ParquetFormatError for anything outside the supported subset.
File read(const std::filesystem::path& path);

}  // namespace spainmob::parquet

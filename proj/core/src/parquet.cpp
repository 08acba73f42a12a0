#include "spainmob/parquet.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "spainmob/error.hpp"
#include "spainmob/gzip.hpp"

namespace spainmob::parquet {

namespace {

// Thrift compact protocol type ids.
enum : std::uint8_t {
  kBoolTrue = 1,
  kBoolFalse = 2,
  kByte = 3,
  kI16 = 4,
  kI32 = 5,
  kI64 = 6,
  kDouble = 7,
  kBinary = 8,
  kList = 9,
  kSet = 10,
  kMap = 11,
  kStruct = 12,
};

// Parquet enum values.
constexpr int kTypeInt32 = 1;
constexpr int kTypeInt64 = 2;
constexpr int kTypeDouble = 5;
constexpr int kTypeByteArray = 6;
constexpr int kRequired = 0;
constexpr int kConvertedUtf8 = 0;
constexpr int kConvertedDate = 6;
constexpr int kLogicalString = 1;
constexpr int kLogicalDate = 6;
constexpr int kCodecUncompressed = 0;
constexpr int kCodecGzip = 2;
constexpr int kPageData = 0;
constexpr int kEncodingPlain = 0;
constexpr int kEncodingRle = 3;

[[noreturn]] void format_error(const std::string& msg) { fail(Errc::ParquetFormatError, msg); }

class CompactWriter {
 public:
  void field_i32(std::int16_t id, std::int32_t v) {
    header(id, kI32);
    varint(zigzag(v));
  }
  void field_i64(std::int16_t id, std::int64_t v) {
    header(id, kI64);
    varint(zigzag(v));
  }
  void field_string(std::int16_t id, const std::string& s) {
    header(id, kBinary);
    binary(s);
  }
  void begin_struct(std::int16_t id) {
    header(id, kStruct);
    stack_.push_back(last_);
    last_ = 0;
  }
  void begin_list(std::int16_t id, std::uint8_t elem_type, std::size_t size) {
    header(id, kList);
    list_header(elem_type, size);
  }
  // Struct element inside a list.
  void begin_element() {
    stack_.push_back(last_);
    last_ = 0;
  }
  void end_struct() {
    out_.push_back(0);
    last_ = stack_.back();
    stack_.pop_back();
  }
  void element_i32(std::int32_t v) { varint(zigzag(v)); }
  void element_string(const std::string& s) { binary(s); }
  // Top-level struct terminator.
  void stop() { out_.push_back(0); }

  const std::string& bytes() const { return out_; }

 private:
  static std::uint64_t zigzag(std::int64_t v) {
    return (static_cast<std::uint64_t>(v) << 1) ^ static_cast<std::uint64_t>(v >> 63);
  }
  void varint(std::uint64_t v) {
    while (v >= 0x80) {
      out_.push_back(static_cast<char>((v & 0x7F) | 0x80));
      v >>= 7;
    }
    out_.push_back(static_cast<char>(v));
  }
  void header(std::int16_t id, std::uint8_t type) {
    const int delta = id - last_;
    if (delta > 0 && delta <= 15) {
      out_.push_back(static_cast<char>((delta << 4) | type));
    } else {
      out_.push_back(static_cast<char>(type));
      varint(zigzag(id));
    }
    last_ = id;
  }
  void list_header(std::uint8_t elem_type, std::size_t size) {
    if (size < 15) {
      out_.push_back(static_cast<char>((size << 4) | elem_type));
    } else {
      out_.push_back(static_cast<char>(0xF0 | elem_type));
      varint(size);
    }
  }
  void binary(const std::string& s) {
    varint(s.size());
    out_.append(s);
  }

  std::string out_;
  std::int16_t last_ = 0;
  std::vector<std::int16_t> stack_;
};

// Generic decoded Thrift value.
struct TValue {
  std::uint8_t type = 0;
  std::int64_t i = 0;
  double d = 0;
  std::string s;
  std::vector<TValue> list;
  std::vector<std::pair<std::int16_t, TValue>> fields;

  const TValue* field(std::int16_t id) const {
    for (const auto& [fid, v] : fields)
      if (fid == id) return &v;
    return nullptr;
  }
  std::int64_t int_field(std::int16_t id, const char* what) const {
    const TValue* v = field(id);
    if (!v) format_error(std::string("missing field ") + what);
    return v->i;
  }
};

class CompactReader {
 public:
  CompactReader(const char* data, std::size_t size) : p_(data), end_(data + size) {}

  TValue read_struct() {
    TValue v;
    v.type = kStruct;
    std::int16_t last = 0;
    while (true) {
      const std::uint8_t byte = u8();
      if (byte == 0) break;
      const std::uint8_t type = byte & 0x0F;
      const int delta = byte >> 4;
      std::int16_t id = delta ? static_cast<std::int16_t>(last + delta)
                              : static_cast<std::int16_t>(unzigzag(varint()));
      last = id;
      v.fields.emplace_back(id, read_value(type));
    }
    return v;
  }

  std::size_t consumed(const char* base) const { return static_cast<std::size_t>(p_ - base); }

 private:
  TValue read_value(std::uint8_t type) {
    TValue v;
    v.type = type;
    switch (type) {
      case kBoolTrue: v.i = 1; break;
      case kBoolFalse: v.i = 0; break;
      case kByte: v.i = static_cast<std::int8_t>(u8()); break;
      case kI16:
      case kI32:
      case kI64: v.i = unzigzag(varint()); break;
      case kDouble: {
        need(8);
        std::memcpy(&v.d, p_, 8);
        p_ += 8;
        break;
      }
      case kBinary: {
        const std::uint64_t n = varint();
        need(n);
        v.s.assign(p_, n);
        p_ += n;
        break;
      }
      case kList:
      case kSet: {
        const std::uint8_t h = u8();
        std::uint64_t n = h >> 4;
        const std::uint8_t elem = h & 0x0F;
        if (n == 15) n = varint();
        if (n > static_cast<std::uint64_t>(end_ - p_) + 1) format_error("list size exceeds footer");
        for (std::uint64_t k = 0; k < n; ++k) {
          if (elem == kBoolTrue || elem == kBoolFalse) {
            TValue b;
            b.type = elem;
            b.i = u8() == 1;
            v.list.push_back(std::move(b));
          } else {
            v.list.push_back(read_value(elem));
          }
        }
        break;
      }
      case kMap: {
        const std::uint64_t n = varint();
        if (n > 0) {
          const std::uint8_t kv = u8();
          for (std::uint64_t k = 0; k < n; ++k) {
            v.list.push_back(read_value(kv >> 4));
            v.list.push_back(read_value(kv & 0x0F));
          }
        }
        break;
      }
      case kStruct: return read_struct();
      default: format_error("unknown thrift type " + std::to_string(type));
    }
    return v;
  }

  void need(std::uint64_t n) {
    if (n > static_cast<std::uint64_t>(end_ - p_)) format_error("truncated thrift structure");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(*p_++);
  }
  std::uint64_t varint() {
    std::uint64_t v = 0;
    for (int shift = 0; shift < 64; shift += 7) {
      const std::uint8_t b = u8();
      v |= static_cast<std::uint64_t>(b & 0x7F) << shift;
      if (!(b & 0x80)) return v;
    }
    format_error("varint too long");
  }
  static std::int64_t unzigzag(std::uint64_t v) {
    return static_cast<std::int64_t>(v >> 1) ^ -static_cast<std::int64_t>(v & 1);
  }

  const char* p_;
  const char* end_;
};

int physical_code(PhysicalType t) {
  switch (t) {
    case PhysicalType::Int32: return kTypeInt32;
    case PhysicalType::Int64: return kTypeInt64;
    case PhysicalType::Double: return kTypeDouble;
    case PhysicalType::ByteArray: return kTypeByteArray;
  }
  return kTypeInt32;
}

bool matches(const ColumnSpec& spec, const ColumnValues& v) {
  switch (spec.type) {
    case PhysicalType::Int32: return std::holds_alternative<std::vector<std::int32_t>>(v);
    case PhysicalType::Int64: return std::holds_alternative<std::vector<std::int64_t>>(v);
    case PhysicalType::Double: return std::holds_alternative<std::vector<double>>(v);
    case PhysicalType::ByteArray: return std::holds_alternative<std::vector<std::string>>(v);
  }
  return false;
}

template <typename T>
void put_le(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));  // little-endian host
  out.append(buf, sizeof(T));
}

// PLAIN encoding of values [begin, end).
std::string encode_plain(const ColumnValues& values, std::size_t begin, std::size_t end) {
  std::string out;
  std::visit(
      [&](const auto& vec) {
        using V = typename std::decay_t<decltype(vec)>::value_type;
        for (std::size_t i = begin; i < end; ++i) {
          if constexpr (std::is_same_v<V, std::string>) {
            put_le<std::uint32_t>(out, static_cast<std::uint32_t>(vec[i].size()));
            out.append(vec[i]);
          } else {
            put_le<V>(out, vec[i]);
          }
        }
      },
      values);
  return out;
}

}  // namespace

std::size_t value_count(const ColumnValues& v) {
  return std::visit([](const auto& vec) { return vec.size(); }, v);
}

struct Writer::FileHandle {
  std::FILE* f = nullptr;
};

Writer::Writer(std::filesystem::path path, std::vector<ColumnSpec> schema, WriterOptions options)
    : path_(std::move(path)), schema_(std::move(schema)), options_(std::move(options)) {
  if (schema_.empty()) fail(Errc::InvalidArgument, "parquet schema has no columns");
  if (options_.values_per_page == 0) options_.values_per_page = 1 << 17;
  tmp_path_ = path_;
  tmp_path_ += ".tmp";
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  file_ = new FileHandle;
  file_->f = std::fopen(tmp_path_.c_str(), "wb");
  if (!file_->f) {
    delete file_;
    file_ = nullptr;
    fail(Errc::Io, "cannot create " + tmp_path_.string());
  }
  append("PAR1");
}

Writer::~Writer() {
  if (file_) {
    if (file_->f) std::fclose(file_->f);
    delete file_;
  }
  if (!closed_) {
    std::error_code ec;
    std::filesystem::remove(tmp_path_, ec);
  }
}

void Writer::append(const std::string& bytes) {
  if (std::fwrite(bytes.data(), 1, bytes.size(), file_->f) != bytes.size())
    fail(Errc::Io, "write failed: " + tmp_path_.string());
  offset_ += static_cast<std::int64_t>(bytes.size());
}

void Writer::write_row_group(const std::vector<ColumnValues>& columns) {
  if (closed_) fail(Errc::InvalidArgument, "parquet writer already closed");
  if (columns.size() != schema_.size()) fail(Errc::InvalidArgument, "row group column count mismatch");
  const std::size_t rows = value_count(columns.front());
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (!matches(schema_[c], columns[c]))
      fail(Errc::InvalidArgument, "column '" + schema_[c].name + "' has the wrong value type");
    if (value_count(columns[c]) != rows)
      fail(Errc::InvalidArgument, "column '" + schema_[c].name + "' has a different length");
  }
  if (rows == 0) return;

  GroupMeta group;
  group.num_rows = static_cast<std::int64_t>(rows);
  for (const ColumnValues& values : columns) {
    ChunkMeta chunk;
    chunk.num_values = static_cast<std::int64_t>(rows);
    chunk.data_page_offset = offset_;
    for (std::size_t begin = 0; begin < rows; begin += options_.values_per_page) {
      const std::size_t end = std::min(rows, begin + options_.values_per_page);
      const std::string plain = encode_plain(values, begin, end);
      const std::string payload =
          options_.codec == Codec::Gzip ? gzip_compress(plain) : plain;

      CompactWriter h;
      h.field_i32(1, kPageData);
      h.field_i32(2, static_cast<std::int32_t>(plain.size()));
      h.field_i32(3, static_cast<std::int32_t>(payload.size()));
      h.begin_struct(5);
      h.field_i32(1, static_cast<std::int32_t>(end - begin));
      h.field_i32(2, kEncodingPlain);
      h.field_i32(3, kEncodingRle);
      h.field_i32(4, kEncodingRle);
      h.end_struct();
      h.stop();

      append(h.bytes());
      append(payload);
      chunk.uncompressed += static_cast<std::int64_t>(h.bytes().size() + plain.size());
      chunk.compressed += static_cast<std::int64_t>(h.bytes().size() + payload.size());
    }
    group.chunks.push_back(chunk);
  }
  groups_.push_back(std::move(group));
}

void Writer::close() {
  if (closed_) return;
  std::int64_t num_rows = 0;
  for (const auto& g : groups_) num_rows += g.num_rows;

  CompactWriter m;
  m.field_i32(1, 1);
  m.begin_list(2, kStruct, schema_.size() + 1);
  m.begin_element();
  m.field_string(4, "schema");
  m.field_i32(5, static_cast<std::int32_t>(schema_.size()));
  m.end_struct();
  for (const ColumnSpec& col : schema_) {
    m.begin_element();
    m.field_i32(1, physical_code(col.type));
    m.field_i32(3, kRequired);
    m.field_string(4, col.name);
    if (col.logical == LogicalKind::String) {
      m.field_i32(6, kConvertedUtf8);
      m.begin_struct(10);
      m.begin_struct(kLogicalString);
      m.end_struct();
      m.end_struct();
    } else if (col.logical == LogicalKind::Date) {
      m.field_i32(6, kConvertedDate);
      m.begin_struct(10);
      m.begin_struct(kLogicalDate);
      m.end_struct();
      m.end_struct();
    }
    m.end_struct();
  }
  m.field_i64(3, num_rows);
  m.begin_list(4, kStruct, groups_.size());
  for (const GroupMeta& g : groups_) {
    m.begin_element();
    m.begin_list(1, kStruct, g.chunks.size());
    std::int64_t total = 0;
    for (std::size_t c = 0; c < g.chunks.size(); ++c) {
      const ChunkMeta& chunk = g.chunks[c];
      total += chunk.uncompressed;
      m.begin_element();
      m.field_i64(2, chunk.data_page_offset);
      m.begin_struct(3);
      m.field_i32(1, physical_code(schema_[c].type));
      m.begin_list(2, kI32, 2);
      m.element_i32(kEncodingPlain);
      m.element_i32(kEncodingRle);
      m.begin_list(3, kBinary, 1);
      m.element_string(schema_[c].name);
      m.field_i32(4, options_.codec == Codec::Gzip ? kCodecGzip : kCodecUncompressed);
      m.field_i64(5, chunk.num_values);
      m.field_i64(6, chunk.uncompressed);
      m.field_i64(7, chunk.compressed);
      m.field_i64(9, chunk.data_page_offset);
      m.end_struct();
      m.end_struct();
    }
    m.field_i64(2, total);
    m.field_i64(3, g.num_rows);
    m.end_struct();
  }
  if (!options_.key_value_metadata.empty()) {
    m.begin_list(5, kStruct, options_.key_value_metadata.size());
    for (const auto& [k, v] : options_.key_value_metadata) {
      m.begin_element();
      m.field_string(1, k);
      m.field_string(2, v);
      m.end_struct();
    }
  }
  m.field_string(6, options_.created_by);
  m.stop();

  append(m.bytes());
  std::string trailer;
  put_le<std::uint32_t>(trailer, static_cast<std::uint32_t>(m.bytes().size()));
  trailer += "PAR1";
  append(trailer);
  if (std::fflush(file_->f) != 0 || std::fclose(file_->f) != 0) {
    file_->f = nullptr;
    fail(Errc::Io, "cannot finish " + tmp_path_.string());
  }
  file_->f = nullptr;
  std::filesystem::rename(tmp_path_, path_);
  closed_ = true;
}

// ---------------------------------------------------------------------------
// reader
// ---------------------------------------------------------------------------

std::optional<std::size_t> File::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < schema.size(); ++i)
    if (schema[i].name == name) return i;
  return std::nullopt;
}

ColumnValues File::column(const std::string& name) const {
  auto idx = column_index(name);
  if (!idx) format_error("no column '" + name + "'");
  ColumnValues out;
  switch (schema[*idx].type) {
    case PhysicalType::Int32: out = std::vector<std::int32_t>{}; break;
    case PhysicalType::Int64: out = std::vector<std::int64_t>{}; break;
    case PhysicalType::Double: out = std::vector<double>{}; break;
    case PhysicalType::ByteArray: out = std::vector<std::string>{}; break;
  }
  for (const auto& group : row_groups) {
    std::visit(
        [&](auto& dst) {
          using Vec = std::decay_t<decltype(dst)>;
          const auto& src = std::get<Vec>(group[*idx]);
          dst.insert(dst.end(), src.begin(), src.end());
        },
        out);
  }
  return out;
}

namespace {

template <typename T>
T get_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

void decode_plain(const std::string& data, std::size_t n, PhysicalType type, ColumnValues& out) {
  std::size_t pos = 0;
  auto need = [&](std::size_t k) {
    if (pos + k > data.size()) format_error("page data shorter than declared value count");
  };
  switch (type) {
    case PhysicalType::Int32: {
      auto& v = std::get<std::vector<std::int32_t>>(out);
      need(4 * n);
      for (std::size_t i = 0; i < n; ++i, pos += 4) v.push_back(get_le<std::int32_t>(data.data() + pos));
      break;
    }
    case PhysicalType::Int64: {
      auto& v = std::get<std::vector<std::int64_t>>(out);
      need(8 * n);
      for (std::size_t i = 0; i < n; ++i, pos += 8) v.push_back(get_le<std::int64_t>(data.data() + pos));
      break;
    }
    case PhysicalType::Double: {
      auto& v = std::get<std::vector<double>>(out);
      need(8 * n);
      for (std::size_t i = 0; i < n; ++i, pos += 8) v.push_back(get_le<double>(data.data() + pos));
      break;
    }
    case PhysicalType::ByteArray: {
      auto& v = std::get<std::vector<std::string>>(out);
      for (std::size_t i = 0; i < n; ++i) {
        need(4);
        const auto len = get_le<std::uint32_t>(data.data() + pos);
        pos += 4;
        need(len);
        v.emplace_back(data.data() + pos, len);
        pos += len;
      }
      break;
    }
  }
}

}  // namespace

File read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  if (bytes.size() < 12 || bytes.compare(0, 4, "PAR1") != 0 ||
      bytes.compare(bytes.size() - 4, 4, "PAR1") != 0)
    format_error(path.string() + ": not a parquet file");
  const auto footer_len = get_le<std::uint32_t>(bytes.data() + bytes.size() - 8);
  if (footer_len > bytes.size() - 12) format_error(path.string() + ": bad footer length");
  const char* footer = bytes.data() + bytes.size() - 8 - footer_len;
  CompactReader fr(footer, footer_len);
  const TValue meta = fr.read_struct();

  File file;
  const TValue* schema = meta.field(2);
  if (!schema || schema->list.empty()) format_error("missing schema");
  for (std::size_t i = 1; i < schema->list.size(); ++i) {
    const TValue& el = schema->list[i];
    if (el.field(5)) format_error("nested schemas are not supported");
    ColumnSpec spec;
    const TValue* name = el.field(4);
    if (!name) format_error("schema element without name");
    spec.name = name->s;
    switch (el.int_field(1, "type")) {
      case kTypeInt32: spec.type = PhysicalType::Int32; break;
      case kTypeInt64: spec.type = PhysicalType::Int64; break;
      case kTypeDouble: spec.type = PhysicalType::Double; break;
      case kTypeByteArray: spec.type = PhysicalType::ByteArray; break;
      default: format_error("unsupported physical type in column " + spec.name);
    }
    const TValue* rep = el.field(3);
    if (rep && rep->i != kRequired) format_error("only REQUIRED columns are supported: " + spec.name);
    if (const TValue* ct = el.field(6)) {
      if (ct->i == kConvertedUtf8) spec.logical = LogicalKind::String;
      if (ct->i == kConvertedDate) spec.logical = LogicalKind::Date;
    }
    file.schema.push_back(spec);
  }
  file.num_rows = meta.int_field(3, "num_rows");
  if (const TValue* kv = meta.field(5)) {
    for (const TValue& e : kv->list) {
      const TValue* k = e.field(1);
      const TValue* v = e.field(2);
      file.key_value_metadata.emplace_back(k ? k->s : "", v ? v->s : "");
    }
  }
  if (const TValue* cb = meta.field(6)) file.created_by = cb->s;

  if (const TValue* groups = meta.field(4)) {
    for (const TValue& g : groups->list) {
      const TValue* chunks = g.field(1);
      if (!chunks || chunks->list.size() != file.schema.size()) format_error("row group column mismatch");
      std::vector<ColumnValues> columns;
      for (std::size_t c = 0; c < chunks->list.size(); ++c) {
        const TValue* cm = chunks->list[c].field(3);
        if (!cm) format_error("column chunk without metadata");
        const std::int64_t codec = cm->int_field(4, "codec");
        if (codec != kCodecGzip && codec != kCodecUncompressed) format_error("unsupported codec");
        const std::int64_t num_values = cm->int_field(5, "num_values");
        std::int64_t pos = cm->int_field(9, "data_page_offset");
        ColumnValues values;
        switch (file.schema[c].type) {
          case PhysicalType::Int32: values = std::vector<std::int32_t>{}; break;
          case PhysicalType::Int64: values = std::vector<std::int64_t>{}; break;
          case PhysicalType::Double: values = std::vector<double>{}; break;
          case PhysicalType::ByteArray: values = std::vector<std::string>{}; break;
        }
        std::int64_t seen = 0;
        while (seen < num_values) {
          if (pos < 4 || static_cast<std::size_t>(pos) >= bytes.size()) format_error("page offset out of range");
          CompactReader pr(bytes.data() + pos, bytes.size() - static_cast<std::size_t>(pos));
          const TValue ph = pr.read_struct();
          pos += static_cast<std::int64_t>(pr.consumed(bytes.data() + pos));
          if (ph.int_field(1, "page type") != kPageData) format_error("unsupported page type");
          const std::int64_t compressed = ph.int_field(3, "compressed_page_size");
          const TValue* dph = ph.field(5);
          if (!dph) format_error("data page header missing");
          if (dph->int_field(2, "encoding") != kEncodingPlain) format_error("unsupported encoding");
          const std::int64_t n = dph->int_field(1, "num_values");
          if (compressed < 0 || static_cast<std::size_t>(pos + compressed) > bytes.size())
            format_error("page exceeds file");
          std::string_view raw(bytes.data() + pos, static_cast<std::size_t>(compressed));
          const std::string data = codec == kCodecGzip ? gzip_decompress(raw) : std::string(raw);
          decode_plain(data, static_cast<std::size_t>(n), file.schema[c].type, values);
          pos += compressed;
          seen += n;
        }
        columns.push_back(std::move(values));
      }
      file.row_groups.push_back(std::move(columns));
    }
  }
  return file;
}

}  // namespace spainmob::parquet

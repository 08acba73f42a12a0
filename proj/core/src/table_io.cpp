#include "spainmob/table_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "spainmob/error.hpp"

namespace spainmob {

namespace pq = parquet;

TableFormat parse_table_format(std::string_view text) {
  if (text == "parquet") return TableFormat::Parquet;
  if (text == "csv") return TableFormat::Csv;
  fail(Errc::InvalidArgument, "unknown table format '" + std::string(text) + "' (parquet, csv)");
}

TableFormat format_for_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? TableFormat::Csv : TableFormat::Parquet;
}

namespace {

pq::ColumnSpec str(std::string name) {
  return {std::move(name), pq::PhysicalType::ByteArray, pq::LogicalKind::String};
}
pq::ColumnSpec date(std::string name) {
  return {std::move(name), pq::PhysicalType::Int32, pq::LogicalKind::Date};
}
pq::ColumnSpec i32(std::string name) { return {std::move(name), pq::PhysicalType::Int32, {}}; }
pq::ColumnSpec f64(std::string name) { return {std::move(name), pq::PhysicalType::Double, {}}; }

template <typename Record>
constexpr std::string_view table_name() {
  if constexpr (std::is_same_v<Record, ODRecord>) return "od";
  else if constexpr (std::is_same_v<Record, TripsPerPersonRecord>) return "trips";
  else return "overnight";
}

template <typename Record>
std::vector<pq::ColumnSpec> columns_for(bool has_activity) {
  if constexpr (std::is_same_v<Record, ODRecord>) return od_columns(has_activity);
  else if constexpr (std::is_same_v<Record, TripsPerPersonRecord>) return trips_columns();
  else return overnight_columns();
}

std::vector<std::string> csv_fields(const ODRecord& r, bool has_activity) {
  std::vector<std::string> f{r.day.iso(), std::to_string(r.hour), r.origin.value, r.destination.value};
  if (has_activity) {
    f.emplace_back(to_string(r.activity_origin));
    f.emplace_back(to_string(r.activity_destination));
  }
  f.emplace_back(to_string(r.age));
  f.emplace_back(to_string(r.gender));
  f.emplace_back(to_string(r.income));
  f.push_back(r.distance_band);
  f.push_back(format_double(r.trips));
  f.push_back(format_double(r.trips_km));
  return f;
}

std::vector<std::string> csv_fields(const TripsPerPersonRecord& r, bool) {
  return {r.day.iso(), r.zone.value, std::string(to_string(r.age)), std::string(to_string(r.gender)),
          std::string(to_string(r.trips_band)), format_double(r.persons)};
}

std::vector<std::string> csv_fields(const OvernightStayRecord& r, bool) {
  return {r.day.iso(), r.residence_zone.value, r.overnight_zone.value, format_double(r.persons)};
}

}  // namespace

std::vector<pq::ColumnSpec> od_columns(bool has_activity) {
  std::vector<pq::ColumnSpec> c{date("day"), i32("hour"), str("origin"), str("destination")};
  if (has_activity) {
    c.push_back(str("activity_origin"));
    c.push_back(str("activity_destination"));
  }
  for (auto* n : {"age", "gender", "income", "distance_band"}) c.push_back(str(n));
  c.push_back(f64("trips"));
  c.push_back(f64("trips_km"));
  return c;
}

std::vector<pq::ColumnSpec> trips_columns() {
  return {date("day"), str("zone"), str("age"), str("gender"), str("trips_band"), f64("persons")};
}

std::vector<pq::ColumnSpec> overnight_columns() {
  return {date("day"), str("residence_zone"), str("overnight_zone"), f64("persons")};
}

std::vector<pq::ColumnValues> to_columns(const std::vector<ODRecord>& rows, bool has_activity) {
  std::vector<std::int32_t> day, hour;
  std::vector<std::string> origin, destination, ao, ad, age, gender, income, band;
  std::vector<double> trips, km;
  for (const auto& r : rows) {
    day.push_back(r.day.epoch_days());
    hour.push_back(r.hour);
    origin.push_back(r.origin.value);
    destination.push_back(r.destination.value);
    if (has_activity) {
      ao.emplace_back(to_string(r.activity_origin));
      ad.emplace_back(to_string(r.activity_destination));
    }
    age.emplace_back(to_string(r.age));
    gender.emplace_back(to_string(r.gender));
    income.emplace_back(to_string(r.income));
    band.push_back(r.distance_band);
    trips.push_back(r.trips);
    km.push_back(r.trips_km);
  }
  std::vector<pq::ColumnValues> out;
  out.emplace_back(std::move(day));
  out.emplace_back(std::move(hour));
  out.emplace_back(std::move(origin));
  out.emplace_back(std::move(destination));
  if (has_activity) {
    out.emplace_back(std::move(ao));
    out.emplace_back(std::move(ad));
  }
  out.emplace_back(std::move(age));
  out.emplace_back(std::move(gender));
  out.emplace_back(std::move(income));
  out.emplace_back(std::move(band));
  out.emplace_back(std::move(trips));
  out.emplace_back(std::move(km));
  return out;
}

std::vector<pq::ColumnValues> to_columns(const std::vector<TripsPerPersonRecord>& rows) {
  std::vector<std::int32_t> day;
  std::vector<std::string> zone, age, gender, band;
  std::vector<double> persons;
  for (const auto& r : rows) {
    day.push_back(r.day.epoch_days());
    zone.push_back(r.zone.value);
    age.emplace_back(to_string(r.age));
    gender.emplace_back(to_string(r.gender));
    band.emplace_back(to_string(r.trips_band));
    persons.push_back(r.persons);
  }
  return {std::move(day), std::move(zone), std::move(age), std::move(gender), std::move(band),
          std::move(persons)};
}

std::vector<pq::ColumnValues> to_columns(const std::vector<OvernightStayRecord>& rows) {
  std::vector<std::int32_t> day;
  std::vector<std::string> res, ovn;
  std::vector<double> persons;
  for (const auto& r : rows) {
    day.push_back(r.day.epoch_days());
    res.push_back(r.residence_zone.value);
    ovn.push_back(r.overnight_zone.value);
    persons.push_back(r.persons);
  }
  return {std::move(day), std::move(res), std::move(ovn), std::move(persons)};
}

// ---------------------------------------------------------------------------
// TableWriter
// ---------------------------------------------------------------------------

template <typename Record>
struct TableWriter<Record>::Impl {
  std::unique_ptr<pq::Writer> parquet;
  std::optional<std::filesystem::path> csv_path;
  std::filesystem::path csv_tmp;
  std::ofstream csv;
  bool closed = false;
};

template <typename Record>
TableWriter<Record>::TableWriter(std::filesystem::path parquet_path,
                                 std::optional<std::filesystem::path> csv_path, ZoneLevel level,
                                 bool has_activity)
    : impl_(std::make_unique<Impl>()),
      columns_(columns_for<Record>(has_activity)),
      has_activity_(has_activity) {
  pq::WriterOptions opts;
  opts.key_value_metadata = {{"spainmob.table", std::string(table_name<Record>())},
                             {"spainmob.level", std::string(to_string(level))}};
  impl_->parquet = std::make_unique<pq::Writer>(std::move(parquet_path), columns_, opts);
  if (csv_path) {
    impl_->csv_path = *csv_path;
    impl_->csv_tmp = *csv_path;
    impl_->csv_tmp += ".tmp";
    impl_->csv.open(impl_->csv_tmp, std::ios::binary | std::ios::trunc);
    if (!impl_->csv) fail(Errc::Io, "cannot create " + impl_->csv_tmp.string());
    std::vector<std::string> header;
    for (const auto& c : columns_) header.push_back(c.name);
    write_csv_row(impl_->csv, header);
  }
}

template <typename Record>
TableWriter<Record>::~TableWriter() {
  if (impl_ && !impl_->closed && impl_->csv_path) {
    impl_->csv.close();
    std::error_code ec;
    std::filesystem::remove(impl_->csv_tmp, ec);
  }
}

template <typename Record>
void TableWriter<Record>::append(const std::vector<Record>& rows) {
  if (rows.empty()) return;
  if constexpr (std::is_same_v<Record, ODRecord>)
    impl_->parquet->write_row_group(to_columns(rows, has_activity_));
  else
    impl_->parquet->write_row_group(to_columns(rows));
  if (impl_->csv_path) {
    for (const auto& r : rows) write_csv_row(impl_->csv, csv_fields(r, has_activity_));
    if (!impl_->csv) fail(Errc::Io, "write failed: " + impl_->csv_tmp.string());
  }
  rows_ += rows.size();
  ++groups_;
}

template <typename Record>
void TableWriter<Record>::close() {
  if (impl_->closed) return;
  impl_->parquet->close();
  if (impl_->csv_path) {
    impl_->csv.close();
    if (!impl_->csv) fail(Errc::Io, "cannot finish " + impl_->csv_tmp.string());
    std::filesystem::rename(impl_->csv_tmp, *impl_->csv_path);
  }
  impl_->closed = true;
}

template class TableWriter<ODRecord>;
template class TableWriter<TripsPerPersonRecord>;
template class TableWriter<OvernightStayRecord>;

namespace {

template <typename Record>
void write_csv_only(const std::vector<Record>& rows, const std::vector<pq::ColumnSpec>& cols,
                    bool has_activity, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::Io, "cannot create " + tmp.string());
    std::vector<std::string> header;
    for (const auto& c : cols) header.push_back(c.name);
    write_csv_row(out, header);
    for (const auto& r : rows) write_csv_row(out, csv_fields(r, has_activity));
    if (!out) fail(Errc::Io, "write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename Record>
void write_any(const std::vector<Record>& rows, ZoneLevel level, bool has_activity,
               const std::filesystem::path& path) {
  if (format_for_path(path) == TableFormat::Csv) {
    write_csv_only(rows, columns_for<Record>(has_activity), has_activity, path);
    return;
  }
  TableWriter<Record> w(path, std::nullopt, level, has_activity);
  // One row group per day.
  std::size_t begin = 0;
  while (begin < rows.size()) {
    std::size_t end = begin;
    while (end < rows.size() && rows[end].day == rows[begin].day) ++end;
    w.append(std::vector<Record>(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                                 rows.begin() + static_cast<std::ptrdiff_t>(end)));
    begin = end;
  }
  w.close();
}

}  // namespace

void write_table(const OdTable& table, const std::filesystem::path& path) {
  write_any(table.rows, table.level, table.has_activity, path);
}
void write_table(const TripsTable& table, const std::filesystem::path& path) {
  write_any(table.rows, table.level, true, path);
}
void write_table(const OvernightTable& table, const std::filesystem::path& path) {
  write_any(table.rows, table.level, true, path);
}

// ---------------------------------------------------------------------------
// Readers
// ---------------------------------------------------------------------------

namespace {

// Column-name addressed view over either file format.
class Columns {
 public:
  static Columns load(const std::filesystem::path& path, std::string_view table) {
    Columns c;
    c.path_ = path.string();
    if (format_for_path(path) == TableFormat::Csv) {
      std::ifstream in(path, std::ios::binary);
      if (!in) fail(Errc::Io, "cannot open " + path.string());
      std::stringstream ss;
      ss << in.rdbuf();
      auto rows = parse_csv(ss.str());
      if (rows.empty()) fail(Errc::SchemaMismatch, c.path_ + ": missing header");
      for (std::size_t i = 0; i < rows[0].size(); ++i) c.csv_index_[rows[0][i]] = i;
      c.csv_rows_.assign(rows.begin() + 1, rows.end());
      for (std::size_t r = 0; r < c.csv_rows_.size(); ++r)
        if (c.csv_rows_[r].size() != rows[0].size())
          fail(Errc::MalformedRow, c.path_ + ":" + std::to_string(r + 2) + ": wrong field count");
      c.rows_ = c.csv_rows_.size();
    } else {
      c.file_ = pq::read(path);
      c.rows_ = static_cast<std::size_t>(c.file_->num_rows);
      for (const auto& [k, v] : c.file_->key_value_metadata) {
        if (k == "spainmob.level") c.level_ = parse_zone_level(v);
        if (k == "spainmob.table" && v != table)
          fail(Errc::SchemaMismatch, c.path_ + ": holds a '" + v + "' table, expected '" +
                                         std::string(table) + "'");
      }
    }
    return c;
  }

  std::size_t rows() const { return rows_; }
  std::optional<ZoneLevel> level() const { return level_; }

  bool has(const std::string& name) const {
    return file_ ? file_->column_index(name).has_value() : csv_index_.count(name) > 0;
  }

  std::vector<std::string> strings(const std::string& name) const {
    if (file_) return get<std::vector<std::string>>(name);
    std::vector<std::string> out;
    const std::size_t i = csv_col(name);
    for (const auto& r : csv_rows_) out.push_back(r[i]);
    return out;
  }

  std::vector<double> doubles(const std::string& name) const {
    if (file_) return get<std::vector<double>>(name);
    std::vector<double> out;
    const std::size_t i = csv_col(name);
    for (std::size_t r = 0; r < csv_rows_.size(); ++r) {
      const std::string& s = csv_rows_[r][i];
      double v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size())
        fail(Errc::MalformedRow, path_ + ":" + std::to_string(r + 2) + ": bad number '" + s + "'");
      out.push_back(v);
    }
    return out;
  }

  std::vector<std::int32_t> ints(const std::string& name) const {
    if (file_) return get<std::vector<std::int32_t>>(name);
    std::vector<std::int32_t> out;
    const std::size_t i = csv_col(name);
    for (std::size_t r = 0; r < csv_rows_.size(); ++r) {
      const std::string& s = csv_rows_[r][i];
      std::int32_t v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size())
        fail(Errc::MalformedRow, path_ + ":" + std::to_string(r + 2) + ": bad integer '" + s + "'");
      out.push_back(v);
    }
    return out;
  }

  std::vector<Date> dates(const std::string& name) const {
    std::vector<Date> out;
    if (file_) {
      for (std::int32_t d : get<std::vector<std::int32_t>>(name)) out.push_back(Date::from_epoch_days(d));
      return out;
    }
    const std::size_t i = csv_col(name);
    for (const auto& r : csv_rows_) out.push_back(Date::parse_iso(r[i]));
    return out;
  }

 private:
  template <typename Vec>
  Vec get(const std::string& name) const {
    if (!file_->column_index(name)) fail(Errc::SchemaMismatch, path_ + ": missing column '" + name + "'");
    auto v = file_->column(name);
    if (!std::holds_alternative<Vec>(v))
      fail(Errc::SchemaMismatch, path_ + ": column '" + name + "' has an unexpected type");
    return std::get<Vec>(std::move(v));
  }
  std::size_t csv_col(const std::string& name) const {
    auto it = csv_index_.find(name);
    if (it == csv_index_.end()) fail(Errc::SchemaMismatch, path_ + ": missing column '" + name + "'");
    return it->second;
  }

  std::string path_;
  std::optional<pq::File> file_;
  std::map<std::string, std::size_t> csv_index_;
  std::vector<std::vector<std::string>> csv_rows_;
  std::size_t rows_ = 0;
  std::optional<ZoneLevel> level_;
};

}  // namespace

OdTable read_od_table(const std::filesystem::path& path, ZoneLevel fallback_level) {
  const Columns c = Columns::load(path, "od");
  OdTable t;
  t.level = c.level().value_or(fallback_level);
  t.has_activity = c.has("activity_origin");
  const auto day = c.dates("day");
  const auto hour = c.ints("hour");
  const auto origin = c.strings("origin");
  const auto destination = c.strings("destination");
  std::vector<std::string> ao, ad;
  if (t.has_activity) {
    ao = c.strings("activity_origin");
    ad = c.strings("activity_destination");
  }
  const auto age = c.strings("age");
  const auto gender = c.strings("gender");
  const auto income = c.strings("income");
  const auto band = c.strings("distance_band");
  const auto trips = c.doubles("trips");
  const auto km = c.doubles("trips_km");
  t.rows.resize(c.rows());
  for (std::size_t i = 0; i < c.rows(); ++i) {
    ODRecord& r = t.rows[i];
    r.day = day[i];
    r.hour = hour[i];
    r.origin = ZoneId(origin[i]);
    r.destination = ZoneId(destination[i]);
    if (t.has_activity) {
      r.activity_origin = parse_activity_label(ao[i]);
      r.activity_destination = parse_activity_label(ad[i]);
    }
    r.age = parse_age_label(age[i]);
    r.gender = parse_gender_label(gender[i]);
    r.income = parse_income_label(income[i]);
    r.distance_band = band[i];
    r.trips = trips[i];
    r.trips_km = km[i];
  }
  return t;
}

TripsTable read_trips_table(const std::filesystem::path& path, ZoneLevel fallback_level) {
  const Columns c = Columns::load(path, "trips");
  TripsTable t;
  t.level = c.level().value_or(fallback_level);
  const auto day = c.dates("day");
  const auto zone = c.strings("zone");
  const auto age = c.strings("age");
  const auto gender = c.strings("gender");
  const auto band = c.strings("trips_band");
  const auto persons = c.doubles("persons");
  t.rows.resize(c.rows());
  for (std::size_t i = 0; i < c.rows(); ++i) {
    auto& r = t.rows[i];
    r.day = day[i];
    r.zone = ZoneId(zone[i]);
    r.age = parse_age_label(age[i]);
    r.gender = parse_gender_label(gender[i]);
    r.trips_band = parse_trips_band_label(band[i]);
    r.persons = persons[i];
  }
  return t;
}

OvernightTable read_overnight_table(const std::filesystem::path& path, ZoneLevel fallback_level) {
  const Columns c = Columns::load(path, "overnight");
  OvernightTable t;
  t.level = c.level().value_or(fallback_level);
  const auto day = c.dates("day");
  const auto res = c.strings("residence_zone");
  const auto ovn = c.strings("overnight_zone");
  const auto persons = c.doubles("persons");
  t.rows.resize(c.rows());
  for (std::size_t i = 0; i < c.rows(); ++i) {
    auto& r = t.rows[i];
    r.day = day[i];
    r.residence_zone = ZoneId(res[i]);
    r.overnight_zone = ZoneId(ovn[i]);
    r.persons = persons[i];
  }
  return t;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << csv_escape(fields[i]);
  }
  out << '\n';
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text, char delimiter) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t line = 1;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == delimiter) {
      end_field();
    } else if (c == '\n') {
      end_row();
      ++line;
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      // CRLF handled at '\n'
    } else {
      field += c;
      field_started = true;
    }
  }
  if (quoted) fail(Errc::MalformedRow, "unterminated quoted field at line " + std::to_string(line));
  if (field_started || !row.empty()) end_row();
  return rows;
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace spainmob

#include <charconv>
#include <cmath>
#include <cstring>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "spainmob/parquet.hpp"
#include "spainmob/table_io.hpp"
#include "support.hpp"

namespace spainmob {
namespace {

namespace fs = std::filesystem;
namespace pq = parquet;
using test::TempDir;

std::vector<pq::ColumnSpec> mixed_schema() {
  return {{"i32", pq::PhysicalType::Int32},
          {"day", pq::PhysicalType::Int32, pq::LogicalKind::Date},
          {"i64", pq::PhysicalType::Int64},
          {"f", pq::PhysicalType::Double},
          {"s", pq::PhysicalType::ByteArray, pq::LogicalKind::String}};
}

std::vector<pq::ColumnValues> random_group(std::mt19937_64& rng, std::size_t n) {
  std::vector<std::int32_t> a, d;
  std::vector<std::int64_t> b;
  std::vector<double> f;
  std::vector<std::string> s;
  for (std::size_t i = 0; i < n; ++i) {
    a.push_back(static_cast<std::int32_t>(rng()));
    d.push_back(static_cast<std::int32_t>(rng() % 30000));
    b.push_back(static_cast<std::int64_t>(rng()));
    f.push_back(std::ldexp(static_cast<double>(rng() % 1000000) - 500000, static_cast<int>(rng() % 40) - 20));
    std::string str(rng() % 12, 'x');
    for (auto& c : str) c = static_cast<char>(rng() % 256);
    s.push_back(str);
  }
  return {a, d, b, f, s};
}

TEST(Parquet, RoundTripsEveryTypeAcrossRowGroupsAndCodecs) {
  std::mt19937_64 rng(17);
  for (pq::Codec codec : {pq::Codec::Gzip, pq::Codec::Uncompressed}) {
    TempDir dir;
    pq::WriterOptions opts;
    opts.codec = codec;
    opts.values_per_page = 37;
    opts.key_value_metadata = {{"k", "v"}, {"level", "districts"}};
    std::vector<std::vector<pq::ColumnValues>> groups;
    {
      pq::Writer w(dir / "t.parquet", mixed_schema(), opts);
      for (std::size_t n : {0u, 1u, 100u, 257u}) {
        auto g = random_group(rng, n);
        w.write_row_group(g);
        if (n > 0) groups.push_back(std::move(g));
      }
      w.close();
    }
    const pq::File f = pq::read(dir / "t.parquet");
    EXPECT_EQ(f.schema, mixed_schema());
    EXPECT_EQ(f.num_rows, 358);
    EXPECT_EQ(f.key_value_metadata, opts.key_value_metadata);
    EXPECT_EQ(f.created_by, "spainmob");
    ASSERT_EQ(f.row_groups.size(), groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) EXPECT_EQ(f.row_groups[g], groups[g]) << "group " << g;
    EXPECT_EQ(pq::value_count(f.column("f")), 358u);
    EXPECT_FALSE(f.column_index("nope"));
    EXPECT_ERRC(f.column("nope"), Errc::ParquetFormatError);
    EXPECT_FALSE(fs::exists(dir / "t.parquet.tmp"));
  }
}

TEST(Parquet, OutputBytesDependOnlyOnValues) {
  std::mt19937_64 rng(2);
  const auto group = random_group(rng, 500);
  TempDir dir;
  for (const char* name : {"a.parquet", "b.parquet"}) {
    pq::Writer w(dir / name, mixed_schema());
    w.write_row_group(group);
    w.close();
  }
  EXPECT_EQ(test::read_file(dir / "a.parquet"), test::read_file(dir / "b.parquet"));
}

TEST(Parquet, UnclosedWriterLeavesNoFile) {
  TempDir dir;
  {
    pq::Writer w(dir / "x.parquet", mixed_schema());
    std::mt19937_64 rng(1);
    w.write_row_group(random_group(rng, 10));
  }
  EXPECT_FALSE(fs::exists(dir / "x.parquet"));
  EXPECT_FALSE(fs::exists(dir / "x.parquet.tmp"));
}

TEST(Parquet, RejectsBadGroupsAndBadFiles) {
  TempDir dir;
  pq::Writer w(dir / "x.parquet", mixed_schema());
  std::mt19937_64 rng(1);
  auto g = random_group(rng, 10);
  auto short_group = g;
  short_group.pop_back();
  EXPECT_ERRC(w.write_row_group(short_group), Errc::InvalidArgument);
  auto ragged = g;
  std::get<std::vector<double>>(ragged[3]).pop_back();
  EXPECT_ERRC(w.write_row_group(ragged), Errc::InvalidArgument);
  auto mistyped = g;
  mistyped[0] = std::vector<double>(10, 1.0);
  EXPECT_ERRC(w.write_row_group(mistyped), Errc::InvalidArgument);
  w.write_row_group(g);
  w.close();
  EXPECT_ERRC(w.write_row_group(g), Errc::InvalidArgument);

  const std::string good = test::read_file(dir / "x.parquet");
  test::write_file(dir / "trunc.parquet", good.substr(0, good.size() - 9));
  EXPECT_ERRC(pq::read(dir / "trunc.parquet"), Errc::ParquetFormatError);
  test::write_file(dir / "junk.parquet", "PAR1 nothing to see PAR1");
  EXPECT_ERRC(pq::read(dir / "junk.parquet"), Errc::ParquetFormatError);
  test::write_file(dir / "tiny.parquet", "PAR1");
  EXPECT_ERRC(pq::read(dir / "tiny.parquet"), Errc::ParquetFormatError);
  EXPECT_ERRC(pq::read(dir / "absent.parquet"), Errc::Io);
}

TEST(Csv, EscapeAndParseRoundTrip) {
  EXPECT_EQ(csv_escape("plain"), "plain");
  EXPECT_EQ(csv_escape("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_escape("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(csv_escape("two\nlines"), "\"two\nlines\"");

  std::mt19937_64 rng(8);
  const std::string alphabet = "ab,\"\n\r x";
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::vector<std::string>> rows(1 + rng() % 6);
    const std::size_t width = 1 + rng() % 4;
    for (auto& row : rows)
      for (std::size_t c = 0; c < width; ++c) {
        std::string f(rng() % 6, ' ');
        for (auto& ch : f) ch = alphabet[rng() % alphabet.size()];
        row.push_back(f);
      }
    // A lone empty field is indistinguishable from a blank line.
    if (width == 1)
      for (auto& row : rows)
        if (row[0].empty()) row[0] = "e";
    std::ostringstream out;
    for (const auto& row : rows) write_csv_row(out, row);
    EXPECT_EQ(parse_csv(out.str()), rows);
  }
  EXPECT_ERRC(parse_csv("a,\"open\n"), Errc::MalformedRow);
  EXPECT_EQ(parse_csv("a;b\n", ';'), (std::vector<std::vector<std::string>>{{"a", "b"}}));
}

TEST(Csv, FormatDoubleRoundTripsShortest) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 5000; ++i) {
    double v;
    const std::uint64_t bits = rng();
    std::memcpy(&v, &bits, sizeof v);
    if (!std::isfinite(v)) continue;
    const std::string text = format_double(v);
    double back = 0;
    const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), back);
    EXPECT_TRUE(ec == std::errc() && p == text.data() + text.size()) << text;
    EXPECT_EQ(back, v) << text;
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(3.0), "3");
  EXPECT_EQ(format_double(729.512), "729.512");
}

TEST(TableIo, FormatSelection) {
  EXPECT_EQ(parse_table_format("csv"), TableFormat::Csv);
  EXPECT_EQ(parse_table_format("parquet"), TableFormat::Parquet);
  EXPECT_ERRC(parse_table_format("xlsx"), Errc::InvalidArgument);
  EXPECT_EQ(format_for_path("a/b.csv"), TableFormat::Csv);
  EXPECT_EQ(format_for_path("a/b.parquet"), TableFormat::Parquet);
}

TEST(TableIo, OdTablesRoundTripInBothFormats) {
  std::mt19937_64 rng(21);
  TempDir dir;
  for (bool activity : {true, false}) {
    test::RandomOdOptions o;
    o.zones = test::zone_ids("28", 9);
    o.days = test::consecutive_days(Date(2022, 3, 20), 4);
    o.level = ZoneLevel::Municipalities;
    o.has_activity = activity;
    o.rows = 700;
    OdTable t = test::random_od_table(rng, o);
    t.rows[0].distance_band = "needs, \"quoting\"";
    for (const char* name : {"t.parquet", "t.csv"}) {
      write_table(t, dir / name);
      const OdTable back = read_od_table(dir / name, ZoneLevel::Municipalities);
      EXPECT_EQ(back.rows, t.rows) << name;
      EXPECT_EQ(back.has_activity, activity) << name;
      EXPECT_EQ(back.level, ZoneLevel::Municipalities);
    }
    EXPECT_EQ(read_od_table(dir / "t.parquet", ZoneLevel::Districts).level, ZoneLevel::Municipalities);
  }
}

TEST(TableIo, TripsAndOvernightRoundTrip) {
  TempDir dir;
  TripsTable trips{ZoneLevel::GreaterUrbanAreas, {}};
  OvernightTable stays{ZoneLevel::Districts, {}};
  for (int i = 0; i < 50; ++i) {
    trips.rows.push_back({Date(2022, 3, 20) + i % 3, ZoneId("g" + std::to_string(i % 7)),
                          static_cast<AgeBand>(i % 5), static_cast<Gender>(i % 3), static_cast<TripsBand>(i % 4),
                          i * 1.25});
    stays.rows.push_back({Date(2022, 3, 20), ZoneId("r" + std::to_string(i)), ZoneId("o" + std::to_string(i % 4)),
                          i / 3.0});
  }
  for (const char* ext : {".parquet", ".csv"}) {
    write_table(trips, dir / (std::string("trips") + ext));
    write_table(stays, dir / (std::string("stays") + ext));
    const TripsTable tb = read_trips_table(dir / (std::string("trips") + ext), ZoneLevel::GreaterUrbanAreas);
    EXPECT_EQ(tb.rows, trips.rows);
    EXPECT_EQ(tb.level, ZoneLevel::GreaterUrbanAreas);
    EXPECT_EQ(read_overnight_table(dir / (std::string("stays") + ext)).rows, stays.rows);
  }
  EXPECT_ERRC(read_od_table(dir / "stays.parquet"), Errc::SchemaMismatch);
  EXPECT_ERRC(read_od_table(dir / "stays.csv"), Errc::SchemaMismatch);
  test::write_file(dir / "bad.csv", "day,residence_zone,overnight_zone,persons\n2022-03-20,a,b,many\n");
  EXPECT_ERRC(read_overnight_table(dir / "bad.csv"), Errc::MalformedRow);
}

TEST(TableIo, WriterStreamsRowGroupsAndCsvTwin) {
  TempDir dir;
  std::mt19937_64 rng(4);
  test::RandomOdOptions o;
  o.zones = test::zone_ids("01", 5);
  o.days = test::consecutive_days(Date(2022, 3, 20), 1);
  std::vector<ODRecord> all;
  {
    TableWriter<ODRecord> w(dir / "w.parquet", dir / "w.csv", ZoneLevel::Districts, true);
    for (int g = 0; g < 3; ++g) {
      OdTable t = test::random_od_table(rng, o);
      w.append(t.rows);
      all.insert(all.end(), t.rows.begin(), t.rows.end());
    }
    w.close();
    EXPECT_EQ(w.rows(), all.size());
    EXPECT_EQ(w.row_groups(), 3u);
  }
  EXPECT_EQ(pq::read(dir / "w.parquet").row_groups.size(), 3u);
  EXPECT_EQ(read_od_table(dir / "w.parquet").rows, all);
  EXPECT_EQ(read_od_table(dir / "w.csv").rows, all);
}

TEST(Records, SortAndCollapse) {
  std::mt19937_64 rng(6);
  test::RandomOdOptions o;
  o.zones = test::zone_ids("46", 4);
  o.days = test::consecutive_days(Date(2022, 3, 20), 3);
  o.rows = 2000;
  OdTable t = test::random_od_table(rng, o);
  OdTable sorted = t;
  sort_rows(sorted);
  auto key = [](const ODRecord& r) { return std::tie(r.day, r.hour, r.origin, r.destination); };
  for (std::size_t i = 1; i < sorted.rows.size(); ++i) EXPECT_LE(key(sorted.rows[i - 1]), key(sorted.rows[i]));
  EXPECT_TRUE(std::is_permutation(sorted.rows.begin(), sorted.rows.end(), t.rows.begin(), t.rows.end()));

  const OdTable c = collapse_activity(t);
  EXPECT_FALSE(c.has_activity);
  std::map<std::tuple<Date, int, ZoneId, ZoneId, AgeBand, Gender, IncomeBand, std::string>, std::pair<double, double>>
      oracle;
  for (const auto& r : t.rows) {
    auto& v = oracle[{r.day, r.hour, r.origin, r.destination, r.age, r.gender, r.income, r.distance_band}];
    v.first += r.trips;
    v.second += r.trips_km;
  }
  ASSERT_EQ(c.rows.size(), oracle.size());
  for (const auto& r : c.rows) {
    EXPECT_EQ(r.activity_origin, ActivityKind::NotDisaggregated);
    const auto& v = oracle.at({r.day, r.hour, r.origin, r.destination, r.age, r.gender, r.income, r.distance_band});
    EXPECT_NEAR(r.trips, v.first, 1e-9 * (1 + v.first));
    EXPECT_NEAR(r.trips_km, v.second, 1e-9 * (1 + v.second));
  }
}

}  // namespace
}  // namespace spainmob

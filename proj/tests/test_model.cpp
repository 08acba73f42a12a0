#include <random>

#include <gtest/gtest.h>

#include "spainmob/model.hpp"
#include "support.hpp"

namespace spainmob {
namespace {

TEST(Date, IsoRoundTrip) {
  const Date d = Date::parse_iso("2022-03-20");
  EXPECT_EQ(d.year(), 2022);
  EXPECT_EQ(d.month(), 3u);
  EXPECT_EQ(d.day(), 20u);
  EXPECT_EQ(d.iso(), "2022-03-20");
  EXPECT_EQ(d.compact(), "20220320");
  EXPECT_EQ(Date::parse_compact("20220320"), d);
}

TEST(Date, RejectsMalformedText) {
  for (const char* bad : {"2022-3-20", "2022/03/20", "2022-02-30", "2021-02-29", "20220320", " 2022-03-20",
                          "2022-03-20T00:00", "", "abcd-ef-gh", "2022-13-01"})
    EXPECT_ERRC(Date::parse_iso(bad), Errc::MalformedDate);
  for (const char* bad : {"2022-03-20", "2022032", "202203201", "20221301", "2022032a"})
    EXPECT_ERRC(Date::parse_compact(bad), Errc::MalformedDate);
  EXPECT_EQ(Date::parse_iso("2020-02-29").iso(), "2020-02-29");
}

TEST(Date, WeekdaysAndArithmetic) {
  // 2022-03-20 was a Sunday.
  const Date sun = Date::parse_iso("2022-03-20");
  EXPECT_EQ(sun.iso_weekday(), 7u);
  EXPECT_TRUE(sun.is_weekend());
  EXPECT_FALSE((sun + 1).is_weekend());
  EXPECT_TRUE((sun - 1).is_weekend());
  EXPECT_EQ((sun + 12).iso(), "2022-04-01");
  EXPECT_EQ((sun + 12) - sun, 12);
  EXPECT_EQ(Date::from_epoch_days(0).iso(), "1970-01-01");
  EXPECT_EQ(Date::from_epoch_days(sun.epoch_days()), sun);
}

TEST(Date, EnumerateDaysIsInclusiveAndAscending) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    const Date a = Date(2020, 1, 1) + static_cast<int>(rng() % 1500);
    const Date b = a + static_cast<int>(rng() % 40);
    const auto days = enumerate_days({a, b});
    ASSERT_EQ(static_cast<int>(days.size()), (b - a) + 1);
    EXPECT_EQ(days.front(), a);
    EXPECT_EQ(days.back(), b);
    for (std::size_t k = 1; k < days.size(); ++k) EXPECT_EQ(days[k] - days[k - 1], 1);
  }
  EXPECT_TRUE(enumerate_days({Date(2022, 1, 2), Date(2022, 1, 1)}).empty());
}

TEST(Date, MadridCivilDateFollowsSummerTime) {
  using namespace std::chrono;
  const auto at = [](int y, unsigned m, unsigned d, int h, int min = 0) {
    return system_clock::time_point(sys_days(year(y) / m / d) + hours(h) + minutes(min));
  };
  EXPECT_EQ(madrid_civil_date(at(2022, 1, 10, 22, 59)).iso(), "2022-01-10");
  EXPECT_EQ(madrid_civil_date(at(2022, 1, 10, 23, 0)).iso(), "2022-01-11");
  EXPECT_EQ(madrid_civil_date(at(2022, 7, 10, 21, 59)).iso(), "2022-07-10");
  EXPECT_EQ(madrid_civil_date(at(2022, 7, 10, 22, 0)).iso(), "2022-07-11");
  // Summer time starts 2022-03-27 01:00 UTC.
  EXPECT_EQ(madrid_civil_date(at(2022, 3, 27, 0, 59)).iso(), "2022-03-27");
  EXPECT_EQ(madrid_civil_date(at(2022, 3, 26, 23, 0)).iso(), "2022-03-27");
}

TEST(Enums, ZoneLevelAliases) {
  EXPECT_EQ(parse_zone_level("districts"), ZoneLevel::Districts);
  EXPECT_EQ(parse_zone_level("Municipalities"), ZoneLevel::Municipalities);
  EXPECT_EQ(parse_zone_level("GAU"), ZoneLevel::GreaterUrbanAreas);
  for (ZoneLevel l : kAllLevels) {
    for (std::string_view a : zone_level_aliases(l)) EXPECT_EQ(parse_zone_level(a), l);
    EXPECT_EQ(parse_zone_level(to_string(l)), l);
  }
  EXPECT_ERRC(parse_zone_level("provinces"), Errc::UnknownAlias);
  EXPECT_LT(level_rank(ZoneLevel::Districts), level_rank(ZoneLevel::Municipalities));
  EXPECT_LT(level_rank(ZoneLevel::Municipalities), level_rank(ZoneLevel::GreaterUrbanAreas));
}

TEST(Enums, VersionsAndKinds) {
  EXPECT_EQ(parse_dataset_version(1), DatasetVersion::V1);
  EXPECT_EQ(parse_dataset_version(2), DatasetVersion::V2);
  EXPECT_ERRC(parse_dataset_version(3), Errc::InvalidArgument);
  EXPECT_ERRC(parse_dataset_version(0), Errc::InvalidArgument);
  for (DatasetKind k : kAllKinds) EXPECT_EQ(parse_dataset_kind(to_string(k)), k);
  EXPECT_EQ(parse_dataset_kind("od"), DatasetKind::OriginDestination);
  EXPECT_ERRC(parse_dataset_kind("flows"), Errc::InvalidArgument);
  EXPECT_FALSE(version_admits_level(DatasetVersion::V1, ZoneLevel::GreaterUrbanAreas));
  EXPECT_TRUE(version_admits_level(DatasetVersion::V2, ZoneLevel::GreaterUrbanAreas));
}

TEST(Enums, LabelsRoundTrip) {
  for (int i = 0; i <= static_cast<int>(AgeBand::NotDisaggregated); ++i) {
    const auto v = static_cast<AgeBand>(i);
    EXPECT_EQ(parse_age_label(to_string(v)), v);
  }
  for (int i = 0; i <= static_cast<int>(Gender::NotDisaggregated); ++i) {
    const auto v = static_cast<Gender>(i);
    EXPECT_EQ(parse_gender_label(to_string(v)), v);
  }
  for (int i = 0; i <= static_cast<int>(IncomeBand::NotDisaggregated); ++i) {
    const auto v = static_cast<IncomeBand>(i);
    EXPECT_EQ(parse_income_label(to_string(v)), v);
  }
  for (int i = 0; i <= static_cast<int>(ActivityKind::NotDisaggregated); ++i) {
    const auto v = static_cast<ActivityKind>(i);
    EXPECT_EQ(parse_activity_label(to_string(v)), v);
  }
  for (int i = 0; i <= static_cast<int>(TripsBand::T2plus); ++i) {
    const auto v = static_cast<TripsBand>(i);
    EXPECT_EQ(parse_trips_band_label(to_string(v)), v);
  }
  EXPECT_ERRC(parse_age_label("0-25"), Errc::InvalidArgument);
}

TEST(ValidateRequest, AcceptsAndDefaultsEndDate) {
  const DatasetRequest r =
      validate_request(2, DatasetKind::OriginDestination, "municipalities", "2022-03-20", std::nullopt, "out");
  EXPECT_EQ(r.version(), DatasetVersion::V2);
  EXPECT_EQ(r.level(), ZoneLevel::Municipalities);
  EXPECT_EQ(r.range().start, r.range().end);
  EXPECT_EQ(r.range().day_count(), 1);
  EXPECT_EQ(r.output_directory(), std::filesystem::path("out"));
}

TEST(ValidateRequest, RejectsEachInvalidClass) {
  const auto kind = DatasetKind::OriginDestination;
  EXPECT_ERRC(validate_request(1, kind, "gau", "2020-03-01", std::nullopt, "o"), Errc::VersionZoneConflict);
  EXPECT_ERRC(validate_request(1, kind, "districts", "2020-02-13", std::nullopt, "o"),
              Errc::DateOutOfAvailability);
  EXPECT_ERRC(validate_request(1, kind, "districts", "2021-05-10", std::nullopt, "o"),
              Errc::DateOutOfAvailability);
  EXPECT_ERRC(validate_request(1, kind, "districts", "2021-05-01", "2021-05-10", "o"),
              Errc::DateOutOfAvailability);
  EXPECT_ERRC(validate_request(2, kind, "districts", "2021-12-31", std::nullopt, "o"),
              Errc::DateOutOfAvailability);
  EXPECT_ERRC(validate_request(2, kind, "districts", "2022-03-21", "2022-03-20", "o"), Errc::InvalidArgument);
  EXPECT_ERRC(validate_request(2, kind, "regions", "2022-03-21", std::nullopt, "o"), Errc::UnknownAlias);
  EXPECT_ERRC(validate_request(2, kind, "districts", "2022-3-21", std::nullopt, "o"), Errc::MalformedDate);
}

TEST(ValidateRequest, V1GauMessageNamesTheExclusion) {
  try {
    validate_request(1, DatasetKind::OriginDestination, "gau", "2020-03-01", std::nullopt, "o");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("version 1"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("gau"), std::string::npos);
  }
}

TEST(ValidateRequest, ConfiguredV1EndIsHonoured) {
  AvailabilityTable t;
  t.v1.end = Date(2021, 12, 31);
  EXPECT_NO_THROW(validate_request(1, DatasetKind::TripsPerPerson, "districts", "2021-11-01", std::nullopt, "o", t));
  EXPECT_ERRC(validate_request(1, DatasetKind::TripsPerPerson, "districts", "2022-01-01", std::nullopt, "o", t),
              Errc::DateOutOfAvailability);
}

TEST(Errors, ExitCodes) {
  EXPECT_EQ(exit_code_for(Errc::VersionZoneConflict), 3);
  EXPECT_EQ(exit_code_for(Errc::DateOutOfAvailability), 3);
  EXPECT_EQ(exit_code_for(Errc::HttpError), 4);
  EXPECT_EQ(exit_code_for(Errc::OfflineMiss), 4);
  EXPECT_EQ(exit_code_for(Errc::MalformedRow), 5);
  EXPECT_EQ(exit_code_for(Errc::IntegrityError), 5);
  EXPECT_EQ(exit_code_for(Errc::Io), 1);
}

}  // namespace
}  // namespace spainmob

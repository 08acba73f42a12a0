#pragma once

// Domain vocabulary shared by every module: zone levels, dataset versions and
// kinds, demographic taxonomies, civil dates and validated requests.

#include <array>
#include <chrono>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spainmob {

// ---------------------------------------------------------------------------
// Calendar dates (Europe/Madrid civil calendar, no time of day)
// ---------------------------------------------------------------------------

class Date {
 public:
  constexpr Date() = default;
  constexpr explicit Date(std::chrono::sys_days days) : days_(days) {}
  Date(int year, unsigned month, unsigned day);

  // Strict ISO-8601 calendar date, "YYYY-MM-DD". Throws MalformedDate.
  static Date parse_iso(std::string_view text);
  // "YYYYMMDD", as used in raw portal files. Throws MalformedDate.
  static Date parse_compact(std::string_view text);
  // Days since 1970-01-01.
  static constexpr Date from_epoch_days(std::int32_t n) {
    return Date(std::chrono::sys_days(std::chrono::days(n)));
  }

  std::string iso() const;
  std::string compact() const;

  int year() const;
  unsigned month() const;
  unsigned day() const;
  // ISO weekday, 1 = Monday ... 7 = Sunday.
  unsigned iso_weekday() const;
  bool is_weekend() const { return iso_weekday() >= 6; }

  constexpr std::int32_t epoch_days() const {
    return static_cast<std::int32_t>(days_.time_since_epoch().count());
  }
  constexpr std::chrono::sys_days sys_days() const { return days_; }

  Date operator+(int n) const { return Date(days_ + std::chrono::days(n)); }
  Date operator-(int n) const { return Date(days_ - std::chrono::days(n)); }
  int operator-(const Date& other) const {
    return static_cast<int>((days_ - other.days_).count());
  }

  friend constexpr auto operator<=>(const Date&, const Date&) = default;

 private:
  std::chrono::sys_days days_{};
};

std::ostream& operator<<(std::ostream& os, const Date& d);

// Civil date in Europe/Madrid (CET/CEST, EU summer-time rule) for a UTC instant.
Date madrid_civil_date(std::chrono::system_clock::time_point utc);

struct DateRange {
  Date start;
  Date end;

  int day_count() const { return (end - start) + 1; }
  bool contains(const Date& d) const { return start <= d && d <= end; }
  friend bool operator==(const DateRange&, const DateRange&) = default;
};

// Inclusive, strictly ascending, one entry per day.
std::vector<Date> enumerate_days(const DateRange& range);

// ---------------------------------------------------------------------------
// Enumerations
// ---------------------------------------------------------------------------

enum class ZoneLevel : std::uint8_t { Districts, Municipalities, GreaterUrbanAreas };
enum class DatasetVersion : std::uint8_t { V1 = 1, V2 = 2 };
enum class DatasetKind : std::uint8_t { OriginDestination, TripsPerPerson, OvernightStays };

enum class AgeBand : std::uint8_t { A0_24, A25_44, A45_64, A65_plus, NotDisaggregated };
enum class Gender : std::uint8_t { Male, Female, NotDisaggregated };
enum class IncomeBand : std::uint8_t { LT10k, B10_15k, GT15k, NotDisaggregated };
enum class ActivityKind : std::uint8_t { Home, WorkStudy, FrequentVisit, Other, NotDisaggregated };
enum class TripsBand : std::uint8_t { T0, T1, T2, T2plus };

inline constexpr std::array kAllLevels{ZoneLevel::Districts, ZoneLevel::Municipalities,
                                       ZoneLevel::GreaterUrbanAreas};
inline constexpr std::array kAllVersions{DatasetVersion::V1, DatasetVersion::V2};
inline constexpr std::array kAllKinds{DatasetKind::OriginDestination, DatasetKind::TripsPerPerson,
                                      DatasetKind::OvernightStays};

// Accepted aliases for each level, lower case.
std::span<const std::string_view> zone_level_aliases(ZoneLevel level);
// Case-insensitive. Throws UnknownAlias listing every accepted alias.
ZoneLevel parse_zone_level(std::string_view alias);
// Throws InvalidArgument for anything but 1 or 2.
DatasetVersion parse_dataset_version(int number);
// Accepts "od", "trips", "overnight" and their long forms.
DatasetKind parse_dataset_kind(std::string_view text);

bool version_admits_level(DatasetVersion version, ZoneLevel level);
// Districts < Municipalities < GreaterUrbanAreas.
int level_rank(ZoneLevel level);

// Canonical labels used in exported tables. parse_* accept only canonical
// labels and throw InvalidArgument otherwise.
std::string_view to_string(ZoneLevel v);
std::string_view to_string(DatasetKind v);
std::string_view to_string(AgeBand v);
std::string_view to_string(Gender v);
std::string_view to_string(IncomeBand v);
std::string_view to_string(ActivityKind v);
std::string_view to_string(TripsBand v);
int to_int(DatasetVersion v);

AgeBand parse_age_label(std::string_view s);
Gender parse_gender_label(std::string_view s);
IncomeBand parse_income_label(std::string_view s);
ActivityKind parse_activity_label(std::string_view s);
TripsBand parse_trips_band_label(std::string_view s);

// ---------------------------------------------------------------------------
// Zone identifiers
// ---------------------------------------------------------------------------

struct ZoneId {
  std::string value;

  ZoneId() = default;
  explicit ZoneId(std::string v) : value(std::move(v)) {}

  bool empty() const { return value.empty(); }
  friend auto operator<=>(const ZoneId&, const ZoneId&) = default;
  friend bool operator==(const ZoneId&, const ZoneId&) = default;
};

inline std::ostream& operator<<(std::ostream& os, const ZoneId& z) { return os << z.value; }

// ---------------------------------------------------------------------------
// Availability and validated requests
// ---------------------------------------------------------------------------

struct Availability {
  Date start;
  std::optional<Date> end;  // open-ended when empty

  bool contains(const Date& d) const { return start <= d && (!end || d <= *end); }
  std::string describe() const;
};

struct AvailabilityTable {
  Availability v1{Date(2020, 2, 14), Date(2021, 5, 9)};
  Availability v2{Date(2022, 1, 1), std::nullopt};

  const Availability& of(DatasetVersion v) const { return v == DatasetVersion::V1 ? v1 : v2; }
  Availability& of(DatasetVersion v) { return v == DatasetVersion::V1 ? v1 : v2; }
};

class DatasetRequest {
 public:
  DatasetVersion version() const { return version_; }
  DatasetKind kind() const { return kind_; }
  ZoneLevel level() const { return level_; }
  const DateRange& range() const { return range_; }
  const std::filesystem::path& output_directory() const { return output_directory_; }

  friend bool operator==(const DatasetRequest&, const DatasetRequest&) = default;

 private:
  friend DatasetRequest validate_request(int, DatasetKind, std::string_view, std::string_view,
                                         std::optional<std::string_view>, std::filesystem::path,
                                         const AvailabilityTable&);
  DatasetRequest(DatasetVersion v, DatasetKind k, ZoneLevel l, DateRange r, std::filesystem::path out)
      : version_(v), kind_(k), level_(l), range_(r), output_directory_(std::move(out)) {}

  DatasetVersion version_;
  DatasetKind kind_;
  ZoneLevel level_;
  DateRange range_;
  std::filesystem::path output_directory_;
};

// The only way to obtain a DatasetRequest. The end date defaults to the start
// date; out-of-window dates are rejected, never clamped.
DatasetRequest validate_request(int version, DatasetKind kind, std::string_view zones_alias,
                                std::string_view start, std::optional<std::string_view> end,
                                std::filesystem::path output_directory,
                                const AvailabilityTable& availability = {});

}  // namespace spainmob

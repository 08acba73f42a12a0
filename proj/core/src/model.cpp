#include "spainmob/model.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

#include "spainmob/error.hpp"

namespace spainmob {

namespace chr = std::chrono;

namespace {

bool parse_uint(std::string_view s, unsigned& out) {
  if (s.empty()) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && p == s.data() + s.size();
}

Date make_checked(unsigned y, unsigned m, unsigned d, std::string_view text) {
  chr::year_month_day ymd{chr::year(static_cast<int>(y)), chr::month(m), chr::day(d)};
  if (!ymd.ok()) fail(Errc::MalformedDate, "not a calendar date: '" + std::string(text) + "'");
  return Date(chr::sys_days(ymd));
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

constexpr std::array<std::string_view, 3> kDistrictAliases{"districts", "distritos", "dist"};
constexpr std::array<std::string_view, 3> kMunicipalityAliases{"municipalities", "municipios", "muni"};
constexpr std::array<std::string_view, 3> kGauAliases{"gau", "greater_urban_areas", "grandes_areas_urbanas"};

}  // namespace

Date::Date(int year, unsigned month, unsigned day) {
  chr::year_month_day ymd{chr::year(year), chr::month(month), chr::day(day)};
  if (!ymd.ok()) {
    fail(Errc::MalformedDate, "not a calendar date: " + std::to_string(year) + "-" +
                                  std::to_string(month) + "-" + std::to_string(day));
  }
  days_ = chr::sys_days(ymd);
}

Date Date::parse_iso(std::string_view text) {
  unsigned y = 0, m = 0, d = 0;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !parse_uint(text.substr(0, 4), y) ||
      !parse_uint(text.substr(5, 2), m) || !parse_uint(text.substr(8, 2), d)) {
    fail(Errc::MalformedDate, "expected YYYY-MM-DD, got '" + std::string(text) + "'");
  }
  return make_checked(y, m, d, text);
}

Date Date::parse_compact(std::string_view text) {
  unsigned y = 0, m = 0, d = 0;
  if (text.size() != 8 || !parse_uint(text.substr(0, 4), y) || !parse_uint(text.substr(4, 2), m) ||
      !parse_uint(text.substr(6, 2), d)) {
    fail(Errc::MalformedDate, "expected YYYYMMDD, got '" + std::string(text) + "'");
  }
  return make_checked(y, m, d, text);
}

int Date::year() const { return static_cast<int>(chr::year_month_day(days_).year()); }
unsigned Date::month() const { return static_cast<unsigned>(chr::year_month_day(days_).month()); }
unsigned Date::day() const { return static_cast<unsigned>(chr::year_month_day(days_).day()); }
unsigned Date::iso_weekday() const { return chr::weekday(days_).iso_encoding(); }

std::string Date::iso() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year(), month(), day());
  return buf;
}

std::string Date::compact() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d%02u%02u", year(), month(), day());
  return buf;
}

std::ostream& operator<<(std::ostream& os, const Date& d) { return os << d.iso(); }

Date madrid_civil_date(chr::system_clock::time_point utc) {
  // EU rule: summer time from 01:00 UTC on the last Sunday of March until
  // 01:00 UTC on the last Sunday of October.
  auto utc_day = chr::floor<chr::days>(utc);
  chr::year y = chr::year_month_day(utc_day).year();
  auto last_sunday = [&](unsigned month) {
    return chr::sys_days(chr::year_month_weekday_last(y, chr::month(month),
                                                       chr::weekday_last(chr::Sunday)));
  };
  auto dst_start = last_sunday(3) + chr::hours(1);
  auto dst_end = last_sunday(10) + chr::hours(1);
  auto offset = (utc >= dst_start && utc < dst_end) ? chr::hours(2) : chr::hours(1);
  return Date(chr::floor<chr::days>(utc + offset));
}

std::vector<Date> enumerate_days(const DateRange& range) {
  std::vector<Date> out;
  if (range.end < range.start) return out;
  out.reserve(static_cast<std::size_t>(range.day_count()));
  for (Date d = range.start; d <= range.end; d = d + 1) out.push_back(d);
  return out;
}

std::span<const std::string_view> zone_level_aliases(ZoneLevel level) {
  switch (level) {
    case ZoneLevel::Districts: return kDistrictAliases;
    case ZoneLevel::Municipalities: return kMunicipalityAliases;
    case ZoneLevel::GreaterUrbanAreas: return kGauAliases;
  }
  return {};
}

ZoneLevel parse_zone_level(std::string_view alias) {
  const std::string folded = lower(alias);
  for (ZoneLevel level : kAllLevels) {
    for (std::string_view a : zone_level_aliases(level))
      if (a == folded) return level;
  }
  std::string accepted;
  for (ZoneLevel level : kAllLevels)
    for (std::string_view a : zone_level_aliases(level)) {
      if (!accepted.empty()) accepted += ", ";
      accepted += a;
    }
  fail(Errc::UnknownAlias,
       "unknown zone level '" + std::string(alias) + "'; accepted aliases: " + accepted);
}

DatasetVersion parse_dataset_version(int number) {
  if (number == 1) return DatasetVersion::V1;
  if (number == 2) return DatasetVersion::V2;
  fail(Errc::InvalidArgument, "dataset version must be 1 or 2, got " + std::to_string(number));
}

DatasetKind parse_dataset_kind(std::string_view text) {
  const std::string s = lower(text);
  if (s == "od" || s == "origin_destination" || s == "viajes") return DatasetKind::OriginDestination;
  if (s == "trips" || s == "trips_per_person" || s == "personas") return DatasetKind::TripsPerPerson;
  if (s == "overnight" || s == "overnight_stays" || s == "pernoctaciones")
    return DatasetKind::OvernightStays;
  fail(Errc::InvalidArgument,
       "unknown dataset kind '" + std::string(text) + "'; expected od, trips or overnight");
}

bool version_admits_level(DatasetVersion version, ZoneLevel level) {
  return !(version == DatasetVersion::V1 && level == ZoneLevel::GreaterUrbanAreas);
}

int level_rank(ZoneLevel level) { return static_cast<int>(level); }

std::string_view to_string(ZoneLevel v) {
  switch (v) {
    case ZoneLevel::Districts: return "districts";
    case ZoneLevel::Municipalities: return "municipalities";
    case ZoneLevel::GreaterUrbanAreas: return "gau";
  }
  return "?";
}

std::string_view to_string(DatasetKind v) {
  switch (v) {
    case DatasetKind::OriginDestination: return "od";
    case DatasetKind::TripsPerPerson: return "trips";
    case DatasetKind::OvernightStays: return "overnight";
  }
  return "?";
}

std::string_view to_string(AgeBand v) {
  switch (v) {
    case AgeBand::A0_24: return "0-24";
    case AgeBand::A25_44: return "25-44";
    case AgeBand::A45_64: return "45-64";
    case AgeBand::A65_plus: return "65+";
    case AgeBand::NotDisaggregated: return "NA";
  }
  return "?";
}

std::string_view to_string(Gender v) {
  switch (v) {
    case Gender::Male: return "male";
    case Gender::Female: return "female";
    case Gender::NotDisaggregated: return "NA";
  }
  return "?";
}

std::string_view to_string(IncomeBand v) {
  switch (v) {
    case IncomeBand::LT10k: return "<10k";
    case IncomeBand::B10_15k: return "10-15k";
    case IncomeBand::GT15k: return ">15k";
    case IncomeBand::NotDisaggregated: return "NA";
  }
  return "?";
}

std::string_view to_string(ActivityKind v) {
  switch (v) {
    case ActivityKind::Home: return "home";
    case ActivityKind::WorkStudy: return "work_study";
    case ActivityKind::FrequentVisit: return "frequent";
    case ActivityKind::Other: return "other";
    case ActivityKind::NotDisaggregated: return "NA";
  }
  return "?";
}

std::string_view to_string(TripsBand v) {
  switch (v) {
    case TripsBand::T0: return "0";
    case TripsBand::T1: return "1";
    case TripsBand::T2: return "2";
    case TripsBand::T2plus: return "2+";
  }
  return "?";
}

int to_int(DatasetVersion v) { return static_cast<int>(v); }

namespace {

template <typename E, std::size_t N>
E parse_label(std::string_view s, const std::array<E, N>& all, const char* what) {
  for (E e : all)
    if (to_string(e) == s) return e;
  fail(Errc::InvalidArgument, std::string("unknown ") + what + " label '" + std::string(s) + "'");
}

}  // namespace

AgeBand parse_age_label(std::string_view s) {
  return parse_label(s, std::array{AgeBand::A0_24, AgeBand::A25_44, AgeBand::A45_64,
                                   AgeBand::A65_plus, AgeBand::NotDisaggregated},
                     "age");
}

Gender parse_gender_label(std::string_view s) {
  return parse_label(s, std::array{Gender::Male, Gender::Female, Gender::NotDisaggregated}, "gender");
}

IncomeBand parse_income_label(std::string_view s) {
  return parse_label(s, std::array{IncomeBand::LT10k, IncomeBand::B10_15k, IncomeBand::GT15k,
                                   IncomeBand::NotDisaggregated},
                     "income");
}

ActivityKind parse_activity_label(std::string_view s) {
  return parse_label(s, std::array{ActivityKind::Home, ActivityKind::WorkStudy,
                                   ActivityKind::FrequentVisit, ActivityKind::Other,
                                   ActivityKind::NotDisaggregated},
                     "activity");
}

TripsBand parse_trips_band_label(std::string_view s) {
  return parse_label(s, std::array{TripsBand::T0, TripsBand::T1, TripsBand::T2, TripsBand::T2plus},
                     "trips band");
}

std::string Availability::describe() const {
  return start.iso() + ".." + (end ? end->iso() : std::string("open"));
}

DatasetRequest validate_request(int version, DatasetKind kind, std::string_view zones_alias,
                                std::string_view start, std::optional<std::string_view> end,
                                std::filesystem::path output_directory,
                                const AvailabilityTable& availability) {
  const DatasetVersion v = parse_dataset_version(version);
  const ZoneLevel level = parse_zone_level(zones_alias);
  if (!version_admits_level(v, level)) {
    fail(Errc::VersionZoneConflict,
         "dataset version 1 does not include greater urban areas (gau); use districts or "
         "municipalities, or version 2");
  }
  const Date first = Date::parse_iso(start);
  const Date last = end ? Date::parse_iso(*end) : first;
  if (last < first) {
    fail(Errc::InvalidArgument, "end date " + last.iso() + " precedes start date " + first.iso());
  }
  const Availability& window = availability.of(v);
  for (const Date& d : {first, last}) {
    if (!window.contains(d)) {
      fail(Errc::DateOutOfAvailability, "date " + d.iso() + " is outside version " +
                                            std::to_string(version) + " availability " +
                                            window.describe());
    }
  }
  return DatasetRequest(v, kind, level, DateRange{first, last}, std::move(output_directory));
}

}  // namespace spainmob

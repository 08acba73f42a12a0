#pragma once

// Deterministic aggregates over normalized tables: weekday/weekend summaries,
// hourly profiles, top-percentile flows, overnight-stay quantile maps and
// demographic breakdowns.

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spainmob/records.hpp"
#include "spainmob/zones.hpp"

namespace spainmob {

enum class Segment { Weekday, Weekend };
enum class Dimension { Age, Gender, Income };

std::string_view to_string(Segment s);
std::string_view to_string(Dimension d);
// "age", "gender" or "income"; throws UnknownDimension.
Dimension parse_dimension(std::string_view text);
// Canonical label of a row's value for `d`.
std::string_view dimension_label(const ODRecord& r, Dimension d);

// Generic keyed aggregate: every row has one text value per key column and
// one number per measure column.
struct AnalyticsTable {
  std::vector<std::string> key_columns;
  std::vector<std::string> measure_columns;
  struct Row {
    std::vector<std::string> keys;
    std::vector<double> measures;

    friend bool operator==(const Row&, const Row&) = default;
  };
  std::vector<Row> rows;

  friend bool operator==(const AnalyticsTable&, const AnalyticsTable&) = default;
};

// Parquet (keys as strings, measures as doubles) or CSV, by extension.
void write_analytics_table(const AnalyticsTable& table, const std::filesystem::path& path);

struct FlowSummary {
  Segment segment = Segment::Weekday;
  std::optional<std::string> group;  // demographic label when grouped
  double avg_daily_trips = 0.0;
  std::size_t distinct_destinations = 0;

  friend bool operator==(const FlowSummary&, const FlowSummary&) = default;
};

// avg_daily_trips divides by the number of distinct days of the segment
// present anywhere in the table. Groups appear in band order (NA last), each
// with a Weekday then a Weekend entry. Throws UnknownZone when `origin` never
// appears as an origin.
std::vector<FlowSummary> weekday_weekend_summary(const OdTable& table, const ZoneId& origin,
                                                 std::optional<Dimension> group_by = std::nullopt);
AnalyticsTable to_table(const std::vector<FlowSummary>& summaries, std::optional<Dimension> group_by);

enum class Reducer { SumOverRange, MeanPerDay };

struct HourlyProfile {
  std::string group_key;  // demographic label, or "all"
  std::array<double, 24> values{};

  friend bool operator==(const HourlyProfile&, const HourlyProfile&) = default;
};

struct HourlyOptions {
  std::optional<ZoneId> destination;
  std::optional<Dimension> group_by;
  Reducer reducer = Reducer::SumOverRange;
  // Drop rows whose origin equals their destination.
  bool exclude_internal = false;
};

// MeanPerDay divides by the number of distinct days in the table. Throws
// UnknownZone when `destination` never appears as a destination.
std::vector<HourlyProfile> hourly_profile(const OdTable& table, const HourlyOptions& options = {});
AnalyticsTable to_table(const std::vector<HourlyProfile>& profiles);

enum class PercentileBasis {
  // Top pct% of destinations by count.
  Destinations,
  // Smallest head of the ranking holding at least pct% of the trips.
  TripMass,
};

struct FlowTotal {
  ZoneId destination;
  double total_trips = 0.0;

  friend bool operator==(const FlowTotal&, const FlowTotal&) = default;
};

// Destinations with positive totals, ranked by total descending then id
// ascending. With n ranked destinations the cutoff is the value at rank
// ceil(n * pct / 100); every destination tied with it is included. Throws
// UnknownZone, and InvalidArgument for pct outside (0, 100].
std::vector<FlowTotal> top_percentile_flows(const OdTable& table, const ZoneId& origin, double percentile_rank,
                                            PercentileBasis basis = PercentileBasis::Destinations);
AnalyticsTable to_table(const std::vector<FlowTotal>& flows);

enum class OvernightStatistic { MeanPerDay, Total };

// Class index assigned to zones without data.
inline constexpr int kNoDataClass = -1;

struct QuantileMap {
  int n_classes = 0;
  // Distinct values of the type-1 empirical quantiles at k/n_classes,
  // k = 1..n_classes-1; a value v falls in the class counting the breaks
  // strictly below it.
  std::vector<double> breaks;
  std::map<ZoneId, int> assignments;
  std::map<ZoneId, double> values;
};

// Breaks and assignments for a set of values; shared by the map builder.
std::vector<double> quantile_breaks(std::vector<double> values, int n_classes);
int quantile_class(double value, const std::vector<double>& breaks);

// Per overnight_zone statistic over every row of the table. Throws EmptyTable
// and InvalidArgument for n_classes < 2.
QuantileMap overnight_quantile_map(const OvernightTable& table, int n_classes,
                                   OvernightStatistic statistic = OvernightStatistic::MeanPerDay);
// Every zone of `zones` becomes a feature with zone_id, value (null without
// data) and class (kNoDataClass without data).
std::string quantile_map_geojson(const QuantileMap& map, const ZoneCollection& zones);
AnalyticsTable to_table(const QuantileMap& map);

// Key columns: the requested dimensions then "segment". Measures: trips,
// trips_km, avg_daily_trips, distinct_destinations. Only combinations present
// in the data appear, in band order then weekday before weekend. `origin`
// empty means every origin.
AnalyticsTable demographic_breakdown(const OdTable& table, const std::optional<ZoneId>& origin,
                                     const std::vector<Dimension>& dimensions);

}  // namespace spainmob

#pragma once

// Independent reference computations used by tests and the acceptance suite.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "spainmob/analytics.hpp"
#include "spainmob/geometry.hpp"

namespace spainmob::oracle {

// Polygon area on the WGS84 authalic sphere: vertices mapped to authalic
// latitude, great-circle edges, spherical excess per edge against the pole.
inline double authalic_sphere_area_m2(const Ring& ring) {
  const double a = wgs84::a, f = wgs84::f;
  const double e2 = f * (2 - f), e = std::sqrt(e2);
  auto q = [&](double phi) {
    const double s = std::sin(phi);
    return (1 - e2) * (s / (1 - e2 * s * s) - std::log((1 - e * s) / (1 + e * s)) / (2 * e));
  };
  const double qp = q(std::numbers::pi / 2);
  const double r2 = a * a * qp / 2;
  const double deg = std::numbers::pi / 180;
  auto beta = [&](double lat) { return std::asin(std::clamp(q(lat * deg) / qp, -1.0, 1.0)); };
  double excess = 0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    const double b1 = beta(ring[i].lat), b2 = beta(ring[i + 1].lat);
    const double dl = std::remainder((ring[i + 1].lon - ring[i].lon) * deg, 2 * std::numbers::pi);
    const double t1 = std::tan(b1 / 2), t2 = std::tan(b2 / 2);
    excess += 2 * std::atan2(std::tan(dl / 2) * (t1 + t2), 1 + t1 * t2);
  }
  return std::abs(excess) * r2;
}

// ---------------------------------------------------------------------------
// Analytics, recomputed row by row with text keys
// ---------------------------------------------------------------------------

// 1970-01-01 was a Thursday.
inline bool weekend_day(const Date& d) {
  const int dow = ((d.epoch_days() % 7) + 7 + 3) % 7;  // 0 = Monday
  return dow >= 5;
}

inline std::string segment_name(bool weekend) { return weekend ? "weekend" : "weekday"; }

inline std::string label_of(const ODRecord& r, const std::string& dimension) {
  if (dimension == "age") return std::string(to_string(r.age));
  if (dimension == "gender") return std::string(to_string(r.gender));
  return std::string(to_string(r.income));
}

inline std::array<double, 2> segment_days(const OdTable& t) {
  std::set<std::int32_t> weekday, weekend;
  for (const auto& r : t.rows) (weekend_day(r.day) ? weekend : weekday).insert(r.day.epoch_days());
  return {static_cast<double>(weekday.size()), static_cast<double>(weekend.size())};
}

struct SummaryValue {
  double avg = 0;
  std::size_t destinations = 0;
};

// (group label or "", segment) -> summary. Every group seen for the origin
// gets both segments.
inline std::map<std::pair<std::string, std::string>, SummaryValue> weekday_weekend(
    const OdTable& t, const ZoneId& origin, const std::string& dimension) {
  const auto days = segment_days(t);
  std::map<std::tuple<std::string, bool, std::string>, double> per_dest;
  std::set<std::string> groups;
  for (const auto& r : t.rows) {
    if (r.origin.value != origin.value) continue;
    const std::string g = dimension.empty() ? "" : label_of(r, dimension);
    groups.insert(g);
    per_dest[{g, weekend_day(r.day), r.destination.value}] += r.trips;
  }
  std::map<std::pair<std::string, std::string>, SummaryValue> out;
  for (const auto& g : groups)
    for (bool we : {false, true}) out[{g, segment_name(we)}] = {};
  for (const auto& [key, trips] : per_dest) {
    const auto& [g, we, dest] = key;
    SummaryValue& v = out[{g, segment_name(we)}];
    v.avg += trips / days[we ? 1 : 0];
    if (trips > 0) ++v.destinations;
  }
  return out;
}

// group label ("all" when ungrouped) -> 24 hourly values.
inline std::map<std::string, std::array<double, 24>> hourly(const OdTable& t, const HourlyOptions& o) {
  std::map<std::string, std::array<double, 24>> out;
  std::set<std::int32_t> days;
  for (const auto& r : t.rows) days.insert(r.day.epoch_days());
  for (const auto& r : t.rows) {
    if (o.destination && r.destination.value != o.destination->value) continue;
    if (o.exclude_internal && r.origin.value == r.destination.value) continue;
    const std::string g = o.group_by ? label_of(r, std::string(to_string(*o.group_by))) : "all";
    auto it = out.try_emplace(g).first;
    it->second[static_cast<std::size_t>(r.hour)] +=
        o.reducer == Reducer::MeanPerDay ? r.trips / static_cast<double>(days.size()) : r.trips;
  }
  return out;
}

// Sort, slice at the percentile rank, then extend over ties with the last
// kept total.
inline std::vector<FlowTotal> top_flows(const OdTable& t, const ZoneId& origin, double pct,
                                        PercentileBasis basis = PercentileBasis::Destinations) {
  std::map<std::string, double> totals;
  for (const auto& r : t.rows)
    if (r.origin.value == origin.value) totals[r.destination.value] += r.trips;
  std::vector<std::pair<double, std::string>> sorted;
  for (const auto& [d, v] : totals)
    if (v > 0) sorted.push_back({-v, d});
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  std::size_t keep = 0;
  if (basis == PercentileBasis::Destinations) {
    // Position i (0-based) is in the top pct% when i < n * pct / 100.
    while (keep < sorted.size() && static_cast<double>(keep) * 100 < n * pct * (1 - 1e-12)) ++keep;
  } else {
    double all = 0, head = 0;
    for (const auto& s : sorted) all -= s.first;
    while (keep < sorted.size() && head < all * pct / 100 * (1 - 1e-12)) head -= sorted[keep++].first;
  }
  std::vector<FlowTotal> out;
  if (sorted.empty()) return out;
  const double cutoff = -sorted[std::max<std::size_t>(keep, 1) - 1].first;
  for (const auto& [neg, d] : sorted)
    if (-neg >= cutoff) out.push_back({ZoneId(d), -neg});
  return out;
}

// Class of each value: the number of distinct type-1 quantiles strictly
// below it, where the quantile at p is the smallest sample x with
// ECDF(x) >= p.
inline std::vector<int> quantile_classes(const std::vector<double>& values, int n_classes) {
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  std::set<double> quantiles;
  for (int k = 1; k < n_classes; ++k) {
    for (double x : sorted) {
      const auto at_most = static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin());
      if (at_most * static_cast<std::size_t>(n_classes) >= static_cast<std::size_t>(k) * n) {
        quantiles.insert(x);
        break;
      }
    }
  }
  std::vector<int> out;
  for (double v : values)
    out.push_back(static_cast<int>(std::count_if(quantiles.begin(), quantiles.end(), [&](double q) { return q < v; })));
  return out;
}

struct BreakdownValue {
  double trips = 0, trips_km = 0, avg = 0;
  std::size_t destinations = 0;
};

// (dimension labels..., segment) -> measures.
inline std::map<std::vector<std::string>, BreakdownValue> breakdown(const OdTable& t,
                                                                     const std::optional<ZoneId>& origin,
                                                                     const std::vector<std::string>& dims) {
  const auto days = segment_days(t);
  std::map<std::vector<std::string>, BreakdownValue> out;
  std::map<std::vector<std::string>, std::map<std::string, double>> dest;
  for (const auto& r : t.rows) {
    if (origin && r.origin.value != origin->value) continue;
    std::vector<std::string> key;
    for (const auto& d : dims) key.push_back(label_of(r, d));
    const bool we = weekend_day(r.day);
    key.push_back(segment_name(we));
    BreakdownValue& v = out[key];
    v.trips += r.trips;
    v.trips_km += r.trips_km;
    v.avg += r.trips / days[we ? 1 : 0];
    dest[key][r.destination.value] += r.trips;
  }
  for (auto& [key, v] : out)
    for (const auto& [d, trips] : dest[key])
      if (trips > 0) ++v.destinations;
  return out;
}

inline bool close(double a, double b, double rel = 1e-9) {
  return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace spainmob::oracle

#include "spainmob/records.hpp"

#include <algorithm>
#include <tuple>

namespace spainmob {

namespace {

auto od_key(const ODRecord& r) {
  return std::tie(r.day, r.hour, r.origin, r.destination, r.activity_origin, r.activity_destination,
                  r.age, r.gender, r.income, r.distance_band);
}

auto od_key_without_activity(const ODRecord& r) {
  return std::tie(r.day, r.hour, r.origin, r.destination, r.age, r.gender, r.income,
                  r.distance_band);
}

}  // namespace

void sort_rows(OdTable& table) {
  std::stable_sort(table.rows.begin(), table.rows.end(),
                   [](const ODRecord& a, const ODRecord& b) { return od_key(a) < od_key(b); });
}

void sort_rows(TripsTable& table) {
  std::stable_sort(table.rows.begin(), table.rows.end(),
                   [](const TripsPerPersonRecord& a, const TripsPerPersonRecord& b) {
                     return std::tie(a.day, a.zone, a.age, a.gender, a.trips_band) <
                            std::tie(b.day, b.zone, b.age, b.gender, b.trips_band);
                   });
}

void sort_rows(OvernightTable& table) {
  std::stable_sort(table.rows.begin(), table.rows.end(),
                   [](const OvernightStayRecord& a, const OvernightStayRecord& b) {
                     return std::tie(a.day, a.residence_zone, a.overnight_zone) <
                            std::tie(b.day, b.residence_zone, b.overnight_zone);
                   });
}

OdTable collapse_activity(const OdTable& table) {
  std::vector<const ODRecord*> order;
  order.reserve(table.rows.size());
  for (const auto& r : table.rows) order.push_back(&r);
  std::stable_sort(order.begin(), order.end(), [](const ODRecord* a, const ODRecord* b) {
    return od_key_without_activity(*a) < od_key_without_activity(*b);
  });

  OdTable out;
  out.level = table.level;
  out.has_activity = false;
  for (const ODRecord* r : order) {
    if (!out.rows.empty() && od_key_without_activity(out.rows.back()) == od_key_without_activity(*r)) {
      out.rows.back().trips += r->trips;
      out.rows.back().trips_km += r->trips_km;
      continue;
    }
    ODRecord c = *r;
    c.activity_origin = ActivityKind::NotDisaggregated;
    c.activity_destination = ActivityKind::NotDisaggregated;
    out.rows.push_back(std::move(c));
  }
  return out;
}

}  // namespace spainmob

#pragma once

#include <string>
#include <vector>

#include "spainmob/model.hpp"

namespace spainmob {

struct ODRecord {
  Date day;
  int hour = 0;
  ZoneId origin;
  ZoneId destination;
  ActivityKind activity_origin = ActivityKind::NotDisaggregated;
  ActivityKind activity_destination = ActivityKind::NotDisaggregated;
  AgeBand age = AgeBand::NotDisaggregated;
  Gender gender = Gender::NotDisaggregated;
  IncomeBand income = IncomeBand::NotDisaggregated;
  std::string distance_band;  // verbatim from source
  double trips = 0.0;         // person-trips, may be fractional
  double trips_km = 0.0;      // person-kilometres

  friend bool operator==(const ODRecord&, const ODRecord&) = default;
};

struct TripsPerPersonRecord {
  Date day;
  ZoneId zone;  // overnight-stay zone
  AgeBand age = AgeBand::NotDisaggregated;
  Gender gender = Gender::NotDisaggregated;
  TripsBand trips_band = TripsBand::T0;
  double persons = 0.0;

  friend bool operator==(const TripsPerPersonRecord&, const TripsPerPersonRecord&) = default;
};

struct OvernightStayRecord {
  Date day;
  ZoneId residence_zone;
  ZoneId overnight_zone;
  double persons = 0.0;

  friend bool operator==(const OvernightStayRecord&, const OvernightStayRecord&) = default;
};

struct OdTable {
  ZoneLevel level = ZoneLevel::Districts;
  // False once activity columns have been collapsed away.
  bool has_activity = true;
  std::vector<ODRecord> rows;
};

struct TripsTable {
  ZoneLevel level = ZoneLevel::Districts;
  std::vector<TripsPerPersonRecord> rows;
};

struct OvernightTable {
  ZoneLevel level = ZoneLevel::Districts;
  std::vector<OvernightStayRecord> rows;
};

// Canonical export order: (day, hour, origin, destination, remaining
// dimensions) ascending. Stable, so exact duplicates keep input order.
void sort_rows(OdTable& table);
void sort_rows(TripsTable& table);
void sort_rows(OvernightTable& table);

// Drops both activity columns and sums trips and trips_km over rows that agree
// on every remaining dimension. Output is sorted.
OdTable collapse_activity(const OdTable& table);

}  // namespace spainmob

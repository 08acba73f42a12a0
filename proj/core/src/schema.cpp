#include "spainmob/schema.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include "spainmob/error.hpp"
#include "spainmob/model.hpp"

namespace spainmob {

std::string_view to_string(SchemaTarget t) {
  switch (t) {
    case SchemaTarget::OriginDestination: return "od";
    case SchemaTarget::TripsPerPerson: return "trips";
    case SchemaTarget::OvernightStays: return "overnight";
    case SchemaTarget::Relations: return "relations";
  }
  return "?";
}

const std::vector<std::string>& mandatory_fields(SchemaTarget t) {
  static const std::vector<std::string> od{"day", "hour", "origin", "destination", "trips", "trips_km"};
  static const std::vector<std::string> trips{"day", "zone", "trips_band", "persons"};
  static const std::vector<std::string> overnight{"day", "residence_zone", "overnight_zone", "persons"};
  static const std::vector<std::string> relations{"district", "municipality"};
  switch (t) {
    case SchemaTarget::OriginDestination: return od;
    case SchemaTarget::TripsPerPerson: return trips;
    case SchemaTarget::OvernightStays: return overnight;
    case SchemaTarget::Relations: return relations;
  }
  return od;
}

const std::vector<std::string>& optional_fields(SchemaTarget t) {
  static const std::vector<std::string> od{"activity_origin", "activity_destination", "age",
                                           "gender", "income", "distance_band"};
  static const std::vector<std::string> trips{"age", "gender"};
  static const std::vector<std::string> none;
  static const std::vector<std::string> relations{"gau"};
  switch (t) {
    case SchemaTarget::OriginDestination: return od;
    case SchemaTarget::TripsPerPerson: return trips;
    case SchemaTarget::OvernightStays: return none;
    case SchemaTarget::Relations: return relations;
  }
  return none;
}

const std::vector<std::string>& mapped_fields(SchemaTarget t) {
  static const std::vector<std::string> od{"activity_origin", "activity_destination", "age",
                                           "gender", "income"};
  static const std::vector<std::string> trips{"age", "gender", "trips_band"};
  static const std::vector<std::string> none;
  switch (t) {
    case SchemaTarget::OriginDestination: return od;
    case SchemaTarget::TripsPerPerson: return trips;
    default: return none;
  }
}

namespace {

void check_label(const std::string& field, const std::string& label) {
  if (field == "age") {
    parse_age_label(label);
  } else if (field == "gender") {
    parse_gender_label(label);
  } else if (field == "income") {
    parse_income_label(label);
  } else if (field == "activity_origin" || field == "activity_destination") {
    parse_activity_label(label);
  } else if (field == "trips_band") {
    parse_trips_band_label(label);
  }
}

}  // namespace

void validate_schema(const SchemaMap& schema) {
  const std::string where = "schema '" + schema.schema_id + "': ";
  for (const std::string& f : mandatory_fields(schema.target)) {
    if (!schema.bindings.contains(f))
      fail(Errc::ConfigParseError, where + "missing binding for mandatory field '" + f + "'");
  }
  std::set<std::string> known(mandatory_fields(schema.target).begin(),
                              mandatory_fields(schema.target).end());
  known.insert(optional_fields(schema.target).begin(), optional_fields(schema.target).end());
  for (const auto& [field, ref] : schema.bindings) {
    if (!known.contains(field))
      fail(Errc::ConfigParseError, where + "unknown field '" + field + "'");
    if (schema.has_header ? ref.name.empty() : !ref.index.has_value())
      fail(Errc::ConfigParseError, where + "binding for '" + field + "' needs a " +
                                       (schema.has_header ? "column name" : "column index"));
  }
  if (!schema.list_bindings.empty() && schema.target != SchemaTarget::Relations)
    fail(Errc::ConfigParseError, where + "list bindings are only valid for relation tables");

  const auto& mapped = mapped_fields(schema.target);
  for (const auto& [field, table] : schema.value_maps) {
    if (std::find(mapped.begin(), mapped.end(), field) == mapped.end())
      fail(Errc::ConfigParseError, where + "value map for unmapped field '" + field + "'");
    std::set<std::string> images;
    for (const auto& [raw, label] : table) {
      try {
        check_label(field, label);
      } catch (const Error& e) {
        fail(Errc::ConfigParseError, where + e.what());
      }
      if (!images.insert(label).second)
        fail(Errc::ConfigParseError,
             where + "value map for '" + field + "' is not injective (label '" + label + "')");
    }
  }
  for (const std::string& f : mapped) {
    if (schema.bindings.contains(f) && !schema.value_maps.contains(f))
      fail(Errc::ConfigParseError, where + "bound field '" + f + "' has no value map");
  }
  if (schema.date_format != "YYYYMMDD" && schema.date_format != "YYYY-MM-DD")
    fail(Errc::ConfigParseError, where + "unsupported date format '" + schema.date_format + "'");
  if (schema.decimal_separator == schema.delimiter)
    fail(Errc::ConfigParseError, where + "decimal separator equals the field delimiter");
  if (!schema.zone_id_pattern.empty()) {
    try {
      std::regex re(schema.zone_id_pattern);
    } catch (const std::regex_error& e) {
      fail(Errc::ConfigParseError, where + "invalid zone_id_pattern: " + e.what());
    }
  }
}

}  // namespace spainmob

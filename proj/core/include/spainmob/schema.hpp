#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace spainmob {

// Which normalized record type a raw delimited file maps onto.
enum class SchemaTarget { OriginDestination, TripsPerPerson, OvernightStays, Relations };

std::string_view to_string(SchemaTarget t);

// Reference to a raw column, by header name or by zero-based position.
struct ColumnRef {
  std::string name;
  std::optional<std::size_t> index;

  friend bool operator==(const ColumnRef&, const ColumnRef&) = default;
};

// Declarative description of one raw file layout. Loaded from the catalog;
// a portal layout change is a config edit, not a code change.
struct SchemaMap {
  std::string schema_id;
  SchemaTarget target = SchemaTarget::OriginDestination;
  char delimiter = '|';
  bool has_header = true;
  char decimal_separator = '.';
  // "YYYYMMDD" or "YYYY-MM-DD"
  std::string date_format = "YYYYMMDD";
  // normalized field name -> raw column
  std::map<std::string, ColumnRef> bindings;
  // normalized field name -> several raw columns (relation census codes)
  std::map<std::string, std::vector<ColumnRef>> list_bindings;
  // normalized field name -> raw token -> canonical label
  std::map<std::string, std::map<std::string, std::string>> value_maps;
  // Raw tokens meaning "not disaggregated" for demographic/activity fields.
  std::vector<std::string> null_tokens{"NA", "", "-"};
  // ECMAScript regex every zone identifier must match; empty accepts anything
  // non-empty.
  std::string zone_id_pattern;
};

// Mandatory and optional normalized fields for each target.
const std::vector<std::string>& mandatory_fields(SchemaTarget t);
const std::vector<std::string>& optional_fields(SchemaTarget t);
// Fields whose raw tokens go through value_maps.
const std::vector<std::string>& mapped_fields(SchemaTarget t);

// Checks binding coverage, value-map injectivity and canonical labels.
// Throws ConfigParseError naming the schema.
void validate_schema(const SchemaMap& schema);

}  // namespace spainmob

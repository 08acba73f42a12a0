#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace spainmob {

enum class Errc {
  // request validation
  UnknownAlias,
  VersionZoneConflict,
  DateOutOfAvailability,
  MalformedDate,
  InvalidArgument,
  UnknownDimension,
  UnknownZone,
  LevelNotFiner,
  NotYetPublished,
  // catalog
  ConfigParseError,
  MissingTemplate,
  // transport / cache
  HttpError,
  OfflineMiss,
  PartialFailure,
  IntegrityError,
  ManifestCorrupt,
  // parsing
  SchemaMismatch,
  GzipCorrupt,
  MalformedRow,
  EmptyResult,
  GeometryParseError,
  DegenerateGeometry,
  EmptyCollection,
  EmptyTable,
  RelationIntegrityError,
  UnmappedZone,
  ParquetFormatError,
  Io,
};

std::string_view to_string(Errc code) noexcept;

// Process exit code for an error class: 3 validation, 4 network, 5 parse or
// integrity, 1 anything else.
int exit_code_for(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace spainmob

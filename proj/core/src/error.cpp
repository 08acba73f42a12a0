#include "spainmob/error.hpp"

namespace spainmob {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::UnknownAlias: return "UnknownAlias";
    case Errc::VersionZoneConflict: return "VersionZoneConflict";
    case Errc::DateOutOfAvailability: return "DateOutOfAvailability";
    case Errc::MalformedDate: return "MalformedDate";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::UnknownDimension: return "UnknownDimension";
    case Errc::UnknownZone: return "UnknownZone";
    case Errc::LevelNotFiner: return "LevelNotFiner";
    case Errc::NotYetPublished: return "NotYetPublished";
    case Errc::ConfigParseError: return "ConfigParseError";
    case Errc::MissingTemplate: return "MissingTemplate";
    case Errc::HttpError: return "HttpError";
    case Errc::OfflineMiss: return "OfflineMiss";
    case Errc::PartialFailure: return "PartialFailure";
    case Errc::IntegrityError: return "IntegrityError";
    case Errc::ManifestCorrupt: return "ManifestCorrupt";
    case Errc::SchemaMismatch: return "SchemaMismatch";
    case Errc::GzipCorrupt: return "GzipCorrupt";
    case Errc::MalformedRow: return "MalformedRow";
    case Errc::EmptyResult: return "EmptyResult";
    case Errc::GeometryParseError: return "GeometryParseError";
    case Errc::DegenerateGeometry: return "DegenerateGeometry";
    case Errc::EmptyCollection: return "EmptyCollection";
    case Errc::EmptyTable: return "EmptyTable";
    case Errc::RelationIntegrityError: return "RelationIntegrityError";
    case Errc::UnmappedZone: return "UnmappedZone";
    case Errc::ParquetFormatError: return "ParquetFormatError";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

int exit_code_for(Errc code) noexcept {
  switch (code) {
    case Errc::UnknownAlias:
    case Errc::VersionZoneConflict:
    case Errc::DateOutOfAvailability:
    case Errc::MalformedDate:
    case Errc::InvalidArgument:
    case Errc::UnknownDimension:
    case Errc::UnknownZone:
    case Errc::LevelNotFiner:
    case Errc::NotYetPublished:
      return 3;
    case Errc::HttpError:
    case Errc::OfflineMiss:
    case Errc::PartialFailure:
      return 4;
    case Errc::ConfigParseError:
    case Errc::MissingTemplate:
    case Errc::IntegrityError:
    case Errc::ManifestCorrupt:
    case Errc::SchemaMismatch:
    case Errc::GzipCorrupt:
    case Errc::MalformedRow:
    case Errc::EmptyResult:
    case Errc::GeometryParseError:
    case Errc::DegenerateGeometry:
    case Errc::EmptyCollection:
    case Errc::EmptyTable:
    case Errc::RelationIntegrityError:
    case Errc::UnmappedZone:
    case Errc::ParquetFormatError:
      return 5;
    case Errc::Io:
      return 1;
  }
  return 1;
}

}  // namespace spainmob

#include "agro/error.hpp"

namespace agro {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::Precondition: return "precondition";
    case Errc::MissingFile: return "missing_file";
    case Errc::SchemaMismatch: return "schema_mismatch";
    case Errc::RowParseError: return "row_parse_error";
    case Errc::AllMissingColumn: return "all_missing_column";
    case Errc::ColumnCountMismatch: return "column_count_mismatch";
    case Errc::ClassTooSmall: return "class_too_small";
    case Errc::SeriesTooShort: return "series_too_short";
    case Errc::ResolverUnavailable: return "resolver_unavailable";
    case Errc::AddressNotFound: return "address_not_found";
    case Errc::EmptyCentroidSet: return "empty_centroid_set";
    case Errc::EmptyCounts: return "empty_counts";
    case Errc::SingleClassDataset: return "single_class_dataset";
    case Errc::NonFiniteFeature: return "non_finite_feature";
    case Errc::ShapeMismatch: return "shape_mismatch";
    case Errc::NonFiniteGradient: return "non_finite_gradient";
    case Errc::HorizonNonPositive: return "horizon_non_positive";
    case Errc::WindowSizeMismatch: return "window_size_mismatch";
    case Errc::InvalidModel: return "invalid_model";
    case Errc::MissingPriceModel: return "missing_price_model";
    case Errc::UnknownDistrict: return "unknown_district";
    case Errc::UnknownCrop: return "unknown_crop";
    case Errc::WeatherUnavailable: return "weather_unavailable";
    case Errc::ProviderUnavailable: return "provider_unavailable";
    case Errc::MalformedResponse: return "malformed_response";
    case Errc::NoFixtureEntry: return "no_fixture_entry";
    case Errc::AdapterFailure: return "adapter_failure";
    case Errc::UnsupportedFormat: return "unsupported_format";
  }
  return "unknown";
}

ErrorCategory category(Errc code) {
  switch (code) {
    case Errc::Precondition:
      return ErrorCategory::Usage;
    case Errc::MissingFile:
    case Errc::SchemaMismatch:
    case Errc::RowParseError:
    case Errc::AllMissingColumn:
    case Errc::ColumnCountMismatch:
    case Errc::ClassTooSmall:
    case Errc::SeriesTooShort:
    case Errc::UnknownDistrict:
    case Errc::UnknownCrop:
    case Errc::AddressNotFound:
    case Errc::EmptyCentroidSet:
    case Errc::NoFixtureEntry:
    case Errc::HorizonNonPositive:
    case Errc::WindowSizeMismatch:
    case Errc::NonFiniteFeature:
      return ErrorCategory::Data;
    case Errc::EmptyCounts:
    case Errc::SingleClassDataset:
    case Errc::ShapeMismatch:
    case Errc::NonFiniteGradient:
    case Errc::InvalidModel:
    case Errc::MissingPriceModel:
      return ErrorCategory::Model;
    case Errc::ResolverUnavailable:
    case Errc::WeatherUnavailable:
    case Errc::ProviderUnavailable:
    case Errc::MalformedResponse:
    case Errc::AdapterFailure:
    case Errc::UnsupportedFormat:
      return ErrorCategory::External;
  }
  return ErrorCategory::Usage;
}

}  // namespace agro

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace agro {

enum class Errc {
  // preconditions / usage
  Precondition,
  // data layer
  MissingFile,
  SchemaMismatch,
  RowParseError,
  AllMissingColumn,
  ColumnCountMismatch,
  ClassTooSmall,
  SeriesTooShort,
  // geocoding
  ResolverUnavailable,
  AddressNotFound,
  EmptyCentroidSet,
  // models
  EmptyCounts,
  SingleClassDataset,
  NonFiniteFeature,
  ShapeMismatch,
  NonFiniteGradient,
  HorizonNonPositive,
  WindowSizeMismatch,
  InvalidModel,
  MissingPriceModel,
  // engine / external
  UnknownDistrict,
  UnknownCrop,
  WeatherUnavailable,
  ProviderUnavailable,
  MalformedResponse,
  NoFixtureEntry,
  AdapterFailure,
  UnsupportedFormat,
};

/// Coarse grouping used for CLI exit codes and HTTP status mapping.
enum class ErrorCategory { Usage, Data, Model, External };

std::string_view to_string(Errc code);
ErrorCategory category(Errc code);

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

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(Errc::Precondition, message);
}

}  // namespace agro

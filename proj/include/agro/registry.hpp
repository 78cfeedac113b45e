#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "agro/data_ingest.hpp"
#include "agro/forest.hpp"
#include "agro/geocode.hpp"
#include "agro/lstm.hpp"
#include "agro/weather.hpp"

namespace agro {

/// Crop -> months from planting to sale. Lookups are case-insensitive.
class GrowthPeriodTable {
 public:
  GrowthPeriodTable() = default;
  explicit GrowthPeriodTable(const std::map<std::string, int>& periods);

  std::optional<int> months(std::string_view crop) const;
  std::map<std::string, int> entries() const;  // canonical names
  bool empty() const { return periods_.empty(); }

 private:
  std::map<std::string, std::pair<std::string, int>> periods_;  // lower -> (name, months)
};

/// CSV: crop,months. Periods must be integers >= 1.
GrowthPeriodTable load_growth_periods(const std::filesystem::path& path);

/// One crop's price forecaster: a one-step model plus the observed prices
/// that seed its first window.
struct CropForecaster {
  std::string crop;
  std::shared_ptr<const OneStepModel> model;
  std::vector<double> recent_prices;
  bool stub = false;

  ForecastResult forecast(int horizon) const;

  /// Flat forecaster: an echo model over a window filled with `price`.
  static CropForecaster stubbed(std::string crop, double price, int look_back = 6);
};

struct DistrictInfo {
  DistrictCentroid centroid;
  SoilProfile soil;
  std::optional<double> rainfall_mm;
};

/// Immutable bundle of everything a request needs. Shared between threads
/// through shared_ptr<const Registry>.
struct Registry {
  ForestModel forest;
  GrowthPeriodTable growth;
  std::map<std::string, CropForecaster> forecasters;  // keyed by lower-cased crop
  std::vector<DistrictCentroid> centroids;            // sorted by district
  std::map<std::string, DistrictInfo> districts;      // keyed by lower-cased district
  std::shared_ptr<WeatherClient> weather;
  std::shared_ptr<const AddressResolver> geocoder;    // may be null
  bool fixture_mode = false;

  const DistrictInfo& district(std::string_view name) const;  // UnknownDistrict
  const CropForecaster* forecaster(std::string_view crop) const;
  const CropForecaster& require_forecaster(std::string_view crop) const;  // UnknownCrop
};

struct RegistryOptions {
  bool force_fixtures = false;
  HttpTransport transport;  // live weather/geocoder transport; default when empty
};

/// Loads a manifest. Relative paths inside it resolve against the
/// manifest's directory.
///
///   {
///     "forest": "forest.json",
///     "growth_periods": "growth_periods.csv",
///     "soil": "soil.csv", "centroids": "centroids.csv", "rainfall": "rainfall.csv",
///     "prices": "prices.csv",
///     "crops": {"Pepper": {"lstm": "pepper.json"}, "Maize": {"stub_price": 22}},
///     "weather": {"mode": "fixture", "fixture_path": "weather.csv", "ttl_seconds": 600,
///                 "url_template": "...", "fields": {"temperature": "/main/temp",
///                 "humidity": "/main/humidity"}},
///     "geocoder": {"mode": "fixture", "fixture_path": "addresses.csv"}
///   }
std::shared_ptr<const Registry> load_registry(const std::filesystem::path& manifest,
                                              const RegistryOptions& options = {});

/// Holder for the current registry. Readers take a snapshot; reload swaps
/// it atomically so in-flight requests finish on the old one.
class RegistryHandle {
 public:
  RegistryHandle() = default;
  RegistryHandle(std::filesystem::path manifest, RegistryOptions options);

  std::shared_ptr<const Registry> get() const;
  void set(std::shared_ptr<const Registry> registry);
  /// Reloads from the manifest; on failure the current registry stays.
  void reload();
  const std::filesystem::path& manifest() const { return manifest_; }

 private:
  std::filesystem::path manifest_;
  RegistryOptions options_;
  mutable std::mutex mutex_;
  std::shared_ptr<const Registry> current_;
};

}  // namespace agro

#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "agro/geocode.hpp"
#include "agro/http_client.hpp"

namespace agro {

enum class WeatherSource { Live, Fixture };

std::string_view to_string(WeatherSource source);

struct WeatherSnapshot {
  double temperature = 0.0;  // deg C, within [-50, 60]
  double humidity = 0.0;     // percent, within [0, 100]
  std::string observed_at;   // ISO-8601 UTC
  WeatherSource source = WeatherSource::Fixture;
};

struct WeatherFixtureEntry {
  GeoPoint point;
  double temperature = 0.0;
  double humidity = 0.0;
};

/// Fixture CSV: lat,lon,temperature,humidity.
std::vector<WeatherFixtureEntry> load_weather_fixture(const std::filesystem::path& path);

struct WeatherConfig {
  enum class Mode { Live, Fixture };
  Mode mode = Mode::Fixture;

  // Live mode: `{lat}`, `{lon}` and `{key}` are substituted into the URL and
  // the JSON pointers pick fields out of the provider's response.
  std::string url_template;
  std::string temperature_pointer = "/main/temp";
  std::string humidity_pointer = "/main/humidity";
  std::string api_key_env = "WEATHER_API_KEY";
  std::chrono::milliseconds timeout{5000};

  std::filesystem::path fixture_path;
  /// Fixture snapshots carry this pinned timestamp so responses stay stable.
  std::string fixture_timestamp = "2000-01-01T00:00:00Z";

  std::chrono::seconds ttl{600};
};

/// Current-conditions lookup with a TTL cache keyed on coordinates rounded
/// to two decimals. Thread-safe; concurrent misses on the same key share a
/// single provider request.
class WeatherClient {
 public:
  using Clock = std::function<std::chrono::system_clock::time_point()>;

  explicit WeatherClient(WeatherConfig config, HttpTransport transport = default_http_transport(),
                         Clock clock = [] { return std::chrono::system_clock::now(); });
  /// Fixture-mode client over in-memory entries.
  WeatherClient(std::vector<WeatherFixtureEntry> entries, WeatherConfig config = {});

  WeatherSnapshot fetch_current(const GeoPoint& point);

  /// Number of times the provider (live endpoint or fixture table) was hit.
  std::size_t provider_calls() const;

  const WeatherConfig& config() const { return config_; }

 private:
  using Key = std::pair<long, long>;
  struct CacheEntry {
    WeatherSnapshot snapshot;
    std::chrono::system_clock::time_point fetched_at;
  };

  WeatherSnapshot query_provider(const GeoPoint& point) const;
  WeatherSnapshot query_live(const GeoPoint& point) const;
  WeatherSnapshot query_fixture(const GeoPoint& point) const;

  WeatherConfig config_;
  HttpTransport transport_;
  Clock clock_;
  std::vector<WeatherFixtureEntry> fixture_;
  std::vector<DistrictCentroid> fixture_index_;

  mutable std::mutex mutex_;
  std::map<Key, CacheEntry> cache_;
  std::map<Key, std::shared_future<WeatherSnapshot>> in_flight_;
  std::size_t provider_calls_ = 0;
};

}  // namespace agro

#include "agro/weather.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <nlohmann/json.hpp>

#include "agro/csv.hpp"
#include "agro/error.hpp"

namespace agro {
namespace {

std::string iso8601(std::chrono::system_clock::time_point tp) {
  const std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm utc{};
  gmtime_r(&t, &utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buf;
}

void check_snapshot(double temperature, double humidity, Errc code, const std::string& where) {
  if (!std::isfinite(temperature) || temperature < -50.0 || temperature > 60.0) {
    fail(code, where + ": temperature " + csv::format_number(temperature) + " outside [-50, 60]");
  }
  if (!std::isfinite(humidity) || humidity < 0.0 || humidity > 100.0) {
    fail(code, where + ": humidity " + csv::format_number(humidity) + " outside [0, 100]");
  }
}

std::vector<DistrictCentroid> index_entries(const std::vector<WeatherFixtureEntry>& entries) {
  // Zero-padded names keep nearest_centroid's lexicographic tie-break in
  // file order.
  std::vector<DistrictCentroid> index;
  char name[32];
  for (std::size_t i = 0; i < entries.size(); ++i) {
    std::snprintf(name, sizeof(name), "%08zu", i);
    index.push_back({name, entries[i].point.lat, entries[i].point.lon});
  }
  return index;
}

}  // namespace

std::string_view to_string(WeatherSource source) {
  return source == WeatherSource::Live ? "live" : "fixture";
}

std::vector<WeatherFixtureEntry> load_weather_fixture(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  constexpr std::string_view kColumns[] = {"lat", "lon", "temperature", "humidity"};
  const auto cols = csv::bind_columns(table, kColumns, path.string());
  std::vector<WeatherFixtureEntry> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto where = path.string() + " row " + std::to_string(r + 1);
    if (row.size() != table.header.size()) fail(Errc::RowParseError, where + ": wrong field count");
    std::array<double, 4> v{};
    for (std::size_t c = 0; c < 4; ++c) {
      try {
        const auto parsed = csv::parse_number(row[cols[c]]);
        if (!parsed) throw std::invalid_argument("missing " + std::string(kColumns[c]));
        v[c] = *parsed;
      } catch (const std::invalid_argument& e) {
        fail(Errc::RowParseError, where + ": " + e.what());
      }
    }
    WeatherFixtureEntry entry;
    try {
      entry.point = GeoPoint::checked(v[0], v[1]);
    } catch (const Error& e) {
      fail(Errc::RowParseError, where + ": " + e.what());
    }
    entry.temperature = v[2];
    entry.humidity = v[3];
    check_snapshot(entry.temperature, entry.humidity, Errc::RowParseError, where);
    out.push_back(entry);
  }
  return out;
}

WeatherClient::WeatherClient(WeatherConfig config, HttpTransport transport, Clock clock)
    : config_(std::move(config)), transport_(std::move(transport)), clock_(std::move(clock)) {
  if (config_.mode == WeatherConfig::Mode::Fixture) {
    fixture_ = load_weather_fixture(config_.fixture_path);
    fixture_index_ = index_entries(fixture_);
  } else {
    require(!config_.url_template.empty(), "weather: live mode needs a url_template");
  }
}

WeatherClient::WeatherClient(std::vector<WeatherFixtureEntry> entries, WeatherConfig config)
    : config_(std::move(config)),
      clock_([] { return std::chrono::system_clock::now(); }),
      fixture_(std::move(entries)),
      fixture_index_(index_entries(fixture_)) {
  config_.mode = WeatherConfig::Mode::Fixture;
}

std::size_t WeatherClient::provider_calls() const {
  std::lock_guard lock(mutex_);
  return provider_calls_;
}

WeatherSnapshot WeatherClient::fetch_current(const GeoPoint& point) {
  const Key key{std::lround(point.lat * 100.0), std::lround(point.lon * 100.0)};
  std::promise<WeatherSnapshot> promise;
  {
    std::unique_lock lock(mutex_);
    const auto now = clock_();
    if (const auto hit = cache_.find(key); hit != cache_.end()) {
      if (now - hit->second.fetched_at < config_.ttl) return hit->second.snapshot;
      cache_.erase(hit);
    }
    if (const auto pending = in_flight_.find(key); pending != in_flight_.end()) {
      auto shared = pending->second;
      lock.unlock();
      return shared.get();
    }
    in_flight_.emplace(key, promise.get_future().share());
    ++provider_calls_;
  }

  try {
    auto snapshot = query_provider(point);
    std::lock_guard lock(mutex_);
    cache_[key] = CacheEntry{snapshot, clock_()};
    in_flight_.erase(key);
    promise.set_value(snapshot);
    return snapshot;
  } catch (...) {
    std::lock_guard lock(mutex_);
    in_flight_.erase(key);
    promise.set_exception(std::current_exception());
    throw;
  }
}

WeatherSnapshot WeatherClient::query_provider(const GeoPoint& point) const {
  return config_.mode == WeatherConfig::Mode::Live ? query_live(point) : query_fixture(point);
}

WeatherSnapshot WeatherClient::query_fixture(const GeoPoint& point) const {
  if (fixture_.empty()) fail(Errc::NoFixtureEntry, "weather fixture has no entries");
  const auto& nearest = nearest_centroid(point, fixture_index_);
  const auto& entry = fixture_[static_cast<std::size_t>(std::stoul(nearest.district))];
  return {entry.temperature, entry.humidity, config_.fixture_timestamp, WeatherSource::Fixture};
}

WeatherSnapshot WeatherClient::query_live(const GeoPoint& point) const {
  std::string url = substitute(config_.url_template, "lat", csv::format_number(point.lat));
  url = substitute(std::move(url), "lon", csv::format_number(point.lon));
  const char* key = std::getenv(config_.api_key_env.c_str());
  url = substitute(std::move(url), "key", url_encode(key ? key : ""));

  const auto response = transport_(url, config_.timeout);
  if (response.status == 0) fail(Errc::ProviderUnavailable, "weather provider unreachable: " + response.error);
  if (response.status < 200 || response.status >= 300) {
    fail(Errc::ProviderUnavailable, "weather provider returned HTTP " + std::to_string(response.status));
  }
  WeatherSnapshot snap;
  try {
    const auto body = nlohmann::json::parse(response.body);
    snap.temperature = body.at(nlohmann::json::json_pointer(config_.temperature_pointer)).get<double>();
    snap.humidity = body.at(nlohmann::json::json_pointer(config_.humidity_pointer)).get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::MalformedResponse, std::string("weather response unreadable: ") + e.what());
  }
  check_snapshot(snap.temperature, snap.humidity, Errc::MalformedResponse, "weather response");
  snap.observed_at = iso8601(clock_());
  snap.source = WeatherSource::Live;
  return snap;
}

}  // namespace agro

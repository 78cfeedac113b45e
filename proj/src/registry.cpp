#include "agro/registry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "agro/csv.hpp"
#include "agro/error.hpp"

namespace agro {
namespace {

using nlohmann::json;

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::MissingFile, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(Errc::InvalidModel, path.string() + ": " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& relative) {
  const std::filesystem::path p(relative);
  return p.is_absolute() ? p : base / p;
}

std::string manifest_string(const json& doc, const char* key, const std::filesystem::path& manifest) {
  if (!doc.contains(key) || !doc[key].is_string()) {
    fail(Errc::InvalidModel, manifest.string() + ": missing string field '" + key + "'");
  }
  return doc[key].get<std::string>();
}

WeatherConfig weather_config(const json& doc, const std::filesystem::path& base, bool force_fixtures) {
  WeatherConfig cfg;
  const std::string mode = doc.value("mode", "fixture");
  if (mode != "fixture" && mode != "live") fail(Errc::InvalidModel, "weather.mode must be live or fixture");
  cfg.mode = (mode == "live" && !force_fixtures) ? WeatherConfig::Mode::Live : WeatherConfig::Mode::Fixture;
  cfg.url_template = doc.value("url_template", "");
  if (doc.contains("fields")) {
    cfg.temperature_pointer = doc["fields"].value("temperature", cfg.temperature_pointer);
    cfg.humidity_pointer = doc["fields"].value("humidity", cfg.humidity_pointer);
  }
  cfg.api_key_env = doc.value("api_key_env", cfg.api_key_env);
  cfg.ttl = std::chrono::seconds(doc.value("ttl_seconds", 600));
  cfg.timeout = std::chrono::milliseconds(doc.value("timeout_ms", 5000));
  if (doc.contains("fixture_path")) cfg.fixture_path = resolve(base, doc["fixture_path"].get<std::string>());
  cfg.fixture_timestamp = doc.value("fixture_timestamp", cfg.fixture_timestamp);
  if (cfg.mode == WeatherConfig::Mode::Fixture && cfg.fixture_path.empty()) {
    fail(Errc::InvalidModel, "weather: fixture mode needs fixture_path");
  }
  return cfg;
}

std::shared_ptr<const AddressResolver> geocoder(const json& doc, const std::filesystem::path& base,
                                               bool force_fixtures, const HttpTransport& transport) {
  const std::string mode = doc.value("mode", "fixture");
  if (mode == "live" && !force_fixtures) {
    HttpResolverConfig cfg;
    cfg.url_template = doc.value("url_template", "");
    if (doc.contains("fields")) {
      cfg.lat_pointer = doc["fields"].value("lat", cfg.lat_pointer);
      cfg.lon_pointer = doc["fields"].value("lon", cfg.lon_pointer);
    }
    cfg.api_key_env = doc.value("api_key_env", cfg.api_key_env);
    cfg.timeout = std::chrono::milliseconds(doc.value("timeout_ms", 5000));
    return std::make_shared<HttpResolver>(cfg, transport ? transport : default_http_transport());
  }
  if (!doc.contains("fixture_path")) return nullptr;
  return std::make_shared<FixtureResolver>(
      FixtureResolver::from_csv(resolve(base, doc["fixture_path"].get<std::string>())));
}

}  // namespace

GrowthPeriodTable::GrowthPeriodTable(const std::map<std::string, int>& periods) {
  for (const auto& [crop, months] : periods) {
    require(months >= 1, "growth period for " + crop + " must be at least 1 month");
    periods_[csv::lower(crop)] = {crop, months};
  }
}

std::optional<int> GrowthPeriodTable::months(std::string_view crop) const {
  const auto it = periods_.find(csv::lower(crop));
  if (it == periods_.end()) return std::nullopt;
  return it->second.second;
}

std::map<std::string, int> GrowthPeriodTable::entries() const {
  std::map<std::string, int> out;
  for (const auto& [key, entry] : periods_) out[entry.first] = entry.second;
  return out;
}

GrowthPeriodTable load_growth_periods(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  constexpr std::string_view kColumns[] = {"crop", "months"};
  const auto cols = csv::bind_columns(table, kColumns, path.string());
  std::map<std::string, int> periods;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto where = path.string() + " row " + std::to_string(r + 1);
    if (row.size() != table.header.size()) fail(Errc::RowParseError, where + ": wrong field count");
    const std::string& crop = row[cols[0]];
    if (crop.empty()) fail(Errc::RowParseError, where + ", column crop: empty");
    std::optional<double> months;
    try {
      months = csv::parse_number(row[cols[1]]);
    } catch (const std::invalid_argument&) {
    }
    if (!months || *months < 1 || *months != std::floor(*months)) {
      fail(Errc::RowParseError, where + ", column months: expected an integer >= 1");
    }
    if (!periods.emplace(crop, static_cast<int>(*months)).second) {
      fail(Errc::RowParseError, where + ", column crop: duplicate crop '" + crop + "'");
    }
  }
  return GrowthPeriodTable(periods);
}

ForecastResult CropForecaster::forecast(int horizon) const {
  return forecast_iterative(*model, recent_prices, horizon, crop);
}

CropForecaster CropForecaster::stubbed(std::string crop, double price, int look_back) {
  require(std::isfinite(price) && price > 0.0, "stub price for " + crop + " must be positive");
  return {std::move(crop), std::make_shared<EchoModel>(look_back),
          std::vector<double>(static_cast<std::size_t>(look_back), price), true};
}

const DistrictInfo& Registry::district(std::string_view name) const {
  const auto first = name.find_first_not_of(" \t");
  const auto last = name.find_last_not_of(" \t");
  const auto trimmed = first == std::string_view::npos ? std::string_view{} : name.substr(first, last - first + 1);
  const auto it = districts.find(csv::lower(trimmed));
  if (it == districts.end()) fail(Errc::UnknownDistrict, "unknown district '" + std::string(name) + "'");
  return it->second;
}

const CropForecaster* Registry::forecaster(std::string_view crop) const {
  const auto it = forecasters.find(csv::lower(crop));
  return it == forecasters.end() ? nullptr : &it->second;
}

const CropForecaster& Registry::require_forecaster(std::string_view crop) const {
  const auto* f = forecaster(crop);
  if (!f) fail(Errc::UnknownCrop, "no price model for crop '" + std::string(crop) + "'");
  return *f;
}

std::shared_ptr<const Registry> load_registry(const std::filesystem::path& manifest,
                                              const RegistryOptions& options) {
  const json doc = read_json(manifest);
  const auto base = manifest.parent_path();
  auto reg = std::make_shared<Registry>();

  reg->forest = forest_from_json(read_json(resolve(base, manifest_string(doc, "forest", manifest))));
  reg->growth = load_growth_periods(resolve(base, manifest_string(doc, "growth_periods", manifest)));

  const auto soil = load_soil_csv(resolve(base, manifest_string(doc, "soil", manifest)));
  auto centroids = load_centroids_csv(resolve(base, manifest_string(doc, "centroids", manifest)));
  std::vector<DistrictRainfall> rainfall;
  if (doc.contains("rainfall")) rainfall = load_rainfall_csv(resolve(base, manifest_string(doc, "rainfall", manifest)));

  std::ranges::sort(centroids, {}, &DistrictCentroid::district);
  for (const auto& c : centroids) {
    reg->districts[csv::lower(c.district)] = DistrictInfo{c, SoilProfile{c.district}, std::nullopt};
  }
  for (const auto& s : soil) {
    const auto it = reg->districts.find(csv::lower(s.district));
    if (it == reg->districts.end()) {
      fail(Errc::SchemaMismatch, "soil profile for '" + s.district + "' has no district centroid");
    }
    it->second.soil = s;
    it->second.soil.district = it->second.centroid.district;
  }
  for (const auto& r : rainfall) {
    const auto it = reg->districts.find(csv::lower(r.district));
    if (it != reg->districts.end()) it->second.rainfall_mm = r.rainfall_mm;
  }
  // Only districts with a soil profile are servable.
  std::erase_if(reg->districts, [&](const auto& kv) {
    return std::ranges::none_of(soil, [&](const SoilProfile& s) { return csv::lower(s.district) == kv.first; });
  });
  reg->centroids = std::move(centroids);

  std::map<std::string, PriceSeries> prices;
  if (doc.contains("prices")) prices = load_prices_csv(resolve(base, manifest_string(doc, "prices", manifest)));

  if (doc.contains("crops")) {
    for (const auto& [crop, entry] : doc["crops"].items()) {
      CropForecaster f;
      if (entry.contains("stub_price")) {
        f = CropForecaster::stubbed(crop, entry["stub_price"].get<double>());
      } else if (entry.contains("lstm")) {
        auto model = std::make_shared<LstmModel>(lstm_from_json(read_json(resolve(base, entry["lstm"]))));
        const auto series = std::ranges::find_if(prices, [&](const auto& kv) {
          return csv::lower(kv.first) == csv::lower(crop);
        });
        if (series == prices.end()) {
          fail(Errc::SeriesTooShort, "crop '" + crop + "' has an LSTM model but no price history");
        }
        const auto lb = static_cast<std::size_t>(model->look_back());
        const auto& p = series->second.prices;
        if (p.size() < lb) {
          fail(Errc::SeriesTooShort, "crop '" + crop + "': needed " + std::to_string(lb) + " points, got " +
                                         std::to_string(p.size()));
        }
        f.crop = crop;
        f.recent_prices.assign(p.end() - static_cast<std::ptrdiff_t>(lb), p.end());
        f.model = std::move(model);
      } else {
        fail(Errc::InvalidModel, manifest.string() + ": crop '" + crop + "' needs lstm or stub_price");
      }
      reg->forecasters[csv::lower(crop)] = std::move(f);
    }
  }

  const json weather = doc.value("weather", json::object());
  const auto wcfg = weather_config(weather, base, options.force_fixtures);
  reg->weather = std::make_shared<WeatherClient>(
      wcfg, options.transport ? options.transport : default_http_transport());
  reg->geocoder = geocoder(doc.value("geocoder", json::object()), base, options.force_fixtures, options.transport);
  reg->fixture_mode = wcfg.mode == WeatherConfig::Mode::Fixture;
  return reg;
}

RegistryHandle::RegistryHandle(std::filesystem::path manifest, RegistryOptions options)
    : manifest_(std::move(manifest)), options_(std::move(options)) {}

std::shared_ptr<const Registry> RegistryHandle::get() const {
  std::lock_guard lock(mutex_);
  return current_;
}

void RegistryHandle::set(std::shared_ptr<const Registry> registry) {
  std::lock_guard lock(mutex_);
  current_ = std::move(registry);
}

void RegistryHandle::reload() {
  require(!manifest_.empty(), "registry has no manifest to reload from");
  set(load_registry(manifest_, options_));
}

}  // namespace agro

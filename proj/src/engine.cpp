#include "agro/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <nlohmann/json.hpp>

#include "agro/csv.hpp"
#include "agro/error.hpp"

namespace agro {
namespace {

using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string money(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", value);
  return buf;
}

std::string fixed(double value, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, value);
  return buf;
}

// Placeholders: {district} {crop} {price} {months} {suitability} {list} {reason}.
struct ExplainTemplate {
  std::string heading;           // district known
  std::string heading_no_place;  // explicit feature vector
  std::string candidate;
  std::string separator;
  std::string candidates;
  std::string single_candidate;
  std::string reason;
  std::string gap;
  std::string limitation;

  bool complete() const {
    return !heading.empty() && !heading_no_place.empty() && !candidate.empty() && !candidates.empty() &&
           !single_candidate.empty() && !reason.empty() && !gap.empty() && !limitation.empty();
  }
};

const std::map<std::string, ExplainTemplate>& templates() {
  static const std::map<std::string, ExplainTemplate> table = {
      {"en",
       {"Recommendation for {district}: plant {crop}.",
        "Recommendation for the given conditions: plant {crop}.",
        "{crop} at ₹{price}/kg in {months} months (suitability {suitability})",
        "; ",
        "Candidates: {list}.",
        "Only one candidate has a price forecast: {list}.",
        "{crop} has the highest forecast price.",
        "No forecast for {crop}: {reason}.",
        "Prices are compared per kilogram and do not account for yield or cultivation cost."}},
      // Kannada slot: to be filled by a native speaker; empty entries fall
      // back to English.
      {"kn", {}},
  };
  return table;
}

std::string candidate_text(const ExplainTemplate& t, const CandidateCrop& c) {
  std::string s = substitute(t.candidate, "crop", c.crop);
  s = substitute(std::move(s), "price", money(c.forecast_price));
  s = substitute(std::move(s), "months", std::to_string(c.horizon_months));
  return substitute(std::move(s), "suitability", fixed(c.suitability, 2));
}

WeatherSnapshot fetch_weather(const Registry& registry, const DistrictInfo& info) {
  if (!registry.weather) fail(Errc::WeatherUnavailable, "no weather client configured");
  try {
    return registry.weather->fetch_current(GeoPoint{info.centroid.lat, info.centroid.lon});
  } catch (const Error& e) {
    if (e.code() == Errc::ProviderUnavailable || e.code() == Errc::MalformedResponse ||
        e.code() == Errc::NoFixtureEntry) {
      fail(Errc::WeatherUnavailable, std::string("weather unavailable: ") + e.what());
    }
    throw;
  }
}

void check_horizon(int horizon, std::string_view crop) {
  if (horizon < 1 || horizon > kMaxHorizon) {
    fail(Errc::Precondition, "horizon for " + std::string(crop) + " must be in [1, " +
                                 std::to_string(kMaxHorizon) + "], got " + std::to_string(horizon));
  }
}

}  // namespace

const std::array<FeatureBound, kFeatureCount>& feature_bounds() {
  static const std::array<FeatureBound, kFeatureCount> bounds = {{
      {"n", kNitrogen, 0.0, kInf},
      {"p", kPhosphorus, 0.0, kInf},
      {"k", kPotassium, 0.0, kInf},
      {"temperature", kTemperature, -50.0, 60.0},
      {"humidity", kHumidity, 0.0, 100.0},
      {"ph", kPh, 0.0, 14.0},
      {"rainfall", kRainfall, 0.0, kInf},
  }};
  return bounds;
}

bool FeatureOverrides::empty() const {
  return std::ranges::none_of(values, [](const auto& v) { return v.has_value(); });
}

void FeatureOverrides::validate() const {
  for (const auto& b : feature_bounds()) {
    const auto& v = values[b.feature];
    if (!v) continue;
    if (!std::isfinite(*v) || *v < b.min || *v > b.max) {
      std::string range = std::isinf(b.max) ? ">= " + csv::format_number(b.min)
                                            : "in [" + csv::format_number(b.min) + ", " +
                                                  csv::format_number(b.max) + "]";
      fail(Errc::Precondition, "override " + std::string(b.name) + " must be " + range + ", got " +
                                   (std::isfinite(*v) ? csv::format_number(*v) : "non-finite value"));
    }
  }
}

FeatureOverrides FeatureOverrides::from_json(const json& doc) {
  FeatureOverrides out;
  if (doc.is_null()) return out;
  require(doc.is_object(), "overrides must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    const auto lk = csv::lower(key);
    const auto it = std::ranges::find(feature_bounds(), lk, &FeatureBound::name);
    if (it == feature_bounds().end()) fail(Errc::Precondition, "unknown override '" + key + "'");
    if (value.is_null()) continue;
    require(value.is_number(), "override " + lk + " must be a number");
    out[it->feature] = value.get<double>();
  }
  out.validate();
  return out;
}

FeatureOverrides FeatureOverrides::parse(std::string_view text) {
  json doc = json::object();
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    const auto item = text.substr(start, end - start);
    start = end + 1;
    if (item.find_first_not_of(" \t") == std::string_view::npos) continue;
    const auto eq = item.find('=');
    require(eq != std::string_view::npos, "override '" + std::string(item) + "' is not key=value");
    std::string key(item.substr(0, eq));
    std::erase_if(key, [](char c) { return c == ' ' || c == '\t'; });
    std::optional<double> value;
    try {
      value = csv::parse_number(item.substr(eq + 1));
    } catch (const std::invalid_argument&) {
    }
    require(value.has_value(), "override " + key + " needs a numeric value");
    doc[key] = *value;
  }
  return from_json(doc);
}

FeatureVector build_feature_vector(const SoilProfile& soil, const WeatherSnapshot& weather, double rainfall_mm,
                                   const FeatureOverrides& overrides) {
  FeatureVector x;
  x << soil.n, soil.p, soil.k, weather.temperature, weather.humidity, soil.ph, rainfall_mm;
  for (int f = 0; f < kFeatureCount; ++f) {
    if (overrides.values[f]) x(f) = *overrides.values[f];
  }
  return x;
}

std::size_t select_candidate(const std::vector<CandidateCrop>& candidates) {
  require(!candidates.empty(), "no candidates to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const auto& a = candidates[i];
    const auto& b = candidates[best];
    if (a.forecast_price != b.forecast_price) {
      if (a.forecast_price > b.forecast_price) best = i;
    } else if (a.suitability != b.suitability) {
      if (a.suitability > b.suitability) best = i;
    } else if (a.crop < b.crop) {
      best = i;
    }
  }
  return best;
}

Recommendation recommend(const RecommendQuery& query, const Registry& registry) {
  query.overrides.validate();
  Recommendation rec;

  const DistrictInfo* info = nullptr;
  if (const auto* name = std::get_if<std::string>(&query.location)) {
    info = &registry.district(*name);
  } else if (const auto* point = std::get_if<GeoPoint>(&query.location)) {
    const auto checked = GeoPoint::checked(point->lat, point->lon);
    info = &registry.district(nearest_district(checked, registry.centroids));
  }

  if (info) {
    rec.district = info->centroid.district;
    rec.location = GeoPoint{info->centroid.lat, info->centroid.lon};
    const bool need_weather = !query.overrides[kTemperature] || !query.overrides[kHumidity];
    WeatherSnapshot weather{0.0, 0.0, "", WeatherSource::Fixture};
    if (need_weather) {
      weather = fetch_weather(registry, *info);
      rec.weather = weather;
    }
    if (!info->rainfall_mm && !query.overrides[kRainfall]) {
      fail(Errc::UnknownDistrict, "no long-term rainfall for district '" + info->centroid.district + "'");
    }
    rec.features_used = build_feature_vector(info->soil, weather, info->rainfall_mm.value_or(0.0), query.overrides);
  } else {
    rec.features_used = std::get<FeatureVector>(query.location);
    for (int f = 0; f < kFeatureCount; ++f) {
      if (query.overrides.values[f]) rec.features_used(f) = *query.overrides.values[f];
    }
  }

  const auto probs = predict_proba(registry.forest, rec.features_used);
  for (const auto& crop : top_k_crops(probs, 3)) {
    const double suitability = probs[crop];
    auto warn = [&](std::string code, std::string message) {
      rec.warnings.push_back({crop, suitability, std::move(code), std::move(message)});
    };

    std::optional<int> horizon;
    for (const auto& [name, months] : query.horizons) {
      if (csv::lower(name) == csv::lower(crop)) horizon = months;
    }
    if (horizon) {
      check_horizon(*horizon, crop);
    } else {
      horizon = registry.growth.months(crop);
    }
    if (!horizon) {
      warn("missing_growth_period", "no growth period");
      continue;
    }
    const auto* forecaster = registry.forecaster(crop);
    if (!forecaster) {
      warn(std::string(to_string(Errc::MissingPriceModel)), "no price model");
      continue;
    }
    auto forecast = forecaster->forecast(*horizon);
    const double price = forecast.price_at_harvest();
    if (!std::isfinite(price) || price <= 0.0) {
      warn("non_positive_forecast", "forecast price " + csv::format_number(price) + " is not positive");
      continue;
    }
    rec.candidates.push_back({crop, suitability, *horizon, price, std::move(forecast.trajectory)});
  }

  if (rec.candidates.empty()) {
    std::string crops;
    for (const auto& w : rec.warnings) crops += (crops.empty() ? "" : ", ") + w.crop;
    fail(Errc::MissingPriceModel, "no usable price forecast for any candidate crop (" + crops + ")");
  }
  rec.selected = rec.candidates[select_candidate(rec.candidates)].crop;
  rec.explanation = explain(rec, query.language);
  return rec;
}

std::vector<std::string> explanation_languages() {
  std::vector<std::string> out;
  for (const auto& [lang, t] : templates()) out.push_back(lang);
  return out;
}

std::string explain(const Recommendation& rec, std::string_view language) {
  const auto& table = templates();
  auto it = table.find(std::string(language));
  if (it == table.end() || !it->second.complete()) it = table.find("en");
  const auto& t = it->second;

  std::string text = rec.district ? substitute(t.heading, "district", *rec.district) : t.heading_no_place;
  text = substitute(std::move(text), "crop", rec.selected);

  std::string list;
  for (const auto& c : rec.candidates) list += (list.empty() ? "" : t.separator) + candidate_text(t, c);
  text += " " + substitute(rec.candidates.size() == 1 ? t.single_candidate : t.candidates, "list", list);
  if (rec.candidates.size() > 1) text += " " + substitute(t.reason, "crop", rec.selected);
  for (const auto& w : rec.warnings) {
    text += " " + substitute(substitute(t.gap, "crop", w.crop), "reason", w.message);
  }
  text += " " + t.limitation;
  return text;
}

ForecastResult forecast_crop(const Registry& registry, std::string_view crop, int horizon) {
  const auto& forecaster = registry.require_forecaster(crop);
  check_horizon(horizon, forecaster.crop);
  return forecaster.forecast(horizon);
}

json to_json(const FeatureVector& features) {
  json out = json::object();
  for (int f = 0; f < kFeatureCount; ++f) out[std::string(kFeatureNames[f])] = features(f);
  return out;
}

json to_json(const WeatherSnapshot& snapshot) {
  return {{"temperature", snapshot.temperature},
          {"humidity", snapshot.humidity},
          {"observed_at", snapshot.observed_at},
          {"source", std::string(to_string(snapshot.source))}};
}

json to_json(const Recommendation& rec) {
  json candidates = json::array();
  for (const auto& c : rec.candidates) {
    candidates.push_back({{"crop", c.crop},
                          {"suitability", c.suitability},
                          {"horizon_months", c.horizon_months},
                          {"forecast_price", c.forecast_price},
                          {"trajectory", c.trajectory}});
  }
  json warnings = json::array();
  for (const auto& w : rec.warnings) {
    warnings.push_back({{"crop", w.crop}, {"suitability", w.suitability}, {"code", w.code}, {"message", w.message}});
  }
  return {{"district", rec.district ? json(*rec.district) : json(nullptr)},
          {"location", rec.location ? json{{"lat", rec.location->lat}, {"lon", rec.location->lon}} : json(nullptr)},
          {"features_used", to_json(rec.features_used)},
          {"weather", rec.weather ? to_json(*rec.weather) : json(nullptr)},
          {"candidates", candidates},
          {"warnings", warnings},
          {"selected", rec.selected},
          {"explanation", rec.explanation}};
}

json to_json(const ForecastResult& forecast) {
  return {{"crop", forecast.crop},
          {"horizon_months", forecast.horizon_months},
          {"trajectory", forecast.trajectory},
          {"price_at_harvest", forecast.price_at_harvest()}};
}

std::string render_json(const json& doc) { return doc.dump(2) + "\n"; }

}  // namespace agro

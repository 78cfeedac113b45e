#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "agro/features.hpp"
#include "agro/registry.hpp"

namespace agro {

struct FeatureBound {
  std::string_view name;  // override / JSON key
  Feature feature;
  double min;
  double max;  // +inf when unbounded
};

/// Validation bounds for user overrides, in override-key order.
const std::array<FeatureBound, kFeatureCount>& feature_bounds();

struct FeatureOverrides {
  std::array<std::optional<double>, kFeatureCount> values;  // indexed by Feature

  std::optional<double>& operator[](Feature f) { return values[f]; }
  const std::optional<double>& operator[](Feature f) const { return values[f]; }
  bool empty() const;

  /// Throws Precondition naming the offending key and its bounds.
  void validate() const;
  /// Keys n, p, k, temperature, humidity, ph, rainfall; unknown keys throw.
  static FeatureOverrides from_json(const nlohmann::json& doc);
  /// Parses "n=90,ph=6.5".
  static FeatureOverrides parse(std::string_view text);
};

/// N, P, K, pH from soil; temperature and humidity from weather; rainfall
/// from the district's long-term figure. Overrides take precedence.
FeatureVector build_feature_vector(const SoilProfile& soil, const WeatherSnapshot& weather, double rainfall_mm,
                                   const FeatureOverrides& overrides = {});

struct CandidateCrop {
  std::string crop;
  double suitability = 0.0;
  int horizon_months = 0;
  double forecast_price = 0.0;  // INR/kg at harvest
  std::vector<double> trajectory;
};

struct CandidateWarning {
  std::string crop;
  double suitability = 0.0;
  std::string code;  // missing_price_model, missing_growth_period, non_positive_forecast
  std::string message;
};

struct Recommendation {
  std::optional<std::string> district;
  std::optional<GeoPoint> location;
  FeatureVector features_used = FeatureVector::Zero();
  std::optional<WeatherSnapshot> weather;
  std::vector<CandidateCrop> candidates;  // suitability order
  std::vector<CandidateWarning> warnings;
  std::string selected;
  std::string explanation;
};

struct RecommendQuery {
  std::variant<std::string, GeoPoint, FeatureVector> location;
  FeatureOverrides overrides;
  std::map<std::string, int> horizons;  // per-crop horizon override
  std::string language = "en";
};

/// Index of the winning candidate: highest forecast price, then higher
/// suitability, then smaller crop name.
std::size_t select_candidate(const std::vector<CandidateCrop>& candidates);

Recommendation recommend(const RecommendQuery& query, const Registry& registry);

/// Deterministic summary for display or speech. Languages without a
/// template fall back to English.
std::string explain(const Recommendation& rec, std::string_view language = "en");
std::vector<std::string> explanation_languages();

/// Validated single-crop forecast (1 <= horizon <= kMaxHorizon).
inline constexpr int kMaxHorizon = 24;
ForecastResult forecast_crop(const Registry& registry, std::string_view crop, int horizon);

nlohmann::json to_json(const FeatureVector& features);
nlohmann::json to_json(const WeatherSnapshot& snapshot);
nlohmann::json to_json(const Recommendation& rec);
nlohmann::json to_json(const ForecastResult& forecast);

/// Canonical text form shared by the CLI and the HTTP service.
std::string render_json(const nlohmann::json& doc);

}  // namespace agro

#pragma once

#include <Eigen/Core>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "agro/features.hpp"

namespace agro {

// Missing numeric cells are carried as quiet NaN until imputed.
struct AgronomicRecord {
  FeatureVector features = FeatureVector::Zero();
  std::string label;

  double n() const { return features(kNitrogen); }
  double p() const { return features(kPhosphorus); }
  double k() const { return features(kPotassium); }
  double temperature() const { return features(kTemperature); }
  double humidity() const { return features(kHumidity); }
  double ph() const { return features(kPh); }
  double rainfall() const { return features(kRainfall); }
};

struct SoilProfile {
  std::string district;
  double ph = 0.0;
  double n = 0.0;
  double p = 0.0;
  double k = 0.0;
};

struct DistrictCentroid {
  std::string district;
  double lat = 0.0;
  double lon = 0.0;
};

struct DistrictRainfall {
  std::string district;
  double rainfall_mm = 0.0;
};

struct YearMonth {
  int year = 0;
  int month = 1;

  auto operator<=>(const YearMonth&) const = default;
  std::string to_string() const;
  static YearMonth parse(std::string_view text);
};

/// Chronological monthly prices (INR/kg) for one crop.
struct PriceSeries {
  std::string crop;
  std::vector<YearMonth> months;
  std::vector<double> prices;

  std::size_t size() const { return prices.size(); }
};

std::vector<AgronomicRecord> load_agronomic_csv(const std::filesystem::path& path);
std::vector<SoilProfile> load_soil_csv(const std::filesystem::path& path);
std::vector<DistrictCentroid> load_centroids_csv(const std::filesystem::path& path);
std::vector<DistrictRainfall> load_rainfall_csv(const std::filesystem::path& path);

/// Rows sharing a crop and month are averaged into one point.
std::map<std::string, PriceSeries> load_prices_csv(const std::filesystem::path& path);

// Parsing from in-memory text; `source` names the input in error messages.
std::vector<AgronomicRecord> parse_agronomic_csv(std::string_view text, std::string_view source = "agronomic csv");
std::map<std::string, PriceSeries> parse_prices_csv(std::string_view text, std::string_view source = "prices csv");

std::string write_agronomic_csv(const std::vector<AgronomicRecord>& records);
std::string write_soil_csv(const std::vector<SoilProfile>& profiles);
std::string write_centroids_csv(const std::vector<DistrictCentroid>& centroids);
std::string write_prices_csv(const std::map<std::string, PriceSeries>& series);

struct ImputeResult {
  std::vector<AgronomicRecord> records;
  FeatureVector means;
};

/// Replaces every NaN feature with the column mean over `stats_source`.
ImputeResult impute_means(std::vector<AgronomicRecord> records,
                          const std::vector<AgronomicRecord>& stats_source);

/// Reuses previously computed means (inference-time imputation).
std::vector<AgronomicRecord> apply_means(std::vector<AgronomicRecord> records, const FeatureVector& means);

struct Split {
  std::vector<AgronomicRecord> train;
  std::vector<AgronomicRecord> test;
};

/// Stratified by label; each class contributes round(fraction * class_size)
/// test rows (at most class_size - 1). Both halves keep input order.
Split train_test_split(const std::vector<AgronomicRecord>& records, double test_fraction,
                       std::uint64_t seed);

Eigen::MatrixXd feature_matrix(const std::vector<AgronomicRecord>& records);

}  // namespace agro

#pragma once

#include <Eigen/Core>
#include <array>
#include <string_view>

namespace agro {

inline constexpr Eigen::Index kFeatureCount = 7;

/// Model input contract: [N, P, K, temperature, humidity, pH, rainfall].
using FeatureVector = Eigen::Matrix<double, kFeatureCount, 1>;

enum Feature : Eigen::Index {
  kNitrogen = 0,
  kPhosphorus,
  kPotassium,
  kTemperature,
  kHumidity,
  kPh,
  kRainfall,
};

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "N", "P", "K", "temperature", "humidity", "ph", "rainfall"};

}  // namespace agro

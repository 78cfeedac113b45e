#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "agro/adam.hpp"
#include "agro/data_ingest.hpp"
#include "agro/lstm_network.hpp"
#include "agro/scaler.hpp"

namespace agro {

struct TrainConfig {
  int look_back = 6;
  int hidden1 = 64;
  int hidden2 = 32;
  double dropout_rate = 0.2;
  AdamConfig adam;
  int max_epochs = 200;
  int batch_size = 16;
  /// Epochs without validation improvement before stopping.
  int patience = 10;
  /// Chronological tail of the windows held out for early stopping.
  double validation_fraction = 0.2;

  void validate() const;
};

/// Sliding windows with stride 1: column i holds series[i .. i+look_back)
/// and targets(i) = series[i + look_back].
struct WindowedDataset {
  Eigen::MatrixXd inputs;      // look_back x count
  Eigen::RowVectorXd targets;  // 1 x count

  Eigen::Index size() const { return inputs.cols(); }
};

WindowedDataset make_windows(std::span<const double> series, int look_back = 6);

/// Anything that maps a scaled look-back window to the next scaled value.
class OneStepModel {
 public:
  virtual ~OneStepModel() = default;
  virtual int look_back() const = 0;
  virtual const ScalerParams<double>& scaler() const = 0;
  virtual double predict_scaled(const Eigen::Ref<const Eigen::VectorXd>& window) const = 0;
};

class LstmModel final : public OneStepModel {
 public:
  lstm::NetworkParams<double> params;
  ScalerParams<double> scaler_params;
  std::string crop;
  TrainConfig config;
  std::uint64_t seed = 0;

  int look_back() const override { return config.look_back; }
  const ScalerParams<double>& scaler() const override { return scaler_params; }
  double predict_scaled(const Eigen::Ref<const Eigen::VectorXd>& window) const override;
};

/// Repeats the last element of its window; with an identity scaler its
/// forecasts are flat at the last observed price.
class EchoModel final : public OneStepModel {
 public:
  explicit EchoModel(int look_back = 6);

  int look_back() const override { return look_back_; }
  const ScalerParams<double>& scaler() const override { return scaler_; }
  double predict_scaled(const Eigen::Ref<const Eigen::VectorXd>& window) const override;

 private:
  int look_back_;
  ScalerParams<double> scaler_;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double best_val_loss = 0.0;
};

struct TrainResult {
  LstmModel model;  // best-validation weights
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  bool stopped_early = false;
};

/// Trains one crop's forecaster. The scaler is fitted on the training
/// portion only; mini-batch order and dropout come from `seed`.
TrainResult train_lstm(const std::string& crop, std::span<const double> prices, const TrainConfig& config,
                       std::uint64_t seed);

inline TrainResult train_lstm(const PriceSeries& series, const TrainConfig& config, std::uint64_t seed) {
  return train_lstm(series.crop, series.prices, config, seed);
}

struct ForecastResult {
  std::string crop;
  int horizon_months = 0;
  std::vector<double> trajectory;  // INR/kg, one entry per month ahead

  double price_at_harvest() const { return trajectory.back(); }
};

/// Feeds each one-step prediction back into the window `horizon` times.
ForecastResult forecast_iterative(const OneStepModel& model, std::span<const double> recent_prices, int horizon,
                                  std::string crop = {});

struct ForecastMetrics {
  double rmse = 0.0;
  double mape = 0.0;  // percent
  std::size_t points = 0;
};

/// RMSE and MAPE (percent). MAPE averages over non-zero actuals only and is
/// NaN when every actual is zero.
ForecastMetrics forecast_error(std::span<const double> predicted, std::span<const double> actual);

/// One-step-ahead walk-forward over `series`: every window of observed
/// prices predicts the following month.
ForecastMetrics evaluate_forecaster(const OneStepModel& model, std::span<const double> series);

/// Iterative `horizon`-step forecasts from every origin in `series` that
/// has a full window behind it and `horizon` observations ahead.
ForecastMetrics evaluate_iterative(const OneStepModel& model, std::span<const double> series, int horizon);

struct GradientCheckReport {
  double max_relative_error = 0.0;
  long parameters = 0;
};

/// Central-difference check of backward() on a random toy network with
/// inputs in [0.1, 1]; optional dropout masks are held fixed.
GradientCheckReport gradient_check(int hidden1, int hidden2, int look_back, int batch, std::uint64_t seed,
                                   double dropout = 0.0, double step = 1e-5);

nlohmann::json to_json(const LstmModel& model);
LstmModel lstm_from_json(const nlohmann::json& doc);

}  // namespace agro

#include "agro/lstm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "agro/error.hpp"
#include "agro/rng.hpp"

namespace agro {
namespace {

constexpr int kFormatVersion = 1;
constexpr std::array<const char*, 8> kTensorNames = {
    "layer1.w_input", "layer1.w_recurrent", "layer1.bias", "layer2.w_input",
    "layer2.w_recurrent", "layer2.bias", "head.weights", "head.bias"};

// Independent streams derived from the user seed.
constexpr std::uint64_t kShuffleStream = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kDropoutStream = 0xD1B54A32D192ED03ULL;

using Matrix = lstm::Matrix<double>;

Matrix select_columns(const Eigen::MatrixXd& m, std::span<const Eigen::Index> columns) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t i = 0; i < columns.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = m.col(columns[i]);
  return out;
}

double inference_mse(const lstm::NetworkParams<double>& params, const WindowedDataset& data) {
  const Matrix predictions = lstm::forward_full(params, data.inputs, lstm::DropoutMasks<double>{});
  return lstm::mse_loss<double>(predictions, data.targets);
}

}  // namespace

void TrainConfig::validate() const {
  require(look_back >= 1, "TrainConfig: look_back must be >= 1");
  require(hidden1 >= 1 && hidden2 >= 1, "TrainConfig: hidden sizes must be >= 1");
  require(dropout_rate >= 0.0 && dropout_rate < 1.0, "TrainConfig: dropout_rate must be in [0, 1)");
  require(adam.learning_rate >= 0.0, "TrainConfig: learning rate must be >= 0");
  require(adam.beta1 > 0.0 && adam.beta1 < 1.0 && adam.beta2 > 0.0 && adam.beta2 < 1.0,
          "TrainConfig: Adam decay rates must be in (0, 1)");
  require(adam.epsilon > 0.0, "TrainConfig: Adam epsilon must be > 0");
  require(max_epochs >= 1, "TrainConfig: max_epochs must be >= 1");
  require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
  require(patience >= 1, "TrainConfig: patience must be >= 1");
  require(validation_fraction > 0.0 && validation_fraction < 1.0,
          "TrainConfig: validation_fraction must be in (0, 1)");
}

WindowedDataset make_windows(std::span<const double> series, int look_back) {
  require(look_back >= 1, "make_windows: look_back must be >= 1");
  const auto needed = static_cast<std::size_t>(look_back) + 1;
  if (series.size() < needed) {
    fail(Errc::SeriesTooShort, "series too short: needed " + std::to_string(needed) + " points, got " +
                                   std::to_string(series.size()));
  }
  const auto count = static_cast<Eigen::Index>(series.size() - static_cast<std::size_t>(look_back));
  const Eigen::Map<const Eigen::VectorXd> s(series.data(), static_cast<Eigen::Index>(series.size()));
  WindowedDataset out{Eigen::MatrixXd(look_back, count), Eigen::RowVectorXd(count)};
  for (Eigen::Index i = 0; i < count; ++i) {
    out.inputs.col(i) = s.segment(i, look_back);
    out.targets(i) = s(i + look_back);
  }
  return out;
}

double LstmModel::predict_scaled(const Eigen::Ref<const Eigen::VectorXd>& window) const {
  if (window.size() != config.look_back) {
    fail(Errc::WindowSizeMismatch, "expected a window of " + std::to_string(config.look_back) + " values");
  }
  const Matrix column = window;
  return lstm::forward_full(params, column, lstm::DropoutMasks<double>{})(0, 0);
}

EchoModel::EchoModel(int look_back) : look_back_(look_back) {
  scaler_.min = Eigen::VectorXd::Zero(1);
  scaler_.max = Eigen::VectorXd::Ones(1);
}

double EchoModel::predict_scaled(const Eigen::Ref<const Eigen::VectorXd>& window) const {
  return window(window.size() - 1);
}

TrainResult train_lstm(const std::string& crop, std::span<const double> prices, const TrainConfig& config,
                       std::uint64_t seed) {
  config.validate();
  const auto look_back = static_cast<std::size_t>(config.look_back);
  const long windows = static_cast<long>(prices.size()) - static_cast<long>(look_back);
  const long val_count = std::max(1L, std::lround(config.validation_fraction * static_cast<double>(std::max(0L, windows))));
  const long train_count = windows - val_count;
  if (train_count < 2) {
    const long needed = static_cast<long>(look_back) + 2 + val_count;
    fail(Errc::SeriesTooShort, "series '" + crop + "' too short for training: needed at least " +
                                   std::to_string(needed) + " points, got " + std::to_string(prices.size()));
  }
  for (double p : prices) {
    if (!std::isfinite(p)) fail(Errc::NonFiniteFeature, "series '" + crop + "' contains non-finite prices");
  }

  // Scaler sees only the values inside training windows and their targets.
  const auto train_span = prices.first(static_cast<std::size_t>(train_count) + look_back);
  const Eigen::Map<const Eigen::VectorXd> train_values(train_span.data(), static_cast<Eigen::Index>(train_span.size()));
  const Eigen::Map<const Eigen::VectorXd> all_values(prices.data(), static_cast<Eigen::Index>(prices.size()));

  TrainResult result;
  LstmModel& model = result.model;
  model.crop = crop;
  model.config = config;
  model.seed = seed;
  model.scaler_params = fit_minmax(train_values);
  const Eigen::VectorXd scaled = transform_minmax(all_values, model.scaler_params).col(0);

  const auto windowed = make_windows(std::span<const double>(scaled.data(), static_cast<std::size_t>(scaled.size())),
                                     config.look_back);
  WindowedDataset train_set{windowed.inputs.leftCols(train_count), windowed.targets.leftCols(train_count)};
  WindowedDataset val_set{windowed.inputs.rightCols(val_count), windowed.targets.rightCols(val_count)};

  Rng init_rng(seed);
  Rng shuffle_rng(seed ^ kShuffleStream);
  Rng dropout_rng(seed ^ kDropoutStream);

  auto params = lstm::init_network<double>(config.hidden1, config.hidden2, init_rng);
  auto optimizer = AdamState<lstm::NetworkParams<double>>::for_params(params);
  auto best_params = params;
  double best_val = std::numeric_limits<double>::infinity();
  int epochs_without_improvement = 0;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(train_count));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle(std::span<Eigen::Index>(order), shuffle_rng);
    double sum_sq = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const auto batch = std::span<const Eigen::Index>(order).subspan(
          start, std::min(order.size() - start, static_cast<std::size_t>(config.batch_size)));
      const Matrix inputs = select_columns(train_set.inputs, batch);
      const Matrix targets = select_columns(train_set.targets, batch);
      const auto masks = lstm::draw_dropout_masks(params, look_back, inputs.cols(), config.dropout_rate, dropout_rng);
      lstm::ForwardCache<double> cache;
      const Matrix predictions = lstm::forward_full(params, inputs, masks, &cache);
      sum_sq += (predictions - targets).squaredNorm();
      adam_step(params, lstm::backward(params, cache, targets), optimizer, config.adam);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = sum_sq / static_cast<double>(train_count);
    record.val_loss = inference_mse(params, val_set);
    if (!std::isfinite(record.val_loss)) {
      fail(Errc::NonFiniteGradient, "training of '" + crop + "' diverged at epoch " + std::to_string(epoch));
    }
    if (record.val_loss < best_val) {
      best_val = record.val_loss;
      best_params = params;
      result.best_epoch = epoch;
      epochs_without_improvement = 0;
    } else {
      ++epochs_without_improvement;
    }
    record.best_val_loss = best_val;
    result.history.push_back(record);
    if (epochs_without_improvement >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  model.params = std::move(best_params);
  return result;
}

ForecastResult forecast_iterative(const OneStepModel& model, std::span<const double> recent_prices, int horizon,
                                  std::string crop) {
  if (horizon < 1) fail(Errc::HorizonNonPositive, "forecast horizon must be >= 1, got " + std::to_string(horizon));
  if (recent_prices.size() != static_cast<std::size_t>(model.look_back())) {
    fail(Errc::WindowSizeMismatch, "forecast needs exactly " + std::to_string(model.look_back()) +
                                       " recent prices, got " + std::to_string(recent_prices.size()));
  }
  const auto& scaler = model.scaler();
  Eigen::VectorXd window(model.look_back());
  for (Eigen::Index i = 0; i < window.size(); ++i) {
    window(i) = scale_value(recent_prices[static_cast<std::size_t>(i)], scaler);
  }
  ForecastResult out;
  out.crop = std::move(crop);
  out.horizon_months = horizon;
  out.trajectory.reserve(static_cast<std::size_t>(horizon));
  for (int step = 0; step < horizon; ++step) {
    const double next = model.predict_scaled(window);
    out.trajectory.push_back(unscale_value(next, scaler));
    if (window.size() > 1) window.head(window.size() - 1) = window.tail(window.size() - 1).eval();
    window(window.size() - 1) = next;
  }
  return out;
}

ForecastMetrics forecast_error(std::span<const double> predicted, std::span<const double> actual) {
  require(predicted.size() == actual.size(), "forecast_error: length mismatch");
  require(!predicted.empty(), "forecast_error: no points");
  double sq = 0.0;
  double pct = 0.0;
  std::size_t pct_count = 0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double err = predicted[i] - actual[i];
    sq += err * err;
    if (actual[i] != 0.0) {
      pct += std::abs(err / actual[i]);
      ++pct_count;
    }
  }
  ForecastMetrics m;
  m.points = actual.size();
  m.rmse = std::sqrt(sq / static_cast<double>(actual.size()));
  m.mape = pct_count ? 100.0 * pct / static_cast<double>(pct_count) : std::numeric_limits<double>::quiet_NaN();
  return m;
}

ForecastMetrics evaluate_forecaster(const OneStepModel& model, std::span<const double> series) {
  const auto look_back = static_cast<std::size_t>(model.look_back());
  if (series.size() < look_back + 1) {
    fail(Errc::SeriesTooShort, "evaluation series too short: needed " + std::to_string(look_back + 1) +
                                   " points, got " + std::to_string(series.size()));
  }
  std::vector<double> predicted;
  std::vector<double> actual;
  for (std::size_t t = look_back; t < series.size(); ++t) {
    predicted.push_back(forecast_iterative(model, series.subspan(t - look_back, look_back), 1).trajectory.front());
    actual.push_back(series[t]);
  }
  return forecast_error(predicted, actual);
}

ForecastMetrics evaluate_iterative(const OneStepModel& model, std::span<const double> series, int horizon) {
  if (horizon < 1) fail(Errc::HorizonNonPositive, "evaluation horizon must be >= 1");
  const auto look_back = static_cast<std::size_t>(model.look_back());
  const auto h = static_cast<std::size_t>(horizon);
  if (series.size() < look_back + h) {
    fail(Errc::SeriesTooShort, "evaluation series too short: needed " + std::to_string(look_back + h) +
                                   " points, got " + std::to_string(series.size()));
  }
  std::vector<double> predicted;
  std::vector<double> actual;
  for (std::size_t origin = look_back; origin + h <= series.size(); ++origin) {
    const auto f = forecast_iterative(model, series.subspan(origin - look_back, look_back), horizon);
    predicted.insert(predicted.end(), f.trajectory.begin(), f.trajectory.end());
    actual.insert(actual.end(), series.begin() + static_cast<std::ptrdiff_t>(origin),
                  series.begin() + static_cast<std::ptrdiff_t>(origin + h));
  }
  return forecast_error(predicted, actual);
}

GradientCheckReport gradient_check(int hidden1, int hidden2, int look_back, int batch, std::uint64_t seed,
                                   double dropout, double step) {
  require(hidden1 >= 1 && hidden2 >= 1 && look_back >= 1 && batch >= 1, "gradient_check: sizes must be positive");
  Rng rng(seed);
  auto params = lstm::init_network<double>(hidden1, hidden2, rng);
  lstm::for_each_tensor([&](auto& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += uniform_real(rng, -0.3, 0.3);
  }, params);
  lstm::Matrix<double> windows(look_back, batch);
  lstm::Matrix<double> targets(1, batch);
  for (Eigen::Index i = 0; i < windows.size(); ++i) windows.data()[i] = uniform_real(rng, 0.1, 1.0);
  for (Eigen::Index i = 0; i < targets.size(); ++i) targets.data()[i] = uniform_real(rng, 0.1, 1.0);
  const auto masks = lstm::draw_dropout_masks(params, static_cast<std::size_t>(look_back), batch, dropout, rng);

  lstm::ForwardCache<double> cache;
  lstm::forward_full(params, windows, masks, &cache);
  const auto analytic = lstm::backward(params, cache, targets);

  const auto loss = [&] { return lstm::mse_loss<double>(lstm::forward_full(params, windows, masks), targets); };
  GradientCheckReport report;
  lstm::for_each_tensor(
      [&](auto& p, const auto& g) {
        for (Eigen::Index i = 0; i < p.size(); ++i) {
          const double saved = p.data()[i];
          p.data()[i] = saved + step;
          const double up = loss();
          p.data()[i] = saved - step;
          const double down = loss();
          p.data()[i] = saved;
          const double numeric = (up - down) / (2.0 * step);
          const double scale = std::max({std::abs(g.data()[i]), std::abs(numeric), 1e-7});
          report.max_relative_error = std::max(report.max_relative_error, std::abs(g.data()[i] - numeric) / scale);
          ++report.parameters;
        }
      },
      params, analytic);
  return report;
}

nlohmann::json to_json(const LstmModel& model) {
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t index = 0;
  lstm::for_each_tensor(
      [&](const auto& t) {
        const Eigen::MatrixXd m = t;
        tensors.push_back({{"name", kTensorNames[index++]},
                           {"rows", m.rows()},
                           {"cols", m.cols()},
                           {"data", std::vector<double>(m.data(), m.data() + m.size())}});
      },
      model.params);
  const auto& c = model.config;
  return {
      {"format", "agro.lstm"},
      {"version", kFormatVersion},
      {"crop", model.crop},
      {"seed", model.seed},
      {"config",
       {{"look_back", c.look_back},
        {"hidden1", c.hidden1},
        {"hidden2", c.hidden2},
        {"dropout_rate", c.dropout_rate},
        {"learning_rate", c.adam.learning_rate},
        {"beta1", c.adam.beta1},
        {"beta2", c.adam.beta2},
        {"epsilon", c.adam.epsilon},
        {"clip_norm", c.adam.clip_norm},
        {"max_epochs", c.max_epochs},
        {"batch_size", c.batch_size},
        {"patience", c.patience},
        {"validation_fraction", c.validation_fraction}}},
      {"scaler",
       {{"min", std::vector<double>(model.scaler_params.min.data(),
                                    model.scaler_params.min.data() + model.scaler_params.min.size())},
        {"max", std::vector<double>(model.scaler_params.max.data(),
                                    model.scaler_params.max.data() + model.scaler_params.max.size())}}},
      {"tensors", std::move(tensors)},
  };
}

LstmModel lstm_from_json(const nlohmann::json& doc) {
  try {
    if (doc.value("format", "") != "agro.lstm") fail(Errc::InvalidModel, "not an LSTM model document");
    if (doc.at("version").get<int>() != kFormatVersion) {
      fail(Errc::InvalidModel, "unsupported LSTM model version " + doc.at("version").dump());
    }
    LstmModel model;
    model.crop = doc.at("crop").get<std::string>();
    model.seed = doc.at("seed").get<std::uint64_t>();
    const auto& c = doc.at("config");
    model.config.look_back = c.at("look_back").get<int>();
    model.config.hidden1 = c.at("hidden1").get<int>();
    model.config.hidden2 = c.at("hidden2").get<int>();
    model.config.dropout_rate = c.at("dropout_rate").get<double>();
    model.config.adam.learning_rate = c.at("learning_rate").get<double>();
    model.config.adam.beta1 = c.at("beta1").get<double>();
    model.config.adam.beta2 = c.at("beta2").get<double>();
    model.config.adam.epsilon = c.at("epsilon").get<double>();
    model.config.adam.clip_norm = c.at("clip_norm").get<double>();
    model.config.max_epochs = c.at("max_epochs").get<int>();
    model.config.batch_size = c.at("batch_size").get<int>();
    model.config.patience = c.at("patience").get<int>();
    model.config.validation_fraction = c.at("validation_fraction").get<double>();
    model.config.validate();

    const auto mins = doc.at("scaler").at("min").get<std::vector<double>>();
    const auto maxs = doc.at("scaler").at("max").get<std::vector<double>>();
    if (mins.size() != 1 || maxs.size() != 1) fail(Errc::InvalidModel, "LSTM scaler must have one column");
    model.scaler_params.min = Eigen::Map<const Eigen::VectorXd>(mins.data(), 1);
    model.scaler_params.max = Eigen::Map<const Eigen::VectorXd>(maxs.data(), 1);

    model.params = lstm::NetworkParams<double>::Zero(1, model.config.hidden1, model.config.hidden2);
    const auto& tensors = doc.at("tensors");
    if (tensors.size() != kTensorNames.size()) fail(Errc::InvalidModel, "LSTM model has the wrong tensor count");
    std::size_t index = 0;
    lstm::for_each_tensor(
        [&](auto& t) {
          const auto& entry = tensors.at(index);
          if (entry.at("name").get<std::string>() != kTensorNames[index] || entry.at("rows").get<Eigen::Index>() != t.rows() ||
              entry.at("cols").get<Eigen::Index>() != t.cols()) {
            fail(Errc::InvalidModel, std::string("LSTM tensor ") + kTensorNames[index] + " has the wrong name or shape");
          }
          const auto data = entry.at("data").get<std::vector<double>>();
          if (static_cast<Eigen::Index>(data.size()) != t.size()) {
            fail(Errc::InvalidModel, std::string("LSTM tensor ") + kTensorNames[index] + " has the wrong length");
          }
          t = Eigen::Map<const Eigen::MatrixXd>(data.data(), t.rows(), t.cols());
          if (!t.allFinite()) fail(Errc::InvalidModel, std::string("LSTM tensor ") + kTensorNames[index] + " is not finite");
          ++index;
        },
        model.params);
    return model;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::InvalidModel, std::string("LSTM model: ") + e.what());
  }
}

}  // namespace agro

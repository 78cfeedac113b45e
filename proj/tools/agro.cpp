#include <CLI11.hpp>
#include <signal.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <thread>

#include "agro/csv.hpp"
#include "agro/data_ingest.hpp"
#include "agro/engine.hpp"
#include "agro/forest.hpp"
#include "agro/lstm.hpp"
#include "agro/registry.hpp"
#include "agro/service.hpp"

namespace {

using namespace agro;
using nlohmann::json;

enum ExitStatus { kOk = 0, kUsage = 1, kData = 2, kModel = 3 };

int exit_status(Errc code) {
  switch (category(code)) {
    case ErrorCategory::Usage: return kUsage;
    case ErrorCategory::Model: return kModel;
    case ErrorCategory::Data:
    case ErrorCategory::External: break;
  }
  return kData;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::MissingFile, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(Errc::InvalidModel, path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::MissingFile, "cannot write " + path);
  out << text;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::optional<double> v;
    try {
      v = csv::parse_number(item);
    } catch (const std::invalid_argument&) {
    }
    require(v.has_value(), "'" + item + "' is not a number");
    out.push_back(*v);
  }
  return out;
}

// ---- train-forest ---------------------------------------------------------

struct TrainForestArgs {
  std::string data, out;
  std::uint64_t seed = 42;
  ForestConfig config;
  double test_fraction = 0.2;
};

int train_forest(const TrainForestArgs& a) {
  auto records = load_agronomic_csv(a.data);
  std::vector<AgronomicRecord> train = records, test;
  if (a.test_fraction > 0.0) {
    auto split = train_test_split(records, a.test_fraction, a.seed);
    train = std::move(split.train);
    test = std::move(split.test);
  }
  auto imputed = impute_means(train, train);
  const auto model = fit_forest(LabeledData::from_records(imputed.records), a.config, a.seed);
  write_text(a.out, to_json(model).dump() + "\n");
  std::printf("trained %d trees on %zu rows, %zu classes -> %s\n", a.config.n_estimators, imputed.records.size(),
              model.labels.size(), a.out.c_str());
  if (!test.empty()) {
    const auto m = evaluate_classifier(model, apply_means(std::move(test), imputed.means));
    std::printf("hold-out accuracy: %.4f (%ld rows)\n", m.accuracy, m.samples);
  }
  return kOk;
}

// ---- train-lstm -----------------------------------------------------------

struct TrainLstmArgs {
  std::string prices, crop, out;
  std::uint64_t seed = 42;
  TrainConfig config;
  bool verbose = false;
};

const PriceSeries& find_series(const std::map<std::string, PriceSeries>& all, const std::string& crop) {
  for (const auto& [name, s] : all) {
    if (csv::lower(name) == csv::lower(crop)) return s;
  }
  fail(Errc::UnknownCrop, "no price series for crop '" + crop + "'");
}

int train_lstm_cmd(const TrainLstmArgs& a) {
  const auto all = load_prices_csv(a.prices);
  const auto& series = find_series(all, a.crop);
  const auto result = train_lstm(series, a.config, a.seed);
  if (a.verbose) {
    for (const auto& e : result.history) {
      std::printf("epoch %3d  train %.6f  val %.6f\n", e.epoch, e.train_loss, e.val_loss);
    }
  }
  write_text(a.out, to_json(result.model).dump() + "\n");
  const auto& best = result.history.at(static_cast<std::size_t>(result.best_epoch - 1));
  std::printf("%s: %zu epochs, best epoch %d (val loss %.6f)%s -> %s\n", series.crop.c_str(), result.history.size(),
              result.best_epoch, best.val_loss, result.stopped_early ? ", stopped early" : "", a.out.c_str());
  return kOk;
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  std::string model, data, prices, crop;
  int horizon = 1;
  bool as_json = false;
};

int evaluate_cmd(const EvaluateArgs& a) {
  const json doc = read_json_file(a.model);
  const std::string format = doc.value("format", "");
  if (format == "agro.forest") {
    require(!a.data.empty(), "evaluate: a forest model needs --data");
    const auto model = forest_from_json(doc);
    auto records = load_agronomic_csv(a.data);
    auto imputed = impute_means(records, records);
    const auto m = evaluate_classifier(model, imputed.records);
    if (a.as_json) {
      json rows = json::array();
      for (const auto& c : m.per_class) {
        rows.push_back({{"label", c.label}, {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1},
                        {"support", c.support}});
      }
      std::cout << render_json({{"accuracy", m.accuracy}, {"samples", m.samples}, {"per_class", rows}});
      return kOk;
    }
    std::printf("%-16s %9s %9s %9s %8s\n", "label", "precision", "recall", "f1", "support");
    for (const auto& c : m.per_class) {
      std::printf("%-16s %9.4f %9.4f %9.4f %8ld\n", c.label.c_str(), c.precision, c.recall, c.f1, c.support);
    }
    std::printf("accuracy: %.4f (%ld rows)\n", m.accuracy, m.samples);
    return kOk;
  }
  if (format == "agro.lstm") {
    require(!a.prices.empty(), "evaluate: an LSTM model needs --prices");
    const auto model = lstm_from_json(doc);
    const auto all = load_prices_csv(a.prices);
    const auto& series = find_series(all, a.crop.empty() ? model.crop : a.crop);
    const auto m = a.horizon == 1 ? evaluate_forecaster(model, series.prices)
                                  : evaluate_iterative(model, series.prices, a.horizon);
    if (a.as_json) {
      std::cout << render_json({{"crop", series.crop}, {"horizon", a.horizon}, {"rmse", m.rmse}, {"mape", m.mape},
                                {"points", m.points}});
      return kOk;
    }
    std::printf("%s, %d-step walk-forward over %zu points: RMSE %.4f INR/kg, MAPE %.3f%%\n", series.crop.c_str(),
                a.horizon, m.points, m.rmse, m.mape);
    return kOk;
  }
  fail(Errc::InvalidModel, a.model + ": unknown model format '" + format + "'");
}

// ---- recommend / forecast -------------------------------------------------

struct RegistryArgs {
  std::string manifest;
  bool fixtures = false;
  std::string stub_prices;
};

std::shared_ptr<const Registry> open_registry(const RegistryArgs& a) {
  RegistryOptions opts;
  opts.force_fixtures = a.fixtures;
  auto reg = load_registry(a.manifest, opts);
  if (a.stub_prices.empty()) return reg;
  auto copy = std::make_shared<Registry>(*reg);
  const auto table = csv::read(a.stub_prices);
  constexpr std::string_view kColumns[] = {"crop", "price"};
  const auto cols = csv::bind_columns(table, kColumns, a.stub_prices);
  for (const auto& row : table.rows) {
    const auto price = csv::parse_number(row.at(cols[1]));
    require(price.has_value(), a.stub_prices + ": missing price for " + row.at(cols[0]));
    copy->forecasters[csv::lower(row[cols[0]])] = CropForecaster::stubbed(row[cols[0]], *price);
  }
  return copy;
}

struct RecommendArgs {
  RegistryArgs registry;
  std::string district, address, overrides, language = "en";
  std::optional<double> lat, lon;
  std::vector<std::string> horizons;
  bool as_json = false;
};

int recommend_cmd(const RecommendArgs& a) {
  const auto reg = open_registry(a.registry);
  RecommendQuery q;
  const int given = !a.district.empty() + !a.address.empty() + (a.lat || a.lon);
  require(given == 1, "recommend: give exactly one of --district, --address or --lat/--lon");
  if (!a.district.empty()) {
    q.location = a.district;
  } else if (!a.address.empty()) {
    require(reg->geocoder != nullptr, "recommend: the manifest has no geocoder");
    q.location = geocode_address(a.address, *reg->geocoder);
  } else {
    require(a.lat && a.lon, "recommend: --lat and --lon go together");
    q.location = GeoPoint::checked(*a.lat, *a.lon);
  }
  q.overrides = FeatureOverrides::parse(a.overrides);
  for (const auto& h : a.horizons) {
    const auto eq = h.find('=');
    require(eq != std::string::npos, "--horizon expects crop=months, got '" + h + "'");
    const auto months = parse_list(h.substr(eq + 1));
    require(months.size() == 1 && months[0] == static_cast<int>(months[0]), "--horizon months must be an integer");
    q.horizons[h.substr(0, eq)] = static_cast<int>(months[0]);
  }
  q.language = a.language;
  const auto rec = recommend(q, *reg);
  if (a.as_json) {
    std::cout << render_json(to_json(rec));
    return kOk;
  }
  if (rec.district) std::printf("district: %s\n", rec.district->c_str());
  std::printf("features:");
  for (int f = 0; f < kFeatureCount; ++f) {
    std::printf(" %s=%s", std::string(kFeatureNames[f]).c_str(), csv::format_number(rec.features_used(f)).c_str());
  }
  std::printf("\n\n%-14s %11s %8s %14s\n", "crop", "suitability", "months", "price (INR/kg)");
  for (const auto& c : rec.candidates) {
    std::printf("%-14s %11.3f %8d %14.2f%s\n", c.crop.c_str(), c.suitability, c.horizon_months, c.forecast_price,
                c.crop == rec.selected ? "  <- selected" : "");
  }
  for (const auto& w : rec.warnings) std::printf("warning: %s: %s\n", w.crop.c_str(), w.message.c_str());
  std::printf("\n%s\n", rec.explanation.c_str());
  return kOk;
}

struct ForecastArgs {
  RegistryArgs registry;
  std::string model, recent, crop;
  int horizon = 0;
  bool as_json = false;
};

int forecast_cmd(const ForecastArgs& a) {
  ForecastResult result;
  if (!a.model.empty()) {
    require(a.registry.manifest.empty(), "forecast: --model and --manifest are exclusive");
    require(!a.recent.empty(), "forecast: --model needs --recent");
    require(a.horizon >= 1 && a.horizon <= kMaxHorizon, "forecast: --horizon must be in [1, 24]");
    const auto model = lstm_from_json(read_json_file(a.model));
    result = forecast_iterative(model, parse_list(a.recent), a.horizon, a.crop.empty() ? model.crop : a.crop);
  } else {
    require(!a.registry.manifest.empty(), "forecast: give --model or --manifest");
    require(!a.crop.empty(), "forecast: --manifest needs --crop");
    const auto reg = open_registry(a.registry);
    const auto& f = reg->require_forecaster(a.crop);
    int horizon = a.horizon;
    if (horizon == 0) {
      const auto months = reg->growth.months(f.crop);
      require(months.has_value(), "forecast: no growth period for " + f.crop + "; pass --horizon");
      horizon = *months;
    }
    result = forecast_crop(*reg, f.crop, horizon);
  }
  if (a.as_json) {
    std::cout << render_json(to_json(result));
    return kOk;
  }
  std::printf("%s, %d months ahead\n", result.crop.c_str(), result.horizon_months);
  for (std::size_t m = 0; m < result.trajectory.size(); ++m) {
    std::printf("  month %2zu  %10.2f INR/kg\n", m + 1, result.trajectory[m]);
  }
  std::printf("price at harvest: %.2f INR/kg\n", result.price_at_harvest());
  return kOk;
}

// ---- serve ----------------------------------------------------------------

struct ServeArgs {
  RegistryArgs registry;
  std::string listen = "127.0.0.1:8080", cors_origin, ui_dir, keywords;
};

int serve_cmd(const ServeArgs& a) {
  require(!a.registry.manifest.empty(), "serve: --manifest is required");
  require(a.registry.stub_prices.empty(), "serve: --stub-prices is not supported; use stub_price in the manifest");
  const auto colon = a.listen.rfind(':');
  require(colon != std::string::npos, "--listen expects host:port");
  ServerOptions opts;
  opts.host = a.listen.substr(0, colon);
  try {
    opts.port = std::stoi(a.listen.substr(colon + 1));
  } catch (const std::exception&) {
    fail(Errc::Precondition, "--listen: bad port in '" + a.listen + "'");
  }
  opts.cors_origin = a.cors_origin;
  opts.ui_dir = a.ui_dir;

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGHUP);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  RegistryOptions ropts;
  ropts.force_fixtures = a.registry.fixtures;
  RegistryHandle handle(a.registry.manifest, ropts);
  ApiHandler handler(handle, a.keywords.empty() ? default_intent_keywords() : load_intent_keywords(a.keywords));
  HttpServer server(handler, opts);
  const int port = server.start();
  std::fprintf(stderr, "listening on %s:%d\n", opts.host.c_str(), port);

  try {
    handle.reload();
  } catch (const Error& e) {
    server.stop();
    throw;
  }
  std::fprintf(stderr, "ready\n");

  for (;;) {
    int sig = 0;
    sigwait(&signals, &sig);
    if (sig != SIGHUP) break;
    try {
      handle.reload();
      std::fprintf(stderr, "registry reloaded\n");
    } catch (const std::exception& e) {
      std::fprintf(stderr, "reload failed, keeping the current registry: %s\n", e.what());
    }
  }
  server.stop();
  return kOk;
}

// ---- grad-check -----------------------------------------------------------

struct GradCheckArgs {
  std::uint64_t seed = 1;
  double tolerance = 1e-4;
};

int grad_check_cmd(const GradCheckArgs& a) {
  struct Toy {
    int h1, h2, look_back, batch;
    double dropout;
  };
  constexpr Toy kToys[] = {{2, 2, 4, 3, 0.0}, {3, 2, 4, 2, 0.0}, {3, 3, 4, 4, 0.2}};
  double worst = 0.0;
  for (std::size_t i = 0; i < std::size(kToys); ++i) {
    const auto& t = kToys[i];
    const auto r = gradient_check(t.h1, t.h2, t.look_back, t.batch, a.seed + i, t.dropout);
    std::printf("hidden %d/%d, look-back %d, batch %d, dropout %.1f: %ld parameters, max relative error %.3e\n", t.h1,
                t.h2, t.look_back, t.batch, t.dropout, r.parameters, r.max_relative_error);
    worst = std::max(worst, r.max_relative_error);
  }
  const bool ok = worst <= a.tolerance;
  std::printf("max relative error %.3e (tolerance %.0e): %s\n", worst, a.tolerance, ok ? "ok" : "FAILED");
  return ok ? kOk : kModel;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crop advisory: suitability forest, LSTM price forecasts, recommendations and HTTP service"};
  app.set_config("--config", "", "INI/TOML file with default flag values (explicit flags win)");
  app.require_subcommand(1);

  TrainForestArgs tf;
  auto* train_forest_cmd = app.add_subcommand("train-forest", "Train the crop-suitability random forest");
  train_forest_cmd->add_option("--data", tf.data, "Agronomic CSV (N,P,K,temperature,humidity,ph,rainfall,label)")
      ->required()->check(CLI::ExistingFile);
  train_forest_cmd->add_option("--out", tf.out, "Model JSON to write")->required();
  train_forest_cmd->add_option("--seed", tf.seed, "Random seed")->capture_default_str();
  train_forest_cmd->add_option("--trees", tf.config.n_estimators, "Number of trees")->capture_default_str();
  train_forest_cmd->add_option("--max-depth", tf.config.max_depth, "Maximum depth (0 = unlimited)")
      ->capture_default_str();
  train_forest_cmd->add_option("--min-leaf", tf.config.min_samples_leaf, "Minimum samples per leaf")
      ->capture_default_str();
  train_forest_cmd->add_option("--max-features", tf.config.max_features, "Features per split (0 = floor(sqrt(d)))")
      ->capture_default_str();
  train_forest_cmd->add_option("--threads", tf.config.n_threads, "Training threads")->capture_default_str();
  train_forest_cmd->add_option("--test-fraction", tf.test_fraction, "Stratified hold-out fraction (0 = train on all)")
      ->capture_default_str()->check(CLI::Range(0.0, 0.9));

  TrainLstmArgs tl;
  auto* train_lstm_sub = app.add_subcommand("train-lstm", "Train one crop's LSTM price forecaster");
  train_lstm_sub->add_option("--prices", tl.prices, "Price CSV (crop,date,price)")->required()->check(CLI::ExistingFile);
  train_lstm_sub->add_option("--crop", tl.crop, "Crop to train")->required();
  train_lstm_sub->add_option("--out", tl.out, "Model JSON to write")->required();
  train_lstm_sub->add_option("--seed", tl.seed, "Random seed")->capture_default_str();
  train_lstm_sub->add_option("--look-back", tl.config.look_back, "Window length (months)")->capture_default_str();
  train_lstm_sub->add_option("--hidden1", tl.config.hidden1, "First LSTM layer units")->capture_default_str();
  train_lstm_sub->add_option("--hidden2", tl.config.hidden2, "Second LSTM layer units")->capture_default_str();
  train_lstm_sub->add_option("--dropout", tl.config.dropout_rate, "Dropout rate")->capture_default_str();
  train_lstm_sub->add_option("--lr", tl.config.adam.learning_rate, "Adam learning rate")->capture_default_str();
  train_lstm_sub->add_option("--epochs", tl.config.max_epochs, "Maximum epochs")->capture_default_str();
  train_lstm_sub->add_option("--batch", tl.config.batch_size, "Mini-batch size")->capture_default_str();
  train_lstm_sub->add_option("--patience", tl.config.patience, "Early-stopping patience")->capture_default_str();
  train_lstm_sub->add_flag("--verbose", tl.verbose, "Print per-epoch losses");

  EvaluateArgs ev;
  auto* evaluate_sub = app.add_subcommand("evaluate", "Evaluate a forest (accuracy table) or LSTM (RMSE/MAPE)");
  evaluate_sub->add_option("--model", ev.model, "Model JSON")->required()->check(CLI::ExistingFile);
  evaluate_sub->add_option("--data", ev.data, "Labelled agronomic CSV (forest)")->check(CLI::ExistingFile);
  evaluate_sub->add_option("--prices", ev.prices, "Price CSV (LSTM)")->check(CLI::ExistingFile);
  evaluate_sub->add_option("--crop", ev.crop, "Series to evaluate (LSTM; default: the model's crop)");
  evaluate_sub->add_option("--horizon", ev.horizon, "Forecast steps (LSTM)")->capture_default_str()
      ->check(CLI::Range(1, kMaxHorizon));
  evaluate_sub->add_flag("--json", ev.as_json, "Machine-readable output");

  auto add_registry = [](CLI::App* sub, RegistryArgs& r, bool manifest_required) {
    auto* opt = sub->add_option("--manifest", r.manifest, "Registry manifest JSON")->check(CLI::ExistingFile);
    if (manifest_required) opt->required();
    sub->add_flag("--fixtures", r.fixtures, "Force fixture weather and geocoding");
    sub->add_option("--stub-prices", r.stub_prices, "CSV crop,price of flat forecasts replacing the manifest's")
        ->check(CLI::ExistingFile);
  };

  RecommendArgs rc;
  auto* recommend_sub = app.add_subcommand("recommend", "Recommend the crop with the highest harvest-time price");
  add_registry(recommend_sub, rc.registry, true);
  recommend_sub->add_option("--district", rc.district, "District name");
  recommend_sub->add_option("--address", rc.address, "Address to geocode");
  recommend_sub->add_option("--lat", rc.lat, "Latitude");
  recommend_sub->add_option("--lon", rc.lon, "Longitude");
  recommend_sub->add_option("--override", rc.overrides, "Feature overrides, e.g. n=90,ph=6.5");
  recommend_sub->add_option("--horizon", rc.horizons, "Per-crop horizon, e.g. Pepper=9 (repeatable)");
  recommend_sub->add_option("--language", rc.language, "Explanation language")->capture_default_str();
  recommend_sub->add_flag("--json", rc.as_json, "Print the service's JSON payload");

  ForecastArgs fc;
  auto* forecast_sub = app.add_subcommand("forecast", "Iterative monthly price forecast");
  add_registry(forecast_sub, fc.registry, false);
  forecast_sub->add_option("--model", fc.model, "LSTM model JSON")->check(CLI::ExistingFile);
  forecast_sub->add_option("--recent", fc.recent, "Comma-separated recent prices (oldest first)");
  forecast_sub->add_option("--crop", fc.crop, "Crop name");
  forecast_sub->add_option("--horizon", fc.horizon, "Months ahead (default: growth period)");
  forecast_sub->add_flag("--json", fc.as_json, "Print the service's JSON payload");

  ServeArgs sv;
  auto* serve_sub = app.add_subcommand("serve", "Run the HTTP/JSON service");
  add_registry(serve_sub, sv.registry, true);
  serve_sub->add_option("--listen", sv.listen, "host:port (port 0 picks a free port)")->capture_default_str();
  serve_sub->add_option("--cors-origin", sv.cors_origin, "Allowed CORS origin for the web UI");
  serve_sub->add_option("--ui-dir", sv.ui_dir, "Static UI bundle served under /ui")->check(CLI::ExistingDirectory);
  serve_sub->add_option("--keywords", sv.keywords, "Intent keyword JSON")->check(CLI::ExistingFile);

  GradCheckArgs gc;
  auto* grad_sub = app.add_subcommand("grad-check", "Check LSTM gradients against central finite differences");
  grad_sub->add_option("--seed", gc.seed, "Random seed")->capture_default_str();
  grad_sub->add_option("--tolerance", gc.tolerance, "Maximum relative error")->capture_default_str();

  std::string openapi_out;
  auto* openapi_sub = app.add_subcommand("openapi", "Write the OpenAPI description of the HTTP service");
  openapi_sub->add_option("--out", openapi_out, "Output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train_forest_cmd) return train_forest(tf);
    if (*train_lstm_sub) return train_lstm_cmd(tl);
    if (*evaluate_sub) return evaluate_cmd(ev);
    if (*recommend_sub) return recommend_cmd(rc);
    if (*forecast_sub) return forecast_cmd(fc);
    if (*serve_sub) return serve_cmd(sv);
    if (*grad_sub) return grad_check_cmd(gc);
    if (*openapi_sub) {
      const auto text = render_json(openapi_document());
      if (openapi_out.empty()) {
        std::cout << text;
      } else {
        write_text(openapi_out, text);
      }
      return kOk;
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return exit_status(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

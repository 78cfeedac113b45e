#include <doctest.h>

#include <fstream>
#include <nlohmann/json.hpp>

#include "agro/csv.hpp"
#include "agro/engine.hpp"
#include "agro/error.hpp"
#include "agro/rng.hpp"
#include "paths.hpp"

using namespace agro;

namespace {

std::shared_ptr<const Registry> stub_registry() {
  static const auto reg = load_registry(testing::fixture("manifest_stub.json"), {.force_fixtures = true});
  return reg;
}

Registry mutable_registry() { return *stub_registry(); }

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::Precondition;
}

RecommendQuery at(std::string district) {
  RecommendQuery q;
  q.location = std::move(district);
  return q;
}

class ConstantModel final : public OneStepModel {
 public:
  explicit ConstantModel(double value) : value_(value) {
    scaler_.min = Eigen::VectorXd::Zero(1);
    scaler_.max = Eigen::VectorXd::Ones(1);
  }
  int look_back() const override { return 6; }
  const ScalerParams<double>& scaler() const override { return scaler_; }
  double predict_scaled(const Eigen::Ref<const Eigen::VectorXd>&) const override { return value_; }

 private:
  double value_;
  ScalerParams<double> scaler_;
};

std::filesystem::path temp_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("feature vector: soil, weather and rainfall in fixed order") {
  const SoilProfile soil{"Hassan", 6.2, 125, 29, 260};
  const WeatherSnapshot weather{24, 70, "t", WeatherSource::Fixture};
  const auto x = build_feature_vector(soil, weather, 1000);
  FeatureVector want;
  want << 125, 29, 260, 24, 70, 6.2, 1000;
  CHECK(x == want);

  FeatureOverrides o;
  o[kPh] = 7.0;
  o[kRainfall] = 500;
  o[kTemperature] = 30;
  const auto y = build_feature_vector(soil, weather, 1000, o);
  CHECK(y(kPh) == 7.0);
  CHECK(y(kRainfall) == 500);
  CHECK(y(kTemperature) == 30);
  CHECK(y(kNitrogen) == 125);
}

TEST_CASE("override validation and parsing") {
  CHECK_NOTHROW(FeatureOverrides::from_json({{"ph", 14}, {"humidity", 0}}));
  try {
    FeatureOverrides::from_json({{"ph", 99}});
    FAIL("expected a bound violation");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Precondition);
    CHECK(std::string(e.what()).find("ph must be in [0, 14]") != std::string::npos);
  }
  CHECK_THROWS_AS(FeatureOverrides::from_json({{"n", -1}}), Error);
  CHECK_THROWS_AS(FeatureOverrides::from_json({{"temperature", 61}}), Error);
  CHECK_THROWS_AS(FeatureOverrides::from_json({{"colour", 1}}), Error);
  CHECK_THROWS_AS(FeatureOverrides::from_json({{"ph", "acid"}}), Error);

  const auto o = FeatureOverrides::parse("n=90, PH=6.5");
  CHECK(*o[kNitrogen] == 90);
  CHECK(*o[kPh] == 6.5);
  CHECK_FALSE(o[kPotassium].has_value());
  CHECK(FeatureOverrides::parse("").empty());
  CHECK_THROWS_AS(FeatureOverrides::parse("n"), Error);
  CHECK_THROWS_AS(FeatureOverrides::parse("n=abc"), Error);
}

TEST_CASE("case study: Hassan selects Pepper") {
  const auto rec = recommend(at("Hassan"), *stub_registry());
  CHECK(rec.district == "Hassan");
  FeatureVector want;
  want << 125, 29, 260, 24, 70, 6.2, 1000;
  CHECK(rec.features_used == want);
  REQUIRE(rec.candidates.size() == 3);
  CHECK(rec.candidates[0].crop == "Coffee");
  CHECK(rec.candidates[1].crop == "Pepper");
  CHECK(rec.candidates[2].crop == "Maize");
  CHECK(rec.candidates[0].horizon_months == 9);
  CHECK(rec.candidates[1].horizon_months == 6);
  CHECK(rec.candidates[2].horizon_months == 4);
  CHECK(rec.candidates[1].forecast_price == 480);
  CHECK(rec.candidates[1].trajectory.size() == 6);
  CHECK(rec.selected == "Pepper");
  CHECK(rec.warnings.empty());
  CHECK(rec.explanation.find("Pepper") != std::string::npos);
  CHECK(rec.explanation.find("480") != std::string::npos);
  CHECK(rec.explanation.find("6 months") != std::string::npos);
  CHECK(rec.explanation.find("per kilogram") != std::string::npos);
}

TEST_CASE("candidates are exactly the forest's top three") {
  const auto reg = stub_registry();
  const auto rec = recommend(at("Hassan"), *reg);
  const auto top = top_k_crops(predict_proba(reg->forest, rec.features_used), 3);
  REQUIRE(rec.candidates.size() == top.size());
  for (std::size_t i = 0; i < top.size(); ++i) {
    CHECK(rec.candidates[i].crop == top[i]);
    CHECK(rec.candidates[i].suitability == predict_proba(reg->forest, rec.features_used)[top[i]]);
  }
}

TEST_CASE("district lookup is case-insensitive; unknown districts fail") {
  CHECK(recommend(at("  hassan"), *stub_registry()).district == "Hassan");
  CHECK(code_of([] { recommend(at("Atlantis"), *stub_registry()); }) == Errc::UnknownDistrict);
}

TEST_CASE("coordinates resolve to the nearest district and give the same answer") {
  RecommendQuery q;
  q.location = GeoPoint{13.0, 76.1};
  const auto by_point = to_json(recommend(q, *stub_registry())).dump();
  const auto by_name = to_json(recommend(at("Hassan"), *stub_registry())).dump();
  CHECK(by_point == by_name);
}

TEST_CASE("equal prices fall back to suitability") {
  auto reg = mutable_registry();
  for (const char* crop : {"Coffee", "Pepper", "Maize"}) {
    reg.forecasters[csv::lower(crop)] = CropForecaster::stubbed(crop, 100.0);
  }
  CHECK(recommend(at("Hassan"), reg).selected == "Coffee");
}

TEST_CASE("missing price models degrade per candidate") {
  auto reg = mutable_registry();
  reg.forecasters.erase("maize");
  const auto rec = recommend(at("Hassan"), reg);
  REQUIRE(rec.candidates.size() == 2);
  REQUIRE(rec.warnings.size() == 1);
  CHECK(rec.warnings[0].crop == "Maize");
  CHECK(rec.warnings[0].code == "missing_price_model");
  CHECK(rec.selected == "Pepper");
  CHECK(rec.explanation.find("No forecast for Maize") != std::string::npos);

  reg.forecasters.clear();
  CHECK(code_of([&] { recommend(at("Hassan"), reg); }) == Errc::MissingPriceModel);
}

TEST_CASE("single remaining candidate uses the single-candidate phrasing") {
  auto reg = mutable_registry();
  reg.forecasters.erase("maize");
  reg.forecasters.erase("coffee");
  const auto rec = recommend(at("Hassan"), reg);
  CHECK(rec.selected == "Pepper");
  CHECK(rec.explanation.find("Only one candidate") != std::string::npos);
  CHECK(rec.explanation.find("{") == std::string::npos);
}

TEST_CASE("non-positive forecasts are dropped with a warning") {
  auto reg = mutable_registry();
  reg.forecasters["pepper"] = {"Pepper", std::make_shared<ConstantModel>(-1.0), std::vector<double>(6, 1.0), false};
  const auto rec = recommend(at("Hassan"), reg);
  CHECK(rec.selected == "Coffee");
  REQUIRE(rec.warnings.size() == 1);
  CHECK(rec.warnings[0].code == "non_positive_forecast");
}

TEST_CASE("growth periods set the horizon; per-request overrides win") {
  auto q = at("Hassan");
  q.horizons["pepper"] = 12;
  const auto rec = recommend(q, *stub_registry());
  CHECK(rec.candidates[1].horizon_months == 12);
  CHECK(rec.candidates[1].trajectory.size() == 12);
  q.horizons["pepper"] = 0;
  CHECK(code_of([&] { recommend(q, *stub_registry()); }) == Errc::Precondition);

  auto reg = mutable_registry();
  reg.growth = GrowthPeriodTable({{"Coffee", 9}, {"Pepper", 6}});
  const auto partial = recommend(at("Hassan"), reg);
  REQUIRE(partial.warnings.size() == 1);
  CHECK(partial.warnings[0].code == "missing_growth_period");
}

TEST_CASE("explicit feature vectors skip location lookups") {
  RecommendQuery q;
  FeatureVector x;
  x << 125, 29, 260, 24, 70, 6.2, 1000;
  q.location = x;
  const auto rec = recommend(q, *stub_registry());
  CHECK_FALSE(rec.district.has_value());
  CHECK_FALSE(rec.weather.has_value());
  CHECK(rec.selected == "Pepper");
  CHECK(rec.explanation.starts_with("Recommendation for the given conditions"));
}

TEST_CASE("weather failures surface as WeatherUnavailable") {
  auto reg = mutable_registry();
  WeatherConfig cfg;
  cfg.mode = WeatherConfig::Mode::Live;
  cfg.url_template = "http://wx.test/{lat}/{lon}";
  reg.weather = std::make_shared<WeatherClient>(
      cfg, [](const std::string&, std::chrono::milliseconds) { return HttpResponse{502, "", ""}; });
  CHECK(code_of([&] { recommend(at("Hassan"), reg); }) == Errc::WeatherUnavailable);

  auto q = at("Hassan");
  q.overrides[kTemperature] = 24;
  q.overrides[kHumidity] = 70;
  CHECK(recommend(q, reg).selected == "Pepper");
}

TEST_CASE("selection attains the maximum price with the documented tie order") {
  Rng rng(31);
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<CandidateCrop> c;
    const auto n = 1 + uniform_index(rng, 3);
    for (std::uint64_t i = 0; i < n; ++i) {
      c.push_back({std::string(1, static_cast<char>('a' + uniform_index(rng, 4))),
                   static_cast<double>(uniform_index(rng, 3)) / 2.0, 6,
                   static_cast<double>(1 + uniform_index(rng, 3)), {}});
    }
    const auto& got = c[select_candidate(c)];
    for (const auto& other : c) {
      CHECK(got.forecast_price >= other.forecast_price);
      if (other.forecast_price == got.forecast_price) {
        CHECK(got.suitability >= other.suitability);
        if (other.suitability == got.suitability) CHECK(got.crop <= other.crop);
      }
    }
  }
}

TEST_CASE("explanations are deterministic; untranslated languages fall back to English") {
  const auto rec = recommend(at("Hassan"), *stub_registry());
  CHECK(explain(rec) == explain(rec));
  CHECK(explain(rec, "kn") == explain(rec, "en"));
  CHECK(explain(rec, "xx") == explain(rec, "en"));
  CHECK(to_json(rec).dump() == to_json(recommend(at("Hassan"), *stub_registry())).dump());
}

TEST_CASE("forecast_crop validates crop and horizon") {
  const auto reg = stub_registry();
  const auto f = forecast_crop(*reg, "PEPPER", 6);
  CHECK(f.crop == "Pepper");
  CHECK(f.trajectory == std::vector<double>(6, 480.0));
  CHECK(code_of([&] { forecast_crop(*reg, "durian", 6); }) == Errc::UnknownCrop);
  CHECK(code_of([&] { forecast_crop(*reg, "pepper", 0); }) == Errc::Precondition);
  CHECK(code_of([&] { forecast_crop(*reg, "pepper", 25); }) == Errc::Precondition);
}

TEST_CASE("growth-period CSV validation") {
  const auto dir = temp_dir("agro_growth");
  std::ofstream(dir / "ok.csv") << "crop,months\nCoffee,9\n";
  std::ofstream(dir / "zero.csv") << "crop,months\nCoffee,0\n";
  std::ofstream(dir / "frac.csv") << "crop,months\nCoffee,2.5\n";
  std::ofstream(dir / "dup.csv") << "crop,months\nCoffee,2\ncoffee,3\nCoffee,4\n";
  CHECK(*load_growth_periods(dir / "ok.csv").months("COFFEE") == 9);
  CHECK(code_of([&] { load_growth_periods(dir / "zero.csv"); }) == Errc::RowParseError);
  CHECK(code_of([&] { load_growth_periods(dir / "frac.csv"); }) == Errc::RowParseError);
  CHECK(code_of([&] { load_growth_periods(dir / "dup.csv"); }) == Errc::RowParseError);
}

TEST_CASE("registry loads LSTM entries with their recent price window") {
  const auto dir = temp_dir("agro_registry");
  for (const char* f : {"case_study_forest.json", "growth_periods.csv", "soil.csv", "centroids.csv", "rainfall.csv",
                        "prices.csv", "weather.csv"}) {
    std::filesystem::copy_file(testing::fixture(f), dir / f);
  }
  const auto prices = load_prices_csv(dir / "prices.csv");
  TrainConfig cfg;
  cfg.hidden1 = 4;
  cfg.hidden2 = 3;
  cfg.max_epochs = 3;
  const auto trained = train_lstm(prices.at("Pepper"), cfg, 1);
  std::ofstream(dir / "pepper.json") << to_json(trained.model).dump();

  nlohmann::json manifest = {{"forest", "case_study_forest.json"}, {"growth_periods", "growth_periods.csv"},
                             {"soil", "soil.csv"}, {"centroids", "centroids.csv"}, {"rainfall", "rainfall.csv"},
                             {"prices", "prices.csv"},
                             {"crops", {{"Pepper", {{"lstm", "pepper.json"}}}, {"Coffee", {{"stub_price", 255}}}}},
                             {"weather", {{"mode", "fixture"}, {"fixture_path", "weather.csv"}}}};
  std::ofstream(dir / "manifest.json") << manifest.dump();
  const auto reg = load_registry(dir / "manifest.json");
  const auto* pepper = reg->forecaster("pepper");
  REQUIRE(pepper != nullptr);
  CHECK_FALSE(pepper->stub);
  const auto& series = prices.at("Pepper").prices;
  CHECK(pepper->recent_prices == std::vector<double>(series.end() - 6, series.end()));
  const auto f = forecast_crop(*reg, "Pepper", 6);
  CHECK(f.trajectory.size() == 6);
  CHECK(f.trajectory == forecast_iterative(trained.model, pepper->recent_prices, 6, "Pepper").trajectory);

  const auto rec = recommend(at("Hassan"), *reg);
  REQUIRE(rec.warnings.size() == 1);
  CHECK(rec.warnings[0].crop == "Maize");
}

TEST_CASE("registry handle keeps the old registry when a reload fails") {
  const auto dir = temp_dir("agro_reload");
  for (const auto& entry : std::filesystem::directory_iterator(testing::data_dir() / "fixtures")) {
    std::filesystem::copy_file(entry.path(), dir / entry.path().filename());
  }
  RegistryHandle handle(dir / "manifest_stub.json", {.force_fixtures = true});
  CHECK(handle.get() == nullptr);
  handle.reload();
  const auto first = handle.get();
  REQUIRE(first != nullptr);

  std::filesystem::remove(dir / "case_study_forest.json");
  CHECK(code_of([&] { handle.reload(); }) == Errc::MissingFile);
  CHECK(handle.get() == first);
  CHECK(recommend(at("Hassan"), *first).selected == "Pepper");
}

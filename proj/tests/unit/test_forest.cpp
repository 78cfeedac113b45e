#include <doctest.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "agro/data_ingest.hpp"
#include "agro/error.hpp"
#include "agro/forest.hpp"
#include "agro/rng.hpp"
#include "paths.hpp"
#include "split_oracle.hpp"

using namespace agro;

namespace {

LabeledData random_instance(Rng& rng, int rows, int features, int classes, int levels) {
  LabeledData d;
  d.features.resize(rows, features);
  for (Eigen::Index i = 0; i < d.features.size(); ++i) {
    d.features.data()[i] = static_cast<double>(uniform_index(rng, static_cast<std::uint64_t>(levels)));
  }
  for (int r = 0; r < rows; ++r) d.labels.push_back(static_cast<int>(uniform_index(rng, classes)));
  for (int c = 0; c < classes; ++c) d.class_names.push_back("c" + std::to_string(c));
  return d;
}

std::vector<Eigen::Index> iota(Eigen::Index n) {
  std::vector<Eigen::Index> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), Eigen::Index{0});
  return v;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

LabeledData blobs() {
  std::vector<AgronomicRecord> recs;
  Rng rng(3);
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 30; ++i) {
      AgronomicRecord r;
      for (int f = 0; f < kFeatureCount; ++f) r.features(f) = 10.0 * c + uniform_real(rng, 0, 3);
      r.label = "crop" + std::to_string(c);
      recs.push_back(r);
    }
  }
  return LabeledData::from_records(recs);
}

}  // namespace

TEST_CASE("gini impurity") {
  const std::vector<long> pure = {5, 0};
  const std::vector<long> even = {3, 3};
  const std::vector<long> three = {1, 1, 2};
  CHECK(gini(pure) == 0.0);
  CHECK(gini(even) == doctest::Approx(0.5));
  CHECK(gini(three) == doctest::Approx(1.0 - (0.0625 + 0.0625 + 0.25)));
  const std::vector<long> none = {0, 0};
  CHECK_THROWS_AS(gini(none), Error);
}

TEST_CASE("best_split agrees with brute-force enumeration") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const int min_leaf = 1 + trial % 3;
    const auto d = random_instance(rng, 20, 4, 3, 6);
    const auto rows = iota(d.rows());
    const auto feats = iota(d.features.cols());
    const auto got = best_split(d, rows, feats, min_leaf);
    const auto want = testing::oracle_split(d.features, d.labels, d.class_count(), min_leaf);
    REQUIRE(got.has_value() == want.has_value());
    if (!got) continue;
    CHECK(got->feature == want->feature);
    CHECK(got->threshold == want->threshold);
    CHECK(got->gain == doctest::Approx(want->gain).epsilon(1e-9));
  }
}

TEST_CASE("best_split: no split on constant features or pure rows") {
  LabeledData d;
  d.features = Eigen::MatrixXd::Constant(6, 2, 1.0);
  d.labels = {0, 1, 0, 1, 0, 1};
  d.class_names = {"a", "b"};
  const auto rows = iota(6);
  const auto feats = iota(2);
  CHECK_FALSE(best_split(d, rows, feats).has_value());
  d.features.col(0) << 1, 2, 3, 4, 5, 6;
  d.labels = {0, 0, 0, 0, 0, 0};
  CHECK_FALSE(best_split(d, rows, feats).has_value());
}

TEST_CASE("depth-1 full-feature tree splits where the oracle does") {
  Rng rng(9);
  for (int trial = 0; trial < 25; ++trial) {
    const auto d = random_instance(rng, 20, 5, 2, 8);
    const auto want = testing::oracle_split(d.features, d.labels, d.class_count());
    if (!want) continue;
    ForestConfig cfg;
    cfg.n_estimators = 1;
    cfg.max_depth = 1;
    cfg.max_features = 5;
    cfg.bootstrap = false;
    const auto model = fit_forest(d, cfg, 7);
    const auto& root = model.trees[0].root();
    CHECK(root.feature == want->feature);
    CHECK(root.threshold == want->threshold);
    CHECK(model.trees[0].depth() == 1);
  }
}

TEST_CASE("fitted trees respect max_depth and min_samples_leaf") {
  const auto d = blobs();
  ForestConfig cfg;
  cfg.n_estimators = 5;
  cfg.max_depth = 2;
  cfg.min_samples_leaf = 4;
  const auto model = fit_forest(d, cfg, 1);
  for (const auto& t : model.trees) CHECK(t.depth() <= 2);
}

TEST_CASE("forest training is deterministic and thread-count independent") {
  const auto d = blobs();
  ForestConfig serial;
  serial.n_estimators = 20;
  auto parallel = serial;
  parallel.n_threads = 4;
  const auto a = to_json(fit_forest(d, serial, 42)).dump();
  const auto b = to_json(fit_forest(d, parallel, 42)).dump();
  const auto c = to_json(fit_forest(d, serial, 42)).dump();
  CHECK(a == b);
  CHECK(a == c);
  CHECK(a != to_json(fit_forest(d, serial, 43)).dump());
}

TEST_CASE("predict_proba: a distribution over labels; shape and finiteness checked") {
  const auto model = fit_forest(blobs(), ForestConfig{20}, 5);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(kFeatureCount, 21.0);
  const auto probs = predict_proba(model, x);
  CHECK(probs.values.sum() == doctest::Approx(1.0));
  CHECK(probs.values.minCoeff() >= 0.0);
  CHECK(predict_label(model, x) == "crop2");
  CHECK(probs["crop2"] > 0.9);
  CHECK(probs["nope"] == 0.0);
  CHECK_THROWS_AS(predict_proba(model, Eigen::VectorXd::Zero(3)), Error);
  x(2) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(predict_proba(model, x), Error);
}

TEST_CASE("top_k orders by probability then name") {
  ClassProbs p;
  p.labels = {"a", "b", "c", "d"};
  p.values = Eigen::Vector4d(0.2, 0.4, 0.2, 0.2);
  CHECK(top_k_crops(p, 3) == std::vector<std::string>{"b", "a", "c"});
  CHECK(top_k_crops(p, 10).size() == 4);
}

TEST_CASE("single-class training data is rejected") {
  LabeledData d;
  d.features = Eigen::MatrixXd::Random(4, 7);
  d.labels = {0, 0, 0, 0};
  d.class_names = {"only"};
  CHECK_THROWS_AS(fit_forest(d, ForestConfig{}, 1), Error);
}

TEST_CASE("classification metrics on a hand-worked example") {
  const std::vector<std::string> truth = {"a", "a", "b", "b", "c"};
  const std::vector<std::string> pred = {"a", "b", "b", "b", "a"};
  const auto m = classification_metrics(truth, pred);
  CHECK(m.accuracy == doctest::Approx(0.6));
  REQUIRE(m.per_class.size() == 3);
  CHECK(m.per_class[0].precision == doctest::Approx(0.5));  // a: 1 of 2 predicted
  CHECK(m.per_class[0].recall == doctest::Approx(0.5));
  CHECK(m.per_class[1].precision == doctest::Approx(2.0 / 3.0));
  CHECK(m.per_class[1].recall == doctest::Approx(1.0));
  CHECK(m.per_class[1].f1 == doctest::Approx(0.8));
  CHECK(m.per_class[2].recall == 0.0);
  CHECK(m.per_class[2].f1 == 0.0);
}

TEST_CASE("model JSON round-trips and rejects corruption") {
  const auto model = fit_forest(blobs(), ForestConfig{10}, 8);
  const auto doc = to_json(model);
  const auto back = forest_from_json(doc);
  CHECK(to_json(back).dump() == doc.dump());
  Eigen::VectorXd x = Eigen::VectorXd::Constant(kFeatureCount, 11.0);
  CHECK(predict_proba(back, x).values == predict_proba(model, x).values);

  auto broken = doc;
  broken["format"] = "something.else";
  CHECK_THROWS_AS(forest_from_json(broken), Error);
  broken = doc;
  broken["trees"][0] = {{"feature", 99}, {"threshold", 1.0}, {"left", {{"probs", {1.0}}}}};
  CHECK_THROWS_AS(forest_from_json(broken), Error);
}

TEST_CASE("committed case-study forest is reproducible from its CSV") {
  const auto recs = load_agronomic_csv(testing::fixture("crops_case_study.csv"));
  const auto imputed = impute_means(recs, recs);
  const auto model = fit_forest(LabeledData::from_records(imputed.records), ForestConfig{}, 42);
  CHECK(to_json(model).dump() + "\n" == slurp(testing::fixture("case_study_forest.json")));

  Eigen::VectorXd hassan(kFeatureCount);
  hassan << 125, 29, 260, 24, 70, 6.2, 1000;
  CHECK(top_k_crops(predict_proba(model, hassan), 3) == std::vector<std::string>{"Coffee", "Pepper", "Maize"});
}

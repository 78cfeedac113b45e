// Acceptance run: one PASS/FAIL line per criterion.

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "agro/data_ingest.hpp"
#include "agro/engine.hpp"
#include "agro/forest.hpp"
#include "agro/geocode.hpp"
#include "agro/lstm.hpp"
#include "agro/registry.hpp"
#include "agro/rng.hpp"
#include "agro/scaler.hpp"
#include "finite_difference.hpp"
#include "golden.hpp"
#include "paths.hpp"
#include "service_cases.hpp"
#include "split_oracle.hpp"

#include <httplib.h>

extern char** environ;

using namespace agro;

namespace {

constexpr double kGradTolerance = 1e-4;
constexpr double kAccuracyFloor = 0.98;
constexpr double kOneStepMapeCeiling = 5.0;
constexpr double kSixStepMapeCeiling = 10.0;
constexpr double kScalerRoundTrip = 1e-9;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// 1. LSTM gradients against central finite differences.
Outcome gradients() {
  struct Toy {
    Eigen::Index h1, h2, look_back, batch;
    double dropout;
  };
  const Toy toys[] = {{2, 2, 4, 3, 0.0}, {3, 2, 4, 2, 0.0}, {3, 3, 4, 4, 0.2}};
  double worst = 0.0;
  long params = 0;
  std::uint64_t seed = 100;
  for (const auto& toy : toys) {
    Rng rng(++seed);
    auto p = lstm::init_network<double>(toy.h1, toy.h2, rng);
    lstm::for_each_tensor([&](auto& t) {
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += uniform_real(rng, -0.3, 0.3);
    }, p);
    lstm::Matrix<double> windows(toy.look_back, toy.batch), targets(1, toy.batch);
    for (Eigen::Index i = 0; i < windows.size(); ++i) windows.data()[i] = uniform_real(rng, 0.1, 1.0);
    for (Eigen::Index i = 0; i < targets.size(); ++i) targets.data()[i] = uniform_real(rng, 0.1, 1.0);
    lstm::DropoutMasks<double> masks;
    if (toy.dropout > 0) masks = lstm::draw_dropout_masks(p, toy.look_back, toy.batch, toy.dropout, rng);
    const auto report = testing::check_gradients(p, windows, targets, masks);
    worst = std::max(worst, report.max_relative_error);
    params += report.parameters;
  }
  return {worst <= kGradTolerance,
          "max relative error " + fmt("%.2e", worst) + " over " + std::to_string(params) + " parameters"};
}

// 2. Depth-1 trees against exhaustive enumeration; training determinism.
Outcome split_oracle() {
  Rng rng(2);
  int agreed = 0, compared = 0;
  for (int trial = 0; trial < 100; ++trial) {
    LabeledData d;
    d.features.resize(20, 4);
    for (Eigen::Index i = 0; i < d.features.size(); ++i) d.features.data()[i] = double(uniform_index(rng, 7));
    for (int r = 0; r < 20; ++r) d.labels.push_back(int(uniform_index(rng, 3)));
    d.class_names = {"a", "b", "c"};
    const auto want = testing::oracle_split(d.features, d.labels, 3);
    ForestConfig cfg;
    cfg.n_estimators = 1;
    cfg.max_depth = 1;
    cfg.max_features = 4;
    cfg.bootstrap = false;
    const auto model = fit_forest(d, cfg, 7);
    const auto& root = model.trees[0].root();
    ++compared;
    if (want ? (root.feature == want->feature && root.threshold == want->threshold) : root.is_leaf()) ++agreed;
  }
  const auto data = LabeledData::from_records(load_agronomic_csv(testing::fixture("crops_synthetic.csv")));
  ForestConfig serial;
  serial.n_estimators = 30;
  auto parallel = serial;
  parallel.n_threads = 4;
  const bool same = to_json(fit_forest(data, serial, 42)).dump() == to_json(fit_forest(data, parallel, 42)).dump() &&
                    to_json(fit_forest(data, serial, 42)).dump() == to_json(fit_forest(data, serial, 42)).dump();
  return {agreed == compared && same, std::to_string(agreed) + "/" + std::to_string(compared) +
                                          " oracle splits matched; serial vs parallel " +
                                          (same ? "byte-identical" : "DIFFER")};
}

// 3. Hold-out accuracy on the synthetic 22-class fixture.
Outcome accuracy() {
  const auto records = load_agronomic_csv(testing::fixture("crops_synthetic.csv"));
  const auto split = train_test_split(records, 0.2, 42);
  const auto train = impute_means(split.train, split.train);
  const auto test = apply_means(split.test, train.means);
  ForestConfig cfg;  // 100 trees, depth 20, leaf 1, gini
  cfg.n_threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const auto model = fit_forest(LabeledData::from_records(train.records), cfg, 42);
  std::set<std::string> labels;
  std::size_t correct = 0;
  for (const auto& r : test) {
    labels.insert(r.label);
    if (predict_label(model, r.features) == r.label) ++correct;
  }
  const double acc = double(correct) / double(test.size());
  return {acc >= kAccuracyFloor && labels.size() == 22,
          "accuracy " + fmt("%.4f", acc) + " on " + std::to_string(test.size()) + " hold-out rows, " +
              std::to_string(labels.size()) + " classes"};
}

double mape(const std::vector<double>& predicted, const std::vector<double>& actual) {
  double sum = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) sum += std::abs((actual[i] - predicted[i]) / actual[i]);
  return 100.0 * sum / double(actual.size());
}

// 4. Walk-forward MAPE on a noiseless seasonal series with a trend.
Outcome forecast() {
  std::vector<double> s;
  for (int t = 0; t < 120; ++t) s.push_back(100.0 + 0.05 * t + 15.0 * std::sin(2.0 * std::numbers::pi * t / 12.0));
  const auto result = train_lstm("seasonal", std::span<const double>(s).first(96), TrainConfig{}, 42);
  const int lb = result.model.look_back();
  std::vector<double> p1, a1, p6, a6;
  for (std::size_t origin = 96; origin < s.size(); ++origin) {
    const auto window = std::span<const double>(s).subspan(origin - lb, lb);
    p1.push_back(forecast_iterative(result.model, window, 1).trajectory.back());
    a1.push_back(s[origin]);
    if (origin + 6 <= s.size()) {
      const auto traj = forecast_iterative(result.model, window, 6).trajectory;
      p6.insert(p6.end(), traj.begin(), traj.end());
      a6.insert(a6.end(), s.begin() + long(origin), s.begin() + long(origin) + 6);
    }
  }
  const double m1 = mape(p1, a1), m6 = mape(p6, a6);
  return {m1 <= kOneStepMapeCeiling && m6 <= kSixStepMapeCeiling,
          "one-step MAPE " + fmt("%.2f", m1) + "% over " + std::to_string(a1.size()) + " months, 6-step MAPE " +
              fmt("%.2f", m6) + "% after " + std::to_string(result.history.size()) + " epochs"};
}

// 5. Hassan case study end to end.
Outcome case_study() {
  RegistryOptions opts;
  opts.force_fixtures = true;
  const auto reg = load_registry(testing::fixture("manifest_stub.json"), opts);
  RecommendQuery q;
  q.location = std::string("Hassan");
  const auto rec = recommend(q, *reg);
  std::vector<std::string> top;
  for (const auto& c : rec.candidates) top.push_back(c.crop);
  const bool top3 = top == std::vector<std::string>{"Coffee", "Pepper", "Maize"};
  const bool ok = top3 && rec.selected == "Pepper" && rec.explanation.find("480") != std::string::npos &&
                  rec.explanation.find("6") != std::string::npos &&
                  rec.explanation.find("Pepper at ₹480.00/kg in 6 months") != std::string::npos;
  return {ok, "selected " + rec.selected + (top3 ? ", top-3 Coffee/Pepper/Maize" : ", unexpected top-3") +
                  "; explanation: " + rec.explanation.substr(0, 60) + "..."};
}

double great_circle_km(double lat1, double lon1, double lat2, double lon2) {
  const double r = std::numbers::pi / 180.0;
  const double c = std::sin(lat1 * r) * std::sin(lat2 * r) + std::cos(lat1 * r) * std::cos(lat2 * r) * std::cos((lon2 - lon1) * r);
  return 6371.0088 * std::acos(std::clamp(c, -1.0, 1.0));
}

// 6. Nearest district against a brute-force scan.
Outcome geocode() {
  const auto centroids = load_centroids_csv(testing::fixture("centroids.csv"));
  Rng rng(6);
  int agreed = 0, near_ties = 0;
  for (int i = 0; i < 1000; ++i) {
    const GeoPoint pt{uniform_real(rng, 11.5, 18.5), uniform_real(rng, 74.0, 78.6)};
    std::vector<std::pair<double, std::string>> d;
    for (const auto& c : centroids) d.emplace_back(great_circle_km(pt.lat, pt.lon, c.lat, c.lon), c.district);
    std::ranges::sort(d);
    if (d[1].first - d[0].first < 1e-6) ++near_ties;  // too close to call with a different formula
    if (nearest_district(pt, centroids) == d[0].second || d[1].first - d[0].first < 1e-6) ++agreed;
  }
  const std::vector<DistrictCentroid> tie = {{"Zeta", 12.0, 77.0}, {"Alpha", 12.0, 75.0}, {"Mid", 15.0, 76.0}};
  const bool tie_ok = nearest_district({12.0, 76.0}, tie) == "Alpha";
  return {agreed == 1000 && tie_ok, std::to_string(agreed) + "/1000 points agree over " +
                                        std::to_string(centroids.size()) + " districts (" +
                                        std::to_string(near_ties) + " near-ties); equidistant tie -> " +
                                        (tie_ok ? "Alpha" : "WRONG")};
}

// 7. Scaler, imputation and split properties.
Outcome data_layer() {
  Rng rng(7);
  Eigen::MatrixXd m(50, 4);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform_real(rng, -1e3, 1e3);
  m.col(2).setConstant(3.5);
  const auto params = fit_minmax(m);
  const auto scaled = transform_minmax(m, params);
  const double round_trip = (inverse_minmax(scaled, params) - m).cwiseAbs().maxCoeff();
  const bool constant_zero = scaled.col(2).isZero(0.0);

  auto records = load_agronomic_csv(testing::fixture("crops_synthetic.csv"));
  for (std::size_t i = 0; i < records.size(); i += 7) records[i].features(int(i % kFeatureCount)) = std::nan("");
  const auto once = impute_means(records, records);
  const auto twice = impute_means(once.records, once.records);
  const bool idempotent = write_agronomic_csv(once.records) == write_agronomic_csv(twice.records);

  const auto a = train_test_split(records, 0.2, 11), b = train_test_split(records, 0.2, 11);
  const bool deterministic = write_agronomic_csv(a.test) == write_agronomic_csv(b.test) &&
                             write_agronomic_csv(a.train) == write_agronomic_csv(b.train);
  const bool ok = round_trip <= kScalerRoundTrip && constant_zero && idempotent && deterministic;
  return {ok, "round trip " + fmt("%.1e", round_trip) + ", constant column " + (constant_zero ? "0" : "NONZERO") +
                  ", imputation " + (idempotent ? "idempotent" : "NOT idempotent") + ", split " +
                  (deterministic ? "deterministic" : "NOT deterministic")};
}

// 8. Goldens over real HTTP against `agro serve --fixtures`.
Outcome service() {
  int err_pipe[2];
  if (::pipe(err_pipe) != 0) return {false, "pipe failed"};
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, err_pipe[1], STDERR_FILENO);
  posix_spawn_file_actions_addclose(&actions, err_pipe[0]);
  const std::string manifest = testing::fixture("manifest_stub.json").string();
  std::vector<std::string> args = {AGRO_CLI, "serve", "--manifest", manifest, "--fixtures", "--listen", "127.0.0.1:0"};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  pid_t pid = 0;
  const int rc = posix_spawn(&pid, AGRO_CLI, &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  ::close(err_pipe[1]);
  if (rc != 0) return {false, "could not start agro serve"};

  int port = 0;
  bool ready = false;
  std::string line;
  char ch;
  while (!ready && ::read(err_pipe[0], &ch, 1) == 1) {
    if (ch != '\n') {
      line += ch;
      continue;
    }
    if (line.rfind("listening on ", 0) == 0) port = std::stoi(line.substr(line.rfind(':') + 1));
    if (line == "ready") ready = true;
    line.clear();
  }

  int matched = 0, total = 0;
  std::string mismatch;
  if (ready && port > 0) {
    httplib::Client client("127.0.0.1", port);
    for (const auto& c : testing::golden_cases()) {
      ++total;
      const auto res = c.method == "GET" ? client.Get(c.target)
                                         : client.Post(c.target, c.body, "application/json");
      if (res && res->status == c.status && res->body == testing::read_file(testing::golden_path(c.golden))) {
        ++matched;
      } else if (mismatch.empty()) {
        mismatch = "; first mismatch " + c.method + " " + c.target;
      }
    }
  }
  ::kill(pid, SIGTERM);
  int status = 0;
  ::waitpid(pid, &status, 0);
  ::close(err_pipe[0]);
  const bool clean_exit = WIFEXITED(status) && WEXITSTATUS(status) == 0;
  return {ready && matched == total && total > 0 && clean_exit,
          std::to_string(matched) + "/" + std::to_string(total) + " golden bodies byte-identical" + mismatch +
              (clean_exit ? "" : "; server did not exit cleanly")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"LSTM gradient correctness", gradients}, {"split oracle and forest determinism", split_oracle},
      {"classification accuracy band", accuracy}, {"forecast procedure", forecast},
      {"Hassan case study", case_study},        {"geocode oracle", geocode},
      {"data-layer properties", data_layer},    {"service golden responses", service},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!out.pass) ++failures;
    std::printf("criterion %zu: %s  %s: %s (%.2fs)\n", i + 1, out.pass ? "PASS" : "FAIL", criteria[i].first,
                out.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}

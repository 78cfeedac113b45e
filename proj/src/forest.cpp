#include "agro/forest.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <thread>

#include "agro/error.hpp"

namespace agro {
namespace {

constexpr double kGainTolerance = 1e-12;
constexpr int kFormatVersion = 1;

int feature_subset_size(const ForestConfig& config, Eigen::Index feature_count) {
  if (config.max_features > 0) return static_cast<int>(std::min<Eigen::Index>(config.max_features, feature_count));
  return std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(feature_count)))));
}

std::vector<long> count_labels(const LabeledData& data, std::span<const Eigen::Index> rows) {
  std::vector<long> counts(static_cast<std::size_t>(data.class_count()), 0);
  for (auto r : rows) ++counts[static_cast<std::size_t>(data.labels[static_cast<std::size_t>(r)])];
  return counts;
}

struct TreeBuilder {
  const LabeledData& data;
  const ForestConfig& config;
  Rng& rng;
  std::vector<TreeNode> nodes;
  std::vector<Eigen::Index> all_features;
  int subset_size;

  int make_leaf(const std::vector<long>& counts, long total) {
    TreeNode leaf;
    leaf.probs.resize(data.class_count());
    for (std::size_t c = 0; c < counts.size(); ++c) {
      leaf.probs(static_cast<Eigen::Index>(c)) = static_cast<double>(counts[c]) / static_cast<double>(total);
    }
    nodes.push_back(std::move(leaf));
    return static_cast<int>(nodes.size()) - 1;
  }

  std::vector<Eigen::Index> draw_features() {
    // Partial Fisher-Yates; the chosen subset is sorted so split ties
    // resolve by feature index.
    auto pool = all_features;
    const auto n = pool.size();
    for (std::size_t i = 0; i < static_cast<std::size_t>(subset_size); ++i) {
      const auto j = i + static_cast<std::size_t>(uniform_index(rng, n - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(static_cast<std::size_t>(subset_size));
    std::sort(pool.begin(), pool.end());
    return pool;
  }

  int grow(std::vector<Eigen::Index> rows, int depth) {
    const auto counts = count_labels(data, rows);
    const long total = static_cast<long>(rows.size());
    const bool pure = std::count_if(counts.begin(), counts.end(), [](long c) { return c > 0; }) <= 1;
    const bool depth_capped = config.max_depth > 0 && depth >= config.max_depth;
    if (pure || depth_capped || total < 2L * config.min_samples_leaf) return make_leaf(counts, total);

    const auto features = draw_features();
    const auto split = best_split(data, rows, features, config.min_samples_leaf);
    if (!split) return make_leaf(counts, total);

    std::vector<Eigen::Index> left_rows;
    std::vector<Eigen::Index> right_rows;
    for (auto r : rows) {
      (data.features(r, split->feature) <= split->threshold ? left_rows : right_rows).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    const int index = static_cast<int>(nodes.size());
    nodes.push_back(TreeNode{split->feature, split->threshold, -1, -1, {}});
    const int left = grow(std::move(left_rows), depth + 1);
    const int right = grow(std::move(right_rows), depth + 1);
    nodes[static_cast<std::size_t>(index)].left = left;
    nodes[static_cast<std::size_t>(index)].right = right;
    return index;
  }
};

nlohmann::json node_to_json(const std::vector<TreeNode>& nodes, int index) {
  const auto& node = nodes[static_cast<std::size_t>(index)];
  if (node.is_leaf()) {
    return {{"probs", std::vector<double>(node.probs.data(), node.probs.data() + node.probs.size())}};
  }
  return {{"feature", node.feature},
          {"threshold", node.threshold},
          {"left", node_to_json(nodes, node.left)},
          {"right", node_to_json(nodes, node.right)}};
}

int node_from_json(const nlohmann::json& j, std::vector<TreeNode>& nodes, Eigen::Index class_count,
                   Eigen::Index feature_count) {
  if (j.contains("probs")) {
    const auto probs = j.at("probs").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(probs.size()) != class_count) {
      fail(Errc::InvalidModel, "forest model: leaf distribution has wrong length");
    }
    TreeNode leaf;
    leaf.probs = Eigen::Map<const Eigen::VectorXd>(probs.data(), class_count);
    nodes.push_back(std::move(leaf));
    return static_cast<int>(nodes.size()) - 1;
  }
  TreeNode node;
  node.feature = j.at("feature").get<Eigen::Index>();
  node.threshold = j.at("threshold").get<double>();
  if (node.feature < 0 || node.feature >= feature_count) fail(Errc::InvalidModel, "forest model: bad feature index");
  const int index = static_cast<int>(nodes.size());
  nodes.push_back(node);
  const int left = node_from_json(j.at("left"), nodes, class_count, feature_count);
  const int right = node_from_json(j.at("right"), nodes, class_count, feature_count);
  nodes[static_cast<std::size_t>(index)].left = left;
  nodes[static_cast<std::size_t>(index)].right = right;
  return index;
}

}  // namespace

LabeledData LabeledData::from_records(const std::vector<AgronomicRecord>& records) {
  LabeledData data;
  std::set<std::string> names;
  for (const auto& r : records) names.insert(r.label);
  data.class_names.assign(names.begin(), names.end());
  data.features = feature_matrix(records);
  data.labels.reserve(records.size());
  for (const auto& r : records) {
    const auto it = std::lower_bound(data.class_names.begin(), data.class_names.end(), r.label);
    data.labels.push_back(static_cast<int>(it - data.class_names.begin()));
  }
  if (!data.features.allFinite()) {
    fail(Errc::NonFiniteFeature, "training data contains missing or non-finite values; impute first");
  }
  return data;
}

double gini(std::span<const long> counts) {
  long total = 0;
  for (long c : counts) {
    require(c >= 0, "gini: negative count");
    total += c;
  }
  if (total == 0) fail(Errc::EmptyCounts, "gini: no positive counts");
  double sum_sq = 0.0;
  for (long c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(total);
    sum_sq += p * p;
  }
  return 1.0 - sum_sq;
}

std::optional<SplitCandidate> best_split(const LabeledData& data, std::span<const Eigen::Index> rows,
                                         std::span<const Eigen::Index> features, int min_samples_leaf) {
  const long n = static_cast<long>(rows.size());
  if (n < 2L * min_samples_leaf || n < 2) return std::nullopt;
  const auto classes = static_cast<std::size_t>(data.class_count());

  const auto parent_counts = count_labels(data, rows);
  long parent_sum_sq = 0;
  for (long c : parent_counts) parent_sum_sq += c * c;
  const double nd = static_cast<double>(n);
  const double parent_impurity = 1.0 - static_cast<double>(parent_sum_sq) / (nd * nd);
  if (parent_impurity <= 0.0) return std::nullopt;

  std::optional<SplitCandidate> best;
  std::vector<std::pair<double, int>> column(rows.size());
  std::vector<long> left(classes);
  std::vector<long> right(classes);

  for (const auto feature : features) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      column[i] = {data.features(rows[i], feature), data.labels[static_cast<std::size_t>(rows[i])]};
    }
    std::sort(column.begin(), column.end());
    std::fill(left.begin(), left.end(), 0);
    right = parent_counts;
    long left_sq = 0;
    long right_sq = parent_sum_sq;

    for (long i = 0; i + 1 < n; ++i) {
      const auto label = static_cast<std::size_t>(column[static_cast<std::size_t>(i)].second);
      // Moving one row of `label` across updates the sums of squares
      // incrementally: (c+1)^2 - c^2 = 2c + 1.
      left_sq += 2 * left[label] + 1;
      right_sq -= 2 * right[label] - 1;
      ++left[label];
      --right[label];

      const double lo = column[static_cast<std::size_t>(i)].first;
      const double hi = column[static_cast<std::size_t>(i + 1)].first;
      if (!(lo < hi)) continue;
      const long n_left = i + 1;
      const long n_right = n - n_left;
      if (n_left < min_samples_leaf || n_right < min_samples_leaf) continue;

      const double nl = static_cast<double>(n_left);
      const double nr = static_cast<double>(n_right);
      const double weighted = (nl - static_cast<double>(left_sq) / nl + nr - static_cast<double>(right_sq) / nr) / nd;
      const double gain = parent_impurity - weighted;
      if (gain <= kGainTolerance) continue;
      if (!best || gain > best->gain + kGainTolerance) {
        double threshold = lo + (hi - lo) / 2.0;
        if (!(threshold < hi)) threshold = lo;
        best = SplitCandidate{feature, threshold, gain};
      }
    }
  }
  return best;
}

const Eigen::VectorXd& DecisionTree::leaf_distribution(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const TreeNode* node = &nodes_.front();
  while (!node->is_leaf()) {
    node = &nodes_[static_cast<std::size_t>(x(node->feature) <= node->threshold ? node->left : node->right)];
  }
  return node->probs;
}

int DecisionTree::depth() const {
  if (nodes_.empty()) return 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  int deepest = 0;
  while (!stack.empty()) {
    const auto [index, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    const auto& node = nodes_[static_cast<std::size_t>(index)];
    if (!node.is_leaf()) {
      stack.emplace_back(node.left, d + 1);
      stack.emplace_back(node.right, d + 1);
    }
  }
  return deepest;
}

DecisionTree fit_tree(const LabeledData& data, std::span<const Eigen::Index> rows, const ForestConfig& config,
                      Rng& rng) {
  require(!rows.empty(), "fit_tree: no rows");
  require(config.min_samples_leaf >= 1, "fit_tree: min_samples_leaf must be >= 1");
  TreeBuilder builder{data, config, rng, {}, {}, feature_subset_size(config, data.features.cols())};
  builder.all_features.resize(static_cast<std::size_t>(data.features.cols()));
  std::iota(builder.all_features.begin(), builder.all_features.end(), Eigen::Index{0});
  builder.grow(std::vector<Eigen::Index>(rows.begin(), rows.end()), 0);
  return DecisionTree(std::move(builder.nodes));
}

ForestModel fit_forest(const LabeledData& train, const ForestConfig& config, std::uint64_t seed) {
  require(config.n_estimators >= 1, "fit_forest: n_estimators must be >= 1");
  require(train.rows() > 0, "fit_forest: empty training set");
  const std::set<int> present(train.labels.begin(), train.labels.end());
  if (present.size() < 2) fail(Errc::SingleClassDataset, "fit_forest: training data has fewer than 2 classes");

  ForestModel model;
  model.labels = train.class_names;
  model.config = config;
  model.seed = seed;
  if (train.features.cols() == kFeatureCount) {
    model.feature_names.assign(kFeatureNames.begin(), kFeatureNames.end());
  } else {
    for (Eigen::Index f = 0; f < train.features.cols(); ++f) model.feature_names.push_back("x" + std::to_string(f));
  }
  model.trees.resize(static_cast<std::size_t>(config.n_estimators));

  const auto n = static_cast<std::uint64_t>(train.rows());
  const auto train_one = [&](std::size_t t) {
    Rng rng(seed ^ static_cast<std::uint64_t>(t));
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
    if (config.bootstrap) {
      for (auto& r : rows) r = static_cast<Eigen::Index>(uniform_index(rng, n));
    } else {
      std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    }
    model.trees[t] = fit_tree(train, rows, config, rng);
  };

  const auto threads = static_cast<std::size_t>(std::max(1, config.n_threads));
  if (threads == 1) {
    for (std::size_t t = 0; t < model.trees.size(); ++t) train_one(t);
  } else {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < threads; ++w) {
      workers.emplace_back([&, w] {
        for (std::size_t t = w; t < model.trees.size(); t += threads) train_one(t);
      });
    }
  }
  return model;
}

double ClassProbs::operator[](std::string_view label) const {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) return values(static_cast<Eigen::Index>(i));
  }
  return 0.0;
}

ClassProbs predict_proba(const ForestModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != static_cast<Eigen::Index>(model.feature_names.size())) {
    fail(Errc::ShapeMismatch, "predict_proba: expected " + std::to_string(model.feature_names.size()) +
                                  " features, got " + std::to_string(x.size()));
  }
  if (!x.allFinite()) fail(Errc::NonFiniteFeature, "predict_proba: feature vector has non-finite values");
  require(!model.trees.empty(), "predict_proba: model has no trees");
  ClassProbs out{model.labels, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.labels.size()))};
  for (const auto& tree : model.trees) out.values += tree.leaf_distribution(x);
  out.values /= static_cast<double>(model.trees.size());
  return out;
}

std::string predict_label(const ForestModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return top_k_crops(predict_proba(model, x), 1).front();
}

std::vector<std::string> top_k_crops(const ClassProbs& probs, std::size_t k) {
  require(k >= 1, "top_k_crops: k must be >= 1");
  std::vector<std::size_t> order(probs.labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double pa = probs.values(static_cast<Eigen::Index>(a));
    const double pb = probs.values(static_cast<Eigen::Index>(b));
    if (pa != pb) return pa > pb;
    return probs.labels[a] < probs.labels[b];
  });
  order.resize(std::min(k, order.size()));
  std::vector<std::string> out;
  for (auto i : order) out.push_back(probs.labels[i]);
  return out;
}

ClassifierMetrics classification_metrics(std::span<const std::string> truth, std::span<const std::string> predicted) {
  require(truth.size() == predicted.size(), "classification_metrics: length mismatch");
  require(!truth.empty(), "classification_metrics: no samples");
  std::map<std::string, std::array<long, 3>> table;  // tp, fp, fn
  long correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == predicted[i]) {
      ++correct;
      ++table[truth[i]][0];
    } else {
      ++table[predicted[i]][1];
      ++table[truth[i]][2];
    }
  }
  ClassifierMetrics m;
  m.samples = static_cast<long>(truth.size());
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.samples);
  for (const auto& [label, c] : table) {
    const auto [tp, fp, fn] = c;
    ClassMetrics cm;
    cm.label = label;
    cm.support = tp + fn;
    cm.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    cm.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    cm.f1 = cm.precision + cm.recall > 0 ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall) : 0.0;
    m.per_class.push_back(std::move(cm));
  }
  return m;
}

ClassifierMetrics evaluate_classifier(const ForestModel& model, const std::vector<AgronomicRecord>& test) {
  require(!test.empty(), "evaluate_classifier: empty test set");
  std::vector<std::string> truth;
  std::vector<std::string> predicted;
  for (const auto& r : test) {
    truth.push_back(r.label);
    predicted.push_back(predict_label(model, r.features));
  }
  auto metrics = classification_metrics(truth, predicted);
  // Model classes never seen in predictions or truth still get a row.
  for (const auto& label : model.labels) {
    const auto it = std::lower_bound(metrics.per_class.begin(), metrics.per_class.end(), label,
                                     [](const ClassMetrics& c, const std::string& l) { return c.label < l; });
    if (it == metrics.per_class.end() || it->label != label) metrics.per_class.insert(it, ClassMetrics{label});
  }
  return metrics;
}

nlohmann::json to_json(const ForestModel& model) {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : model.trees) trees.push_back(node_to_json(tree.nodes(), 0));
  return {
      {"format", "agro.forest"},
      {"version", kFormatVersion},
      {"config",
       {{"n_estimators", model.config.n_estimators},
        {"max_depth", model.config.max_depth},
        {"min_samples_leaf", model.config.min_samples_leaf},
        {"max_features", model.config.max_features},
        {"bootstrap", model.config.bootstrap},
        {"criterion", "gini"}}},
      {"seed", model.seed},
      {"labels", model.labels},
      {"feature_names", model.feature_names},
      {"trees", std::move(trees)},
  };
}

ForestModel forest_from_json(const nlohmann::json& doc) {
  try {
    if (doc.value("format", "") != "agro.forest") fail(Errc::InvalidModel, "not a forest model document");
    if (doc.at("version").get<int>() != kFormatVersion) {
      fail(Errc::InvalidModel, "unsupported forest model version " + doc.at("version").dump());
    }
    ForestModel model;
    const auto& cfg = doc.at("config");
    model.config.n_estimators = cfg.at("n_estimators").get<int>();
    model.config.max_depth = cfg.at("max_depth").get<int>();
    model.config.min_samples_leaf = cfg.at("min_samples_leaf").get<int>();
    model.config.max_features = cfg.at("max_features").get<int>();
    model.config.bootstrap = cfg.at("bootstrap").get<bool>();
    model.seed = doc.at("seed").get<std::uint64_t>();
    model.labels = doc.at("labels").get<std::vector<std::string>>();
    model.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
    if (!std::is_sorted(model.labels.begin(), model.labels.end()) ||
        std::adjacent_find(model.labels.begin(), model.labels.end()) != model.labels.end()) {
      fail(Errc::InvalidModel, "forest model labels must be sorted and unique");
    }
    for (const auto& t : doc.at("trees")) {
      std::vector<TreeNode> nodes;
      node_from_json(t, nodes, static_cast<Eigen::Index>(model.labels.size()),
                     static_cast<Eigen::Index>(model.feature_names.size()));
      model.trees.emplace_back(std::move(nodes));
    }
    if (static_cast<int>(model.trees.size()) != model.config.n_estimators) {
      fail(Errc::InvalidModel, "forest model tree count does not match n_estimators");
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::InvalidModel, std::string("forest model: ") + e.what());
  }
}

}  // namespace agro

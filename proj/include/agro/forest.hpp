#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agro/data_ingest.hpp"
#include "agro/rng.hpp"

namespace agro {

struct ForestConfig {
  int n_estimators = 100;
  int max_depth = 20;
  int min_samples_leaf = 1;
  /// Features drawn per split; 0 selects floor(sqrt(feature_count)).
  int max_features = 0;
  /// Test hook: when false every tree sees the full training set.
  bool bootstrap = true;
  /// Trees are trained on this many threads; results do not depend on it.
  int n_threads = 1;
};

/// Dense training matrix with integer class ids indexing `class_names`.
struct LabeledData {
  Eigen::MatrixXd features;       // rows x feature_count
  std::vector<int> labels;        // class id per row
  std::vector<std::string> class_names;  // sorted, unique

  Eigen::Index rows() const { return features.rows(); }
  int class_count() const { return static_cast<int>(class_names.size()); }

  static LabeledData from_records(const std::vector<AgronomicRecord>& records);
};

/// 1 - sum(p_i^2). Throws EmptyCounts when no count is positive.
double gini(std::span<const long> counts);

struct SplitCandidate {
  Eigen::Index feature = 0;
  double threshold = 0.0;
  double gain = 0.0;
};

/// Exhaustive CART split over `features` for the rows in `rows`.
///
/// Thresholds are midpoints between consecutive distinct sorted values and a
/// row goes left when `x[feature] <= threshold`. Ties in gain resolve to the
/// lower feature index, then the lower threshold. Returns nullopt when no
/// split respecting `min_samples_leaf` lowers the weighted Gini impurity.
std::optional<SplitCandidate> best_split(const LabeledData& data, std::span<const Eigen::Index> rows,
                                         std::span<const Eigen::Index> features, int min_samples_leaf = 1);

struct TreeNode {
  Eigen::Index feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  Eigen::VectorXd probs;  // leaf class distribution, empty for internal nodes

  bool is_leaf() const { return feature < 0; }
};

class DecisionTree {
 public:
  DecisionTree() = default;
  explicit DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  const Eigen::VectorXd& leaf_distribution(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& root() const { return nodes_.front(); }
  /// Number of edges on the longest root-to-leaf path.
  int depth() const;

 private:
  std::vector<TreeNode> nodes_;  // pre-order; nodes_[0] is the root
};

/// Grows one tree on `rows` (duplicates allowed, as produced by bootstrapping).
DecisionTree fit_tree(const LabeledData& data, std::span<const Eigen::Index> rows, const ForestConfig& config,
                      Rng& rng);

struct ForestModel {
  std::vector<DecisionTree> trees;
  std::vector<std::string> labels;
  std::vector<std::string> feature_names;
  ForestConfig config;
  std::uint64_t seed = 0;
};

/// Tree t is trained from an Rng seeded with (seed ^ t), so the model does
/// not depend on thread count or scheduling.
ForestModel fit_forest(const LabeledData& train, const ForestConfig& config, std::uint64_t seed);

struct ClassProbs {
  std::vector<std::string> labels;
  Eigen::VectorXd values;

  double operator[](std::string_view label) const;
};

/// Soft vote: the mean of the per-tree leaf distributions.
ClassProbs predict_proba(const ForestModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);

std::string predict_label(const ForestModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);

/// k most probable labels, descending; equal probabilities sort by name.
std::vector<std::string> top_k_crops(const ClassProbs& probs, std::size_t k = 3);

struct ClassMetrics {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;
};

struct ClassifierMetrics {
  double accuracy = 0.0;
  long samples = 0;
  std::vector<ClassMetrics> per_class;  // sorted by label
};

ClassifierMetrics evaluate_classifier(const ForestModel& model, const std::vector<AgronomicRecord>& test);

/// Metrics from parallel label lists (shared with the CLI and tests).
ClassifierMetrics classification_metrics(std::span<const std::string> truth, std::span<const std::string> predicted);

nlohmann::json to_json(const ForestModel& model);
ForestModel forest_from_json(const nlohmann::json& doc);

}  // namespace agro

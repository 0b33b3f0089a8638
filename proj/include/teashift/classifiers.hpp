#pragma once

#include "teashift/types.hpp"

#include <json.hpp>

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace teashift {

// ---------------------------------------------------------------------------
// Models. Rows are samples; labels are small non-negative integers
// (Group::Control = 0, Group::TBI = 1).

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual int predict(const Eigen::Ref<const Eigen::VectorXd>& x) const = 0;
  virtual nlohmann::json to_json() const = 0;

  std::vector<int> predict_rows(const Eigen::Ref<const Eigen::MatrixXd>& rows) const;
};

class KnnClassifier final : public Classifier {
 public:
  // Throws PreconditionError when k is 0 or exceeds the training size.
  static KnnClassifier fit(const Eigen::Ref<const Eigen::MatrixXd>& train, std::span<const int> labels,
                           std::size_t k);

  // Euclidean majority vote; ties go to the smaller summed distance, then the smaller label.
  int predict(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  nlohmann::json to_json() const override;

  std::size_t k() const { return k_; }
  std::string train_ref;  // run id the training matrix belongs to

 private:
  Eigen::MatrixXd train_;
  std::vector<int> labels_;
  std::size_t k_ = 1;
};

struct TreeOptions {
  std::size_t max_depth = std::numeric_limits<std::size_t>::max();
  std::size_t min_leaf = 1;
  std::size_t mtry = 0;  // features tried per split; 0 = all
};

class DecisionTree final : public Classifier {
 public:
  struct Node {
    Eigen::Index feature = -1;  // -1 marks a leaf
    double threshold = 0.0;     // x[feature] <= threshold goes left
    std::int32_t left = -1;
    std::int32_t right = -1;
    int label = 0;
    std::size_t n_samples = 0;
    double impurity = 0.0;
  };

  // Binary axis-aligned CART with weighted Gini. Ties prefer the lowest
  // feature index, then the lowest threshold. `rng` is only consulted when
  // options.mtry restricts the candidate features.
  static DecisionTree fit(const Eigen::Ref<const Eigen::MatrixXd>& train, std::span<const int> labels,
                          const TreeOptions& options = {}, std::mt19937_64* rng = nullptr);
  static DecisionTree from_json(const nlohmann::json& j);

  int predict(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  nlohmann::json to_json() const override;

  // Gini decrease per feature, normalized to sum 1 (all zeros without splits).
  const Eigen::VectorXd& importance() const { return importance_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t depth() const;

 private:
  std::vector<Node> nodes_;
  Eigen::VectorXd importance_;
};

struct ForestOptions {
  std::size_t n_trees = 100;
  std::size_t mtry = 0;  // 0 = floor(sqrt(n_features))
  bool bootstrap = true;
  std::size_t max_depth = std::numeric_limits<std::size_t>::max();
  std::size_t min_leaf = 1;
  std::uint64_t seed = 0;
};

class RandomForest final : public Classifier {
 public:
  // Tree t draws from its own stream seeded by (seed, t).
  static RandomForest fit(const Eigen::Ref<const Eigen::MatrixXd>& train, std::span<const int> labels,
                          const ForestOptions& options = {});

  int predict(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  nlohmann::json to_json() const override;

  // Mean of the per-tree normalized importances.
  Eigen::VectorXd importance() const;
  const std::vector<DecisionTree>& trees() const { return trees_; }

 private:
  std::vector<DecisionTree> trees_;
  Eigen::Index n_features_ = 0;
};

// ---------------------------------------------------------------------------
// Model roster entries used by the experiment harness.

enum class ModelKind { Knn, DecisionTree, RandomForest };

struct ModelSpec {
  ModelKind kind = ModelKind::Knn;
  std::size_t k = 5;
  TreeOptions tree;
  ForestOptions forest;

  std::string label() const;  // e.g. "knn5", "dt", "rf"
};

std::unique_ptr<Classifier> train_model(const ModelSpec& spec, const Eigen::Ref<const Eigen::MatrixXd>& train,
                                        std::span<const int> labels, std::uint64_t seed);

void to_json(nlohmann::json& j, const ModelSpec& spec);
void from_json(const nlohmann::json& j, ModelSpec& spec);

// ---------------------------------------------------------------------------
// Independent validation: every fold tests one TBI and one Control subject.

struct Fold {
  std::string test_tbi;
  std::string test_control;
  std::vector<std::string> train_subject_ids;

  std::array<std::string, 2> test_subject_ids() const { return {test_tbi, test_control}; }
  bool is_test(std::string_view id) const { return id == test_tbi || id == test_control; }
  bool operator==(const Fold&) const = default;
};

struct SplitPlan {
  std::vector<Fold> folds;
  bool operator==(const SplitPlan&) const = default;
};

// Seeded sample without replacement from the TBI x Control pair grid; the
// whole grid (in TBI-major order) when it has at most n_folds pairs.
SplitPlan plan_independent_validation(std::span<const std::string> subject_ids, std::span<const Group> groups,
                                      std::size_t n_folds = 15, std::uint64_t seed = 0);
SplitPlan plan_independent_validation(const Dataset& dataset, std::size_t n_folds = 15, std::uint64_t seed = 0);

void to_json(nlohmann::json& j, const Fold& f);
void from_json(const nlohmann::json& j, Fold& f);

// ---------------------------------------------------------------------------

struct Metrics {
  double epoch_accuracy = 0.0;
  double subject_accuracy = 0.0;
  std::array<std::array<std::size_t, 2>, 2> confusion{};  // [truth][predicted]
  std::size_t n_epochs = 0;
  std::size_t n_subjects = 0;

  bool operator==(const Metrics&) const = default;
};

// Subject accuracy is a per-subject majority vote; an even split counts as wrong.
Metrics score_predictions(std::span<const int> predicted, std::span<const int> truth,
                          std::span<const std::string> subject_of_row);
Metrics evaluate(const Classifier& model, const Eigen::Ref<const Eigen::MatrixXd>& rows, std::span<const int> truth,
                 std::span<const std::string> subject_of_row);

void to_json(nlohmann::json& j, const Metrics& m);
void from_json(const nlohmann::json& j, Metrics& m);

}  // namespace teashift

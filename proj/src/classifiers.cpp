#include "teashift/classifiers.hpp"

#include "teashift/error.hpp"
#include "teashift/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace teashift {

namespace {

void check_training(const Eigen::Ref<const Eigen::MatrixXd>& train, std::span<const int> labels) {
  if (train.rows() < 1) throw PreconditionError("training set is empty");
  if (static_cast<Eigen::Index>(labels.size()) != train.rows()) {
    throw ShapeMismatchError("one label per training row required");
  }
  for (int y : labels) {
    if (y < 0) throw ValidationError("labels", "must be non-negative");
  }
}

int n_classes(std::span<const int> labels) { return *std::max_element(labels.begin(), labels.end()) + 1; }

// Most frequent label; ties go to the smaller label.
int majority(const std::vector<std::size_t>& counts) {
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

double gini(const std::vector<std::size_t>& counts, std::size_t n) {
  if (n == 0) return 0.0;
  double sum_sq = 0.0;
  for (auto c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(n);
    sum_sq += p * p;
  }
  return 1.0 - sum_sq;
}

}  // namespace

std::vector<int> Classifier::predict_rows(const Eigen::Ref<const Eigen::MatrixXd>& rows) const {
  std::vector<int> out(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index r = 0; r < rows.rows(); ++r) out[static_cast<std::size_t>(r)] = predict(rows.row(r).transpose());
  return out;
}

// ---------------------------------------------------------------------------

KnnClassifier KnnClassifier::fit(const Eigen::Ref<const Eigen::MatrixXd>& train, std::span<const int> labels,
                                 std::size_t k) {
  check_training(train, labels);
  if (k < 1 || k > static_cast<std::size_t>(train.rows())) {
    throw PreconditionError("knn: k=" + std::to_string(k) + " exceeds " + std::to_string(train.rows()) +
                            " training rows");
  }
  KnnClassifier model;
  model.train_ = train;
  model.labels_.assign(labels.begin(), labels.end());
  model.k_ = k;
  return model;
}

int KnnClassifier::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != train_.cols()) throw ShapeMismatchError("knn: query width mismatch");
  const Eigen::VectorXd dist = (train_.rowwise() - x.transpose()).rowwise().norm();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(dist.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  const auto kk = static_cast<std::ptrdiff_t>(k_);
  std::partial_sort(idx.begin(), idx.begin() + kk, idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    return dist[a] != dist[b] ? dist[a] < dist[b] : a < b;
  });
  std::map<int, std::pair<std::size_t, double>> votes;  // label -> (count, summed distance)
  for (std::ptrdiff_t i = 0; i < kk; ++i) {
    auto& v = votes[labels_[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]];
    v.first += 1;
    v.second += dist[idx[static_cast<std::size_t>(i)]];
  }
  auto best = votes.begin();
  for (auto it = std::next(votes.begin()); it != votes.end(); ++it) {
    const auto& [count, summed] = it->second;
    if (count > best->second.first || (count == best->second.first && summed < best->second.second)) best = it;
  }
  return best->first;
}

nlohmann::json KnnClassifier::to_json() const {
  return {{"kind", "knn"}, {"k", k_}, {"n_train", train_.rows()}, {"n_features", train_.cols()},
          {"train_ref", train_ref}};
}

// ---------------------------------------------------------------------------

namespace {

struct TreeBuilder {
  const Eigen::Ref<const Eigen::MatrixXd>& x;
  std::span<const int> y;
  const TreeOptions& options;
  std::mt19937_64* rng;
  int classes;
  std::vector<DecisionTree::Node>& nodes;
  Eigen::VectorXd& importance;
  std::size_t n_total;

  std::vector<Eigen::Index> candidate_features() {
    const Eigen::Index d = x.cols();
    std::vector<Eigen::Index> all(static_cast<std::size_t>(d));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    const auto mtry = static_cast<std::size_t>(options.mtry);
    if (mtry == 0 || mtry >= all.size() || rng == nullptr) return all;
    // Partial Fisher-Yates, then ascending so ties still favour low indices.
    for (std::size_t i = 0; i < mtry; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
      std::swap(all[i], all[pick(*rng)]);
    }
    all.resize(mtry);
    std::sort(all.begin(), all.end());
    return all;
  }

  std::int32_t build(std::vector<Eigen::Index>& rows, std::size_t depth) {
    const auto id = static_cast<std::int32_t>(nodes.size());
    nodes.emplace_back();
    std::vector<std::size_t> counts(static_cast<std::size_t>(classes), 0);
    for (auto r : rows) ++counts[static_cast<std::size_t>(y[static_cast<std::size_t>(r)])];
    const std::size_t n = rows.size();
    const double impurity = gini(counts, n);
    {
      auto& node = nodes[static_cast<std::size_t>(id)];
      node.label = majority(counts);
      node.n_samples = n;
      node.impurity = impurity;
    }
    if (impurity <= 0.0 || depth >= options.max_depth || n < 2 * std::max<std::size_t>(1, options.min_leaf)) {
      return id;
    }

    const std::size_t min_leaf = std::max<std::size_t>(1, options.min_leaf);
    double best_score = impurity;
    Eigen::Index best_feature = -1;
    double best_threshold = 0.0;
    std::vector<Eigen::Index> sorted = rows;
    for (Eigen::Index f : candidate_features()) {
      std::sort(sorted.begin(), sorted.end(), [&](Eigen::Index a, Eigen::Index b) {
        return x(a, f) != x(b, f) ? x(a, f) < x(b, f) : a < b;
      });
      std::vector<std::size_t> left(static_cast<std::size_t>(classes), 0);
      std::vector<std::size_t> right = counts;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const int label = y[static_cast<std::size_t>(sorted[i])];
        ++left[static_cast<std::size_t>(label)];
        --right[static_cast<std::size_t>(label)];
        const double lo = x(sorted[i], f), hi = x(sorted[i + 1], f);
        if (!(lo < hi)) continue;
        const std::size_t n_left = i + 1, n_right = n - n_left;
        if (n_left < min_leaf || n_right < min_leaf) continue;
        const double score = (static_cast<double>(n_left) * gini(left, n_left) +
                              static_cast<double>(n_right) * gini(right, n_right)) /
                             static_cast<double>(n);
        if (score < best_score) {
          best_score = score;
          best_feature = f;
          double t = 0.5 * (lo + hi);
          if (!(t < hi)) t = lo;
          best_threshold = t;
        }
      }
    }
    if (best_feature < 0 || impurity - best_score <= 1e-12) return id;

    std::vector<Eigen::Index> left_rows, right_rows;
    for (auto r : rows) (x(r, best_feature) <= best_threshold ? left_rows : right_rows).push_back(r);
    importance[best_feature] += static_cast<double>(n) / static_cast<double>(n_total) * (impurity - best_score);
    rows.clear();
    rows.shrink_to_fit();

    const std::int32_t l = build(left_rows, depth + 1);
    const std::int32_t r = build(right_rows, depth + 1);
    auto& node = nodes[static_cast<std::size_t>(id)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return id;
  }
};

}  // namespace

DecisionTree DecisionTree::fit(const Eigen::Ref<const Eigen::MatrixXd>& train, std::span<const int> labels,
                               const TreeOptions& options, std::mt19937_64* rng) {
  check_training(train, labels);
  DecisionTree tree;
  tree.importance_ = Eigen::VectorXd::Zero(train.cols());
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(train.rows()));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  TreeBuilder builder{train, labels, options, rng, n_classes(labels), tree.nodes_, tree.importance_, rows.size()};
  builder.build(rows, 0);
  const double total = tree.importance_.sum();
  if (total > 0.0) tree.importance_ /= total;
  return tree;
}

int DecisionTree::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  std::size_t i = 0;
  while (nodes_[i].feature >= 0) {
    if (nodes_[i].feature >= x.size()) throw ShapeMismatchError("tree: query width mismatch");
    i = static_cast<std::size_t>(x[nodes_[i].feature] <= nodes_[i].threshold ? nodes_[i].left : nodes_[i].right);
  }
  return nodes_[i].label;
}

std::size_t DecisionTree::depth() const {
  std::vector<std::size_t> d(nodes_.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    deepest = std::max(deepest, d[i]);
    if (nodes_[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes_[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes_[i].right)] = d[i] + 1;
    }
  }
  return deepest;
}

nlohmann::json DecisionTree::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : nodes_) {
    nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right},
                     {"label", n.label}, {"n_samples", n.n_samples}, {"impurity", n.impurity}});
  }
  return {{"kind", "dt"},
          {"nodes", nodes},
          {"importance", std::vector<double>(importance_.data(), importance_.data() + importance_.size())}};
}

DecisionTree DecisionTree::from_json(const nlohmann::json& j) {
  DecisionTree tree;
  for (const auto& jn : j.at("nodes")) {
    Node n;
    n.feature = jn.at("feature").get<Eigen::Index>();
    n.threshold = jn.at("threshold").get<double>();
    n.left = jn.at("left").get<std::int32_t>();
    n.right = jn.at("right").get<std::int32_t>();
    n.label = jn.at("label").get<int>();
    n.n_samples = jn.at("n_samples").get<std::size_t>();
    n.impurity = jn.at("impurity").get<double>();
    tree.nodes_.push_back(n);
  }
  const auto imp = j.at("importance").get<std::vector<double>>();
  tree.importance_ = Eigen::Map<const Eigen::VectorXd>(imp.data(), static_cast<Eigen::Index>(imp.size()));
  return tree;
}

// ---------------------------------------------------------------------------

RandomForest RandomForest::fit(const Eigen::Ref<const Eigen::MatrixXd>& train, std::span<const int> labels,
                               const ForestOptions& options) {
  check_training(train, labels);
  if (options.n_trees < 1) throw ValidationError("n_trees", "must be >= 1");
  RandomForest forest;
  forest.n_features_ = train.cols();
  TreeOptions tree_options;
  tree_options.max_depth = options.max_depth;
  tree_options.min_leaf = options.min_leaf;
  tree_options.mtry = options.mtry != 0
                          ? options.mtry
                          : std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(train.cols()))));

  forest.trees_.resize(options.n_trees);
  const auto n = static_cast<std::size_t>(train.rows());
  parallel_for(options.n_trees, [&](std::size_t t) {
    std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32),
                      static_cast<std::uint32_t>(t)};
    std::mt19937_64 rng(seq);
    if (!options.bootstrap) {
      forest.trees_[t] = DecisionTree::fit(train, labels, tree_options, &rng);
      return;
    }
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    Eigen::MatrixXd rows(train.rows(), train.cols());
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = pick(rng);
      rows.row(static_cast<Eigen::Index>(i)) = train.row(static_cast<Eigen::Index>(r));
      y[i] = labels[r];
    }
    forest.trees_[t] = DecisionTree::fit(rows, y, tree_options, &rng);
  });
  return forest;
}

int RandomForest::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  std::vector<std::size_t> votes;
  for (const auto& tree : trees_) {
    const int label = tree.predict(x);
    if (static_cast<std::size_t>(label) >= votes.size()) votes.resize(static_cast<std::size_t>(label) + 1, 0);
    ++votes[static_cast<std::size_t>(label)];
  }
  return majority(votes);
}

Eigen::VectorXd RandomForest::importance() const {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n_features_);
  for (const auto& tree : trees_) sum += tree.importance();
  return trees_.empty() ? sum : Eigen::VectorXd(sum / static_cast<double>(trees_.size()));
}

nlohmann::json RandomForest::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : trees_) trees.push_back(t.to_json());
  return {{"kind", "rf"}, {"n_features", n_features_}, {"trees", trees}};
}

// ---------------------------------------------------------------------------

std::string ModelSpec::label() const {
  switch (kind) {
    case ModelKind::Knn: return "knn" + std::to_string(k);
    case ModelKind::DecisionTree: return "dt";
    case ModelKind::RandomForest: return "rf";
  }
  return "?";
}

std::unique_ptr<Classifier> train_model(const ModelSpec& spec, const Eigen::Ref<const Eigen::MatrixXd>& train,
                                        std::span<const int> labels, std::uint64_t seed) {
  switch (spec.kind) {
    case ModelKind::Knn:
      return std::make_unique<KnnClassifier>(KnnClassifier::fit(train, labels, spec.k));
    case ModelKind::DecisionTree:
      return std::make_unique<DecisionTree>(DecisionTree::fit(train, labels, spec.tree));
    case ModelKind::RandomForest: {
      ForestOptions options = spec.forest;
      options.seed = seed;
      return std::make_unique<RandomForest>(RandomForest::fit(train, labels, options));
    }
  }
  throw ValidationError("kind", "unknown model kind");
}

void to_json(nlohmann::json& j, const ModelSpec& spec) {
  switch (spec.kind) {
    case ModelKind::Knn:
      j = {{"kind", "knn"}, {"k", spec.k}};
      break;
    case ModelKind::DecisionTree:
      j = {{"kind", "dt"}, {"min_leaf", spec.tree.min_leaf}};
      if (spec.tree.max_depth != std::numeric_limits<std::size_t>::max()) j["max_depth"] = spec.tree.max_depth;
      break;
    case ModelKind::RandomForest:
      j = {{"kind", "rf"}, {"n_trees", spec.forest.n_trees}, {"mtry", spec.forest.mtry},
           {"bootstrap", spec.forest.bootstrap}, {"min_leaf", spec.forest.min_leaf}};
      if (spec.forest.max_depth != std::numeric_limits<std::size_t>::max()) j["max_depth"] = spec.forest.max_depth;
      break;
  }
}

void from_json(const nlohmann::json& j, ModelSpec& spec) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "knn") {
    spec.kind = ModelKind::Knn;
    spec.k = j.value("k", std::size_t{5});
    if (spec.k < 1) throw ValidationError("k", "must be >= 1");
  } else if (kind == "dt") {
    spec.kind = ModelKind::DecisionTree;
    spec.tree.min_leaf = j.value("min_leaf", std::size_t{1});
    spec.tree.max_depth = j.value("max_depth", std::numeric_limits<std::size_t>::max());
  } else if (kind == "rf") {
    spec.kind = ModelKind::RandomForest;
    spec.forest.n_trees = j.value("n_trees", std::size_t{100});
    spec.forest.mtry = j.value("mtry", std::size_t{0});
    spec.forest.bootstrap = j.value("bootstrap", true);
    spec.forest.min_leaf = j.value("min_leaf", std::size_t{1});
    spec.forest.max_depth = j.value("max_depth", std::numeric_limits<std::size_t>::max());
    if (spec.forest.n_trees < 1) throw ValidationError("n_trees", "must be >= 1");
  } else {
    throw ValidationError("kind", "unknown model kind '" + kind + "' (expected knn, dt or rf)");
  }
}

// ---------------------------------------------------------------------------

SplitPlan plan_independent_validation(std::span<const std::string> subject_ids, std::span<const Group> groups,
                                      std::size_t n_folds, std::uint64_t seed) {
  if (subject_ids.size() != groups.size()) throw ShapeMismatchError("one group per subject required");
  std::vector<std::string> tbi, control;
  for (std::size_t i = 0; i < subject_ids.size(); ++i) {
    (groups[i] == Group::TBI ? tbi : control).push_back(subject_ids[i]);
  }
  if (tbi.size() < 2 || control.size() < 2) {
    throw PreconditionError("independent validation needs at least 2 subjects per class (have " +
                            std::to_string(tbi.size()) + " TBI, " + std::to_string(control.size()) + " Control)");
  }
  std::vector<std::pair<std::size_t, std::size_t>> grid;
  for (std::size_t t = 0; t < tbi.size(); ++t) {
    for (std::size_t c = 0; c < control.size(); ++c) grid.emplace_back(t, c);
  }
  if (grid.size() > n_folds) {
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < n_folds; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, grid.size() - 1);
      std::swap(grid[i], grid[pick(rng)]);
    }
    grid.resize(n_folds);
  }
  SplitPlan plan;
  for (const auto& [t, c] : grid) {
    Fold fold{tbi[t], control[c], {}};
    for (const auto& id : subject_ids) {
      if (!fold.is_test(id)) fold.train_subject_ids.push_back(id);
    }
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

SplitPlan plan_independent_validation(const Dataset& dataset, std::size_t n_folds, std::uint64_t seed) {
  std::vector<std::string> ids;
  std::vector<Group> groups;
  for (const auto& s : dataset.subjects) {
    ids.push_back(s.subject_id);
    groups.push_back(s.group);
  }
  return plan_independent_validation(ids, groups, n_folds, seed);
}

void to_json(nlohmann::json& j, const Fold& f) {
  j = {{"test_tbi", f.test_tbi}, {"test_control", f.test_control}, {"train_subject_ids", f.train_subject_ids}};
}

void from_json(const nlohmann::json& j, Fold& f) {
  f.test_tbi = j.at("test_tbi").get<std::string>();
  f.test_control = j.at("test_control").get<std::string>();
  f.train_subject_ids = j.at("train_subject_ids").get<std::vector<std::string>>();
}

// ---------------------------------------------------------------------------

Metrics score_predictions(std::span<const int> predicted, std::span<const int> truth,
                          std::span<const std::string> subject_of_row) {
  if (predicted.size() != truth.size() || truth.size() != subject_of_row.size()) {
    throw ShapeMismatchError("score_predictions: predictions, labels and subjects differ in length");
  }
  if (truth.empty()) throw PreconditionError("score_predictions: empty test set");
  Metrics m;
  m.n_epochs = truth.size();
  std::size_t correct = 0;
  // subject -> (truth label, votes per predicted label)
  std::map<std::string, std::pair<int, std::map<int, std::size_t>>> subjects;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] == truth[i]) ++correct;
    if (truth[i] >= 0 && truth[i] < 2 && predicted[i] >= 0 && predicted[i] < 2) {
      ++m.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    }
    auto& s = subjects[subject_of_row[i]];
    s.first = truth[i];
    ++s.second[predicted[i]];
  }
  m.epoch_accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  std::size_t subjects_correct = 0;
  for (const auto& [id, entry] : subjects) {
    const auto& [label, votes] = entry;
    std::size_t best = 0, runner_up = 0;
    int winner = -1;
    for (const auto& [l, count] : votes) {
      if (count > best) {
        runner_up = best;
        best = count;
        winner = l;
      } else if (count > runner_up) {
        runner_up = count;
      }
    }
    if (best > runner_up && winner == label) ++subjects_correct;
  }
  m.n_subjects = subjects.size();
  m.subject_accuracy = static_cast<double>(subjects_correct) / static_cast<double>(subjects.size());
  return m;
}

Metrics evaluate(const Classifier& model, const Eigen::Ref<const Eigen::MatrixXd>& rows, std::span<const int> truth,
                 std::span<const std::string> subject_of_row) {
  const auto predicted = model.predict_rows(rows);
  return score_predictions(predicted, truth, subject_of_row);
}

void to_json(nlohmann::json& j, const Metrics& m) {
  j = {{"epoch_accuracy", m.epoch_accuracy}, {"subject_accuracy", m.subject_accuracy},
       {"confusion", m.confusion},           {"n_epochs", m.n_epochs},
       {"n_subjects", m.n_subjects}};
}

void from_json(const nlohmann::json& j, Metrics& m) {
  m.epoch_accuracy = j.at("epoch_accuracy").get<double>();
  m.subject_accuracy = j.at("subject_accuracy").get<double>();
  m.confusion = j.at("confusion").get<std::array<std::array<std::size_t, 2>, 2>>();
  m.n_epochs = j.at("n_epochs").get<std::size_t>();
  m.n_subjects = j.at("n_subjects").get<std::size_t>();
}

}  // namespace teashift

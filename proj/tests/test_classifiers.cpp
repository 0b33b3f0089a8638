#include "teashift/classifiers.hpp"
#include "teashift/error.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <random>
#include <set>

using namespace teashift;

namespace {

struct Blobs {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

Blobs blobs(Eigen::Index n, Eigen::Index d, double sep, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Blobs b;
  b.x.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    for (Eigen::Index c = 0; c < d; ++c) b.x(i, c) = g(rng) + (c == 0 ? sep * label : 0.0);
    b.y.push_back(label);
  }
  return b;
}

std::vector<std::string> ids(std::initializer_list<const char*> l) { return {l.begin(), l.end()}; }

}  // namespace

TEST_CASE("knn") {
  Eigen::MatrixXd x(4, 1);
  x << 0.0, 1.0, 2.0, 10.0;
  SUBCASE("k=1 on a training point") {
    const std::vector<int> y{0, 1, 0, 1};
    const auto m = KnnClassifier::fit(x, y, 1);
    for (int i = 0; i < 4; ++i) CHECK(m.predict(x.row(i).transpose()) == y[static_cast<std::size_t>(i)]);
  }
  SUBCASE("k=3 majority") {
    const std::vector<int> y{1, 1, 0, 0};
    CHECK(KnnClassifier::fit(x, y, 3).predict(Eigen::VectorXd::Constant(1, 0.9)) == 1);
  }
  SUBCASE("k=2 tie goes to the nearer neighbour") {
    const std::vector<int> y{1, 0, 1, 1};
    CHECK(KnnClassifier::fit(x, y, 2).predict(Eigen::VectorXd::Constant(1, 0.4)) == 1);
    CHECK(KnnClassifier::fit(x, y, 2).predict(Eigen::VectorXd::Constant(1, 0.6)) == 0);
  }
  SUBCASE("full tie goes to the smaller label") {
    Eigen::MatrixXd s(2, 1);
    s << -1.0, 1.0;
    const std::vector<int> y{1, 0};
    CHECK(KnnClassifier::fit(s, y, 2).predict(Eigen::VectorXd::Zero(1)) == 0);
  }
  SUBCASE("k larger than the training set") {
    const std::vector<int> y{0, 1, 0, 1};
    CHECK_THROWS_AS(KnnClassifier::fit(x, y, 5), PreconditionError);
    CHECK_THROWS_AS(KnnClassifier::fit(x, y, 0), PreconditionError);
  }
}

TEST_CASE("knn predictions survive orthogonal transforms") {
  const Blobs train = blobs(80, 5, 1.0, 1);
  const Blobs test = blobs(40, 5, 1.0, 2);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  Eigen::MatrixXd a(5, 5);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
  const auto m1 = KnnClassifier::fit(train.x, train.y, 5);
  const auto m2 = KnnClassifier::fit(train.x * q, train.y, 5);
  CHECK(m1.predict_rows(test.x) == m2.predict_rows(test.x * q));
  // Distances themselves are preserved.
  const Eigen::MatrixXd rq = train.x * q;
  CHECK(std::abs((rq.row(0) - rq.row(1)).norm() - (train.x.row(0) - train.x.row(1)).norm()) <= 1e-9);
}

TEST_CASE("decision tree") {
  SUBCASE("single class is a single leaf") {
    const Blobs b = blobs(10, 2, 0.0, 1);
    const std::vector<int> y(10, 1);
    const auto t = DecisionTree::fit(b.x, y);
    CHECK(t.nodes().size() == 1);
    CHECK(t.predict(Eigen::VectorXd::Constant(2, 99.0)) == 1);
    CHECK(t.importance().isZero(0.0));
  }
  SUBCASE("separable at zero is one split") {
    Eigen::MatrixXd x(6, 1);
    x << -3, -2, -1, 1, 2, 3;
    const std::vector<int> y{0, 0, 0, 1, 1, 1};
    const auto t = DecisionTree::fit(x, y);
    CHECK(t.depth() == 1);
    CHECK(t.nodes()[0].threshold == 0.0);
    CHECK(t.predict_rows(x) == y);
    CHECK(t.importance()[0] == doctest::Approx(1.0));
  }
  SUBCASE("ties prefer the lowest feature index") {
    Eigen::MatrixXd x(4, 2);
    x << 0, 0, 0, 0, 1, 1, 1, 1;
    const std::vector<int> y{0, 0, 1, 1};
    CHECK(DecisionTree::fit(x, y).nodes()[0].feature == 0);
  }
  SUBCASE("importance sums to one and JSON round-trips") {
    const Blobs b = blobs(120, 4, 1.5, 5);
    const auto t = DecisionTree::fit(b.x, b.y, TreeOptions{4, 2, 0});
    CHECK(t.importance().sum() == doctest::Approx(1.0));
    CHECK(t.depth() <= 4);
    const auto back = DecisionTree::from_json(t.to_json());
    CHECK(back.predict_rows(b.x) == t.predict_rows(b.x));
    CHECK(back.importance() == t.importance());
  }
}

TEST_CASE("random forest") {
  const Blobs train = blobs(150, 6, 2.0, 7);
  const Blobs test = blobs(60, 6, 2.0, 8);
  SUBCASE("one tree, no bootstrap, all features is plain CART") {
    ForestOptions o;
    o.n_trees = 1;
    o.bootstrap = false;
    o.mtry = 6;
    const auto f = RandomForest::fit(train.x, train.y, o);
    const auto t = DecisionTree::fit(train.x, train.y);
    CHECK(f.predict_rows(test.x) == t.predict_rows(test.x));
    CHECK(f.importance() == t.importance());
  }
  SUBCASE("same seed, same forest") {
    ForestOptions o;
    o.n_trees = 25;
    o.seed = 99;
    const auto a = RandomForest::fit(train.x, train.y, o);
    const auto b = RandomForest::fit(train.x, train.y, o);
    CHECK(a.predict_rows(test.x) == b.predict_rows(test.x));
    CHECK(a.importance() == b.importance());
    CHECK(a.to_json() == b.to_json());
  }
  SUBCASE("the informative feature ranks first") {
    ForestOptions o;
    o.n_trees = 50;
    o.seed = 1;
    const Eigen::VectorXd imp = RandomForest::fit(train.x, train.y, o).importance();
    Eigen::Index best = -1;
    imp.maxCoeff(&best);
    CHECK(best == 0);
    CHECK(imp.sum() == doctest::Approx(1.0));
  }
}

TEST_CASE("model specs") {
  ModelSpec s;
  CHECK(s.label() == "knn5");
  nlohmann::json j = {{"kind", "rf"}};
  const ModelSpec rf = j.get<ModelSpec>();
  CHECK(rf.kind == ModelKind::RandomForest);
  CHECK(rf.label() == "rf");
  const nlohmann::json back = rf;
  CHECK(back.get<ModelSpec>().label() == "rf");
  const Blobs b = blobs(40, 3, 3.0, 4);
  for (const char* kind : {"knn", "dt", "rf"}) {
    const auto model = train_model(nlohmann::json{{"kind", kind}}.get<ModelSpec>(), b.x, b.y, 3);
    CHECK(model->predict_rows(b.x).size() == 40);
  }
}

TEST_CASE("split plan") {
  std::vector<std::string> subjects;
  std::vector<Group> groups;
  for (int i = 0; i < 6; ++i) {
    subjects.push_back("t" + std::to_string(i));
    groups.push_back(Group::TBI);
    subjects.push_back("c" + std::to_string(i));
    groups.push_back(Group::Control);
  }
  SUBCASE("15 distinct folds from a 6 x 6 grid") {
    const SplitPlan plan = plan_independent_validation(subjects, groups, 15, 3);
    REQUIRE(plan.folds.size() == 15);
    std::set<std::pair<std::string, std::string>> pairs;
    for (const auto& f : plan.folds) {
      CHECK(f.test_tbi.front() == 't');
      CHECK(f.test_control.front() == 'c');
      pairs.emplace(f.test_tbi, f.test_control);
      CHECK(f.train_subject_ids.size() == 10);
      std::set<std::string> all(f.train_subject_ids.begin(), f.train_subject_ids.end());
      CHECK_FALSE(all.contains(f.test_tbi));
      CHECK_FALSE(all.contains(f.test_control));
      all.insert(f.test_tbi);
      all.insert(f.test_control);
      CHECK(all.size() == 12);
    }
    CHECK(pairs.size() == 15);
    CHECK(plan_independent_validation(subjects, groups, 15, 3) == plan);
    CHECK_FALSE(plan_independent_validation(subjects, groups, 15, 4) == plan);
  }
  SUBCASE("2 x 2 caps at 4 folds") {
    const auto s = ids({"t0", "t1", "c0", "c1"});
    const std::vector<Group> g{Group::TBI, Group::TBI, Group::Control, Group::Control};
    CHECK(plan_independent_validation(s, g, 15, 0).folds.size() == 4);
  }
  SUBCASE("a class with one subject") {
    const auto s = ids({"t0", "c0", "c1"});
    const std::vector<Group> g{Group::TBI, Group::Control, Group::Control};
    CHECK_THROWS_AS(plan_independent_validation(s, g, 15, 0), PreconditionError);
  }
}

TEST_CASE("metrics") {
  const auto subj = ids({"a", "a", "a", "b", "b", "b"});
  const std::vector<int> truth{1, 1, 1, 0, 0, 0};
  SUBCASE("all correct") {
    const Metrics m = score_predictions(truth, truth, subj);
    CHECK(m.epoch_accuracy == 1.0);
    CHECK(m.subject_accuracy == 1.0);
    CHECK(m.confusion[0][1] == 0);
    CHECK(m.confusion[1][0] == 0);
    CHECK(m.n_epochs == 6);
  }
  SUBCASE("constant prediction on a balanced set") {
    const std::vector<int> pred(6, 1);
    const Metrics m = score_predictions(pred, truth, subj);
    CHECK(m.epoch_accuracy == 0.5);
    CHECK(m.subject_accuracy == 0.5);
    CHECK(m.confusion[0][1] == 3);
  }
  SUBCASE("two of three epochs right is a correct subject") {
    const std::vector<int> pred{1, 1, 0, 0, 0, 0};
    CHECK(score_predictions(pred, truth, subj).subject_accuracy == 1.0);
  }
  SUBCASE("an even split counts as wrong") {
    const auto two = ids({"a", "a"});
    const std::vector<int> t{1, 1}, p{1, 0};
    CHECK(score_predictions(p, t, two).subject_accuracy == 0.0);
  }
  SUBCASE("JSON round trip") {
    const Metrics m = score_predictions(std::vector<int>{1, 0, 0, 0, 1, 0}, truth, subj);
    CHECK(nlohmann::json(m).get<Metrics>() == m);
  }
}

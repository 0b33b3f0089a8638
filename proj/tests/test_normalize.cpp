#include "teashift/error.hpp"
#include "teashift/normalize.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace teashift;

namespace {

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::ArrayXd x = a.array() - a.mean();
  const Eigen::ArrayXd y = b.array() - b.mean();
  return (x * y).sum() / std::sqrt(x.square().sum() * y.square().sum());
}

// 50 noise columns; label is a threshold on the sum of columns 3, 11, 19, 27, 42.
struct Planted {
  Eigen::MatrixXd x;
  std::vector<int> labels;
  std::vector<Eigen::Index> informative{3, 11, 19, 27, 42};
};

Planted planted(std::uint64_t seed) {
  Planted p;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  p.x.resize(300, 50);
  for (Eigen::Index i = 0; i < p.x.size(); ++i) p.x.data()[i] = g(rng);
  for (Eigen::Index r = 0; r < p.x.rows(); ++r) {
    double s = 0.0;
    for (auto c : p.informative) s += p.x(r, c);
    p.labels.push_back(s > 0.0 ? 1 : 0);
  }
  return p;
}

}  // namespace

TEST_CASE("transform kinds follow feature names") {
  CHECK(transform_kind_for("ch0.delta.rel_power") == TransformKind::RelPower);
  CHECK(transform_kind_for("ch0-ch1.alpha.coherence") == TransformKind::Coherence);
  CHECK(transform_kind_for("ch0-ch1.alpha.asymmetry") == TransformKind::Asymmetry);
  CHECK(transform_kind_for("ch0.spectral_entropy") == TransformKind::SpectralEntropy);
  CHECK(transform_kind_for("ch0.delta.abs_power") == TransformKind::None);
  CHECK(transform_kind_for("ch0-ch1.alpha.plv") == TransformKind::None);
}

TEST_CASE("logit transform values") {
  CHECK(logit_transform(0.5, TransformKind::RelPower) == 0.0);
  CHECK(logit_transform(0.0, TransformKind::Asymmetry) == 0.0);
  CHECK(logit_transform(0.9, TransformKind::Coherence) == doctest::Approx(std::log(9.0)).epsilon(1e-12));
  CHECK(logit_transform(0.75, TransformKind::SpectralEntropy) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(logit_transform(1.0, TransformKind::Asymmetry) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(logit_transform(7.5, TransformKind::None) == 7.5);
  CHECK(std::isfinite(logit_transform(1.0, TransformKind::RelPower)));
  CHECK(std::isfinite(logit_transform(0.0, TransformKind::Coherence)));
  CHECK(needs_clip(1.0, TransformKind::RelPower));
  CHECK_FALSE(needs_clip(0.3, TransformKind::RelPower));
}

TEST_CASE("logit transforms are strictly monotone") {
  std::mt19937_64 rng(42);
  for (auto [kind, lo, hi] : {std::tuple{TransformKind::RelPower, 1e-6, 1.0 - 1e-6},
                              std::tuple{TransformKind::Coherence, 1e-6, 1.0 - 1e-6},
                              std::tuple{TransformKind::SpectralEntropy, 1e-6, 1.0 - 1e-6},
                              std::tuple{TransformKind::Asymmetry, -2.0 + 1e-6, 2.0 - 1e-6}}) {
    std::uniform_real_distribution<double> u(lo, hi);
    int violations = 0;
    for (int i = 0; i < 2500; ++i) {
      const double a = u(rng), b = u(rng);
      if (a == b) continue;
      const bool ordered = (a < b) == (logit_transform(a, kind) < logit_transform(b, kind));
      if (!ordered) ++violations;
    }
    CHECK(violations == 0);
  }
}

TEST_CASE("apply_log_transforms counts clipped values") {
  FeatureMatrix f{Eigen::MatrixXd(2, 2), {"ch0.delta.rel_power", "ch0.delta.abs_power"}};
  f.values << 1.0, 5.0, 0.5, 6.0;
  const auto stats = apply_log_transforms(f);
  CHECK(stats.clipped == 1);
  CHECK(f.values(1, 0) == 0.0);
  CHECK(f.values(0, 1) == 5.0);
}

TEST_CASE("age regression") {
  SUBCASE("exact line gives its slope") {
    std::vector<double> ages{2, 5, 10, 30, 70};
    Eigen::MatrixXd x(5, 1);
    for (int i = 0; i < 5; ++i) x(i, 0) = 5.0 * std::log10(ages[static_cast<std::size_t>(i)]) + 1.0;
    const AgeModel m = fit_age_regression(x, ages);
    CHECK(m.slopes[0] == doctest::Approx(5.0).epsilon(1e-9));
    CHECK(m.intercepts[0] == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("two points a decade apart") {
    std::vector<double> ages{10, 100};
    Eigen::MatrixXd x(2, 1);
    x << 1, 2;
    CHECK(fit_age_regression(x, ages).slopes[0] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("age-independent feature has a slope within three standard errors of zero") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> age(1.0, 80.0);
    std::normal_distribution<double> g;
    std::vector<double> ages(400);
    Eigen::MatrixXd x(400, 1);
    for (int i = 0; i < 400; ++i) {
      ages[static_cast<std::size_t>(i)] = age(rng);
      x(i, 0) = g(rng);
    }
    const AgeModel m = fit_age_regression(x, ages);
    Eigen::VectorXd lx(400);
    for (int i = 0; i < 400; ++i) lx[i] = std::log10(ages[static_cast<std::size_t>(i)]);
    const Eigen::VectorXd resid = x.col(0).array() - m.intercepts[0] - m.slopes[0] * lx.array();
    const double se = std::sqrt(resid.squaredNorm() / 398.0 / (lx.array() - lx.mean()).square().sum());
    CHECK(std::abs(m.slopes[0]) < 3.0 * se);
  }
  SUBCASE("residuals are uncorrelated with log age") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> age(1.0, 60.0);
    std::normal_distribution<double> g;
    std::vector<double> ages(120);
    Eigen::MatrixXd x(120, 4);
    Eigen::VectorXd lx(120);
    for (int i = 0; i < 120; ++i) {
      ages[static_cast<std::size_t>(i)] = age(rng);
      lx[i] = std::log10(ages[static_cast<std::size_t>(i)]);
      for (int c = 0; c < 4; ++c) x(i, c) = (c - 1.5) * lx[i] + g(rng);
    }
    const AgeModel m = fit_age_regression(x, ages);
    Eigen::MatrixXd y = x;
    apply_age_regression(y, ages, m);
    for (int c = 0; c < 4; ++c) CHECK(std::abs(pearson(y.col(c), lx)) <= 1e-6);
  }
  SUBCASE("apply examples") {
    AgeModel m;
    m.slopes = Eigen::VectorXd::Constant(1, 2.0);
    m.intercepts = Eigen::VectorXd::Constant(1, 0.5);
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 3.0);
    CHECK(apply_age_regression(x, 10.0, m)[0] == doctest::Approx(1.0));
    CHECK(apply_age_regression(x, 1.0, m)[0] == 3.0);
    m.subtract_intercept = true;
    CHECK(apply_age_regression(x, 10.0, m)[0] == doctest::Approx(0.5));
    m.slopes.setZero();
    m.subtract_intercept = false;
    CHECK(apply_age_regression(x, 42.0, m) == x);
    CHECK_THROWS_AS(apply_age_regression(x, 0.0, m), ValidationError);
  }
  SUBCASE("equal ages") {
    std::vector<double> ages{4, 4, 4};
    CHECK_THROWS_AS(fit_age_regression(Eigen::MatrixXd::Ones(3, 2), ages), PreconditionError);
  }
}

TEST_CASE("standardizer") {
  Eigen::MatrixXd x(2, 3);
  x << 1, 7, 10, 3, 7, 20;
  const Standardizer s = standardize_fit(x);
  CHECK(s.kept == std::vector<Eigen::Index>{0, 2});
  CHECK(s.dropped == std::vector<Eigen::Index>{1});
  CHECK(s.mean[0] == 2.0);
  CHECK(s.stddev[0] == 1.0);
  const Eigen::MatrixXd z = standardize_apply(x, s);
  CHECK(z(0, 0) == -1.0);
  CHECK(z(1, 0) == 1.0);

  Eigen::MatrixXd unseen(1, 3);
  unseen << 4, 0, 15;
  CHECK(standardize_apply(unseen, s)(0, 0) == 2.0);
  CHECK(standardize_row(unseen.row(0).transpose(), s) == standardize_apply(unseen, s).row(0).transpose());

  SUBCASE("training columns come out with mean 0 and sd 1") {
    Eigen::MatrixXd r = Eigen::MatrixXd::Random(200, 6) * 5.0;
    r.col(2).array() += 100.0;
    const Eigen::MatrixXd t = standardize_apply(r, standardize_fit(r));
    for (Eigen::Index c = 0; c < t.cols(); ++c) {
      CHECK(std::abs(t.col(c).mean()) <= 1e-9);
      CHECK(std::abs(std::sqrt(t.col(c).array().square().mean()) - 1.0) <= 1e-9);
    }
  }
  SUBCASE("JSON round trip") {
    const Standardizer back = nlohmann::json(s).get<Standardizer>();
    CHECK(back.mean == s.mean);
    CHECK(back.stddev == s.stddev);
    CHECK(back.kept == s.kept);
    CHECK(back.n_inputs == 3);
  }
}

TEST_CASE("rfe_select") {
  const Planted p = planted(7);
  SUBCASE("planted features survive") {
    RfeOptions o;
    o.target_k = 5;
    o.step = 3;
    o.n_trees = 60;
    o.seed = 1;
    const RfeResult r = rfe_select(p.x, p.labels, o);
    REQUIRE(r.selected.size() == 5);
    int hits = 0;
    for (auto c : p.informative) hits += std::count(r.selected.begin(), r.selected.end(), c) > 0;
    CHECK(hits >= 4);
    for (std::size_t t = 1; t < r.rounds.size(); ++t) {
      CHECK(r.rounds[t].size() < r.rounds[t - 1].size());
      for (auto c : r.rounds[t]) CHECK(std::count(r.rounds[t - 1].begin(), r.rounds[t - 1].end(), c) == 1);
    }
    CHECK(r.elimination_order.size() == 45);
    CHECK(rfe_select(p.x, p.labels, o).selected == r.selected);
  }
  SUBCASE("target_k = n is the identity") {
    RfeOptions o;
    o.target_k = 50;
    const RfeResult r = rfe_select(p.x, p.labels, o);
    CHECK(r.selected.size() == 50);
    CHECK(r.rounds.empty());
  }
  SUBCASE("one large step is one round") {
    RfeOptions o;
    o.target_k = 10;
    o.step = 40;
    o.n_trees = 20;
    const RfeResult r = rfe_select(p.x, p.labels, o);
    CHECK(r.rounds.size() == 1);
    CHECK(r.selected.size() == 10);
  }
  SUBCASE("single class") {
    std::vector<int> same(p.labels.size(), 1);
    CHECK_THROWS_AS(rfe_select(p.x, same, RfeOptions{5, 1, 10, 0}), PreconditionError);
  }
}

#include "teashift/normalize.hpp"

#include "teashift/classifiers.hpp"
#include "teashift/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace teashift {

namespace {

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

TransformKind transform_kind_for(std::string_view name) {
  if (ends_with(name, ".rel_power")) return TransformKind::RelPower;
  if (ends_with(name, ".coherence")) return TransformKind::Coherence;
  if (ends_with(name, ".asymmetry")) return TransformKind::Asymmetry;
  if (ends_with(name, ".spectral_entropy")) return TransformKind::SpectralEntropy;
  return TransformKind::None;
}

bool needs_clip(double v, TransformKind kind) {
  switch (kind) {
    case TransformKind::RelPower:
    case TransformKind::Coherence:
    case TransformKind::SpectralEntropy:
      return v < kLogitClip || v > 1.0 - kLogitClip;
    case TransformKind::Asymmetry:
      return v < -2.0 + kLogitClip || v > 2.0 - kLogitClip;
    case TransformKind::None:
      return false;
  }
  return false;
}

double logit_transform(double v, TransformKind kind) {
  switch (kind) {
    case TransformKind::RelPower:
    case TransformKind::Coherence: {
      const double c = std::clamp(v, kLogitClip, 1.0 - kLogitClip);
      return std::log(c / (1.0 - c));
    }
    case TransformKind::Asymmetry: {
      const double c = std::clamp(v, -2.0 + kLogitClip, 2.0 - kLogitClip);
      return std::log((2.0 + c) / (2.0 - c));
    }
    case TransformKind::SpectralEntropy: {
      const double c = std::clamp(v, kLogitClip, 1.0 - kLogitClip);
      return -std::log(1.0 - c);
    }
    case TransformKind::None:
      return v;
  }
  return v;
}

LogTransformStats apply_log_transforms(FeatureMatrix& features) {
  LogTransformStats stats;
  for (Eigen::Index c = 0; c < features.cols(); ++c) {
    const TransformKind kind = transform_kind_for(features.names[static_cast<std::size_t>(c)]);
    if (kind == TransformKind::None) continue;
    for (Eigen::Index r = 0; r < features.rows(); ++r) {
      double& v = features.values(r, c);
      if (needs_clip(v, kind)) ++stats.clipped;
      v = logit_transform(v, kind);
    }
  }
  return stats;
}

AgeModel fit_age_regression(const Eigen::Ref<const Eigen::MatrixXd>& features, std::span<const double> ages) {
  if (static_cast<Eigen::Index>(ages.size()) != features.rows()) {
    throw ShapeMismatchError("fit_age_regression: one age per row required");
  }
  Eigen::VectorXd x(features.rows());
  for (Eigen::Index r = 0; r < x.size(); ++r) {
    if (!(ages[static_cast<std::size_t>(r)] > 0.0)) throw ValidationError("age_years", "must be positive");
    x[r] = std::log10(ages[static_cast<std::size_t>(r)]);
  }
  const Eigen::VectorXd xc = x.array() - x.mean();
  const double sxx = xc.squaredNorm();
  if (!(sxx > 0.0)) throw PreconditionError("fit_age_regression: need at least two distinct ages");

  AgeModel model;
  const Eigen::RowVectorXd means = features.colwise().mean();
  model.slopes = (features.rowwise() - means).transpose() * xc / sxx;
  model.intercepts = means.transpose() - model.slopes * x.mean();
  model.n_fitted = static_cast<std::size_t>(features.rows());
  return model;
}

Eigen::VectorXd apply_age_regression(const Eigen::Ref<const Eigen::VectorXd>& x, double age_years,
                                     const AgeModel& model) {
  if (!(age_years > 0.0)) throw ValidationError("age_years", "must be positive");
  if (x.size() != model.slopes.size()) throw ShapeMismatchError("apply_age_regression: width mismatch");
  Eigen::VectorXd y = x - std::log10(age_years) * model.slopes;
  if (model.subtract_intercept) y -= model.intercepts;
  return y;
}

void apply_age_regression(Eigen::Ref<Eigen::MatrixXd> rows, std::span<const double> ages, const AgeModel& model) {
  if (static_cast<Eigen::Index>(ages.size()) != rows.rows()) {
    throw ShapeMismatchError("apply_age_regression: one age per row required");
  }
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    rows.row(r) = apply_age_regression(rows.row(r).transpose(), ages[static_cast<std::size_t>(r)], model).transpose();
  }
}

Standardizer standardize_fit(const Eigen::Ref<const Eigen::MatrixXd>& train) {
  if (train.rows() < 1) throw PreconditionError("standardize_fit: no training rows");
  Standardizer s;
  s.n_inputs = train.cols();
  std::vector<double> means, sds;
  for (Eigen::Index c = 0; c < train.cols(); ++c) {
    const double mean = train.col(c).mean();
    const double sd = std::sqrt((train.col(c).array() - mean).square().mean());
    if (sd > 1e-12 * std::max(std::abs(mean), std::numeric_limits<double>::min())) {
      s.kept.push_back(c);
      means.push_back(mean);
      sds.push_back(sd);
    } else {
      s.dropped.push_back(c);
    }
  }
  s.mean = Eigen::Map<Eigen::VectorXd>(means.data(), static_cast<Eigen::Index>(means.size()));
  s.stddev = Eigen::Map<Eigen::VectorXd>(sds.data(), static_cast<Eigen::Index>(sds.size()));
  return s;
}

Eigen::VectorXd standardize_row(const Eigen::Ref<const Eigen::VectorXd>& x, const Standardizer& s) {
  if (x.size() != s.n_inputs) throw ShapeMismatchError("standardize_apply: width mismatch");
  Eigen::VectorXd out(static_cast<Eigen::Index>(s.kept.size()));
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out[i] = (x[s.kept[static_cast<std::size_t>(i)]] - s.mean[i]) / s.stddev[i];
  }
  return out;
}

Eigen::MatrixXd standardize_apply(const Eigen::Ref<const Eigen::MatrixXd>& rows, const Standardizer& s) {
  if (rows.cols() != s.n_inputs) throw ShapeMismatchError("standardize_apply: width mismatch");
  Eigen::MatrixXd out(rows.rows(), static_cast<Eigen::Index>(s.kept.size()));
  for (Eigen::Index i = 0; i < out.cols(); ++i) {
    out.col(i) = (rows.col(s.kept[static_cast<std::size_t>(i)]).array() - s.mean[i]) / s.stddev[i];
  }
  return out;
}

namespace {

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void to_json(nlohmann::json& j, const AgeModel& m) {
  j = nlohmann::json{{"slopes", to_vec(m.slopes)},
                     {"intercepts", to_vec(m.intercepts)},
                     {"n_fitted", m.n_fitted},
                     {"subtract_intercept", m.subtract_intercept}};
}

void from_json(const nlohmann::json& j, AgeModel& m) {
  m.slopes = from_vec(j.at("slopes").get<std::vector<double>>());
  m.intercepts = from_vec(j.at("intercepts").get<std::vector<double>>());
  m.n_fitted = j.at("n_fitted").get<std::size_t>();
  m.subtract_intercept = j.value("subtract_intercept", false);
}

void to_json(nlohmann::json& j, const Standardizer& s) {
  j = nlohmann::json{{"mean", to_vec(s.mean)},
                     {"stddev", to_vec(s.stddev)},
                     {"kept", s.kept},
                     {"dropped", s.dropped},
                     {"n_inputs", s.n_inputs}};
}

void from_json(const nlohmann::json& j, Standardizer& s) {
  s.mean = from_vec(j.at("mean").get<std::vector<double>>());
  s.stddev = from_vec(j.at("stddev").get<std::vector<double>>());
  s.kept = j.at("kept").get<std::vector<Eigen::Index>>();
  s.dropped = j.at("dropped").get<std::vector<Eigen::Index>>();
  s.n_inputs = j.at("n_inputs").get<Eigen::Index>();
}

RfeResult rfe_select(const Eigen::Ref<const Eigen::MatrixXd>& features, std::span<const int> labels,
                     const RfeOptions& options) {
  const Eigen::Index n_features = features.cols();
  if (options.target_k < 1 || static_cast<Eigen::Index>(options.target_k) > n_features) {
    throw ValidationError("target_k", "must lie in [1, n_features]");
  }
  if (options.step < 1) throw ValidationError("step", "must be >= 1");
  if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
    throw ShapeMismatchError("rfe_select: one label per row required");
  }
  if (std::set<int>(labels.begin(), labels.end()).size() < 2) {
    throw PreconditionError("rfe_select: labels contain a single class");
  }

  RfeResult result;
  std::vector<Eigen::Index> survivors(static_cast<std::size_t>(n_features));
  std::iota(survivors.begin(), survivors.end(), Eigen::Index{0});
  ForestOptions forest_options;
  forest_options.n_trees = options.n_trees;
  forest_options.seed = options.seed;

  while (survivors.size() > options.target_k) {
    result.rounds.push_back(survivors);
    Eigen::MatrixXd subset(features.rows(), static_cast<Eigen::Index>(survivors.size()));
    for (std::size_t i = 0; i < survivors.size(); ++i) subset.col(static_cast<Eigen::Index>(i)) = features.col(survivors[i]);
    const auto forest = RandomForest::fit(subset, labels, forest_options);
    const Eigen::VectorXd importance = forest.importance();

    std::vector<std::size_t> order(survivors.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    // Least important first; among ties the later column goes first.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (importance[static_cast<Eigen::Index>(a)] != importance[static_cast<Eigen::Index>(b)]) {
        return importance[static_cast<Eigen::Index>(a)] < importance[static_cast<Eigen::Index>(b)];
      }
      return a > b;
    });
    const std::size_t n_drop = std::min(options.step, survivors.size() - options.target_k);
    std::vector<bool> drop(survivors.size(), false);
    for (std::size_t i = 0; i < n_drop; ++i) {
      drop[order[i]] = true;
      result.elimination_order.push_back(survivors[order[i]]);
    }
    std::vector<Eigen::Index> next;
    for (std::size_t i = 0; i < survivors.size(); ++i) {
      if (!drop[i]) next.push_back(survivors[i]);
    }
    survivors = std::move(next);
  }
  result.selected = survivors;
  return result;
}

}  // namespace teashift

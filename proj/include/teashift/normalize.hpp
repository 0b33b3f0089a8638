#pragma once

#include "teashift/features.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace teashift {

enum class TransformKind { RelPower, Coherence, Asymmetry, SpectralEntropy, None };

inline constexpr double kLogitClip = 1e-6;

// Maps a feature name to the transform its measure takes (None when untransformed).
TransformKind transform_kind_for(std::string_view feature_name);

// RelPower/Coherence: log(v / (1 - v)); Asymmetry: log((2 + v) / (2 - v));
// SpectralEntropy: -log(1 - v). Values are clipped into the open domain first.
double logit_transform(double value, TransformKind kind);
bool needs_clip(double value, TransformKind kind);

struct LogTransformStats {
  std::size_t clipped = 0;
};

// Applies each column's transform in place; returns how many values were clipped.
LogTransformStats apply_log_transforms(FeatureMatrix& features);

struct AgeModel {
  Eigen::VectorXd slopes;      // per feature, against log10(age years)
  Eigen::VectorXd intercepts;  // used only when subtract_intercept is set
  std::size_t n_fitted = 0;    // rows used (norming group)
  bool subtract_intercept = false;
};

// Least-squares slope of each column vs log10(age). Fit on the norming (Control) rows.
AgeModel fit_age_regression(const Eigen::Ref<const Eigen::MatrixXd>& features, std::span<const double> ages);

// y = x - log10(age) * m  (minus the intercept too when subtract_intercept is set)
Eigen::VectorXd apply_age_regression(const Eigen::Ref<const Eigen::VectorXd>& x, double age_years,
                                     const AgeModel& model);
void apply_age_regression(Eigen::Ref<Eigen::MatrixXd> rows, std::span<const double> ages, const AgeModel& model);

struct Standardizer {
  Eigen::VectorXd mean;       // over kept columns
  Eigen::VectorXd stddev;     // population convention
  std::vector<Eigen::Index> kept;     // input column indices retained
  std::vector<Eigen::Index> dropped;  // zero-variance columns

  Eigen::Index n_inputs = 0;
};

Standardizer standardize_fit(const Eigen::Ref<const Eigen::MatrixXd>& train);
Eigen::VectorXd standardize_row(const Eigen::Ref<const Eigen::VectorXd>& x, const Standardizer& s);
Eigen::MatrixXd standardize_apply(const Eigen::Ref<const Eigen::MatrixXd>& rows, const Standardizer& s);

void to_json(nlohmann::json& j, const AgeModel& m);
void from_json(const nlohmann::json& j, AgeModel& m);
void to_json(nlohmann::json& j, const Standardizer& s);
void from_json(const nlohmann::json& j, Standardizer& s);

// Recursive feature elimination with the random forest as base estimator.
struct RfeOptions {
  std::size_t target_k = 1;
  std::size_t step = 1;
  std::size_t n_trees = 100;
  std::uint64_t seed = 0;
};

struct RfeResult {
  std::vector<Eigen::Index> selected;           // ascending column indices
  std::vector<Eigen::Index> elimination_order;  // first eliminated first
  std::vector<std::vector<Eigen::Index>> rounds;  // survivors entering each round
};

RfeResult rfe_select(const Eigen::Ref<const Eigen::MatrixXd>& features, std::span<const int> labels,
                     const RfeOptions& options);

}  // namespace teashift

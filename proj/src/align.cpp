#include "teashift/align.hpp"

#include <map>

namespace teashift {

std::string_view to_string(AlignSpace s) noexcept {
  return s == AlignSpace::RawTrials ? "raw" : "feature";
}

AlignSpace parse_space(std::string_view text) {
  if (text == "raw") return AlignSpace::RawTrials;
  if (text == "feature") return AlignSpace::FeatureSpace;
  throw ValidationError("space", "expected raw or feature, got '" + std::string(text) + "'");
}

ReferenceMatrix<double> dataset_reference_matrix(const Dataset& dataset, double lambda, bool center) {
  std::vector<Eigen::MatrixXd> moments;
  for (const auto& subject : dataset.subjects) {
    if (subject.epochs.empty()) continue;
    std::vector<Signals> trials;
    trials.reserve(subject.epochs.size());
    for (const auto& e : subject.epochs) trials.push_back(e.samples);
    moments.push_back(subject_second_moment(trials, center));
  }
  ReferenceMatrix<double> ref;
  ref.matrix = average_moments(moments, lambda);
  ref.space = AlignSpace::RawTrials;
  ref.source = dataset.name;
  ref.shrinkage = lambda;
  ref.centered = center;
  return ref;
}

ReferenceMatrix<double> dataset_reference_matrix(const Eigen::Ref<const Eigen::MatrixXd>& rows,
                                                 std::span<const std::size_t> subject_of_row, std::string source,
                                                 double lambda, bool center) {
  if (static_cast<Eigen::Index>(subject_of_row.size()) != rows.rows()) {
    throw ShapeMismatchError("one subject index per feature row required");
  }
  ReferenceMatrix<double> ref;
  ref.space = AlignSpace::FeatureSpace;
  ref.source = std::move(source);
  ref.shrinkage = lambda;
  ref.centered = center;

  Eigen::MatrixXd x = rows;
  if (center) {
    if (rows.rows() == 0) throw PreconditionError("reference matrix of an empty dataset");
    ref.mean = rows.colwise().mean().transpose();
    x.rowwise() -= ref.mean.transpose();
  }
  std::map<std::size_t, std::vector<Eigen::Index>> by_subject;
  for (std::size_t r = 0; r < subject_of_row.size(); ++r) {
    by_subject[subject_of_row[r]].push_back(static_cast<Eigen::Index>(r));
  }
  std::vector<Eigen::MatrixXd> moments;
  for (const auto& [subject, idx] : by_subject) moments.push_back(feature_second_moment(x(idx, Eigen::all)));
  ref.matrix = average_moments(moments, lambda);
  return ref;
}

Signals align_trial(const Eigen::Ref<const Signals>& trial, const AlignmentTransform<double>& transform) {
  if (trial.rows() != transform.dim()) {
    throw ShapeMismatchError("trial has " + std::to_string(trial.rows()) + " channels, transform expects " +
                             std::to_string(transform.dim()));
  }
  if (transform.reference.centered) {
    const Eigen::MatrixXd c = trial.colwise() - trial.rowwise().mean();
    return transform.w * c;
  }
  return transform.w * trial;
}

Dataset align_trials(const Dataset& dataset, const AlignmentTransform<double>& transform) {
  if (transform.reference.space != AlignSpace::RawTrials) {
    throw ValidationError("space", "raw trials need a raw-space transform");
  }
  Dataset out = dataset;
  for (auto& subject : out.subjects) {
    for (auto& e : subject.epochs) e.samples = align_trial(e.samples, transform);
  }
  return out;
}

Eigen::MatrixXd align_rows(const Eigen::Ref<const Eigen::MatrixXd>& rows, const AlignmentTransform<double>& transform) {
  if (rows.cols() != transform.dim()) {
    throw ShapeMismatchError("feature rows have " + std::to_string(rows.cols()) + " columns, transform expects " +
                             std::to_string(transform.dim()));
  }
  if (transform.reference.mean.size() > 0) {
    return (rows.rowwise() - transform.reference.mean.transpose()) * transform.w;
  }
  return rows * transform.w;
}

double residual_identity(const Dataset& aligned) {
  return identity_deviation(dataset_reference_matrix(aligned, 0.0, false).matrix);
}

double residual_identity(const Eigen::Ref<const Eigen::MatrixXd>& aligned_rows,
                         std::span<const std::size_t> subject_of_row) {
  return identity_deviation(dataset_reference_matrix(aligned_rows, subject_of_row, "", 0.0, false).matrix);
}

void to_json(nlohmann::json& j, const AlignmentTransform<double>& t) {
  const Eigen::Index d = t.dim();
  std::vector<double> w;
  w.reserve(static_cast<std::size_t>(d * d));
  for (Eigen::Index r = 0; r < d; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) w.push_back(t.w(r, c));
  }
  const auto& ref = t.reference;
  j = {{"d", d},
       {"matrix", w},
       {"space", std::string(to_string(ref.space))},
       {"source", ref.source},
       {"shrinkage", ref.shrinkage},
       {"centered", ref.centered},
       {"mean", std::vector<double>(ref.mean.data(), ref.mean.data() + ref.mean.size())}};
}

void from_json(const nlohmann::json& j, AlignmentTransform<double>& t) {
  const auto d = j.at("d").get<Eigen::Index>();
  const auto w = j.at("matrix").get<std::vector<double>>();
  if (d < 1 || static_cast<Eigen::Index>(w.size()) != d * d) {
    throw ValidationError("matrix", "expected d*d row-major entries");
  }
  t.w = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(w.data(), d, d);
  auto& ref = t.reference;
  ref.space = parse_space(j.at("space").get<std::string>());
  ref.source = j.value("source", std::string{});
  ref.shrinkage = j.at("shrinkage").get<double>();
  ref.centered = j.value("centered", false);
  const auto mean = j.value("mean", std::vector<double>{});
  ref.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  ref.matrix.resize(0, 0);
}

}  // namespace teashift

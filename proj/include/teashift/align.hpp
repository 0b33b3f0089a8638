#pragma once

#include "teashift/error.hpp"
#include "teashift/types.hpp"

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace teashift {

enum class AlignSpace { RawTrials, FeatureSpace };

std::string_view to_string(AlignSpace s) noexcept;
AlignSpace parse_space(std::string_view text);

template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Mean over trials of X X^T / n_samples (each trial d x n_samples). With
// `center`, every trial has its per-row mean removed first.
template <class Trials>
auto subject_second_moment(const Trials& trials, bool center = false) {
  using Scalar = typename std::decay_t<decltype(*std::begin(trials))>::Scalar;
  if (std::begin(trials) == std::end(trials)) throw PreconditionError("second moment of zero trials");
  const Eigen::Index d = std::begin(trials)->rows();
  MatrixX<Scalar> sum = MatrixX<Scalar>::Zero(d, d);
  std::size_t n = 0;
  for (const auto& x : trials) {
    if (x.rows() != d) {
      throw ShapeMismatchError("trial has " + std::to_string(x.rows()) + " rows, expected " + std::to_string(d));
    }
    if (x.cols() == 0) throw PreconditionError("second moment of an empty trial");
    const Scalar inv_n = Scalar(1) / static_cast<Scalar>(x.cols());
    if (center) {
      const MatrixX<Scalar> c = x.colwise() - x.rowwise().mean();
      sum.noalias() += inv_n * (c * c.transpose());
    } else {
      sum.noalias() += inv_n * (x * x.transpose());
    }
    ++n;
  }
  return MatrixX<Scalar>(sum / static_cast<Scalar>(n));
}

// Feature rows treated as d x 1 trials: R^T R / n.
template <class Derived>
MatrixX<typename Derived::Scalar> feature_second_moment(const Eigen::MatrixBase<Derived>& rows) {
  using Scalar = typename Derived::Scalar;
  if (rows.rows() == 0) throw PreconditionError("second moment of zero feature rows");
  MatrixX<Scalar> m = MatrixX<Scalar>::Zero(rows.cols(), rows.cols());
  m.template selfadjointView<Eigen::Lower>().rankUpdate(rows.derived().transpose());
  m.template triangularView<Eigen::StrictlyUpper>() = m.transpose();
  return m / static_cast<Scalar>(rows.rows());
}

// (1 - lambda) M + lambda (tr M / d) I
template <class Derived>
MatrixX<typename Derived::Scalar> shrink(const Eigen::MatrixBase<Derived>& m, double lambda) {
  using Scalar = typename Derived::Scalar;
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("shrinkage", "must lie in [0, 1]");
  const Eigen::Index d = m.rows();
  const Scalar target = m.trace() / static_cast<Scalar>(d);
  MatrixX<Scalar> out = Scalar(1.0 - lambda) * m;
  out.diagonal().array() += Scalar(lambda) * target;
  return out;
}

// V diag(max(l, eps_rel * max l)^-1/2) V^T for symmetric PSD input.
template <class Derived>
MatrixX<typename Derived::Scalar> inv_sqrt(const Eigen::MatrixBase<Derived>& m, double eps_rel = 1e-10) {
  using Scalar = typename Derived::Scalar;
  using std::abs;
  using std::sqrt;
  if (m.rows() != m.cols() || m.rows() == 0) throw ShapeMismatchError("inv_sqrt needs a non-empty square matrix");
  const MatrixX<Scalar> a = m;
  const Scalar scale = a.cwiseAbs().maxCoeff();
  const Scalar asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (!(asym <= Scalar(1e-10) * (scale > Scalar(0) ? scale : Scalar(1)))) {
    throw ValidationError("matrix", "inv_sqrt input is not symmetric");
  }
  if (!a.allFinite()) throw NonFiniteError("inv_sqrt input has non-finite entries");
  const MatrixX<Scalar> sym = Scalar(0.5) * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> eig(sym);
  if (eig.info() != Eigen::Success) throw PreconditionError("eigendecomposition did not converge");
  const Scalar top = eig.eigenvalues().maxCoeff();
  if (!(top > Scalar(0))) throw PreconditionError("inv_sqrt of a matrix with no positive eigenvalue");
  const Scalar floor = Scalar(eps_rel) * top;
  VectorX<Scalar> s = eig.eigenvalues();
  for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = Scalar(1) / sqrt(s[i] < floor ? floor : s[i]);
  const auto& v = eig.eigenvectors();
  return v * s.asDiagonal() * v.transpose();
}

template <class Scalar = double>
struct ReferenceMatrix {
  MatrixX<Scalar> matrix;
  VectorX<Scalar> mean;  // removed before alignment; empty unless centered feature space
  AlignSpace space = AlignSpace::RawTrials;
  std::string source;
  double shrinkage = 0.0;
  bool centered = false;

  Eigen::Index dim() const { return matrix.rows(); }
};

inline constexpr double kDefaultShrinkage = 1e-3;

// Mean of per-subject moments, each subject weighted equally, then shrunk.
template <class Scalar>
MatrixX<Scalar> average_moments(const std::vector<MatrixX<Scalar>>& moments, double lambda) {
  if (moments.empty()) throw PreconditionError("reference matrix of an empty dataset");
  MatrixX<Scalar> sum = MatrixX<Scalar>::Zero(moments.front().rows(), moments.front().cols());
  for (const auto& m : moments) {
    if (m.rows() != sum.rows()) throw ShapeMismatchError("subjects differ in dimension");
    sum += m;
  }
  return shrink(sum / static_cast<Scalar>(moments.size()), lambda);
}

// Raw-trial space: each subject's epochs are its trials.
ReferenceMatrix<double> dataset_reference_matrix(const Dataset& dataset, double lambda = kDefaultShrinkage,
                                                 bool center = false);

// Feature space: rows grouped by subject index.
ReferenceMatrix<double> dataset_reference_matrix(const Eigen::Ref<const Eigen::MatrixXd>& rows,
                                                 std::span<const std::size_t> subject_of_row, std::string source,
                                                 double lambda = kDefaultShrinkage, bool center = false);

template <class Scalar = double>
struct AlignmentTransform {
  MatrixX<Scalar> w;
  ReferenceMatrix<Scalar> reference;

  Eigen::Index dim() const { return w.rows(); }
};

template <class Scalar>
AlignmentTransform<Scalar> make_transform(ReferenceMatrix<Scalar> reference, double eps_rel = 1e-10) {
  AlignmentTransform<Scalar> t;
  t.w = inv_sqrt(reference.matrix, eps_rel);
  t.reference = std::move(reference);
  return t;
}

// Left-multiplies every trial of every subject (after per-trial demeaning when
// the reference was centered). Shapes are unchanged.
Dataset align_trials(const Dataset& dataset, const AlignmentTransform<double>& transform);
Signals align_trial(const Eigen::Ref<const Signals>& trial, const AlignmentTransform<double>& transform);

// Feature rows: (x - mean) W, i.e. W (x - mean) per row since W is symmetric.
Eigen::MatrixXd align_rows(const Eigen::Ref<const Eigen::MatrixXd>& rows, const AlignmentTransform<double>& transform);

// Infinity norm (max absolute row sum) of the unshrunk reference minus I.
double residual_identity(const Dataset& aligned);
double residual_identity(const Eigen::Ref<const Eigen::MatrixXd>& aligned_rows,
                         std::span<const std::size_t> subject_of_row);

template <class Derived>
double identity_deviation(const Eigen::MatrixBase<Derived>& m) {
  using Scalar = typename Derived::Scalar;
  const MatrixX<Scalar> r = m - MatrixX<Scalar>::Identity(m.rows(), m.cols());
  return static_cast<double>(r.cwiseAbs().rowwise().sum().maxCoeff());
}

// d, row-major float64 matrix, space, shrinkage, centering and mean.
void to_json(nlohmann::json& j, const AlignmentTransform<double>& t);
void from_json(const nlohmann::json& j, AlignmentTransform<double>& t);

}  // namespace teashift

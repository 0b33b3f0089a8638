#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace teashift {

// channels x samples, each channel contiguous in memory.
using Signals = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class SleepStage { W, NREM, REM, N1, N2, N3 };
enum class Species { Mouse, Human, Synthetic };
enum class Group { Control = 0, TBI = 1 };

// N1/N2/N3 collapse to NREM; every other stage maps to itself.
constexpr SleepStage collapse(SleepStage s) noexcept {
  switch (s) {
    case SleepStage::N1:
    case SleepStage::N2:
    case SleepStage::N3:
      return SleepStage::NREM;
    default:
      return s;
  }
}

std::string_view to_string(SleepStage s) noexcept;
std::string_view to_string(Species s) noexcept;
std::string_view to_string(Group g) noexcept;
SleepStage parse_stage(std::string_view text);
Species parse_species(std::string_view text);
Group parse_group(std::string_view text);

struct Epoch {
  Signals samples;  // microvolts
  double fs = 0.0;
  SleepStage stage = SleepStage::W;

  Eigen::Index n_channels() const { return samples.rows(); }
  Eigen::Index n_samples() const { return samples.cols(); }
  double seconds() const { return static_cast<double>(n_samples()) / fs; }

  // Throws ValidationError / NonFiniteError when the epoch invariants fail.
  void validate() const;

  bool operator==(const Epoch& other) const {
    return fs == other.fs && stage == other.stage &&
           samples.rows() == other.samples.rows() &&
           samples.cols() == other.samples.cols() && samples == other.samples;
  }
};

struct SubjectRecord {
  std::string subject_id;
  Species species = Species::Synthetic;
  double age_years = 1.0;
  Group group = Group::Control;
  std::vector<Epoch> epochs;

  // Channel count / rate shared by the epochs, if any.
  std::optional<Eigen::Index> n_channels() const;
  std::optional<double> fs() const;

  void validate() const;
  bool operator==(const SubjectRecord&) const = default;
};

struct Dataset {
  std::string name;
  std::vector<SubjectRecord> subjects;

  std::size_t n_epochs() const;
  const SubjectRecord* find(std::string_view subject_id) const;

  // Checks subject invariants and id uniqueness.
  void validate() const;
  bool operator==(const Dataset&) const = default;
};

Dataset filter_by_stage(const Dataset& dataset, SleepStage stage);

}  // namespace teashift

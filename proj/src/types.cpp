#include "teashift/types.hpp"

#include "teashift/error.hpp"

#include <algorithm>
#include <unordered_set>

namespace teashift {

std::string_view to_string(SleepStage s) noexcept {
  switch (s) {
    case SleepStage::W: return "W";
    case SleepStage::NREM: return "NREM";
    case SleepStage::REM: return "REM";
    case SleepStage::N1: return "N1";
    case SleepStage::N2: return "N2";
    case SleepStage::N3: return "N3";
  }
  return "?";
}

std::string_view to_string(Species s) noexcept {
  switch (s) {
    case Species::Mouse: return "Mouse";
    case Species::Human: return "Human";
    case Species::Synthetic: return "Synthetic";
  }
  return "?";
}

std::string_view to_string(Group g) noexcept {
  return g == Group::TBI ? "TBI" : "Control";
}

SleepStage parse_stage(std::string_view text) {
  for (auto s : {SleepStage::W, SleepStage::NREM, SleepStage::REM, SleepStage::N1,
                 SleepStage::N2, SleepStage::N3}) {
    if (to_string(s) == text) return s;
  }
  throw ValidationError("stage", "unknown sleep stage '" + std::string(text) + "'");
}

Species parse_species(std::string_view text) {
  for (auto s : {Species::Mouse, Species::Human, Species::Synthetic}) {
    if (to_string(s) == text) return s;
  }
  throw ValidationError("species", "unknown species '" + std::string(text) + "'");
}

Group parse_group(std::string_view text) {
  if (text == "TBI") return Group::TBI;
  if (text == "Control") return Group::Control;
  throw ValidationError("group", "unknown group '" + std::string(text) + "'");
}

void Epoch::validate() const {
  if (samples.rows() < 1) throw ValidationError("n_channels", "epoch needs at least one channel");
  if (samples.cols() < 2) throw ValidationError("n_samples", "epoch needs at least two samples");
  if (!(fs > 0.0)) throw ValidationError("fs", "sampling rate must be positive");
  if (!samples.allFinite()) throw NonFiniteError("epoch contains non-finite samples");
}

std::optional<Eigen::Index> SubjectRecord::n_channels() const {
  if (epochs.empty()) return std::nullopt;
  return epochs.front().n_channels();
}

std::optional<double> SubjectRecord::fs() const {
  if (epochs.empty()) return std::nullopt;
  return epochs.front().fs;
}

namespace {

bool valid_id(std::string_view id) {
  if (id.empty() || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '_' || c == '-' || c == '.';
  });
}

}  // namespace

void SubjectRecord::validate() const {
  if (!valid_id(subject_id)) {
    throw ValidationError("subject_id", "'" + subject_id + "' is empty or not [A-Za-z0-9_.-]");
  }
  if (!(age_years > 0.0)) throw ValidationError("age_years", subject_id + ": age must be positive");
  for (const auto& e : epochs) {
    e.validate();
    if (e.n_channels() != epochs.front().n_channels() || e.fs != epochs.front().fs) {
      throw ValidationError("epochs", subject_id + ": epochs disagree on channel count or fs");
    }
  }
}

std::size_t Dataset::n_epochs() const {
  std::size_t n = 0;
  for (const auto& s : subjects) n += s.epochs.size();
  return n;
}

const SubjectRecord* Dataset::find(std::string_view subject_id) const {
  for (const auto& s : subjects) {
    if (s.subject_id == subject_id) return &s;
  }
  return nullptr;
}

void Dataset::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& s : subjects) {
    s.validate();
    if (!seen.insert(s.subject_id).second) {
      throw ValidationError("subject_id", "duplicate subject '" + s.subject_id + "'");
    }
  }
}

Dataset filter_by_stage(const Dataset& dataset, SleepStage stage) {
  const SleepStage want = collapse(stage);
  // Asking for N2 matches only N2; asking for NREM matches the whole collapsed class.
  auto keep = [&](SleepStage s) { return stage == want ? collapse(s) == want : s == stage; };
  Dataset out{dataset.name, {}};
  for (const auto& subject : dataset.subjects) {
    SubjectRecord kept = subject;
    kept.epochs.clear();
    for (const auto& e : subject.epochs) {
      if (keep(e.stage)) kept.epochs.push_back(e);
    }
    if (!kept.epochs.empty()) out.subjects.push_back(std::move(kept));
  }
  return out;
}

}  // namespace teashift

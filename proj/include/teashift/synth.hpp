#pragma once

#include "teashift/types.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace teashift {

// Parameters of the synthetic EEG generator. Signals are sums of band-limited
// Gaussian noise in five bands (delta 0.5-4, theta 4-8, alpha 8-12,
// sigma 12-16, beta 16-35 Hz) with controllable band powers.
struct SynthSpec {
  std::string name = "synthetic";
  Species species = Species::Synthetic;
  std::size_t n_subjects_per_group = 6;
  std::size_t epochs_per_subject = 50;
  std::size_t n_channels = 1;
  double fs = 200.0;
  double epoch_seconds = 10.0;
  double class_effect = 0.5;   // fractional delta-power boost for TBI subjects
  double shift_gain = 1.0;     // dataset-wide amplitude multiplier
  double shift_tilt = 0.0;     // band power scaled by (f_center / 10 Hz)^-tilt
  double subject_sigma = 0.3;  // log-sd of the per-subject amplitude gain
  double band_sigma = 0.1;     // log-sd of per-subject, per-band power deviations
  double epoch_sigma = 0.2;    // log-sd of per-epoch, per-band power fluctuation
  double channel_coupling = 0.5;  // shared-source power fraction across channels
  double age_min_years = 1.0;
  double age_max_years = 60.0;
  std::vector<SleepStage> stages{SleepStage::W};  // assigned round-robin to epochs
  std::uint64_t seed = 0;

  // Throws ValidationError naming the first invalid field.
  void validate() const;
};

inline constexpr double kSynthMaxHz = 35.0;

struct SynthBand {
  double low_hz;
  double high_hz;
  double base_power;  // band power in uV^2 before stage, class and shift factors
};

const std::array<SynthBand, 5>& synth_bands();

// Relative band-power multipliers per stage (delta..beta).
std::array<double, 5> stage_profile(SleepStage stage);

// Deterministic for a fixed spec; samples are float32-representable.
Dataset synth_dataset(const SynthSpec& spec);

void to_json(nlohmann::json& j, const SynthSpec& spec);
void from_json(const nlohmann::json& j, SynthSpec& spec);

}  // namespace teashift

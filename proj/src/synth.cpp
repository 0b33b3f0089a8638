#include "teashift/synth.hpp"

#include "teashift/error.hpp"
#include "teashift/fft.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace teashift {

const std::array<SynthBand, 5>& synth_bands() {
  static const std::array<SynthBand, 5> bands{{{0.5, 4.0, 40.0},
                                               {4.0, 8.0, 15.0},
                                               {8.0, 12.0, 10.0},
                                               {12.0, 16.0, 4.0},
                                               {16.0, kSynthMaxHz, 6.0}}};
  return bands;
}

std::array<double, 5> stage_profile(SleepStage stage) {
  switch (collapse(stage)) {
    case SleepStage::NREM: return {2.0, 1.2, 0.7, 1.8, 0.7};
    case SleepStage::REM: return {1.0, 1.6, 0.8, 0.8, 1.0};
    default: return {1.0, 1.0, 1.6, 1.0, 1.4};
  }
}

void SynthSpec::validate() const {
  auto fail = [](const char* field, const char* why) { throw ValidationError(field, why); };
  if (name.empty()) fail("name", "must be nonempty");
  if (n_subjects_per_group < 1) fail("n_subjects_per_group", "must be >= 1");
  if (epochs_per_subject < 1) fail("epochs_per_subject", "must be >= 1");
  if (n_channels < 1) fail("n_channels", "must be >= 1");
  if (!(fs > 2.0 * kSynthMaxHz)) fail("fs", "must exceed twice the highest generated frequency (35 Hz)");
  if (!(epoch_seconds > 0.0) || std::llround(epoch_seconds * fs) < 2) fail("epoch_seconds", "too short");
  if (!(class_effect >= 0.0) || !std::isfinite(class_effect)) fail("class_effect", "must be >= 0");
  if (!(shift_gain > 0.0) || !std::isfinite(shift_gain)) fail("shift_gain", "must be positive");
  if (!std::isfinite(shift_tilt)) fail("shift_tilt", "must be finite");
  if (!(subject_sigma >= 0.0)) fail("subject_sigma", "must be >= 0");
  if (!(band_sigma >= 0.0)) fail("band_sigma", "must be >= 0");
  if (!(epoch_sigma >= 0.0)) fail("epoch_sigma", "must be >= 0");
  if (!(channel_coupling >= 0.0 && channel_coupling <= 1.0)) fail("channel_coupling", "must lie in [0, 1]");
  if (!(age_min_years > 0.0) || !(age_max_years >= age_min_years)) fail("age_min_years", "need 0 < min <= max");
  if (stages.empty()) fail("stages", "need at least one stage");
}

namespace {

// Spectrum-shaped Gaussian noise: flat density inside each band with the
// requested expected band power, zero elsewhere.
Series shaped_noise(std::mt19937_64& rng, Eigen::Index n, double fs, const std::array<double, 5>& powers) {
  std::normal_distribution<double> normal;
  Series white(n);
  for (Eigen::Index i = 0; i < n; ++i) white[i] = normal(rng);
  Eigen::VectorXcd spec = fft(white);
  const auto& bands = synth_bands();
  for (Eigen::Index k = 0; k < n; ++k) {
    const double f = bin_frequency(k, n, fs);
    double gain = 0.0;
    for (std::size_t b = 0; b < bands.size(); ++b) {
      if (f >= bands[b].low_hz && f < bands[b].high_hz) {
        // Unit white noise has one-sided density 2/fs.
        gain = std::sqrt(powers[b] * fs / (2.0 * (bands[b].high_hz - bands[b].low_hz)));
        break;
      }
    }
    spec[k] *= gain;
  }
  return ifft(spec).real();
}

}  // namespace

Dataset synth_dataset(const SynthSpec& spec) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(std::llround(spec.epoch_seconds * spec.fs));
  const auto n_ch = static_cast<Eigen::Index>(spec.n_channels);
  const auto& bands = synth_bands();

  Dataset dataset{spec.name, {}};
  std::size_t subject_index = 0;
  for (Group group : {Group::Control, Group::TBI}) {
    for (std::size_t s = 0; s < spec.n_subjects_per_group; ++s, ++subject_index) {
      std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                        static_cast<std::uint32_t>(subject_index)};
      std::mt19937_64 rng(seq);
      std::normal_distribution<double> normal;
      std::uniform_real_distribution<double> uniform(spec.age_min_years, spec.age_max_years);

      char id[32];
      std::snprintf(id, sizeof id, "%s%02zu", group == Group::TBI ? "tbi" : "ctl", s);
      SubjectRecord subject{id, spec.species, uniform(rng), group, {}};

      const double subject_gain = std::exp(spec.subject_sigma * normal(rng));
      std::array<double, 5> subject_bands{};
      for (auto& v : subject_bands) v = std::exp(spec.band_sigma * normal(rng));

      for (std::size_t e = 0; e < spec.epochs_per_subject; ++e) {
        const SleepStage stage = spec.stages[e % spec.stages.size()];
        const auto profile = stage_profile(stage);
        std::array<double, 5> powers{};
        for (std::size_t b = 0; b < bands.size(); ++b) {
          const double center = 0.5 * (bands[b].low_hz + bands[b].high_hz);
          double p = bands[b].base_power * profile[b] * subject_bands[b];
          if (b == 0 && group == Group::TBI) p *= 1.0 + spec.class_effect;
          p *= std::pow(center / 10.0, -spec.shift_tilt);
          p *= std::exp(2.0 * spec.epoch_sigma * normal(rng));
          powers[b] = p;
        }

        Epoch epoch;
        epoch.fs = spec.fs;
        epoch.stage = stage;
        epoch.samples.resize(n_ch, n);
        const Series common = shaped_noise(rng, n, spec.fs, powers);
        const double shared = std::sqrt(spec.channel_coupling);
        const double own = std::sqrt(1.0 - spec.channel_coupling);
        for (Eigen::Index c = 0; c < n_ch; ++c) {
          Series x = shared * common;
          if (own > 0.0) x += own * shaped_noise(rng, n, spec.fs, powers);
          x *= subject_gain * spec.shift_gain;
          // float32 at rest: keep in-memory values exactly representable.
          epoch.samples.row(c) = x.cast<float>().cast<double>().transpose();
        }
        subject.epochs.push_back(std::move(epoch));
      }
      dataset.subjects.push_back(std::move(subject));
    }
  }
  return dataset;
}

void to_json(nlohmann::json& j, const SynthSpec& spec) {
  std::vector<std::string> stages;
  for (auto s : spec.stages) stages.emplace_back(to_string(s));
  j = nlohmann::json{{"name", spec.name},
                     {"species", std::string(to_string(spec.species))},
                     {"n_subjects_per_group", spec.n_subjects_per_group},
                     {"epochs_per_subject", spec.epochs_per_subject},
                     {"n_channels", spec.n_channels},
                     {"fs", spec.fs},
                     {"epoch_seconds", spec.epoch_seconds},
                     {"class_effect", spec.class_effect},
                     {"shift_gain", spec.shift_gain},
                     {"shift_tilt", spec.shift_tilt},
                     {"subject_sigma", spec.subject_sigma},
                     {"band_sigma", spec.band_sigma},
                     {"epoch_sigma", spec.epoch_sigma},
                     {"channel_coupling", spec.channel_coupling},
                     {"age_min_years", spec.age_min_years},
                     {"age_max_years", spec.age_max_years},
                     {"stages", stages},
                     {"seed", spec.seed}};
}

void from_json(const nlohmann::json& j, SynthSpec& spec) {
  if (!j.is_object()) throw ValidationError("synth", "expected a JSON object");
  auto get = [&](const char* key, auto& field) {
    if (auto it = j.find(key); it != j.end()) {
      try {
        it->get_to(field);
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(key, e.what());
      }
    }
  };
  get("name", spec.name);
  if (auto it = j.find("species"); it != j.end()) spec.species = parse_species(it->get<std::string>());
  get("n_subjects_per_group", spec.n_subjects_per_group);
  get("epochs_per_subject", spec.epochs_per_subject);
  get("n_channels", spec.n_channels);
  get("fs", spec.fs);
  get("epoch_seconds", spec.epoch_seconds);
  get("class_effect", spec.class_effect);
  get("shift_gain", spec.shift_gain);
  get("shift_tilt", spec.shift_tilt);
  get("subject_sigma", spec.subject_sigma);
  get("band_sigma", spec.band_sigma);
  get("epoch_sigma", spec.epoch_sigma);
  get("channel_coupling", spec.channel_coupling);
  get("age_min_years", spec.age_min_years);
  get("age_max_years", spec.age_max_years);
  if (auto it = j.find("stages"); it != j.end()) {
    spec.stages.clear();
    for (const auto& s : *it) spec.stages.push_back(parse_stage(s.get<std::string>()));
  }
  get("seed", spec.seed);
  for (auto it = j.begin(); it != j.end(); ++it) {
    static const char* known[] = {"name", "species", "n_subjects_per_group", "epochs_per_subject", "n_channels",
                                  "fs", "epoch_seconds", "class_effect", "shift_gain", "shift_tilt",
                                  "subject_sigma", "band_sigma", "epoch_sigma", "channel_coupling",
                                  "age_min_years", "age_max_years", "stages", "seed"};
    if (std::find(std::begin(known), std::end(known), it.key()) == std::end(known)) {
      throw ValidationError(it.key(), "unknown synth field");
    }
  }
}

}  // namespace teashift

#include "teashift/error.hpp"
#include "teashift/features.hpp"
#include "teashift/synth.hpp"

#include "test_util.hpp"

#include <doctest.h>

using namespace teashift;

namespace {

double mean_epoch_variance(const Dataset& d) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : d.subjects) {
    for (const auto& e : s.epochs) {
      const Eigen::ArrayXd x = e.samples.row(0).transpose().array();
      sum += (x - x.mean()).square().mean();
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

SynthSpec small_spec() {
  SynthSpec spec;
  spec.n_subjects_per_group = 2;
  spec.epochs_per_subject = 5;
  spec.epoch_seconds = 4.0;
  spec.seed = 17;
  return spec;
}

}  // namespace

TEST_CASE("counts") {
  SynthSpec spec;
  spec.n_subjects_per_group = 6;
  spec.epochs_per_subject = 50;
  spec.epoch_seconds = 2.0;
  const Dataset d = synth_dataset(spec);
  CHECK(d.subjects.size() == 12);
  CHECK(d.n_epochs() == 600);
  CHECK_NOTHROW(d.validate());
}

TEST_CASE("deterministic and float32-representable") {
  const Dataset a = synth_dataset(small_spec());
  const Dataset b = synth_dataset(small_spec());
  CHECK(a == b);
  const auto& x = a.subjects[1].epochs[2].samples;
  CHECK(x == x.cast<float>().cast<double>());
  SynthSpec other = small_spec();
  other.seed = 18;
  CHECK_FALSE(synth_dataset(other) == a);
}

TEST_CASE("TBI epochs carry more relative delta power") {
  SynthSpec spec = small_spec();
  spec.n_subjects_per_group = 4;
  spec.epochs_per_subject = 10;
  spec.epoch_seconds = 10.0;
  spec.class_effect = 0.5;
  const Dataset d = synth_dataset(spec);
  double tbi = 0.0, ctl = 0.0;
  std::size_t n_tbi = 0, n_ctl = 0;
  for (const auto& s : d.subjects) {
    for (const auto& e : s.epochs) {
      const auto v = extract_features(e);
      const double rel = v.values[1];  // ch0.delta.rel_power
      REQUIRE(v.names[1] == "ch0.delta.rel_power");
      if (s.group == Group::TBI) {
        tbi += rel;
        ++n_tbi;
      } else {
        ctl += rel;
        ++n_ctl;
      }
    }
  }
  CHECK(tbi / static_cast<double>(n_tbi) > ctl / static_cast<double>(n_ctl));
}

TEST_CASE("shift_gain scales the variance by its square") {
  SynthSpec base = small_spec();
  SynthSpec shifted = base;
  shifted.shift_gain = 2.5;
  const double ratio = mean_epoch_variance(synth_dataset(shifted)) / mean_epoch_variance(synth_dataset(base));
  CHECK(ratio == doctest::Approx(2.5 * 2.5).epsilon(0.01));
}

TEST_CASE("validation names the field") {
  SynthSpec spec = small_spec();
  spec.fs = 60.0;
  try {
    spec.validate();
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(e.field() == "fs");
  }
  spec = small_spec();
  spec.class_effect = -0.1;
  CHECK_THROWS_AS(synth_dataset(spec), ValidationError);
  spec = small_spec();
  spec.n_subjects_per_group = 0;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
}

TEST_CASE("JSON round trip and unknown keys") {
  SynthSpec spec = small_spec();
  spec.stages = {SleepStage::W, SleepStage::REM};
  spec.shift_tilt = 0.5;
  nlohmann::json j = spec;
  SynthSpec back = j.get<SynthSpec>();
  CHECK(synth_dataset(back) == synth_dataset(spec));
  j["bogus"] = 1;
  CHECK_THROWS_AS(j.get<SynthSpec>(), ValidationError);
}

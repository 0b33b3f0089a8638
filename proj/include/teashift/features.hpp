#pragma once

#include "teashift/spectral.hpp"
#include "teashift/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace teashift {

struct NamedBand {
  std::string name;
  Band band;
};

// delta 0.5-4, theta 4-8, alpha 8-12, sigma 12-16, beta 12-35 Hz.
std::vector<NamedBand> default_bands();

struct FeatureConfig {
  std::vector<NamedBand> bands = default_bands();
  Band theta{4.0, 8.0};
  Band alpha{8.0, 12.0};
  Band alpha1{8.0, 10.0};
  Band alpha2{10.0, 12.0};
  Band pac_phase{0.5, 4.0};
  Band pac_amplitude{12.0, 35.0};
  std::size_t pac_bins = 18;
  WelchOptions welch;
  double taper_hz = 0.5;
};

struct FeatureVector {
  Eigen::VectorXd values;
  std::vector<std::string> names;
};

// One row per epoch; column order matches `names`.
struct FeatureMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> names;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

// Per channel: abs/rel power per band, theta:alpha, alpha1:alpha2, Hjorth
// triple, spectral entropy, PAC modulation index. Per channel pair and band:
// coherence, PLV, amplitude asymmetry.
std::vector<std::string> feature_names(Eigen::Index n_channels, const FeatureConfig& config = {});

FeatureVector extract_features(const Epoch& epoch, const FeatureConfig& config = {});

// Feature rows of every epoch in the dataset, with row -> subject bookkeeping.
struct FeatureTable {
  FeatureMatrix features;
  std::vector<std::size_t> subject_of_row;  // index into subject_ids
  std::vector<std::string> subject_ids;
  std::vector<Group> subject_groups;
  std::vector<double> subject_ages;
  std::vector<SleepStage> stages;

  std::vector<int> labels() const;
};

FeatureTable extract_dataset_features(const Dataset& dataset, const FeatureConfig& config = {});

// Header row of feature names, one line per epoch; values printed round-trip exact.
void write_feature_csv(const FeatureMatrix& features, const std::filesystem::path& path);
FeatureMatrix read_feature_csv(const std::filesystem::path& path);

}  // namespace teashift

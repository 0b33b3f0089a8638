#include "teashift/features.hpp"

#include "teashift/error.hpp"
#include "teashift/parallel.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace teashift {

std::vector<NamedBand> default_bands() {
  return {{"delta", {0.5, 4.0}},
          {"theta", {4.0, 8.0}},
          {"alpha", {8.0, 12.0}},
          {"sigma", {12.0, 16.0}},
          {"beta", {12.0, 35.0}}};
}

namespace {

std::string channel_name(Eigen::Index c) { return "ch" + std::to_string(c); }

template <typename Fn>
auto with_context(const std::string& feature, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw PreconditionError(feature + ": " + e.what());
  }
}

}  // namespace

std::vector<std::string> feature_names(Eigen::Index n_channels, const FeatureConfig& config) {
  std::vector<std::string> names;
  for (Eigen::Index c = 0; c < n_channels; ++c) {
    const std::string ch = channel_name(c);
    for (const auto& b : config.bands) {
      names.push_back(ch + "." + b.name + ".abs_power");
      names.push_back(ch + "." + b.name + ".rel_power");
    }
    for (const char* s : {"theta_alpha", "alpha1_alpha2", "hjorth_activity", "hjorth_mobility",
                          "hjorth_complexity", "spectral_entropy", "pac_mi"}) {
      names.push_back(ch + "." + s);
    }
  }
  for (Eigen::Index a = 0; a < n_channels; ++a) {
    for (Eigen::Index b = a + 1; b < n_channels; ++b) {
      const std::string pair = channel_name(a) + "-" + channel_name(b);
      for (const auto& band : config.bands) {
        for (const char* s : {"coherence", "plv", "asymmetry"}) names.push_back(pair + "." + band.name + "." + s);
      }
    }
  }
  return names;
}

FeatureVector extract_features(const Epoch& epoch, const FeatureConfig& config) {
  epoch.validate();
  const Eigen::Index n_ch = epoch.n_channels();
  const double fs = epoch.fs;
  FeatureVector out;
  out.names = feature_names(n_ch, config);
  out.values.resize(static_cast<Eigen::Index>(out.names.size()));
  Eigen::Index k = 0;

  std::vector<Band> bands;
  for (const auto& b : config.bands) bands.push_back(b.band);
  // abs_power[channel][band], reused for asymmetry.
  std::vector<std::vector<double>> abs_power(static_cast<std::size_t>(n_ch));

  for (Eigen::Index c = 0; c < n_ch; ++c) {
    const Series x = epoch.samples.row(c).transpose();
    const std::string ch = channel_name(c);
    const Psd psd = with_context(ch + ".psd", [&] { return welch_psd(x, fs, config.welch); });
    const double total = total_power(psd);
    for (const auto& b : config.bands) {
      const double p = with_context(ch + "." + b.name + ".abs_power", [&] { return band_power(psd, b.band); });
      abs_power[c].push_back(p);
      out.values[k++] = p;
      if (!(total > 0.0)) throw PreconditionError(ch + "." + b.name + ".rel_power: total power is zero");
      out.values[k++] = p / total;
    }
    out.values[k++] = with_context(ch + ".theta_alpha", [&] { return power_ratio(psd, config.theta, config.alpha); });
    out.values[k++] =
        with_context(ch + ".alpha1_alpha2", [&] { return power_ratio(psd, config.alpha1, config.alpha2); });
    const Hjorth h = with_context(ch + ".hjorth", [&] { return hjorth(x, fs); });
    out.values[k++] = h.activity;
    out.values[k++] = h.mobility;
    out.values[k++] = h.complexity;
    out.values[k++] = with_context(ch + ".spectral_entropy", [&] { return spectral_entropy(psd); });
    out.values[k++] = with_context(ch + ".pac_mi", [&] {
      return pac_profile(x, fs, config.pac_phase, config.pac_amplitude, config.pac_bins, config.taper_hz)
          .modulation_index;
    });
  }

  if (n_ch >= 2) {
    // phases[channel][band]
    std::vector<std::vector<Eigen::VectorXd>> phases(static_cast<std::size_t>(n_ch));
    for (Eigen::Index c = 0; c < n_ch; ++c) {
      for (const auto& b : config.bands) {
        phases[c].push_back(with_context(channel_name(c) + "." + b.name + ".phase", [&] {
          return band_phase(epoch.samples.row(c).transpose(), fs, b.band, config.taper_hz);
        }));
      }
    }
    for (Eigen::Index a = 0; a < n_ch; ++a) {
      for (Eigen::Index b = a + 1; b < n_ch; ++b) {
        const std::string pair = channel_name(a) + "-" + channel_name(b);
        const auto coh = with_context(pair + ".coherence", [&] {
          return coherence(epoch.samples.row(a).transpose(), epoch.samples.row(b).transpose(), fs,
                           std::span<const Band>(bands), config.welch);
        });
        for (std::size_t i = 0; i < bands.size(); ++i) {
          out.values[k++] = coh[i];
          out.values[k++] = phase_locking(phases[a][i], phases[b][i]);
          out.values[k++] = with_context(pair + "." + config.bands[i].name + ".asymmetry",
                                         [&] { return amplitude_asymmetry(abs_power[a][i], abs_power[b][i]); });
        }
      }
    }
  }
  if (!out.values.allFinite()) throw NonFiniteError("extract_features: non-finite feature value");
  return out;
}

std::vector<int> FeatureTable::labels() const {
  std::vector<int> y(subject_of_row.size());
  for (std::size_t r = 0; r < y.size(); ++r) y[r] = static_cast<int>(subject_groups[subject_of_row[r]]);
  return y;
}

FeatureTable extract_dataset_features(const Dataset& dataset, const FeatureConfig& config) {
  FeatureTable table;
  std::vector<const Epoch*> epochs;
  std::optional<Eigen::Index> n_ch;
  for (std::size_t s = 0; s < dataset.subjects.size(); ++s) {
    const auto& subject = dataset.subjects[s];
    table.subject_ids.push_back(subject.subject_id);
    table.subject_groups.push_back(subject.group);
    table.subject_ages.push_back(subject.age_years);
    for (const auto& e : subject.epochs) {
      if (n_ch && *n_ch != e.n_channels()) {
        throw ShapeMismatchError("extract_dataset_features: channel count differs across subjects");
      }
      n_ch = e.n_channels();
      epochs.push_back(&e);
      table.subject_of_row.push_back(s);
      table.stages.push_back(e.stage);
    }
  }
  table.features.names = feature_names(n_ch.value_or(0), config);
  table.features.values.resize(static_cast<Eigen::Index>(epochs.size()),
                               static_cast<Eigen::Index>(table.features.names.size()));
  parallel_for(epochs.size(), [&](std::size_t i) {
    table.features.values.row(static_cast<Eigen::Index>(i)) = extract_features(*epochs[i], config).values.transpose();
  });
  return table;
}

void write_feature_csv(const FeatureMatrix& features, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::size_t j = 0; j < features.names.size(); ++j) out << (j ? "," : "") << features.names[j];
  out << '\n';
  char buf[32];
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    for (Eigen::Index c = 0; c < features.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", features.values(r, c));
      out << (c ? "," : "") << buf;
    }
    out << '\n';
  }
}

FeatureMatrix read_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFileError("missing " + path.string());
  FeatureMatrix m;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("csv", "empty feature file");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) m.names.push_back(cell);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != m.names.size()) throw ShapeMismatchError("csv row width differs from header");
    rows.push_back(std::move(row));
  }
  m.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.names.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return m;
}

}  // namespace teashift

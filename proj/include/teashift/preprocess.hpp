#pragma once

#include "teashift/fft.hpp"
#include "teashift/types.hpp"

#include <json.hpp>

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace teashift {

struct Band {
  double low_hz = 0.0;
  double high_hz = 0.0;

  double width() const { return high_hz - low_hz; }
  bool operator==(const Band&) const = default;
};

// ---------------------------------------------------------------------------
// Frequency-domain filtering

// Gain of the band-pass window at frequency |f|: 1 on [low, high], raised-cosine
// roll-off of width `taper_hz` outside each edge, 0 elsewhere.
double bandpass_gain(double f, const Band& band, double taper_hz);

struct FilterResult {
  Series filtered;
  double max_imag = 0.0;  // largest |imag| of the inverse transform before it was dropped
};

FilterResult fft_bandpass_series(const Eigen::Ref<const Series>& x, double fs, const Band& band,
                                 double taper_hz = 0.5);

// Per-channel FFT band-pass. Requires 0 <= low < high <= fs/2.
Epoch fft_bandpass(const Epoch& epoch, const Band& band, double taper_hz = 0.5);

// ---------------------------------------------------------------------------
// Statistical epoch rejection

struct RejectionReport {
  std::vector<double> amplitude_range_z;
  std::vector<double> variance_z;
  std::vector<double> channel_deviation_z;
  std::vector<bool> kept;

  std::size_t n_kept() const;
  std::size_t n_dropped() const { return kept.size() - n_kept(); }
};

void to_json(nlohmann::json& j, const RejectionReport& r);

// Raw per-epoch metrics used by reject_epochs.
double amplitude_range(const Epoch& e);
double mean_channel_variance(const Epoch& e);
double channel_deviation(const Epoch& e);

// Drops epochs whose amplitude range, variance or channel deviation has
// |z| > z_thresh across the subject's epochs. Needs at least three epochs.
std::pair<SubjectRecord, RejectionReport> reject_epochs(const SubjectRecord& subject,
                                                        double z_thresh = 3.0);

// ---------------------------------------------------------------------------
// Resampling

Series resample_series(const Eigen::Ref<const Series>& x, Eigen::Index n_out);

// FFT-domain resampling to `target_hz`; output length round(n * target / fs).
Epoch resample(const Epoch& epoch, double target_hz);

// ---------------------------------------------------------------------------
// Dynamic time warping

using WarpPath = std::vector<std::pair<Eigen::Index, Eigen::Index>>;

struct DtwResult {
  double cost = 0.0;
  WarpPath path;  // (index into a, index into b), from (0,0) to (n-1,m-1)
};

// Squared-difference local cost; optional Sakoe-Chiba half-width.
DtwResult dtw(std::span<const double> a, std::span<const double> b,
              std::optional<std::size_t> window = std::nullopt);
double dtw_distance(std::span<const double> a, std::span<const double> b,
                    std::optional<std::size_t> window = std::nullopt);

struct DbaOptions {
  std::size_t max_iters = 10;
  double tol = 1e-6;
  std::optional<std::size_t> window;
};

struct DbaResult {
  Series barycenter;
  std::size_t medoid = 0;
  std::vector<double> costs;  // total DTW cost after init and each accepted iteration
};

DbaResult dba_average(const Signals& channels, const DbaOptions& options = {});

// Collapses all channels into one DTW barycenter; output is 1 x n_samples.
Epoch dba_average_channels(const Epoch& epoch, const DbaOptions& options = {});

}  // namespace teashift

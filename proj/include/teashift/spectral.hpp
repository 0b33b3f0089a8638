#pragma once

#include "teashift/fft.hpp"
#include "teashift/preprocess.hpp"

#include <span>
#include <vector>

namespace teashift {

struct Psd {
  Eigen::VectorXd freqs;  // 0 .. fs/2, strictly increasing
  Eigen::VectorXd power;  // one-sided density, units^2 / Hz
};

struct WelchOptions {
  double seg_seconds = 2.0;
  double overlap = 0.5;
};

// Hann-windowed, mean-detrended, density-scaled averaged periodogram.
Psd welch_psd(const Eigen::Ref<const Series>& x, double fs, const WelchOptions& options = {});

// Trapezoidal area under the PSD between the band edges (edges interpolated).
double band_power(const Psd& psd, const Band& band);
double total_power(const Psd& psd);
double relative_power(const Psd& psd, const Band& band);

// band_power(num) / band_power(den); throws when the denominator power is zero.
double power_ratio(const Psd& psd, const Band& num, const Band& den);

// (a - b) / (a + b), in [-1, 1].
double amplitude_asymmetry(double p_a, double p_b);

struct AnalyticSignal {
  Eigen::VectorXd phase;     // (-pi, pi]
  Eigen::VectorXd envelope;  // >= 0
};

AnalyticSignal hilbert_analytic(const Eigen::Ref<const Series>& x);

struct PacProfile {
  Eigen::VectorXd distribution;  // normalized mean amplitude per phase bin, sums to 1
  double modulation_index = 0.0; // (log N - H(P)) / log N
  std::vector<std::size_t> empty_bins;
};

PacProfile pac_profile(const Eigen::Ref<const Series>& x, double fs, const Band& phase_band,
                       const Band& amplitude_band, std::size_t n_bins = 18, double taper_hz = 0.5);

// Welch magnitude-squared coherence averaged over the bins inside `band`.
double coherence(const Eigen::Ref<const Series>& x, const Eigen::Ref<const Series>& y, double fs,
                 const Band& band, const WelchOptions& options = {});

// Same estimate for several bands from one set of Welch cross spectra.
std::vector<double> coherence(const Eigen::Ref<const Series>& x, const Eigen::Ref<const Series>& y, double fs,
                              std::span<const Band> bands, const WelchOptions& options = {});

// |mean exp(i(phi_x - phi_y))| of the band-filtered analytic phases.
double plv(const Eigen::Ref<const Series>& x, const Eigen::Ref<const Series>& y, double fs,
           const Band& band, double taper_hz = 0.5);

double phase_locking(const Eigen::Ref<const Eigen::VectorXd>& phase_x,
                     const Eigen::Ref<const Eigen::VectorXd>& phase_y);

// Instantaneous phase of the band-filtered signal.
Eigen::VectorXd band_phase(const Eigen::Ref<const Series>& x, double fs, const Band& band, double taper_hz = 0.5);

struct Hjorth {
  double activity = 0.0;
  double mobility = 0.0;
  double complexity = 0.0;
};

Hjorth hjorth(const Eigen::Ref<const Series>& x, double fs);

// Shannon entropy of the normalized PSD, divided by log2(number of bins).
double spectral_entropy(const Psd& psd);
double spectral_entropy(const Eigen::Ref<const Series>& x, double fs, const WelchOptions& options = {});

}  // namespace teashift

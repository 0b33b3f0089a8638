#include "teashift/spectral.hpp"

#include "teashift/error.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

namespace teashift {

namespace {

struct Segmentation {
  Eigen::Index nperseg = 0;
  Eigen::Index step = 0;
  Eigen::Index count = 0;
  Eigen::VectorXd window;
};

Segmentation segment(Eigen::Index n, double fs, const WelchOptions& options) {
  if (!(fs > 0.0)) throw ValidationError("fs", "sampling rate must be positive");
  if (!(options.seg_seconds > 0.0)) throw ValidationError("seg_seconds", "must be positive");
  if (!(options.overlap >= 0.0 && options.overlap < 1.0)) {
    throw ValidationError("overlap", "must lie in [0, 1)");
  }
  Segmentation s;
  s.nperseg = static_cast<Eigen::Index>(std::llround(options.seg_seconds * fs));
  if (s.nperseg < 2) throw ValidationError("seg_seconds", "segment shorter than two samples");
  if (n < s.nperseg) {
    throw PreconditionError("welch: signal has " + std::to_string(n) + " samples, segment needs " +
                            std::to_string(s.nperseg));
  }
  s.step = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::llround(static_cast<double>(s.nperseg) * (1.0 - options.overlap))));
  s.count = 1 + (n - s.nperseg) / s.step;
  // Periodic Hann.
  s.window.resize(s.nperseg);
  for (Eigen::Index k = 0; k < s.nperseg; ++k) {
    s.window[k] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) /
                                       static_cast<double>(s.nperseg));
  }
  return s;
}

Eigen::VectorXcd segment_spectrum(const Eigen::Ref<const Series>& x, const Segmentation& s, Eigen::Index seg) {
  Series chunk = x.segment(seg * s.step, s.nperseg);
  chunk.array() -= chunk.mean();
  chunk.array() *= s.window.array();
  return fft(chunk);
}

Eigen::Index n_onesided(Eigen::Index nperseg) { return nperseg / 2 + 1; }

Eigen::VectorXd onesided_freqs(Eigen::Index nperseg, double fs) {
  Eigen::VectorXd f(n_onesided(nperseg));
  for (Eigen::Index k = 0; k < f.size(); ++k) f[k] = static_cast<double>(k) * fs / static_cast<double>(nperseg);
  return f;
}

// Linear interpolation of the PSD at frequency f (inside the grid).
double interp(const Psd& psd, Eigen::Index k, double f) {
  const double f0 = psd.freqs[k], f1 = psd.freqs[k + 1];
  const double t = (f - f0) / (f1 - f0);
  return psd.power[k] + t * (psd.power[k + 1] - psd.power[k]);
}

Eigen::VectorXd scaled_diff(const Eigen::Ref<const Series>& x, double fs) {
  return (x.tail(x.size() - 1) - x.head(x.size() - 1)) * fs;
}

double population_variance(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return (v.array() - v.mean()).square().mean();
}

}  // namespace

Psd welch_psd(const Eigen::Ref<const Series>& x, double fs, const WelchOptions& options) {
  const Segmentation s = segment(x.size(), fs, options);
  const Eigen::Index n_bins = n_onesided(s.nperseg);
  Psd psd{onesided_freqs(s.nperseg, fs), Eigen::VectorXd::Zero(n_bins)};
  for (Eigen::Index seg = 0; seg < s.count; ++seg) {
    const Eigen::VectorXcd spec = segment_spectrum(x, s, seg);
    psd.power += spec.head(n_bins).cwiseAbs2();
  }
  const double scale = 1.0 / (fs * s.window.squaredNorm() * static_cast<double>(s.count));
  psd.power *= scale;
  // Fold negative frequencies; DC and (even-length) Nyquist appear once.
  const Eigen::Index last_doubled = s.nperseg % 2 == 0 ? n_bins - 2 : n_bins - 1;
  if (last_doubled >= 1) psd.power.segment(1, last_doubled) *= 2.0;
  return psd;
}

double band_power(const Psd& psd, const Band& band) {
  const Eigen::Index n = psd.freqs.size();
  if (n < 2) throw PreconditionError("band_power: PSD grid needs at least two bins");
  const double tol = 1e-9 * psd.freqs[n - 1];
  if (band.low_hz < psd.freqs[0] - tol || band.high_hz > psd.freqs[n - 1] + tol ||
      band.high_hz < band.low_hz) {
    throw ValidationError("band", "[" + std::to_string(band.low_hz) + ", " + std::to_string(band.high_hz) +
                                      "] Hz is outside the PSD grid");
  }
  const double lo = std::max(band.low_hz, psd.freqs[0]);
  const double hi = std::min(band.high_hz, psd.freqs[n - 1]);
  if (hi <= lo) return 0.0;
  double area = 0.0;
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    const double a = std::max(lo, psd.freqs[k]);
    const double b = std::min(hi, psd.freqs[k + 1]);
    if (b <= a) continue;
    area += 0.5 * (b - a) * (interp(psd, k, a) + interp(psd, k, b));
  }
  return area;
}

double total_power(const Psd& psd) {
  return band_power(psd, Band{psd.freqs[0], psd.freqs[psd.freqs.size() - 1]});
}

double relative_power(const Psd& psd, const Band& band) {
  const double band_p = band_power(psd, band);
  const double total = total_power(psd);
  if (!(total > 0.0)) throw PreconditionError("relative_power: total power is zero");
  return band_p / total;
}

double power_ratio(const Psd& psd, const Band& num, const Band& den) {
  const double d = band_power(psd, den);
  if (!(d > 0.0)) throw PreconditionError("power_ratio: denominator band has zero power");
  return band_power(psd, num) / d;
}

double amplitude_asymmetry(double p_a, double p_b) {
  if (p_a < 0.0 || p_b < 0.0) throw PreconditionError("amplitude_asymmetry: negative power");
  const double sum = p_a + p_b;
  if (!(sum > 0.0)) throw PreconditionError("amplitude_asymmetry: both powers are zero");
  return (p_a - p_b) / sum;
}

AnalyticSignal hilbert_analytic(const Eigen::Ref<const Series>& x) {
  const Eigen::Index n = x.size();
  if (n < 4) throw PreconditionError("hilbert_analytic: need at least 4 samples");
  Eigen::VectorXcd spec = fft(x);
  const Eigen::Index half = n / 2;
  if (n % 2 == 0) {
    spec.segment(1, half - 1) *= 2.0;
    spec.tail(n - half - 1).setZero();
  } else {
    spec.segment(1, half) *= 2.0;
    spec.tail(n - half - 1).setZero();
  }
  const Eigen::VectorXcd z = ifft(spec);
  AnalyticSignal a{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    double phi = std::arg(z[i]);
    if (phi <= -std::numbers::pi) phi = std::numbers::pi;
    a.phase[i] = phi;
    a.envelope[i] = std::abs(z[i]);
  }
  return a;
}

PacProfile pac_profile(const Eigen::Ref<const Series>& x, double fs, const Band& phase_band,
                       const Band& amplitude_band, std::size_t n_bins, double taper_hz) {
  if (n_bins < 2) throw ValidationError("n_bins", "need at least two phase bins");
  const double slowest = phase_band.low_hz > 0.0 ? phase_band.low_hz : phase_band.high_hz;
  if (static_cast<double>(x.size()) / fs < 1.0 / slowest) {
    throw PreconditionError("pac_profile: signal shorter than one cycle of the phase band");
  }
  const auto phase = hilbert_analytic(fft_bandpass_series(x, fs, phase_band, taper_hz).filtered).phase;
  const auto envelope = hilbert_analytic(fft_bandpass_series(x, fs, amplitude_band, taper_hz).filtered).envelope;

  const auto bins = static_cast<Eigen::Index>(n_bins);
  Eigen::VectorXd sums = Eigen::VectorXd::Zero(bins);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(bins);
  const double width = 2.0 * std::numbers::pi / static_cast<double>(n_bins);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    // (-pi, pi] -> bins 0..N-1 by ceiling so the right edge belongs to the last bin.
    auto b = static_cast<Eigen::Index>(std::ceil((phase[i] + std::numbers::pi) / width)) - 1;
    b = std::clamp<Eigen::Index>(b, 0, bins - 1);
    sums[b] += envelope[i];
    counts[b] += 1.0;
  }

  PacProfile profile;
  Eigen::VectorXd means = Eigen::VectorXd::Zero(bins);
  for (Eigen::Index b = 0; b < bins; ++b) {
    if (counts[b] > 0.0) {
      means[b] = sums[b] / counts[b];
    } else {
      profile.empty_bins.push_back(static_cast<std::size_t>(b));
    }
  }
  const double total = means.sum();
  if (!(total > 0.0)) throw PreconditionError("pac_profile: amplitude envelope is identically zero");
  profile.distribution = means / total;

  double entropy = 0.0;
  for (Eigen::Index b = 0; b < bins; ++b) {
    const double p = profile.distribution[b];
    if (p > 0.0) entropy -= p * std::log(p);
  }
  const double max_entropy = std::log(static_cast<double>(n_bins));
  profile.modulation_index = std::max(0.0, (max_entropy - entropy) / max_entropy);
  return profile;
}

std::vector<double> coherence(const Eigen::Ref<const Series>& x, const Eigen::Ref<const Series>& y, double fs,
                              std::span<const Band> bands, const WelchOptions& options) {
  if (x.size() != y.size()) throw PreconditionError("coherence: series lengths differ");
  const Segmentation s = segment(x.size(), fs, options);
  if (s.count < 2) throw PreconditionError("coherence: need at least two Welch segments");
  const Eigen::Index n_bins = n_onesided(s.nperseg);
  Eigen::VectorXd pxx = Eigen::VectorXd::Zero(n_bins), pyy = Eigen::VectorXd::Zero(n_bins);
  Eigen::VectorXcd pxy = Eigen::VectorXcd::Zero(n_bins);
  for (Eigen::Index seg = 0; seg < s.count; ++seg) {
    const Eigen::VectorXcd sx = segment_spectrum(x, s, seg).head(n_bins);
    const Eigen::VectorXcd sy = segment_spectrum(y, s, seg).head(n_bins);
    pxx += sx.cwiseAbs2();
    pyy += sy.cwiseAbs2();
    pxy += sx.conjugate().cwiseProduct(sy);
  }
  const Eigen::VectorXd freqs = onesided_freqs(s.nperseg, fs);
  std::vector<double> out;
  out.reserve(bands.size());
  for (const Band& band : bands) {
    double acc = 0.0;
    int used = 0;
    bool any_in_band = false;
    for (Eigen::Index k = 0; k < n_bins; ++k) {
      if (freqs[k] < band.low_hz || freqs[k] > band.high_hz) continue;
      any_in_band = true;
      const double denom = pxx[k] * pyy[k];
      if (!(denom > 0.0)) continue;
      acc += std::min(1.0, std::norm(pxy[k]) / denom);
      ++used;
    }
    if (!any_in_band) throw ValidationError("band", "no frequency bins inside the coherence band");
    out.push_back(used > 0 ? acc / used : 0.0);
  }
  return out;
}

double coherence(const Eigen::Ref<const Series>& x, const Eigen::Ref<const Series>& y, double fs,
                 const Band& band, const WelchOptions& options) {
  return coherence(x, y, fs, std::span<const Band>(&band, 1), options).front();
}

Eigen::VectorXd band_phase(const Eigen::Ref<const Series>& x, double fs, const Band& band, double taper_hz) {
  return hilbert_analytic(fft_bandpass_series(x, fs, band, taper_hz).filtered).phase;
}

double phase_locking(const Eigen::Ref<const Eigen::VectorXd>& phase_x,
                     const Eigen::Ref<const Eigen::VectorXd>& phase_y) {
  if (phase_x.size() != phase_y.size() || phase_x.size() == 0) {
    throw PreconditionError("plv: phase series lengths differ or are empty");
  }
  std::complex<double> acc{0.0, 0.0};
  for (Eigen::Index i = 0; i < phase_x.size(); ++i) acc += std::polar(1.0, phase_x[i] - phase_y[i]);
  return std::min(1.0, std::abs(acc) / static_cast<double>(phase_x.size()));
}

double plv(const Eigen::Ref<const Series>& x, const Eigen::Ref<const Series>& y, double fs, const Band& band,
           double taper_hz) {
  if (x.size() != y.size()) throw PreconditionError("plv: series lengths differ");
  return phase_locking(band_phase(x, fs, band, taper_hz), band_phase(y, fs, band, taper_hz));
}

Hjorth hjorth(const Eigen::Ref<const Series>& x, double fs) {
  if (x.size() < 3) throw PreconditionError("hjorth: need at least 3 samples");
  const double var_x = population_variance(x);
  if (!(var_x > 0.0)) throw PreconditionError("hjorth: constant signal");
  const Eigen::VectorXd dx = scaled_diff(x, fs);
  const Eigen::VectorXd ddx = scaled_diff(dx, fs);
  const double var_dx = population_variance(dx);
  Hjorth h;
  h.activity = var_x;
  h.mobility = std::sqrt(var_dx / var_x);
  // A pure ramp has a constant derivative; its complexity is reported as 0.
  h.complexity = var_dx > 0.0 ? std::sqrt(population_variance(ddx) / var_dx) / h.mobility : 0.0;
  return h;
}

double spectral_entropy(const Psd& psd) {
  const Eigen::Index n = psd.power.size();
  if (n < 2) throw PreconditionError("spectral_entropy: need at least two bins");
  const double total = psd.power.sum();
  if (!(total > 0.0)) throw PreconditionError("spectral_entropy: all-zero spectrum");
  double h = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double p = psd.power[k] / total;
    if (p > 0.0) h -= p * std::log2(p);
  }
  return std::clamp(h / std::log2(static_cast<double>(n)), 0.0, 1.0);
}

double spectral_entropy(const Eigen::Ref<const Series>& x, double fs, const WelchOptions& options) {
  return spectral_entropy(welch_psd(x, fs, options));
}

}  // namespace teashift

#include "teashift/preprocess.hpp"

#include "teashift/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace teashift {

namespace {

void check_band(const Band& band, double fs) {
  if (!(band.low_hz >= 0.0) || !(band.high_hz > band.low_hz) || band.high_hz > fs / 2.0 + 1e-12) {
    throw ValidationError("band", "[" + std::to_string(band.low_hz) + ", " +
                                      std::to_string(band.high_hz) +
                                      "] Hz is not inside [0, Nyquist=" + std::to_string(fs / 2.0) +
                                      "]");
  }
}

// Population mean/std z-scores; a (numerically) constant metric yields all zeros.
std::vector<double> zscores(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> z(v.size(), 0.0);
  if (!(sd > 1e-12 * std::max(std::abs(mean), 1e-300))) return z;
  for (std::size_t i = 0; i < v.size(); ++i) z[i] = (v[i] - mean) / sd;
  return z;
}

}  // namespace

double bandpass_gain(double f, const Band& band, double taper_hz) {
  f = std::abs(f);
  if (f >= band.low_hz && f <= band.high_hz) return 1.0;
  if (taper_hz <= 0.0) return 0.0;
  const double d = f < band.low_hz ? band.low_hz - f : f - band.high_hz;
  if (d >= taper_hz) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * d / taper_hz));
}

FilterResult fft_bandpass_series(const Eigen::Ref<const Series>& x, double fs, const Band& band,
                                 double taper_hz) {
  check_band(band, fs);
  if (taper_hz < 0.0) throw ValidationError("taper_hz", "must be non-negative");
  const Eigen::Index n = x.size();
  Eigen::VectorXcd spectrum = fft(x);
  // The gain depends on |f| only, so conjugate bins are scaled identically.
  for (Eigen::Index k = 0; k < n; ++k) spectrum[k] *= bandpass_gain(bin_frequency(k, n, fs), band, taper_hz);
  const Eigen::VectorXcd back = ifft(spectrum);
  FilterResult result;
  result.filtered = back.real();
  result.max_imag = n > 0 ? back.imag().cwiseAbs().maxCoeff() : 0.0;
  return result;
}

Epoch fft_bandpass(const Epoch& epoch, const Band& band, double taper_hz) {
  check_band(band, epoch.fs);
  Epoch out = epoch;
  for (Eigen::Index c = 0; c < epoch.n_channels(); ++c) {
    out.samples.row(c) =
        fft_bandpass_series(epoch.samples.row(c).transpose(), epoch.fs, band, taper_hz).filtered.transpose();
  }
  return out;
}

std::size_t RejectionReport::n_kept() const {
  return static_cast<std::size_t>(std::count(kept.begin(), kept.end(), true));
}

void to_json(nlohmann::json& j, const RejectionReport& r) {
  j = nlohmann::json{{"amplitude_range_z", r.amplitude_range_z},
                     {"variance_z", r.variance_z},
                     {"channel_deviation_z", r.channel_deviation_z},
                     {"kept", r.kept},
                     {"n_kept", r.n_kept()},
                     {"n_dropped", r.n_dropped()}};
}

double amplitude_range(const Epoch& e) { return e.samples.maxCoeff() - e.samples.minCoeff(); }

double mean_channel_variance(const Epoch& e) {
  const Eigen::VectorXd means = e.samples.rowwise().mean();
  const double n = static_cast<double>(e.n_samples());
  return ((e.samples.colwise() - means).rowwise().squaredNorm() / n).mean();
}

double channel_deviation(const Epoch& e) {
  if (e.n_channels() < 2) return 0.0;
  const Eigen::VectorXd means = e.samples.rowwise().mean();
  return (means.array() - means.mean()).abs().maxCoeff();
}

std::pair<SubjectRecord, RejectionReport> reject_epochs(const SubjectRecord& subject, double z_thresh) {
  const auto n = subject.epochs.size();
  if (n < 3) {
    throw PreconditionError("reject_epochs: subject " + subject.subject_id + " has " +
                            std::to_string(n) + " epochs, need at least 3");
  }
  std::vector<double> range(n), variance(n), deviation(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = subject.epochs[i];
    range[i] = amplitude_range(e);
    variance[i] = mean_channel_variance(e);
    deviation[i] = channel_deviation(e);
  }
  RejectionReport report{zscores(range), zscores(variance), zscores(deviation), std::vector<bool>(n)};

  SubjectRecord kept = subject;
  kept.epochs.clear();
  for (std::size_t i = 0; i < n; ++i) {
    const bool drop = std::abs(report.amplitude_range_z[i]) > z_thresh ||
                      std::abs(report.variance_z[i]) > z_thresh ||
                      std::abs(report.channel_deviation_z[i]) > z_thresh;
    report.kept[i] = !drop;
    if (!drop) kept.epochs.push_back(subject.epochs[i]);
  }
  return {std::move(kept), std::move(report)};
}

Series resample_series(const Eigen::Ref<const Series>& x, Eigen::Index n_out) {
  const Eigen::Index n_in = x.size();
  if (n_out < 1) throw ValidationError("n_out", "resampled length must be positive");
  if (n_out == n_in) return x;

  const Eigen::VectorXcd in = fft(x);
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(n_out);
  const Eigen::Index n_common = std::min(n_in, n_out);
  const Eigen::Index half = n_common / 2;

  // Bins strictly below the shared Nyquist map one-to-one.
  const Eigen::Index n_pos = n_common % 2 == 0 ? half : half + 1;
  for (Eigen::Index k = 0; k < n_pos; ++k) out[k] = in[k];
  for (Eigen::Index k = 1; k < n_pos; ++k) out[n_out - k] = in[n_in - k];

  if (n_common % 2 == 0) {
    if (n_out < n_in) {
      // Fold both halves of the input at the new Nyquist into one bin.
      out[half] = in[half] + in[n_in - half];
    } else {
      // Split the old Nyquist bin evenly across +/- frequencies.
      out[half] += 0.5 * in[half];
      out[n_out - half] += 0.5 * in[half];
    }
  }
  const double scale = static_cast<double>(n_out) / static_cast<double>(n_in);
  return ifft(out).real() * scale;
}

Epoch resample(const Epoch& epoch, double target_hz) {
  if (!(target_hz > 0.0)) throw ValidationError("target_hz", "must be positive");
  const auto n_out = static_cast<Eigen::Index>(
      std::llround(static_cast<double>(epoch.n_samples()) * target_hz / epoch.fs));
  Epoch out;
  out.fs = target_hz;
  out.stage = epoch.stage;
  if (n_out == epoch.n_samples()) {
    out.samples = epoch.samples;
    return out;
  }
  out.samples.resize(epoch.n_channels(), n_out);
  for (Eigen::Index c = 0; c < epoch.n_channels(); ++c) {
    out.samples.row(c) = resample_series(epoch.samples.row(c).transpose(), n_out).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t effective_window(std::size_t n, std::size_t m, std::optional<std::size_t> window) {
  const std::size_t gap = n > m ? n - m : m - n;
  if (!window) return std::max(n, m);
  return std::max(*window, gap);
}

void check_nonempty(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw PreconditionError("dtw: both series must be nonempty");
}

// Banded accumulated-cost matrix; row i covers columns [lo(i), lo(i) + width).
class CostBand {
 public:
  CostBand(std::size_t n, std::size_t m, std::size_t w)
      : n_(n), m_(m), w_(w), width_(std::min(m, 2 * w + 1)), cells_(n * width_, kInf) {}

  std::size_t lo(std::size_t i) const { return std::min(i > w_ ? i - w_ : 0, m_ - width_); }
  std::size_t hi(std::size_t i) const { return std::min(m_ - 1, i + w_); }

  double get(std::size_t i, std::size_t j) const {
    const std::size_t l = lo(i);
    if (j < l || j >= l + width_ || j > hi(i) || (j + w_ < i)) return kInf;
    return cells_[i * width_ + (j - l)];
  }
  void set(std::size_t i, std::size_t j, double v) { cells_[i * width_ + (j - lo(i))] = v; }

 private:
  std::size_t n_, m_, w_, width_;
  std::vector<double> cells_;
};

}  // namespace

DtwResult dtw(std::span<const double> a, std::span<const double> b, std::optional<std::size_t> window) {
  check_nonempty(a, b);
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  const std::size_t w = effective_window(n, m, window);
  CostBand acc(n, m, w);

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j_lo = i > w ? i - w : 0;
    for (std::size_t j = j_lo; j <= acc.hi(i); ++j) {
      const double d = a[i] - b[j];
      double best;
      if (i == 0 && j == 0) {
        best = 0.0;
      } else {
        best = kInf;
        if (i > 0 && j > 0) best = acc.get(i - 1, j - 1);
        if (i > 0) best = std::min(best, acc.get(i - 1, j));
        if (j > 0) best = std::min(best, acc.get(i, j - 1));
      }
      acc.set(i, j, d * d + best);
    }
  }

  DtwResult result;
  result.cost = acc.get(n - 1, m - 1);
  std::size_t i = n - 1, j = m - 1;
  result.path.emplace_back(i, j);
  while (i > 0 || j > 0) {
    if (i == 0) {
      --j;
    } else if (j == 0) {
      --i;
    } else {
      const double diag = acc.get(i - 1, j - 1);
      const double up = acc.get(i - 1, j);
      const double left = acc.get(i, j - 1);
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    }
    result.path.emplace_back(i, j);
  }
  std::reverse(result.path.begin(), result.path.end());
  return result;
}

double dtw_distance(std::span<const double> a, std::span<const double> b, std::optional<std::size_t> window) {
  check_nonempty(a, b);
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  const std::size_t w = effective_window(n, m, window);
  std::vector<double> prev(m, kInf), cur(m, kInf);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j_lo = i > w ? i - w : 0;
    const std::size_t j_hi = std::min(m - 1, i + w);
    std::fill(cur.begin(), cur.end(), kInf);
    for (std::size_t j = j_lo; j <= j_hi; ++j) {
      const double d = a[i] - b[j];
      double best;
      if (i == 0 && j == 0) {
        best = 0.0;
      } else {
        best = kInf;
        if (i > 0 && j > 0) best = prev[j - 1];
        if (i > 0) best = std::min(best, prev[j]);
        if (j > 0) best = std::min(best, cur[j - 1]);
      }
      cur[j] = d * d + best;
    }
    std::swap(prev, cur);
  }
  return prev[m - 1];
}

namespace {

std::span<const double> row_span(const Signals& s, Eigen::Index r) {
  return {s.data() + r * s.cols(), static_cast<std::size_t>(s.cols())};
}

struct Alignment {
  double total = 0.0;
  Series sums;
  Eigen::VectorXd counts;
};

Alignment align_all(const Series& barycenter, const Signals& channels, std::optional<std::size_t> window) {
  Alignment a{0.0, Series::Zero(barycenter.size()), Eigen::VectorXd::Zero(barycenter.size())};
  const std::span<const double> bary(barycenter.data(), static_cast<std::size_t>(barycenter.size()));
  for (Eigen::Index c = 0; c < channels.rows(); ++c) {
    const auto row = row_span(channels, c);
    const DtwResult r = dtw(bary, row, window);
    a.total += r.cost;
    for (const auto& [i, j] : r.path) {
      a.sums[i] += row[j];
      a.counts[i] += 1.0;
    }
  }
  return a;
}

}  // namespace

DbaResult dba_average(const Signals& channels, const DbaOptions& options) {
  if (channels.rows() < 1 || channels.cols() < 1) throw PreconditionError("dba: need at least one channel");
  const Eigen::Index n_ch = channels.rows();

  DbaResult result;
  if (n_ch == 1) {
    result.barycenter = channels.row(0).transpose();
    result.costs = {0.0};
    return result;
  }

  // Medoid: channel with the smallest summed DTW cost to all others.
  std::vector<double> summed(static_cast<std::size_t>(n_ch), 0.0);
  for (Eigen::Index i = 0; i < n_ch; ++i) {
    for (Eigen::Index j = i + 1; j < n_ch; ++j) {
      const double d = dtw_distance(row_span(channels, i), row_span(channels, j), options.window);
      summed[i] += d;
      summed[j] += d;
    }
  }
  result.medoid = static_cast<std::size_t>(std::min_element(summed.begin(), summed.end()) - summed.begin());
  result.barycenter = channels.row(static_cast<Eigen::Index>(result.medoid)).transpose();

  Alignment current = align_all(result.barycenter, channels, options.window);
  result.costs.push_back(current.total);
  for (std::size_t iter = 0; iter < options.max_iters && current.total > 0.0; ++iter) {
    Series next = current.sums.cwiseQuotient(current.counts);
    Alignment next_alignment = align_all(next, channels, options.window);
    if (next_alignment.total > current.total) break;
    const double improvement = (current.total - next_alignment.total) / current.total;
    result.barycenter = std::move(next);
    current = std::move(next_alignment);
    result.costs.push_back(current.total);
    if (improvement < options.tol) break;
  }
  return result;
}

Epoch dba_average_channels(const Epoch& epoch, const DbaOptions& options) {
  Epoch out;
  out.fs = epoch.fs;
  out.stage = epoch.stage;
  if (epoch.n_channels() == 1) {
    out.samples = epoch.samples;
    return out;
  }
  out.samples = dba_average(epoch.samples, options).barycenter.transpose();
  return out;
}

}  // namespace teashift

#include "teashift/error.hpp"
#include "teashift/preprocess.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <functional>
#include <limits>

using namespace teashift;
using testutil::interior;
using testutil::rms;
using testutil::sine;

namespace {

// Minimum over every monotone warping path, by exhaustive recursion.
double brute_dtw(const std::vector<double>& a, const std::vector<double>& b) {
  std::function<double(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) {
    const double c = (a[i] - b[j]) * (a[i] - b[j]);
    if (i == 0 && j == 0) return c;
    double best = std::numeric_limits<double>::infinity();
    if (i > 0) best = std::min(best, go(i - 1, j));
    if (j > 0) best = std::min(best, go(i, j - 1));
    if (i > 0 && j > 0) best = std::min(best, go(i - 1, j - 1));
    return c + best;
  };
  return go(a.size() - 1, b.size() - 1);
}

std::vector<double> to_vec(const Eigen::VectorXd& x) { return {x.data(), x.data() + x.size()}; }

double total_dtw(const Eigen::VectorXd& center, const Signals& channels) {
  double s = 0.0;
  const auto c = to_vec(center);
  for (Eigen::Index r = 0; r < channels.rows(); ++r) {
    const Eigen::VectorXd row = channels.row(r).transpose();
    s += dtw_distance(c, to_vec(row));
  }
  return s;
}

}  // namespace

TEST_CASE("fft_bandpass on pure tones") {
  const double fs = 200.0;
  const Eigen::Index n = 2000;

  SUBCASE("6 Hz passes a 4-8 Hz brick wall with amplitude kept") {
    const auto x = sine(6.0, 1.5, fs, n);
    const auto y = fft_bandpass_series(x, fs, {4.0, 8.0}, 0.0).filtered;
    CHECK(interior(y).cwiseAbs().maxCoeff() == doctest::Approx(1.5).epsilon(0.02));
    CHECK(rms(interior(y - x)) <= 0.02 * rms(x));
  }
  SUBCASE("20 Hz is attenuated by at least 40 dB") {
    const auto x = sine(20.0, 1.0, fs, n);
    const auto y = fft_bandpass_series(x, fs, {4.0, 8.0}, 0.0).filtered;
    CHECK(rms(interior(y)) <= 0.01 * rms(interior(x)));
  }
  SUBCASE("0 to Nyquist is the identity") {
    const auto x = testutil::white_noise(n, 11);
    const auto y = fft_bandpass_series(x, fs, {0.0, fs / 2.0}, 0.0).filtered;
    CHECK(rms(y - x) <= 1e-9);
  }
  SUBCASE("2 + 6 + 20 Hz mixture keeps only the 6 Hz part") {
    const auto x6 = sine(6.0, 1.0, fs, n);
    const Eigen::VectorXd x = sine(2.0, 1.0, fs, n) + x6 + sine(20.0, 1.0, fs, n);
    const auto y = fft_bandpass_series(x, fs, {4.0, 8.0}, 0.5).filtered;
    CHECK(rms(interior(y - x6)) <= 0.02 * rms(x6));
  }
}

TEST_CASE("fft_bandpass is linear and real") {
  const double fs = 256.0;
  const auto x = testutil::white_noise(1000, 1);
  const auto y = testutil::white_noise(1000, 2);
  const Band b{0.5, 35.0};
  const Eigen::VectorXd lhs = fft_bandpass_series(2.5 * x - 0.75 * y, fs, b).filtered;
  const Eigen::VectorXd rhs = 2.5 * fft_bandpass_series(x, fs, b).filtered - 0.75 * fft_bandpass_series(y, fs, b).filtered;
  CHECK(rms(lhs - rhs) <= 1e-9);
  CHECK(fft_bandpass_series(x, fs, b).max_imag <= 1e-12);
  CHECK(fft_bandpass_series(testutil::white_noise(999, 3), fs, b).max_imag <= 1e-12);
}

TEST_CASE("bandpass_gain window shape") {
  const Band b{4.0, 8.0};
  CHECK(bandpass_gain(6.0, b, 1.0) == 1.0);
  CHECK(bandpass_gain(4.0, b, 1.0) == 1.0);
  CHECK(bandpass_gain(3.5, b, 1.0) == doctest::Approx(0.5));
  CHECK(bandpass_gain(8.5, b, 1.0) == doctest::Approx(0.5));
  CHECK(bandpass_gain(2.9, b, 1.0) == 0.0);
  CHECK(bandpass_gain(8.01, b, 0.0) == 0.0);
}

TEST_CASE("fft_bandpass rejects bands outside Nyquist") {
  const auto e = testutil::epoch_from(testutil::white_noise(400, 1), 100.0);
  CHECK_THROWS_AS(fft_bandpass(e, {1.0, 60.0}), ValidationError);
  CHECK_THROWS_AS(fft_bandpass(e, {5.0, 5.0}), ValidationError);
}

TEST_CASE("reject_epochs") {
  SubjectRecord s;
  s.subject_id = "s";

  SUBCASE("identical epochs are all kept") {
    const auto e = testutil::epoch_from(testutil::white_noise(200, 5), 100.0);
    s.epochs.assign(50, e);
    const auto [kept, report] = reject_epochs(s);
    CHECK(kept.epochs.size() == 50);
    CHECK(report.n_dropped() == 0);
  }
  SUBCASE("one epoch scaled by 20 is the only one dropped") {
    for (int i = 0; i < 50; ++i) {
      Eigen::VectorXd x = testutil::white_noise(1000, 100 + static_cast<std::uint64_t>(i));
      if (i == 17) x *= 20.0;
      s.epochs.push_back(testutil::epoch_from(x, 100.0));
    }
    // Hand z of the variance metric for the outlier.
    std::vector<double> var;
    for (const auto& e : s.epochs) var.push_back(mean_channel_variance(e));
    double mean = 0.0;
    for (double v : var) mean += v / 50.0;
    double ss = 0.0;
    for (double v : var) ss += (v - mean) * (v - mean);
    const double z_sample = (var[17] - mean) / std::sqrt(ss / 49.0);
    REQUIRE(z_sample > 3.0);

    const auto [kept, report] = reject_epochs(s);
    CHECK(report.n_dropped() == 1);
    CHECK_FALSE(report.kept[17]);
    CHECK(report.variance_z[17] > 3.0);
    CHECK(kept.epochs.size() == 49);
    CHECK(report.kept.size() == 50);
  }
  SUBCASE("infinite threshold drops nothing") {
    for (int i = 0; i < 10; ++i) s.epochs.push_back(testutil::epoch_from(testutil::white_noise(100, 7) * (i + 1.0), 100.0));
    const auto [kept, report] = reject_epochs(s, std::numeric_limits<double>::infinity());
    CHECK(kept.epochs.size() == 10);
  }
  SUBCASE("fewer than three epochs") {
    s.epochs.assign(2, testutil::epoch_from(testutil::white_noise(100, 7), 100.0));
    CHECK_THROWS_AS(reject_epochs(s), PreconditionError);
  }
  SUBCASE("channel deviation is zero for one channel") {
    CHECK(channel_deviation(testutil::epoch_from(testutil::white_noise(100, 7), 100.0)) == 0.0);
    Epoch e;
    e.fs = 100.0;
    e.samples = Signals::Zero(3, 10);
    e.samples.row(1).setConstant(3.0);
    CHECK(channel_deviation(e) == doctest::Approx(2.0));
  }
}

TEST_CASE("resample") {
  SUBCASE("7168 samples at 256 Hz become 5600 at 200 Hz") {
    const auto e = testutil::epoch_from(testutil::white_noise(7168, 1), 256.0);
    const Epoch r = resample(e, 200.0);
    CHECK(r.n_samples() == 5600);
    CHECK(r.fs == 200.0);
  }
  SUBCASE("same rate is the identity") {
    const auto x = testutil::white_noise(513, 2);
    const Epoch r = resample(testutil::epoch_from(x, 128.0), 128.0);
    CHECK(rms(Eigen::VectorXd(r.samples.row(0).transpose()) - x) <= 1e-9);
  }
  SUBCASE("10 Hz tone keeps frequency and amplitude") {
    const Epoch r = resample(testutil::epoch_from(sine(10.0, 2.0, 256.0, 2048), 256.0), 200.0);
    const Eigen::VectorXd y = r.samples.row(0).transpose();
    const auto expect = sine(10.0, 2.0, 200.0, y.size());
    CHECK(rms(interior(y - expect)) <= 0.02 * rms(expect));
    CHECK(interior(y).cwiseAbs().maxCoeff() == doctest::Approx(2.0).epsilon(0.02));
  }
  SUBCASE("up then down recovers a band-limited signal") {
    const Eigen::VectorXd x = fft_bandpass_series(testutil::white_noise(1000, 9), 100.0, {0.5, 30.0}, 0.0).filtered;
    const Epoch up = resample(testutil::epoch_from(x, 100.0), 200.0);
    const Epoch down = resample(up, 100.0);
    CHECK(rms(Eigen::VectorXd(down.samples.row(0).transpose()) - x) <= 0.01 * rms(x));
  }
  SUBCASE("energy below the lower Nyquist is kept") {
    const Eigen::VectorXd x = fft_bandpass_series(testutil::white_noise(2560, 4), 256.0, {0.5, 40.0}, 0.0).filtered;
    const Epoch r = resample(testutil::epoch_from(x, 256.0), 200.0);
    const double p_in = x.squaredNorm() / static_cast<double>(x.size());
    const double p_out = r.samples.squaredNorm() / static_cast<double>(r.n_samples());
    CHECK(p_out == doctest::Approx(p_in).epsilon(0.01));
  }
}

TEST_CASE("dtw") {
  SUBCASE("dtw(a, a) = 0") {
    const auto a = to_vec(testutil::white_noise(30, 1));
    CHECK(dtw_distance(a, a) == 0.0);
  }
  SUBCASE("[0,0] vs [1,1] costs 2") {
    const std::vector<double> a{0, 0}, b{1, 1};
    CHECK(dtw_distance(a, b) == 2.0);
    CHECK(brute_dtw(a, b) == 2.0);
  }
  SUBCASE("matches exhaustive path enumeration and is symmetric") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto a = to_vec(testutil::white_noise(3 + static_cast<Eigen::Index>(seed % 4), seed));
      const auto b = to_vec(testutil::white_noise(4 + static_cast<Eigen::Index>(seed % 3), seed + 100));
      CHECK(dtw_distance(a, b) == doctest::Approx(brute_dtw(a, b)).epsilon(1e-12));
      CHECK(dtw_distance(a, b) == dtw_distance(b, a));
    }
  }
  SUBCASE("shifted pulse costs less than the unaligned squared distance") {
    std::vector<double> a(40, 0.0), b(40, 0.0);
    for (int i = 10; i < 15; ++i) a[i] = 1.0;
    for (int i = 16; i < 21; ++i) b[i] = 1.0;
    double euclid = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) euclid += (a[i] - b[i]) * (a[i] - b[i]);
    CHECK(dtw_distance(a, b) < euclid);
    CHECK(dtw_distance(a, b) == 0.0);
  }
  SUBCASE("a band never lowers the cost; window 0 is the squared distance") {
    const auto a = to_vec(testutil::white_noise(25, 5));
    const auto b = to_vec(testutil::white_noise(25, 6));
    double euclid = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) euclid += (a[i] - b[i]) * (a[i] - b[i]);
    CHECK(dtw_distance(a, b, 3) >= dtw_distance(a, b));
    CHECK(dtw_distance(a, b, 0) == doctest::Approx(euclid));
  }
  SUBCASE("path runs corner to corner") {
    const auto a = to_vec(testutil::white_noise(6, 1));
    const auto b = to_vec(testutil::white_noise(9, 2));
    const auto r = dtw(a, b);
    REQUIRE_FALSE(r.path.empty());
    CHECK(r.path.front() == std::pair<Eigen::Index, Eigen::Index>{0, 0});
    CHECK(r.path.back() == std::pair<Eigen::Index, Eigen::Index>{5, 8});
  }
  SUBCASE("empty input") {
    const std::vector<double> a, b{1.0};
    CHECK_THROWS_AS(dtw_distance(a, b), PreconditionError);
  }
}

TEST_CASE("dba_average_channels") {
  const double fs = 200.0;
  SUBCASE("identical channels are a fixed point") {
    Epoch e;
    e.fs = fs;
    e.samples.resize(4, 300);
    const auto x = testutil::white_noise(300, 3);
    for (int r = 0; r < 4; ++r) e.samples.row(r) = x.transpose();
    const Epoch out = dba_average_channels(e);
    CHECK(out.n_channels() == 1);
    CHECK(Eigen::VectorXd(out.samples.row(0).transpose()) == x);
  }
  SUBCASE("one channel passes through") {
    const auto e = testutil::epoch_from(testutil::white_noise(100, 4), fs);
    CHECK(dba_average_channels(e) == e);
  }
  SUBCASE("jittered tones: barycenter beats the arithmetic mean, costs never rise") {
    Signals ch(6, 400);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> jitter(-0.6, 0.6);
    for (int r = 0; r < 6; ++r) ch.row(r) = sine(10.0, 1.0, fs, 400, jitter(rng)).transpose();
    const DbaResult res = dba_average(ch, {10, 1e-6, std::nullopt});
    const Eigen::VectorXd mean = ch.colwise().mean().transpose();
    CHECK(total_dtw(res.barycenter, ch) <= total_dtw(mean, ch));
    for (std::size_t i = 1; i < res.costs.size(); ++i) CHECK(res.costs[i] <= res.costs[i - 1]);
    CHECK(res.costs.back() == doctest::Approx(total_dtw(res.barycenter, ch)));
  }
}

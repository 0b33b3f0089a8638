#include "teashift/fft.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <complex>

using namespace teashift;

namespace {

Eigen::VectorXcd naive_dft(const Eigen::VectorXcd& x) {
  const Eigen::Index n = x.size();
  Eigen::VectorXcd out(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * t % n) / static_cast<double>(n);
      acc += x[t] * std::polar(1.0, ang);
    }
    out[k] = acc;
  }
  return out;
}

}  // namespace

TEST_CASE("fft matches a direct DFT for prime, odd and even lengths") {
  for (Eigen::Index n : {1, 2, 7, 12, 97, 128, 250}) {
    CAPTURE(n);
    const Eigen::VectorXd x = testutil::white_noise(n, static_cast<std::uint64_t>(n));
    const Eigen::VectorXcd ref = naive_dft(x.cast<std::complex<double>>());
    CHECK((fft(x) - ref).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + ref.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("ifft is scaled by 1/n and inverts fft") {
  const Eigen::VectorXd x = testutil::white_noise(301, 3);
  const Eigen::VectorXcd back = ifft(fft(x));
  CHECK((back.real() - x).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(back.imag().cwiseAbs().maxCoeff() <= 1e-12);

  Eigen::VectorXcd delta = Eigen::VectorXcd::Zero(8);
  delta[0] = 8.0;
  const Eigen::VectorXcd ones = ifft(delta);
  CHECK((ones.real().array() - 1.0).abs().maxCoeff() <= 1e-15);
}

TEST_CASE("bin_frequency folds the upper half") {
  CHECK(bin_frequency(0, 10, 100.0) == 0.0);
  CHECK(bin_frequency(5, 10, 100.0) == doctest::Approx(50.0));
  CHECK(bin_frequency(9, 10, 100.0) == doctest::Approx(10.0));
  CHECK(bin_frequency(4, 9, 90.0) == doctest::Approx(40.0));
  CHECK(bin_frequency(5, 9, 90.0) == doctest::Approx(40.0));
}

#include "teashift/fft.hpp"

#include <unsupported/Eigen/FFT>

#include <complex>

namespace teashift {

namespace {

Eigen::FFT<double>& engine() {
  thread_local Eigen::FFT<double> f;
  return f;
}

}  // namespace

Eigen::VectorXcd fft(const Eigen::Ref<const Eigen::VectorXd>& x) {
  Eigen::VectorXcd complex_x = x.cast<std::complex<double>>();
  return fft(complex_x);
}

Eigen::VectorXcd fft(const Eigen::Ref<const Eigen::VectorXcd>& x) {
  Eigen::VectorXcd in = x;
  Eigen::VectorXcd out(in.size());
  if (in.size() <= 1) return in;  // kissfft cannot plan n = 1
  engine().fwd(out.data(), in.data(), static_cast<int>(in.size()));
  return out;
}

Eigen::VectorXcd ifft(const Eigen::Ref<const Eigen::VectorXcd>& spectrum) {
  Eigen::VectorXcd in = spectrum;
  Eigen::VectorXcd out(in.size());
  if (in.size() <= 1) return in;
  engine().inv(out.data(), in.data(), static_cast<int>(in.size()));
  return out;  // Eigen::FFT scales the inverse by 1/n unless Unscaled is set.
}

}  // namespace teashift

#pragma once

#include <Eigen/Dense>

namespace teashift {

using Series = Eigen::VectorXd;

// Full (two-sided) unnormalized DFT of a real or complex series.
Eigen::VectorXcd fft(const Eigen::Ref<const Eigen::VectorXd>& x);
Eigen::VectorXcd fft(const Eigen::Ref<const Eigen::VectorXcd>& x);

// Inverse DFT scaled by 1/n.
Eigen::VectorXcd ifft(const Eigen::Ref<const Eigen::VectorXcd>& spectrum);

// |frequency| in Hz of DFT bin k for an n-point transform.
inline double bin_frequency(Eigen::Index k, Eigen::Index n, double fs) {
  const Eigen::Index folded = k <= n / 2 ? k : n - k;
  return static_cast<double>(folded) * fs / static_cast<double>(n);
}

}  // namespace teashift

#pragma once

#include "teashift/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

namespace testutil {

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("teashift-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline Eigen::VectorXd sine(double freq, double amp, double fs, Eigen::Index n, double phase = 0.0) {
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x[i] = amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / fs + phase);
  }
  return x;
}

inline Eigen::VectorXd white_noise(Eigen::Index n, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = g(rng);
  return x;
}

inline double rms(const Eigen::VectorXd& x) { return std::sqrt(x.squaredNorm() / static_cast<double>(x.size())); }

// Middle 80% of a series.
inline Eigen::VectorXd interior(const Eigen::VectorXd& x) {
  const Eigen::Index skip = x.size() / 10;
  return x.segment(skip, x.size() - 2 * skip);
}

inline teashift::Epoch epoch_from(const Eigen::VectorXd& x, double fs, teashift::SleepStage stage = teashift::SleepStage::W) {
  teashift::Epoch e;
  e.samples = x.transpose();
  e.fs = fs;
  e.stage = stage;
  return e;
}

}  // namespace testutil

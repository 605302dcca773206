#pragma once

#include "otto/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace otto {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Pre-drawn N-channel Brownian increments on a uniform grid. Every particle or path
// that indexes into the same driver sees the same common noise.
class BrownianDriver {
 public:
  BrownianDriver() = default;

  BrownianDriver(int channels, double horizon, double step, std::uint64_t seed)
      : channels_(channels), horizon_(horizon), step_(step), seed_(seed) {
    steps_ = checked_steps(horizon, step);
    increments_.resize(channels, steps_);
    std::mt19937_64 rng(splitmix64(seed));
    std::normal_distribution<double> g(0.0, std::sqrt(step));
    for (int k = 0; k < steps_; ++k)
      for (int c = 0; c < channels_; ++c) increments_(c, k) = g(rng);
  }

  static BrownianDriver zero(int channels, double horizon, double step) {
    BrownianDriver d;
    d.channels_ = channels;
    d.horizon_ = horizon;
    d.step_ = step;
    d.steps_ = checked_steps(horizon, step);
    d.increments_ = Eigen::MatrixXd::Zero(channels, d.steps_);
    return d;
  }

  // Driver with prescribed increments (channels x steps).
  static BrownianDriver from_increments(const Eigen::MatrixXd& dw, double step, std::uint64_t seed = 0) {
    BrownianDriver d;
    d.channels_ = static_cast<int>(dw.rows());
    d.steps_ = static_cast<int>(dw.cols());
    d.step_ = step;
    d.horizon_ = step * d.steps_;
    d.seed_ = seed;
    d.increments_ = dw;
    return d;
  }

  int channels() const { return channels_; }
  int steps() const { return steps_; }
  double step() const { return step_; }
  double horizon() const { return horizon_; }
  std::uint64_t seed() const { return seed_; }
  int level() const { return level_; }
  double time(int k) const { return k * step_; }

  double increment(int channel, int k) const { return increments_(channel, k); }
  const Eigen::MatrixXd& increments() const { return increments_; }

  // W^c(t_k).
  double path(int channel, int k) const { return increments_.row(channel).head(k).sum(); }

  // Halves the step. Each increment dW splits into dW/2 +- sqrt(h)/2 * xi with xi
  // standard normal, which is the exact conditional law of the midpoint given dW.
  BrownianDriver refined() const {
    BrownianDriver d;
    d.channels_ = channels_;
    d.horizon_ = horizon_;
    d.step_ = step_ / 2.0;
    d.steps_ = steps_ * 2;
    d.seed_ = seed_;
    d.level_ = level_ + 1;
    d.increments_.resize(channels_, d.steps_);
    std::mt19937_64 rng(splitmix64(seed_ ^ splitmix64(0xB1D6Eull + static_cast<std::uint64_t>(d.level_))));
    std::normal_distribution<double> g;
    const double half_sd = 0.5 * std::sqrt(step_);
    for (int k = 0; k < steps_; ++k)
      for (int c = 0; c < channels_; ++c) {
        const double dw = increments_(c, k);
        const double z = half_sd * g(rng);
        d.increments_(c, 2 * k) = 0.5 * dw + z;
        d.increments_(c, 2 * k + 1) = 0.5 * dw - z;
      }
    return d;
  }

  BrownianDriver refined(int times) const {
    BrownianDriver d = *this;
    for (int i = 0; i < times; ++i) d = d.refined();
    return d;
  }

  // Doubles the step by summing consecutive pairs.
  BrownianDriver coarsened() const {
    if (steps_ % 2 != 0) raise_numeric("BadGrid", "odd step count cannot be coarsened");
    BrownianDriver d;
    d.channels_ = channels_;
    d.horizon_ = horizon_;
    d.step_ = step_ * 2.0;
    d.steps_ = steps_ / 2;
    d.seed_ = seed_;
    d.level_ = level_ - 1;
    d.increments_.resize(channels_, d.steps_);
    for (int k = 0; k < d.steps_; ++k)
      d.increments_.col(k) = increments_.col(2 * k) + increments_.col(2 * k + 1);
    return d;
  }

  BrownianDriver coarsened(int times) const {
    BrownianDriver d = *this;
    for (int i = 0; i < times; ++i) d = d.coarsened();
    return d;
  }

  // Increments multiplied by a constant (noise-intensity sweeps).
  BrownianDriver scaled(double factor) const {
    BrownianDriver d = *this;
    d.increments_ *= factor;
    return d;
  }

 private:
  static int checked_steps(double horizon, double step) {
    if (!(step > 0.0) || horizon < step * (1.0 - 1e-12))
      raise_numeric("BadGrid", "need h > 0 and T >= h");
    const double ratio = horizon / step;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) > 1e-12 * std::max(1.0, ratio))
      raise_numeric("BadGrid", "T/h is not an integer");
    return static_cast<int>(rounded);
  }

  int channels_ = 0;
  int steps_ = 0;
  double horizon_ = 0.0;
  double step_ = 0.0;
  std::uint64_t seed_ = 0;
  int level_ = 0;
  Eigen::MatrixXd increments_;
};

}  // namespace otto

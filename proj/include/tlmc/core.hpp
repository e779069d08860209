#pragma once

// Shared vocabulary for the tlmc headers: vector aliases, error types and
// the per-chain random streams.

#include <Eigen/Dense>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace tlmc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

inline constexpr const char* kVersion = "tlmc 0.3.0";

/// Precondition violated by the caller (bad dimension, bad parameter).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Internal numerical inconsistency (e.g. an indefinite covariance block).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Iterative solver ran out of iterations.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, Vector last_iterate, double grad_norm)
      : std::runtime_error(what), last_iterate_(std::move(last_iterate)), grad_norm_(grad_norm) {}
  const Vector& last_iterate() const noexcept { return last_iterate_; }
  double grad_norm() const noexcept { return grad_norm_; }

 private:
  Vector last_iterate_;
  double grad_norm_;
};

/// A chain produced a non-finite value.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::uint64_t step)
      : std::runtime_error(what), step_(step) {}
  std::uint64_t step() const noexcept { return step_; }

 private:
  std::uint64_t step_;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ArgumentError(msg);
}

inline void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw ArgumentError(std::string(what) + ": dimension mismatch (got " + std::to_string(got) +
                        ", expected " + std::to_string(want) + ")");
  }
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

// splitmix64 finalizer; used to derive decorrelated stream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Gaussian source for one chain. The stream is a pure function of
/// (seed, stream index), so chains are reproducible regardless of how they
/// are scheduled across threads.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t stream)
      : engine_(mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL))) {}

  double operator()() { return normal_(engine_); }

  void fill(Eigen::Ref<Vector> out) {
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = normal_(engine_);
  }

  boost::random::mt19937_64& engine() { return engine_; }

 private:
  boost::random::mt19937_64 engine_;
  boost::random::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace tlmc

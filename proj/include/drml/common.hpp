#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace drml {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Per-subject Newton solver failed to reach the gradient tolerance.
/// Carries the last iterate so callers can log or retry.
class ModeFailure : public std::runtime_error {
public:
  ModeFailure(std::string msg, VectorXd last_iterate)
      : std::runtime_error(std::move(msg)), last(std::move(last_iterate)) {}
  VectorXd last;
};

// Compensated (Kahan) accumulator. Order-dependent like any float sum,
// so callers that need permutation invariance must fix the term order.
class KahanSum {
public:
  void add(double x) {
    double y = x - comp_;
    double t = sum_ + y;
    comp_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Sum with a permutation-invariant order: sort values, then Kahan.
// Used wherever a total must be bit-identical under subject reordering.
double stable_sum(std::vector<double> values);

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derive a stream seed from a base seed and one or two indices.
/// Deterministic and collision-free in practice for harness use.
inline uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b = 0) {
  return splitmix64(splitmix64(base ^ splitmix64(a + 1)) ^ splitmix64(b + 0x51ED2700));
}

/// Deterministic RNG with hand-rolled samplers so output streams do not
/// depend on standard-library distribution internals.
class Rng {
public:
  explicit Rng(uint64_t seed) : state_(splitmix64(seed ^ 0xD1B54A32D192ED03ULL)) {
    for (int i = 0; i < 4; ++i) next_u64();
  }

  uint64_t next_u64() {
    // xorshift* variant seeded through splitmix
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1DULL;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via Box-Muller (no cached spare; two uniforms per call pair).
  void normal_pair(double& z0, double& z1) {
    double u1 = 1.0 - uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    z0 = r * std::cos(a);
    z1 = r * std::sin(a);
  }

  double normal() {
    double z0, z1;
    normal_pair(z0, z1);
    return z0;
  }

  void fill_normal(VectorXd& v) {
    int i = 0;
    while (i + 1 < v.size()) {
      normal_pair(v[i], v[i + 1]);
      i += 2;
    }
    if (i < v.size()) v[i] = normal();
  }

  bool bernoulli(double p) { return uniform01() < p; }

private:
  uint64_t state_;
};

/// Run fn(i) for i in [0, n). With threads <= 1 this is a plain loop;
/// otherwise a static block partition. fn must only write to slot i of
/// caller-owned storage, so results are independent of the thread count.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

/// Ascending k-subsets of {0,...,q-1} in lexicographic order.
std::vector<std::vector<int>> combinations(int q, int k);

/// log(1 + exp(x)) without overflow.
inline double log1pexp(double x) {
  if (x > 35.0) return x + std::exp(-x);
  if (x < -35.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace drml

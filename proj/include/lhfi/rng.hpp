#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "lhfi/errors.hpp"

namespace lhfi {

/// splitmix64 step; used to derive independent stream seeds from a
/// (master seed, stream id) pair so chains are reproducible individually
/// and insensitive to launch order.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed;
  std::uint64_t a = splitmix64(s);
  s = seed ^ (0x5851f42d4c957f2dULL * (stream + 1));
  std::uint64_t b = splitmix64(s);
  return a ^ (b + 0x9e3779b97f4a7c15ULL * (stream + 1));
}

/// Deterministic random source.  All samplers are implemented here rather
/// than through std:: distribution objects, whose output is not pinned down
/// by the standard; byte-identical reruns across platforms need the exact
/// draw sequence to be ours.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  Rng(std::uint64_t seed, std::uint64_t stream)
      : engine_(derive_stream_seed(seed, stream)) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform on (0, 1); rejects exact zeros so logs are safe.
  double uniform_pos() {
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer uniform on {lo, ..., hi} inclusive, by rejection on the top
  /// range so the law is exact.
  long uniform_int(long lo, long hi) {
    if (hi < lo) throw ValidationError("uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return lo + static_cast<long>(x % span);
  }

  /// Standard normal via Marsaglia's polar method (cached spare deviate).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Gamma(shape, 1) via Marsaglia–Tsang, boosted for shape < 1.
  double gamma(double shape) {
    if (!(shape > 0.0)) throw ValidationError("gamma: shape must be positive");
    if (shape < 1.0) {
      const double u = uniform_pos();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / (3.0 * std::sqrt(d));
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_pos();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double gamma(double shape, double scale) { return scale * gamma(shape); }

  double chi_squared(double df) { return 2.0 * gamma(0.5 * df); }

  /// Inverse gamma with shape a and scale b: density ∝ x^{-a-1} e^{-b/x}.
  double inverse_gamma(double shape, double scale) {
    return scale / gamma(shape);
  }

  /// Binomial(n, p) by direct Bernoulli summation.  Counts here are a few
  /// thousand at most, so the O(n) cost is irrelevant and the draw order
  /// stays trivially reproducible.
  long binomial(long n, double p) {
    if (n < 0) throw ValidationError("binomial: negative count");
    if (p <= 0.0) return 0;
    if (p >= 1.0) return n;
    long k = 0;
    for (long i = 0; i < n; ++i) {
      if (uniform() < p) ++k;
    }
    return k;
  }

  /// Multinomial(n, probs) via conditional binomials.  probs must sum to
  /// one (a residual cell, if any, is expected to be included by the
  /// caller).
  std::vector<long> multinomial(long n, const std::vector<double>& probs) {
    std::vector<long> counts(probs.size(), 0);
    long remaining = n;
    double mass = 1.0;
    for (std::size_t j = 0; j + 1 < probs.size(); ++j) {
      if (remaining == 0) break;
      const double p = mass > 0.0 ? std::min(1.0, probs[j] / mass) : 1.0;
      counts[j] = binomial(remaining, p);
      remaining -= counts[j];
      mass -= probs[j];
    }
    if (!probs.empty()) counts.back() += remaining;
    return counts;
  }

  /// Wishart(df, scale) via the Bartlett decomposition; df > dim - 1.
  Eigen::MatrixXd wishart(double df, const Eigen::MatrixXd& scale) {
    const int d = static_cast<int>(scale.rows());
    if (scale.cols() != d) throw ValidationError("wishart: scale must be square");
    if (!(df > d - 1)) throw ValidationError("wishart: df too small");
    Eigen::LLT<Eigen::MatrixXd> llt(scale);
    if (llt.info() != Eigen::Success) {
      throw ValidationError("wishart: scale not positive definite");
    }
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i) {
      A(i, i) = std::sqrt(chi_squared(df - i));
      for (int j = 0; j < i; ++j) A(i, j) = normal();
    }
    const Eigen::MatrixXd L = llt.matrixL();
    const Eigen::MatrixXd LA = L * A;
    return LA * LA.transpose();
  }

  /// Inverse Wishart(df, scale): inverse of a Wishart(df, scale^{-1}) draw.
  Eigen::MatrixXd inverse_wishart(double df, const Eigen::MatrixXd& scale) {
    const int d = static_cast<int>(scale.rows());
    Eigen::LLT<Eigen::MatrixXd> llt(scale);
    if (llt.info() != Eigen::Success) {
      throw ValidationError("inverse_wishart: scale not positive definite");
    }
    const Eigen::MatrixXd scale_inv =
        llt.solve(Eigen::MatrixXd::Identity(d, d));
    // Symmetrize before Bartlett; solve() leaves ~1 ulp of asymmetry.
    const Eigen::MatrixXd W = wishart(df, 0.5 * (scale_inv + scale_inv.transpose()));
    Eigen::LLT<Eigen::MatrixXd> lltw(W);
    if (lltw.info() != Eigen::Success) {
      throw SamplerError("inverse_wishart: degenerate Wishart draw");
    }
    Eigen::MatrixXd inv = lltw.solve(Eigen::MatrixXd::Identity(d, d));
    return 0.5 * (inv + inv.transpose());
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace lhfi

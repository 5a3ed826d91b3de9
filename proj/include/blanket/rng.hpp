#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "blanket/common.hpp"

namespace blanket {

// Seeded random stream. Samplers are written out explicitly (rather than
// via std::*_distribution) so draws are bit-identical across standard
// library implementations; reproducibility contracts depend on this.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : eng_(mix64(seed)) {}

  // Derive an independent stream from a master seed and a label.
  static RngStream substream(std::uint64_t seed, const std::string& label, std::uint64_t index = 0) {
    std::uint64_t h = fnv1a(label, mix64(seed));
    return RngStream(hash_combine(h, index));
  }

  std::uint64_t next_u64() { return eng_(); }

  // Uniform on (0, 1); never returns exactly 0 or 1.
  double uniform() {
    const double u = (next_u64() >> 11) * 0x1.0p-53;
    return u > 0.0 ? u : 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  double cauchy(double scale) { return scale * std::tan(M_PI * (uniform() - 0.5)); }

  // Marsaglia-Tsang, with the U^{1/a} boost for shape < 1.
  double gamma(double shape, double scale) {
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return scale * d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return scale * d * v;
    }
  }

  double student_t(double dof) {
    const double z = normal();
    const double v = gamma(0.5 * dof, 2.0);
    return z / std::sqrt(v / dof);
  }

  bool bernoulli(double p) { return uniform() < p; }

  std::size_t categorical(const std::vector<double>& probs) {
    double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return probs.empty() ? 0 : probs.size() - 1;
  }

  // Deterministic Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_u64() % i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace blanket

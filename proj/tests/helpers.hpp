#pragma once

// Test-side oracles: quadrature, finite differences, KS statistics and
// small numeric utilities. Everything here is independent of the library
// code paths it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

inline double normal_cdf(double x, double mean = 0.0, double sd = 1.0) {
  return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0)));
}

inline double normal_logpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * M_PI);
}

// Integral of f over the whole real line via the substitution
// x = loc + scale * tan(t), which compactifies heavy tails.
inline double integrate_real_line(const std::function<double(double)>& f, double loc,
                                  double scale, std::size_t n = 200001) {
  const double lo = -M_PI / 2.0, hi = M_PI / 2.0;
  const double h = (hi - lo) / static_cast<double>(n - 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = lo + h * static_cast<double>(i);
    const double c = std::cos(t);
    if (c < 1e-12) continue;
    const double x = loc + scale * std::tan(t);
    const double w = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
    acc += w * f(x) * scale / (c * c);
  }
  return acc * h;
}

// Integral over (0, inf) via x = scale * tan(t), t in (0, pi/2).
inline double integrate_positive(const std::function<double(double)>& f, double scale,
                                 std::size_t n = 200001) {
  const double lo = 0.0, hi = M_PI / 2.0;
  const double h = (hi - lo) / static_cast<double>(n - 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = lo + h * static_cast<double>(i);
    const double c = std::cos(t);
    if (c < 1e-12) continue;
    const double x = scale * std::tan(t);
    if (x <= 0.0) continue;
    const double w = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
    acc += w * f(x) * scale / (c * c);
  }
  return acc * h;
}

inline double integrate_interval(const std::function<double(double)>& f, double lo, double hi,
                                 std::size_t n = 200001) {
  const double h = (hi - lo) / static_cast<double>(n - 1);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
    acc += w * f(lo + h * static_cast<double>(i));
  }
  return acc * h;
}

// One-sample Kolmogorov-Smirnov statistic against a numerically tabulated
// CDF built from a density by cumulative trapezoid on a compactified grid.
class NumericCdf {
 public:
  NumericCdf(const std::function<double(double)>& pdf, double loc, double scale, bool positive,
             std::size_t n = 40001) {
    xs_.reserve(n);
    cs_.reserve(n);
    const double lo = positive ? 1e-9 : -M_PI / 2.0 + 1e-9;
    const double hi = M_PI / 2.0 - 1e-9;
    const double dt = (hi - lo) / static_cast<double>(n - 1);
    double cum = 0.0;
    double prev_g = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = lo + dt * static_cast<double>(i);
      const double x = positive ? scale * std::tan(t) : loc + scale * std::tan(t);
      const double c = std::cos(t);
      // Integrate in the compact coordinate: dx = scale sec^2(t) dt keeps
      // heavy tails finite.
      const double g = pdf(x) * scale / (c * c);
      if (i > 0) cum += 0.5 * (g + prev_g) * dt;
      xs_.push_back(x);
      cs_.push_back(cum);
      prev_g = g;
    }
    for (double& c : cs_) c /= cum;  // normalize tabulation error away
  }

  double operator()(double x) const {
    auto it = std::lower_bound(xs_.begin(), xs_.end(), x);
    if (it == xs_.begin()) return 0.0;
    if (it == xs_.end()) return 1.0;
    const std::size_t i = static_cast<std::size_t>(it - xs_.begin());
    const double t = (x - xs_[i - 1]) / (xs_[i] - xs_[i - 1]);
    return cs_[i - 1] + t * (cs_[i] - cs_[i - 1]);
  }

 private:
  std::vector<double> xs_, cs_;
};

inline double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max(d, std::fabs(f - static_cast<double>(i) / n));
    d = std::max(d, std::fabs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

// Critical value of the one-sample KS statistic at significance alpha.
inline double ks_critical(std::size_t n, double alpha) {
  return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(static_cast<double>(n));
}

// Central-difference gradient of a scalar function of one coordinate.
inline double central_difference(const std::function<double()>& f, double& x, double h = 1e-4) {
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

inline double rel_error(double a, double b) {
  const double denom = std::max(std::fabs(a), std::fabs(b));
  return denom == 0.0 ? 0.0 : std::fabs(a - b) / denom;
}

inline double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

inline double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return acc / static_cast<double>(v.size() - 1);
}

}  // namespace oracle

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <variant>
#include <vector>

#include "blanket/common.hpp"
#include "blanket/rng.hpp"
#include "blanket/value.hpp"

namespace blanket {

// ---------------------------------------------------------------------------
// Concrete densities
// ---------------------------------------------------------------------------

struct Normal {
  double mean;
  double sd;
  Normal(double mean, double sd) : mean(mean), sd(sd) {
    if (!(sd > 0.0)) throw support_error("Normal: sd must be positive");
  }
};

struct StudentT {
  double dof;
  double loc;
  double scale;
  StudentT(double dof, double loc, double scale) : dof(dof), loc(loc), scale(scale) {
    if (!(dof > 0.0)) throw support_error("StudentT: dof must be positive");
    if (!(scale > 0.0)) throw support_error("StudentT: scale must be positive");
  }
};

struct HalfCauchy {
  double scale;
  explicit HalfCauchy(double scale) : scale(scale) {
    if (!(scale > 0.0)) throw support_error("HalfCauchy: scale must be positive");
  }
};

struct Bernoulli {
  double prob;
  explicit Bernoulli(double prob) : prob(prob) {
    if (!(prob >= 0.0 && prob <= 1.0)) throw support_error("Bernoulli: prob must be in [0,1]");
  }
};

struct Categorical {
  std::vector<double> probs;  // normalized at construction
  explicit Categorical(std::vector<double> p) : probs(std::move(p)) {
    if (probs.empty()) throw support_error("Categorical: empty probability vector");
    double total = 0.0;
    for (double x : probs) {
      if (!(x >= 0.0)) throw support_error("Categorical: negative probability");
      total += x;
    }
    if (!(total > 0.0)) throw support_error("Categorical: probabilities sum to zero");
    for (double& x : probs) x /= total;
  }
};

// Finite mixture of normals; a first-class density so multimodal priors can
// be expressed on a single node.
struct NormalMixture {
  std::vector<double> weights;  // normalized at construction
  std::vector<double> means;
  std::vector<double> sds;
  NormalMixture(std::vector<double> w, std::vector<double> m, std::vector<double> s)
      : weights(std::move(w)), means(std::move(m)), sds(std::move(s)) {
    if (weights.empty() || weights.size() != means.size() || weights.size() != sds.size())
      throw support_error("NormalMixture: component size mismatch");
    double total = 0.0;
    for (double x : weights) {
      if (!(x >= 0.0)) throw support_error("NormalMixture: negative weight");
      total += x;
    }
    if (!(total > 0.0)) throw support_error("NormalMixture: weights sum to zero");
    for (double& x : weights) x /= total;
    for (double sd : sds)
      if (!(sd > 0.0)) throw support_error("NormalMixture: sd must be positive");
  }
};

using Distribution = std::variant<Normal, StudentT, HalfCauchy, Bernoulli, Categorical, NormalMixture>;

// ---------------------------------------------------------------------------
// Support metadata
// ---------------------------------------------------------------------------

struct RealLine {};
struct Positive {};
struct Interval {
  double lo;
  double hi;
  Interval(double lo, double hi) : lo(lo), hi(hi) {
    if (!(lo < hi)) throw support_error("Interval: lo must be < hi");
  }
};
struct Binary {};
struct Finite {
  std::size_t n;
  explicit Finite(std::size_t n) : n(n) {
    if (n < 1) throw support_error("Finite: need at least one category");
  }
};

using Support = std::variant<RealLine, Positive, Interval, Binary, Finite>;

inline bool support_is_continuous(const Support& s) {
  return std::holds_alternative<RealLine>(s) || std::holds_alternative<Positive>(s) ||
         std::holds_alternative<Interval>(s);
}

inline std::size_t support_size(const Support& s) {
  if (std::holds_alternative<Binary>(s)) return 2;
  if (const auto* f = std::get_if<Finite>(&s)) return f->n;
  throw type_error("support_size: continuous support");
}

// ---------------------------------------------------------------------------
// Unconstraining transforms
// ---------------------------------------------------------------------------

struct Identity {};
struct LogPositive {};
struct LogitInterval {
  double lo;
  double hi;
};

using Transform = std::variant<Identity, LogPositive, LogitInterval>;

inline double to_unconstrained(const Transform& t, double x) {
  if (std::holds_alternative<Identity>(t)) return x;
  if (std::holds_alternative<LogPositive>(t)) {
    if (!(x > 0.0)) throw support_error("LogPositive: value must be positive");
    return std::log(x);
  }
  const auto& li = std::get<LogitInterval>(t);
  if (!(x > li.lo && x < li.hi)) throw support_error("LogitInterval: value outside interval");
  const double u = (x - li.lo) / (li.hi - li.lo);
  return std::log(u) - std::log1p(-u);
}

inline double from_unconstrained(const Transform& t, double z) {
  if (std::holds_alternative<Identity>(t)) return z;
  if (std::holds_alternative<LogPositive>(t)) return std::exp(z);
  const auto& li = std::get<LogitInterval>(t);
  const double s = 1.0 / (1.0 + std::exp(-z));
  return li.lo + (li.hi - li.lo) * s;
}

// log |dx/dz| of the inverse transform, expressed as a function of the
// constrained value x.
inline double log_abs_det_jacobian(const Transform& t, double x) {
  if (std::holds_alternative<Identity>(t)) return 0.0;
  if (std::holds_alternative<LogPositive>(t)) return std::log(x);
  const auto& li = std::get<LogitInterval>(t);
  const double u = (x - li.lo) / (li.hi - li.lo);
  return std::log(li.hi - li.lo) + std::log(u) + std::log1p(-u);
}

inline Transform transform_for(const Support& s) {
  if (std::holds_alternative<RealLine>(s)) return Identity{};
  if (std::holds_alternative<Positive>(s)) return LogPositive{};
  if (const auto* iv = std::get_if<Interval>(&s)) return LogitInterval{iv->lo, iv->hi};
  throw type_error("transform_for: discrete support has no transform");
}

// ---------------------------------------------------------------------------
// Density operations
// ---------------------------------------------------------------------------

inline double normal_lpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * kLog2Pi;
}

inline double student_t_lpdf(double x, double dof, double loc, double scale) {
  const double z = (x - loc) / scale;
  return std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) - 0.5 * std::log(dof * M_PI) -
         std::log(scale) - 0.5 * (dof + 1.0) * std::log1p(z * z / dof);
}

inline double half_cauchy_lpdf(double x, double scale) {
  if (!(x > 0.0)) return kNegInf;
  const double z = x / scale;
  return std::log(2.0 / M_PI) - std::log(scale) - std::log1p(z * z);
}

inline double log_prob(const Distribution& dist, const Value& v) {
  if (const auto* d = std::get_if<Normal>(&dist)) {
    return normal_lpdf(v.as_real(), d->mean, d->sd);
  }
  if (const auto* d = std::get_if<StudentT>(&dist)) {
    return student_t_lpdf(v.as_real(), d->dof, d->loc, d->scale);
  }
  if (const auto* d = std::get_if<HalfCauchy>(&dist)) {
    return half_cauchy_lpdf(v.as_real(), d->scale);
  }
  if (const auto* d = std::get_if<Bernoulli>(&dist)) {
    const bool b = v.as_boolean();
    if (d->prob <= 0.0) return b ? kNegInf : 0.0;
    if (d->prob >= 1.0) return b ? 0.0 : kNegInf;
    return b ? std::log(d->prob) : std::log1p(-d->prob);
  }
  if (const auto* d = std::get_if<Categorical>(&dist)) {
    const std::int64_t i = v.as_index();
    if (i < 0 || static_cast<std::size_t>(i) >= d->probs.size()) return kNegInf;
    const double p = d->probs[static_cast<std::size_t>(i)];
    return p > 0.0 ? std::log(p) : kNegInf;
  }
  const auto& d = std::get<NormalMixture>(dist);
  const double x = v.as_real();
  double best = kNegInf;
  std::vector<double> terms(d.weights.size());
  for (std::size_t k = 0; k < d.weights.size(); ++k) {
    terms[k] = (d.weights[k] > 0.0 ? std::log(d.weights[k]) : kNegInf) +
               normal_lpdf(x, d.means[k], d.sds[k]);
    best = std::max(best, terms[k]);
  }
  if (!std::isfinite(best)) return kNegInf;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - best);
  return best + std::log(acc);
}

inline Value sample(const Distribution& dist, RngStream& rng) {
  if (const auto* d = std::get_if<Normal>(&dist)) return Value::real(rng.normal(d->mean, d->sd));
  if (const auto* d = std::get_if<StudentT>(&dist))
    return Value::real(d->loc + d->scale * rng.student_t(d->dof));
  if (const auto* d = std::get_if<HalfCauchy>(&dist))
    return Value::real(std::fabs(rng.cauchy(d->scale)));
  if (const auto* d = std::get_if<Bernoulli>(&dist)) return Value::boolean(rng.bernoulli(d->prob));
  if (const auto* d = std::get_if<Categorical>(&dist))
    return Value::index(static_cast<std::int64_t>(rng.categorical(d->probs)));
  const auto& d = std::get<NormalMixture>(dist);
  const std::size_t k = rng.categorical(d.weights);
  return Value::real(rng.normal(d.means[k], d.sds[k]));
}

inline Support support_of(const Distribution& dist) {
  if (std::holds_alternative<Normal>(dist)) return RealLine{};
  if (std::holds_alternative<StudentT>(dist)) return RealLine{};
  if (std::holds_alternative<HalfCauchy>(dist)) return Positive{};
  if (std::holds_alternative<Bernoulli>(dist)) return Binary{};
  if (const auto* d = std::get_if<Categorical>(&dist)) return Finite{d->probs.size()};
  return RealLine{};  // NormalMixture
}

inline bool value_in_support(const Distribution& dist, const Value& v) {
  const Support s = support_of(dist);
  if (std::holds_alternative<RealLine>(s)) return v.is_real() && v.finite();
  if (std::holds_alternative<Positive>(s)) return v.is_real() && v.finite() && v.as_real() > 0.0;
  if (const auto* iv = std::get_if<Interval>(&s))
    return v.is_real() && v.as_real() > iv->lo && v.as_real() < iv->hi;
  if (std::holds_alternative<Binary>(s)) return v.is_boolean();
  const auto& f = std::get<Finite>(s);
  return v.is_index() && v.as_index() >= 0 && static_cast<std::size_t>(v.as_index()) < f.n;
}

// A rough location/scale pair, used for initializing random-walk moves and
// test quadrature grids.
inline std::pair<double, double> location_scale(const Distribution& dist) {
  if (const auto* d = std::get_if<Normal>(&dist)) return {d->mean, d->sd};
  if (const auto* d = std::get_if<StudentT>(&dist)) return {d->loc, d->scale};
  if (const auto* d = std::get_if<HalfCauchy>(&dist)) return {d->scale, d->scale};
  if (const auto* d = std::get_if<NormalMixture>(&dist)) {
    double m = 0.0;
    for (std::size_t k = 0; k < d->weights.size(); ++k) m += d->weights[k] * d->means[k];
    double v = 0.0;
    for (std::size_t k = 0; k < d->weights.size(); ++k) {
      const double dm = d->means[k] - m;
      v += d->weights[k] * (d->sds[k] * d->sds[k] + dm * dm);
    }
    return {m, std::sqrt(v)};
  }
  throw type_error("location_scale: discrete distribution");
}

}  // namespace blanket

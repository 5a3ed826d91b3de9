#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blanket/model.hpp"
#include "blanket/rng.hpp"

namespace blanket {

// A benchmark model: the declarative program, default observations (already
// inside the model), a dataset manifest, and optional held-out points.
struct ZooModel {
  std::string name;
  std::shared_ptr<const Model> model;
  nlohmann::json manifest;
  std::map<Address, Value> heldout;
  // Synthetic dataset as {"columns": [...], "rows": [[...]]} for models
  // with a generator; empty otherwise.
  nlohmann::json data_table;
};

// ---------------------------------------------------------------------------
// Conjugate normal-normal: x ~ N(0, sx), y | x ~ N(x, sy), y observed.
// ---------------------------------------------------------------------------

struct ConjPosterior {
  double mean;
  double sd;
};

inline ConjPosterior conj_normal_posterior(double y, double sigma_x, double sigma_y) {
  const double px = 1.0 / (sigma_x * sigma_x);
  const double py = 1.0 / (sigma_y * sigma_y);
  return {py / (px + py) * y, std::sqrt(1.0 / (px + py))};
}

inline ZooModel conj_normal(double sigma_x = 2.0, double sigma_y = 0.1, double y_obs = 0.25) {
  if (!(sigma_x > 0.0 && sigma_y > 0.0)) throw support_error("conj_normal: scales must be positive");
  auto m = std::make_shared<Model>();
  m->name = "conj-normal";
  const Address x("x"), y("y");
  m->fn = [=](const Address& a, NodeReader& r) -> Distribution {
    if (a == x) return Normal(0.0, sigma_x);
    if (a == y) return Normal(r.real(x), sigma_y);
    throw unknown_address_error("conj-normal: " + a.str());
  };
  m->observations = {{y, Value::real(y_obs)}};
  m->queries = {x};
  ZooModel zm;
  zm.name = m->name;
  zm.model = m;
  zm.manifest = {{"model", m->name}, {"sigma_x", sigma_x}, {"sigma_y", sigma_y}, {"y", y_obs}};
  return zm;
}

// ---------------------------------------------------------------------------
// Bimodal mixture target: x has a two-component normal prior with more
// weight on the distant right component; a weakly informative observation
// keeps both modes alive. The posterior is again a two-component mixture
// with closed-form weights, means and sds.
// ---------------------------------------------------------------------------

struct Gmm2dSpec {
  std::vector<double> prior_weights{0.4, 0.6};
  std::vector<double> prior_means{0.0, 10.0};
  std::vector<double> prior_sds{0.5, 0.5};
  double obs_slope = 0.05;  // y | x ~ N(obs_slope * x, obs_sd)
  double obs_sd = 0.5;
  double y_obs = 0.25;
};

struct Gmm2dPosterior {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> sds;

  // Posterior mass of the basin around the right-hand mode.
  double right_mode_mass(double cut = 5.0) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k)
      acc += weights[k] * 0.5 * std::erfc((cut - means[k]) / (sds[k] * std::sqrt(2.0)));
    return acc;
  }
};

// Exact two-term enumeration: condition each prior component on the linear
// Gaussian observation and reweigh by the component evidence.
inline Gmm2dPosterior gmm2d_posterior(double y, const Gmm2dSpec& spec = {}) {
  Gmm2dPosterior post;
  const double a = spec.obs_slope;
  const double ns = spec.obs_sd;
  std::vector<double> log_ev(spec.prior_weights.size());
  double max_ev = kNegInf;
  for (std::size_t k = 0; k < spec.prior_weights.size(); ++k) {
    const double s0 = spec.prior_sds[k];
    const double prec = 1.0 / (s0 * s0) + a * a / (ns * ns);
    post.means.push_back((spec.prior_means[k] / (s0 * s0) + a * y / (ns * ns)) / prec);
    post.sds.push_back(std::sqrt(1.0 / prec));
    const double ev_sd = std::sqrt(a * a * s0 * s0 + ns * ns);
    log_ev[k] = std::log(spec.prior_weights[k]) + normal_lpdf(y, a * spec.prior_means[k], ev_sd);
    max_ev = std::max(max_ev, log_ev[k]);
  }
  double tot = 0.0;
  for (double le : log_ev) tot += std::exp(le - max_ev);
  for (double le : log_ev) post.weights.push_back(std::exp(le - max_ev) / tot);
  return post;
}

inline ZooModel gmm2d(const Gmm2dSpec& spec = {}) {
  auto m = std::make_shared<Model>();
  m->name = "gmm2d";
  const Address x("x"), y("y");
  m->fn = [spec, x, y](const Address& a, NodeReader& r) -> Distribution {
    if (a == x) return NormalMixture(spec.prior_weights, spec.prior_means, spec.prior_sds);
    if (a == y) return Normal(spec.obs_slope * r.real(x), spec.obs_sd);
    throw unknown_address_error("gmm2d: " + a.str());
  };
  m->observations = {{y, Value::real(spec.y_obs)}};
  m->queries = {x};
  ZooModel zm;
  zm.name = m->name;
  zm.model = m;
  zm.manifest = {{"model", m->name},
                 {"prior_weights", spec.prior_weights},
                 {"prior_means", spec.prior_means},
                 {"prior_sds", spec.prior_sds},
                 {"obs_slope", spec.obs_slope},
                 {"obs_sd", spec.obs_sd},
                 {"y", spec.y_obs}};
  return zm;
}

// ---------------------------------------------------------------------------
// Nuisance robustness model: x, y and a noisy squared length, plus a block
// of indexed nuisance variables independent of everything queried.
// ---------------------------------------------------------------------------

inline ZooModel nuisance_model(std::size_t n_nuisance = 100, double obs_sq = 25.0) {
  auto m = std::make_shared<Model>();
  m->name = "nuisance";
  const Address x("x"), y("y"), obs("noisy_sq_length");
  m->fn = [=](const Address& a, NodeReader& r) -> Distribution {
    if (a == x || a == y) return Normal(0.0, 10.0);
    if (a.family() == "nuisance") return Normal(0.0, 10.0);
    if (a == obs) {
      const double xv = r.real(x);
      const double yv = r.real(y);
      return Normal(xv * xv + yv * yv, 0.1);
    }
    throw unknown_address_error("nuisance: " + a.str());
  };
  m->observations = {{obs, Value::real(obs_sq)}};
  m->queries = {x, y};
  for (std::size_t i = 0; i < n_nuisance; ++i)
    m->queries.push_back(Address("nuisance", static_cast<int>(i)));
  ZooModel zm;
  zm.name = m->name;
  zm.model = m;
  zm.manifest = {{"model", m->name}, {"n_nuisance", n_nuisance}, {"obs_sq", obs_sq}};
  return zm;
}

// ---------------------------------------------------------------------------
// Bayesian logistic regression with synthetic covariates and labels.
// ---------------------------------------------------------------------------

inline double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

struct BlrConfig {
  std::size_t n_rows = 2000;
  std::size_t n_features = 10;
  std::uint64_t seed = 7;
  double test_fraction = 0.2;
  // Prior covariance diag(10, 2.5, ...): entries read as variances by
  // default; set false to read them as sds.
  bool prior_entries_are_variances = true;
};

inline ZooModel blr(const BlrConfig& cfg = {}) {
  const std::size_t d = cfg.n_features;
  const std::size_t n = cfg.n_rows;
  const double sd0 = cfg.prior_entries_are_variances ? std::sqrt(10.0) : 10.0;
  const double sdj = cfg.prior_entries_are_variances ? std::sqrt(2.5) : 2.5;

  RngStream rng = RngStream::substream(cfg.seed, "blr-data");
  auto covariates = std::make_shared<std::vector<std::vector<double>>>();
  covariates->reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(d + 1, 1.0);  // intercept column first
    for (std::size_t j = 1; j <= d; ++j) row[j] = rng.normal();
    covariates->push_back(std::move(row));
  }
  std::vector<double> beta_true(d + 1);
  beta_true[0] = rng.normal(0.0, sd0);
  for (std::size_t j = 1; j <= d; ++j) beta_true[j] = rng.normal(0.0, sdj);
  std::vector<bool> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    double t = 0.0;
    for (std::size_t j = 0; j <= d; ++j) t += beta_true[j] * (*covariates)[i][j];
    labels[i] = rng.bernoulli(logistic(t));
  }

  auto m = std::make_shared<Model>();
  m->name = "blr";
  m->fn = [covariates, d, sd0, sdj](const Address& a, NodeReader& r) -> Distribution {
    if (a.family() == "beta") {
      const int j = a.args()[0];
      return Normal(0.0, j == 0 ? sd0 : sdj);
    }
    if (a.family() == "y") {
      const std::size_t i = static_cast<std::size_t>(a.args()[0]);
      double t = 0.0;
      for (std::size_t j = 0; j <= d; ++j)
        t += r.real(Address("beta", static_cast<int>(j))) * (*covariates)[i][j];
      return Bernoulli(logistic(t));
    }
    throw unknown_address_error("blr: " + a.str());
  };
  for (std::size_t j = 0; j <= d; ++j) m->queries.push_back(Address("beta", static_cast<int>(j)));

  const std::size_t n_test = static_cast<std::size_t>(static_cast<double>(n) * cfg.test_fraction);
  const std::size_t n_train = n - n_test;
  ZooModel zm;
  for (std::size_t i = 0; i < n_train; ++i)
    m->observations.emplace(Address("y", static_cast<int>(i)), Value::boolean(labels[i]));
  for (std::size_t i = n_train; i < n; ++i)
    zm.heldout.emplace(Address("y", static_cast<int>(i)), Value::boolean(labels[i]));

  zm.name = m->name;
  zm.model = m;
  zm.manifest = {{"model", m->name},
                 {"n_rows", n},
                 {"n_features", d},
                 {"n_train", n_train},
                 {"n_test", n_test},
                 {"seed", cfg.seed},
                 {"prior_entries_are_variances", cfg.prior_entries_are_variances},
                 {"beta_true", beta_true}};
  nlohmann::json columns = nlohmann::json::array({"row"});
  for (std::size_t j = 1; j <= d; ++j) columns.push_back("x" + std::to_string(j));
  columns.push_back("y");
  columns.push_back("split");
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < n; ++i) {
    nlohmann::json row = nlohmann::json::array({i});
    for (std::size_t j = 1; j <= d; ++j) row.push_back((*covariates)[i][j]);
    row.push_back(labels[i] ? 1 : 0);
    row.push_back(i < n_train ? "train" : "test");
    rows.push_back(row);
  }
  zm.data_table = {{"columns", columns}, {"rows", rows}};
  return zm;
}

// ---------------------------------------------------------------------------
// n-schools: hierarchical effects over state/district/type groupings.
// ---------------------------------------------------------------------------

struct NschoolsConfig {
  std::size_t n_schools = 50;
  std::size_t n_states = 8;
  std::size_t n_districts = 5;
  std::size_t n_types = 5;
  std::uint64_t seed = 11;
  double test_fraction = 0.2;
  double tau_scale = 1.0;      // HalfCauchy scale for every level
  double obs_sd_lo = 0.5;      // per-school noise sd ~ U(lo, hi)
  double obs_sd_hi = 1.5;
};

inline ZooModel nschools(const NschoolsConfig& cfg = {}) {
  const std::vector<std::size_t> level_sizes{cfg.n_states, cfg.n_districts, cfg.n_types};
  const std::size_t n_levels = level_sizes.size();
  const std::size_t K = cfg.n_schools;

  RngStream rng = RngStream::substream(cfg.seed, "nschools-data");
  auto assign = std::make_shared<std::vector<std::vector<int>>>(
      n_levels, std::vector<int>(K, 0));
  for (std::size_t i = 0; i < n_levels; ++i)
    for (std::size_t k = 0; k < K; ++k)
      (*assign)[i][k] = static_cast<int>(rng.next_u64() % level_sizes[i]);
  auto obs_sd = std::make_shared<std::vector<double>>(K);
  for (std::size_t k = 0; k < K; ++k) (*obs_sd)[k] = rng.uniform(cfg.obs_sd_lo, cfg.obs_sd_hi);

  // True effects for the synthetic data: sampled from the hierarchy with
  // the tau draws redrawn until moderate, so default fixtures stay tame.
  std::vector<double> tau_true(n_levels);
  for (std::size_t i = 0; i < n_levels; ++i) {
    double t = std::fabs(rng.cauchy(cfg.tau_scale));
    while (t > 5.0) t = std::fabs(rng.cauchy(cfg.tau_scale));
    tau_true[i] = t;
  }
  const double beta0_true = rng.normal(0.0, 2.0);
  std::vector<std::vector<double>> beta_true(n_levels);
  for (std::size_t i = 0; i < n_levels; ++i) {
    beta_true[i].resize(level_sizes[i]);
    for (std::size_t j = 0; j < level_sizes[i]; ++j) beta_true[i][j] = rng.normal(0.0, tau_true[i]);
  }
  std::vector<double> y_true(K);
  for (std::size_t k = 0; k < K; ++k) {
    double mean = beta0_true;
    for (std::size_t i = 0; i < n_levels; ++i) mean += beta_true[i][(*assign)[i][k]];
    y_true[k] = rng.normal(mean, (*obs_sd)[k]);
  }

  const double tau_scale = cfg.tau_scale;
  auto m = std::make_shared<Model>();
  m->name = "nschools";
  m->fn = [assign, obs_sd, tau_scale, n_levels](const Address& a, NodeReader& r) -> Distribution {
    if (a.family() == "beta0") return StudentT(3.0, 0.0, 10.0);
    if (a.family() == "tau") return HalfCauchy(tau_scale);
    if (a.family() == "beta") {
      const int level = a.args()[0];
      return Normal(0.0, r.real(Address("tau", level)));
    }
    if (a.family() == "y") {
      const std::size_t k = static_cast<std::size_t>(a.args()[0]);
      double mean = r.real(Address("beta0"));
      for (std::size_t i = 0; i < n_levels; ++i)
        mean += r.real(Address("beta", static_cast<int>(i), (*assign)[i][k]));
      return Normal(mean, (*obs_sd)[k]);
    }
    throw unknown_address_error("nschools: " + a.str());
  };
  m->queries.push_back(Address("beta0"));
  for (std::size_t i = 0; i < n_levels; ++i) m->queries.push_back(Address("tau", static_cast<int>(i)));
  for (std::size_t i = 0; i < n_levels; ++i)
    for (std::size_t j = 0; j < level_sizes[i]; ++j)
      m->queries.push_back(Address("beta", static_cast<int>(i), static_cast<int>(j)));

  const std::size_t n_test = static_cast<std::size_t>(static_cast<double>(K) * cfg.test_fraction);
  const std::size_t n_train = K - n_test;
  ZooModel zm;
  for (std::size_t k = 0; k < n_train; ++k)
    m->observations.emplace(Address("y", static_cast<int>(k)), Value::real(y_true[k]));
  for (std::size_t k = n_train; k < K; ++k)
    zm.heldout.emplace(Address("y", static_cast<int>(k)), Value::real(y_true[k]));

  zm.name = m->name;
  zm.model = m;
  zm.manifest = {{"model", m->name},
                 {"n_schools", K},
                 {"n_states", cfg.n_states},
                 {"n_districts", cfg.n_districts},
                 {"n_types", cfg.n_types},
                 {"n_train", n_train},
                 {"n_test", n_test},
                 {"seed", cfg.seed},
                 {"tau_scale", cfg.tau_scale},
                 {"beta0_true", beta0_true},
                 {"tau_true", tau_true}};
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t k = 0; k < K; ++k) {
    rows.push_back({k, (*assign)[0][k], (*assign)[1][k], (*assign)[2][k], (*obs_sd)[k], y_true[k],
                    k < n_train ? "train" : "test"});
  }
  zm.data_table = {{"columns", {"school", "state", "district", "type", "obs_sd", "y", "split"}},
                   {"rows", rows}};
  return zm;
}

// ---------------------------------------------------------------------------
// Reduced discrete mixture-indicator model; small enough to enumerate.
// c picks a component, m is a discretized location, o is a noisy binary
// observation of m.
// ---------------------------------------------------------------------------

struct DiscreteGmmSpec {
  double p_c = 0.6;
  std::vector<double> m_given_c0{0.7, 0.2, 0.1};
  std::vector<double> m_given_c1{0.1, 0.2, 0.7};
  std::vector<double> p_o_given_m{0.2, 0.5, 0.8};
  bool o_obs = true;
};

inline ZooModel discrete_gmm(const DiscreteGmmSpec& spec = {}) {
  auto m = std::make_shared<Model>();
  m->name = "discrete-gmm";
  const Address c("c"), loc("m"), o("o");
  m->fn = [spec, c, loc, o](const Address& a, NodeReader& r) -> Distribution {
    if (a == c) return Bernoulli(spec.p_c);
    if (a == loc) return Categorical(r.boolean(c) ? spec.m_given_c1 : spec.m_given_c0);
    if (a == o) return Bernoulli(spec.p_o_given_m[static_cast<std::size_t>(r.index(loc))]);
    throw unknown_address_error("discrete-gmm: " + a.str());
  };
  m->observations = {{o, Value::boolean(spec.o_obs)}};
  m->queries = {c, loc};
  ZooModel zm;
  zm.name = m->name;
  zm.model = m;
  zm.manifest = {{"model", m->name}, {"p_c", spec.p_c}, {"o_obs", spec.o_obs}};
  return zm;
}

// Exact joint posterior over (c, m) given the observation; keyed c * 3 + m.
inline std::vector<double> discrete_gmm_enumerate(const DiscreteGmmSpec& spec = {}) {
  std::vector<double> joint(2 * 3, 0.0);
  double total = 0.0;
  for (int cv = 0; cv < 2; ++cv) {
    const auto& pm = cv ? spec.m_given_c1 : spec.m_given_c0;
    for (int mv = 0; mv < 3; ++mv) {
      const double po = spec.o_obs ? spec.p_o_given_m[static_cast<std::size_t>(mv)]
                                   : 1.0 - spec.p_o_given_m[static_cast<std::size_t>(mv)];
      const double p = (cv ? spec.p_c : 1.0 - spec.p_c) * pm[static_cast<std::size_t>(mv)] * po;
      joint[static_cast<std::size_t>(cv * 3 + mv)] = p;
      total += p;
    }
  }
  for (double& p : joint) p /= total;
  return joint;
}

}  // namespace blanket

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

#include "blanket/infer.hpp"
#include "blanket/model.hpp"

namespace blanket {

// Rectangular n_chains x n_draws sample array for one scalar quantity.
struct SampleMatrix {
  std::size_t n_chains = 0;
  std::size_t n_draws = 0;
  std::vector<double> data;  // row-major by chain

  SampleMatrix() = default;
  SampleMatrix(std::size_t chains, std::size_t draws)
      : n_chains(chains), n_draws(draws), data(chains * draws, 0.0) {}

  double& at(std::size_t c, std::size_t d) { return data[c * n_draws + d]; }
  double at(std::size_t c, std::size_t d) const { return data[c * n_draws + d]; }
};

namespace detail {

inline double chain_mean(const SampleMatrix& m, std::size_t c) {
  double acc = 0.0;
  for (std::size_t d = 0; d < m.n_draws; ++d) acc += m.at(c, d);
  return acc / static_cast<double>(m.n_draws);
}

// Biased (1/n) autocovariance at a given lag for one chain.
inline double autocov(const SampleMatrix& m, std::size_t c, std::size_t lag, double mean) {
  double acc = 0.0;
  for (std::size_t d = 0; d + lag < m.n_draws; ++d)
    acc += (m.at(c, d) - mean) * (m.at(c, d + lag) - mean);
  return acc / static_cast<double>(m.n_draws);
}

inline bool constant_input(const SampleMatrix& m) {
  for (double x : m.data)
    if (x != m.data[0]) return false;
  return true;
}

}  // namespace detail

// Multi-chain effective sample size with Geyer initial-monotone-sequence
// truncation: combined autocorrelations are summed in even-lag pairs,
// stopping at the first non-positive pair and enforcing monotonicity.
// Constant input is reported as n_chains * n_draws and flagged.
inline double ess(const SampleMatrix& m, bool* flagged = nullptr) {
  if (m.n_draws < 4) throw error("ess: need at least 4 draws");
  if (flagged) *flagged = false;
  const double total = static_cast<double>(m.n_chains * m.n_draws);
  if (detail::constant_input(m)) {
    if (flagged) *flagged = true;
    return total;
  }

  const std::size_t M = m.n_chains;
  const std::size_t n = m.n_draws;
  std::vector<double> means(M);
  std::vector<double> vars(M);  // unbiased within-chain variances
  for (std::size_t c = 0; c < M; ++c) {
    means[c] = detail::chain_mean(m, c);
    double acc = 0.0;
    for (std::size_t d = 0; d < n; ++d) {
      const double r = m.at(c, d) - means[c];
      acc += r * r;
    }
    vars[c] = acc / static_cast<double>(n - 1);
  }
  const double W = std::accumulate(vars.begin(), vars.end(), 0.0) / static_cast<double>(M);
  double B_over_n = 0.0;
  if (M >= 2) {
    const double grand = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(M);
    for (double mu : means) B_over_n += (mu - grand) * (mu - grand);
    B_over_n /= static_cast<double>(M - 1);
  }
  const double var_plus =
      W * static_cast<double>(n - 1) / static_cast<double>(n) + (M >= 2 ? B_over_n : W / static_cast<double>(n));
  if (!(var_plus > 0.0)) {
    if (flagged) *flagged = true;
    return total;
  }

  auto rho = [&](std::size_t lag) {
    double acc = 0.0;
    for (std::size_t c = 0; c < M; ++c) acc += detail::autocov(m, c, lag, means[c]);
    acc /= static_cast<double>(M);
    return 1.0 - (W - acc) / var_plus;
  };

  double tau = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
    double pair = rho(2 * k) + rho(2 * k + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  tau -= 1.0;
  tau = std::max(tau, 1.0 / std::log10(total + 10.0));  // guard against super-efficient estimates of ~0
  return total / tau;
}

// Rank-normalized split R-hat: each chain is halved, pooled draws are
// mapped through inverse-normal fractional ranks, and the classic
// between/within ratio is computed on the transformed values. Constant
// input returns 1.0 and is flagged.
inline double r_hat(const SampleMatrix& m, bool* flagged = nullptr) {
  if (m.n_chains < 2) throw error("r_hat: need at least 2 chains");
  if (m.n_draws < 4) throw error("r_hat: need at least 4 draws");
  if (flagged) *flagged = false;
  if (detail::constant_input(m)) {
    if (flagged) *flagged = true;
    return 1.0;
  }

  const std::size_t half = m.n_draws / 2;
  const std::size_t M2 = 2 * m.n_chains;
  SampleMatrix split(M2, half);
  for (std::size_t c = 0; c < m.n_chains; ++c) {
    for (std::size_t d = 0; d < half; ++d) {
      split.at(2 * c, d) = m.at(c, d);
      split.at(2 * c + 1, d) = m.at(c, m.n_draws - half + d);
    }
  }

  // Fractional ranks with ties averaged, then the normal quantile.
  const std::size_t S = split.data.size();
  std::vector<std::size_t> idx(S);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return split.data[a] < split.data[b]; });
  std::vector<double> rank(S);
  for (std::size_t i = 0; i < S;) {
    std::size_t j = i;
    while (j + 1 < S && split.data[idx[j + 1]] == split.data[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[idx[t]] = avg;
    i = j + 1;
  }
  const boost::math::normal_distribution<double> std_normal;
  SampleMatrix z(M2, half);
  for (std::size_t i = 0; i < S; ++i) {
    const double u = (rank[i] - 0.375) / (static_cast<double>(S) + 0.25);
    z.data[i] = boost::math::quantile(std_normal, u);
  }

  std::vector<double> means(M2);
  std::vector<double> vars(M2);
  for (std::size_t c = 0; c < M2; ++c) {
    means[c] = detail::chain_mean(z, c);
    double acc = 0.0;
    for (std::size_t d = 0; d < half; ++d) {
      const double r = z.at(c, d) - means[c];
      acc += r * r;
    }
    vars[c] = acc / static_cast<double>(half - 1);
  }
  const double W = std::accumulate(vars.begin(), vars.end(), 0.0) / static_cast<double>(M2);
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(M2);
  double B_over_n = 0.0;
  for (double mu : means) B_over_n += (mu - grand) * (mu - grand);
  B_over_n /= static_cast<double>(M2 - 1);
  const double var_plus = W * static_cast<double>(half - 1) / static_cast<double>(half) + B_over_n;
  if (!(W > 0.0)) {
    if (flagged) *flagged = true;
    return 1.0;
  }
  return std::sqrt(var_plus / W);
}

// ---------------------------------------------------------------------------
// Predictive log-likelihood
// ---------------------------------------------------------------------------

using Assignment = std::map<Address, Value>;

namespace detail {

// Evaluates a node's distribution against a fixed assignment (no world).
class AssignmentReader : public NodeReader {
 public:
  AssignmentReader(const Assignment& values, const Model& model)
      : values_(values), model_(model) {}
  Value value(const Address& addr) override {
    auto it = values_.find(addr);
    if (it != values_.end()) return it->second;
    auto obs = model_.observations.find(addr);
    if (obs != model_.observations.end()) return obs->second;
    throw unknown_address_error("held-out evaluation reads unassigned address " + addr.str());
  }

 private:
  const Assignment& values_;
  const Model& model_;
};

}  // namespace detail

// Sum over held-out points of log mean_s p(point | sample_s), stabilized
// with log-sum-exp over the posterior samples.
inline double pll(const std::vector<Assignment>& samples, const Model& model,
                  const std::map<Address, Value>& heldout) {
  if (samples.empty()) throw error("pll: need at least one posterior sample");
  if (heldout.empty()) throw error("pll: empty held-out set");
  double total = 0.0;
  for (const auto& [addr, value] : heldout) {
    std::vector<double> lls;
    lls.reserve(samples.size());
    for (const Assignment& s : samples) {
      detail::AssignmentReader reader(s, model);
      Distribution d = model.evaluate(addr, reader);
      lls.push_back(log_prob(d, value));
    }
    const double m = *std::max_element(lls.begin(), lls.end());
    if (!std::isfinite(m)) {
      total += kNegInf;
      continue;
    }
    double acc = 0.0;
    for (double ll : lls) acc += std::exp(ll - m);
    total += m + std::log(acc) - std::log(static_cast<double>(lls.size()));
  }
  return total;
}

// ---------------------------------------------------------------------------
// Aggregation over chain outputs
// ---------------------------------------------------------------------------

// Per-address sample matrices over a set of chains. Addresses missing from
// any recorded draw are skipped (open-universe lifetimes are not rectangular).
inline std::map<Address, SampleMatrix> sample_matrices(const std::vector<ChainOutput>& chains) {
  std::map<Address, SampleMatrix> out;
  if (chains.empty()) return out;
  const std::size_t draws = chains.front().num_recorded;
  for (const ChainOutput& c : chains)
    if (c.num_recorded != draws) return out;
  if (draws == 0) return out;

  for (const auto& [addr, seq] : chains.front().samples) {
    bool complete = true;
    for (const ChainOutput& c : chains) {
      auto it = c.samples.find(addr);
      if (it == c.samples.end() || it->second.size() != draws) {
        complete = false;
        break;
      }
      for (const auto& v : it->second)
        if (!v.has_value()) {
          complete = false;
          break;
        }
      if (!complete) break;
    }
    if (!complete) continue;
    SampleMatrix m(chains.size(), draws);
    for (std::size_t c = 0; c < chains.size(); ++c) {
      const auto& seq_c = chains[c].samples.at(addr);
      for (std::size_t d = 0; d < draws; ++d) m.at(c, d) = *seq_c[d];
    }
    out.emplace(addr, std::move(m));
  }
  return out;
}

inline std::vector<Assignment> pooled_assignments(const std::vector<ChainOutput>& chains) {
  std::vector<Assignment> out;
  for (const ChainOutput& c : chains) {
    for (std::size_t d = 0; d < c.num_recorded; ++d) {
      Assignment a;
      bool complete = true;
      for (const auto& [addr, seq] : c.samples) {
        if (d >= seq.size() || !seq[d].has_value()) {
          complete = false;
          break;
        }
        a.emplace(addr, Value::real(*seq[d]));
      }
      if (complete) out.push_back(std::move(a));
    }
  }
  return out;
}

struct MetricsReport {
  std::map<Address, double> ess_by_address;
  std::map<Address, double> rhat_by_address;
  std::map<Address, double> acceptance_by_address;
  std::map<Address, bool> flags;
  double min_ess = 0.0;
  double max_rhat = 0.0;
  double median_ess = 0.0;
  double median_rhat = 0.0;
  std::optional<double> pll_value;
  bool insufficient_draws = false;

  nlohmann::json to_json() const {
    nlohmann::json je = nlohmann::json::object();
    nlohmann::json jr = nlohmann::json::object();
    nlohmann::json ja = nlohmann::json::object();
    nlohmann::json jf = nlohmann::json::object();
    for (const auto& [a, v] : ess_by_address) je[a.str()] = v;
    for (const auto& [a, v] : rhat_by_address) jr[a.str()] = v;
    for (const auto& [a, v] : acceptance_by_address) ja[a.str()] = v;
    for (const auto& [a, v] : flags)
      if (v) jf[a.str()] = true;
    nlohmann::json j{{"ess", je},       {"rhat", jr},           {"acceptance", ja},
                     {"flags", jf},     {"min_ess", min_ess},   {"max_rhat", max_rhat},
                     {"median_ess", median_ess}, {"median_rhat", median_rhat}};
    if (pll_value) j["pll"] = *pll_value;
    if (insufficient_draws) j["insufficient_draws"] = true;
    return j;
  }
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline MetricsReport compute_metrics(const std::vector<ChainOutput>& chains) {
  MetricsReport rep;
  auto mats = sample_matrices(chains);
  if (mats.empty()) {
    rep.insufficient_draws = true;
    return rep;
  }
  std::vector<double> all_ess, all_rhat;
  for (const auto& [addr, m] : mats) {
    bool fe = false, fr = false;
    double e = 0.0, r = 1.0;
    if (m.n_draws >= 4) {
      e = ess(m, &fe);
      if (m.n_chains >= 2) r = r_hat(m, &fr);
      rep.ess_by_address[addr] = e;
      rep.rhat_by_address[addr] = r;
      rep.flags[addr] = fe || fr;
      all_ess.push_back(e);
      all_rhat.push_back(r);
    } else {
      rep.insufficient_draws = true;
    }
    double acc = 0.0;
    for (const ChainOutput& c : chains) acc += c.acceptance_rate(addr);
    rep.acceptance_by_address[addr] = acc / static_cast<double>(chains.size());
  }
  if (!all_ess.empty()) {
    rep.min_ess = *std::min_element(all_ess.begin(), all_ess.end());
    rep.max_rhat = *std::max_element(all_rhat.begin(), all_rhat.end());
    rep.median_ess = median_of(all_ess);
    rep.median_rhat = median_of(all_rhat);
  }
  return rep;
}

}  // namespace blanket

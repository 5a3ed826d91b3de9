#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "blanket/compile.hpp"
#include "blanket/nn.hpp"
#include "blanket/world.hpp"

namespace blanket {

// ---------------------------------------------------------------------------
// Proposers
// ---------------------------------------------------------------------------

// Compiled proposals; nodes whose family (or blanket families) lack trained
// artifacts fall back to the parent-conditional prior.
struct LicProposer {
  const ArtifactStore* store = nullptr;
};

// Parent-conditional prior (ancestral) proposals.
struct PriorProposer {};

// Random-walk moves in unconstrained space with Robbins-Monro step-size
// adaptation during burn-in. Discrete sites use prior proposals.
struct RwmhProposer {
  double initial_step = 1.0;
  double target_rate = 0.44;
  double schedule_constant = 1.0;
  bool adapt = true;
};

// Arbitrary state-dependent proposal parameters; test plumbing (frozen or
// exact-conditional proposals).
struct PhiProposer {
  std::function<ProposalDistribution(const World&, const Address&)> phi;
};

using Proposer = std::variant<LicProposer, PriorProposer, RwmhProposer, PhiProposer>;

inline double adapt_rwmh(double log_step, bool accepted, std::size_t iteration,
                         double target_rate = 0.44, double schedule_constant = 1.0) {
  const double k = std::max(1.0, static_cast<double>(iteration) / 50.0);
  return log_step + schedule_constant * ((accepted ? 1.0 : 0.0) - target_rate) / k;
}

// Mutable per-chain proposer state (adapted step sizes and counters).
struct ProposerState {
  std::map<Address, double> log_step;
  std::map<Address, std::size_t> proposals;
};

// ---------------------------------------------------------------------------
// Single-site step
// ---------------------------------------------------------------------------

namespace detail {

struct Draw {
  Value value;
  double log_q = 0.0;
  bool ok = true;  // false: proposal left the support (rejected outright)
};

inline Draw prior_draw(const World& w, const Address& addr, RngStream& rng) {
  const NodeState& n = w.node(addr);
  Draw d;
  d.value = sample(n.dist, rng);
  d.log_q = log_prob(n.dist, d.value);
  return d;
}

}  // namespace detail

// One Metropolis-Hastings update of a single latent site. Proposes from the
// configured proposer, applies the mutation, and accepts with probability
// min(1, exp(log_alpha)) where
//   log_alpha = delta log p + trans-dimensional prior factors
//             + log q(x_old | mutated world) - log q(x_new | original world).
// The reverse density is evaluated against the mutated world, which is what
// keeps it well defined when blanket membership changes. Rejection reverts
// the world bit-identically.
inline bool mh_step(World& w, const Address& addr, const Proposer& prop, ProposerState& state,
                    RngStream& rng, Tape& scratch, double* log_alpha_out = nullptr) {
  const NodeState& node = w.node(addr);
  if (node.observed) throw chain_error("mh_step: observed site " + addr.str());
  const Value old_value = node.value;

  // The proposal rule actually in force at a state: compiled proposals only
  // when every required family is trained, otherwise the prior.
  const auto* lic = std::get_if<LicProposer>(&prop);
  const auto* rwmh = std::get_if<RwmhProposer>(&prop);
  const auto* fixed = std::get_if<PhiProposer>(&prop);
  const bool continuous = support_is_continuous(support_of(node.dist));

  double rw_sigma = 0.0;
  if (rwmh && continuous) {
    auto it = state.log_step.find(addr);
    rw_sigma = std::exp(it == state.log_step.end() ? std::log(rwmh->initial_step) : it->second);
  }

  detail::Draw fwd;
  if (fixed) {
    ProposalDistribution phi = fixed->phi(w, addr);
    fwd.value = proposal_sample(phi, rng);
    fwd.log_q = proposal_log_prob(phi, fwd.value);
  } else if (lic && lic->store->covers(w, addr)) {
    ProposalDistribution phi = compute_phi(*lic->store, w, addr, scratch);
    fwd.value = proposal_sample(phi, rng);
    fwd.log_q = proposal_log_prob(phi, fwd.value);
  } else if (rwmh && continuous) {
    const Transform t = transform_for(support_of(node.dist));
    const double z = to_unconstrained(t, old_value.as_real());
    const double zp = z + rw_sigma * rng.normal();
    const double xp = from_unconstrained(t, zp);
    fwd.value = Value::real(xp);
    if (!fwd.value.finite()) fwd.ok = false;
    else fwd.log_q = normal_lpdf(zp, z, rw_sigma) - log_abs_det_jacobian(t, xp);
  } else {
    fwd = detail::prior_draw(w, addr, rng);
  }

  if (!fwd.ok || !fwd.value.finite() || !value_in_support(node.dist, fwd.value)) {
    if (log_alpha_out) *log_alpha_out = kNegInf;
    return false;
  }

  WorldDiff diff = w.set_value(addr, fwd.value);
  if (!w.contains(addr)) {
    // The move left its own site unsupported; treat as an invalid proposal.
    w.revert(diff);
    if (log_alpha_out) *log_alpha_out = kNegInf;
    return false;
  }

  double trans_dimensional = 0.0;
  for (const NodeState& d : diff.destroyed) trans_dimensional += d.log_prob;
  for (const Address& c : diff.created) trans_dimensional -= w.node(c).log_prob;

  double log_q_rev;
  if (fixed) {
    ProposalDistribution phi = fixed->phi(w, addr);
    log_q_rev = proposal_log_prob(phi, old_value);
  } else if (lic && lic->store->covers(w, addr)) {
    ProposalDistribution phi = compute_phi(*lic->store, w, addr, scratch);
    log_q_rev = proposal_log_prob(phi, old_value);
  } else if (rwmh && continuous) {
    const Transform t = transform_for(support_of(w.node(addr).dist));
    const double z_new = to_unconstrained(t, fwd.value.as_real());
    const double z_old = to_unconstrained(t, old_value.as_real());
    log_q_rev = normal_lpdf(z_old, z_new, rw_sigma) - log_abs_det_jacobian(t, old_value.as_real());
  } else {
    log_q_rev = log_prob(w.node(addr).dist, old_value);
  }

  const double log_alpha = diff.delta_log_joint + trans_dimensional + log_q_rev - fwd.log_q;
  if (log_alpha_out) *log_alpha_out = log_alpha;
  if (std::isnan(log_alpha))
    throw chain_error("non-finite acceptance ratio at " + addr.str());

  bool accept = log_alpha >= 0.0;
  if (!accept) accept = std::log(rng.uniform()) < log_alpha;
  if (!accept) w.revert(diff);
  return accept;
}

// ---------------------------------------------------------------------------
// Chains
// ---------------------------------------------------------------------------

struct ChainConfig {
  std::size_t num_samples = 100;
  std::size_t burn_in = 1000;
  std::uint64_t seed = 0;
  std::size_t thinning = 1;
  std::map<Address, Value> init;  // optional value overrides after ancestral init
};

struct ChainOutput {
  // One sequence per latent address; entries are absent while the address
  // is not alive in the world.
  std::map<Address, std::vector<std::optional<double>>> samples;
  std::map<Address, std::size_t> accepted;
  std::map<Address, std::size_t> proposed;
  std::size_t num_recorded = 0;
  double infer_seconds = 0.0;
  std::string failure;  // empty on success

  double acceptance_rate(const Address& addr) const {
    auto p = proposed.find(addr);
    if (p == proposed.end() || p->second == 0) return 0.0;
    auto a = accepted.find(addr);
    return static_cast<double>(a == accepted.end() ? 0 : a->second) /
           static_cast<double>(p->second);
  }
};

// Systematic-scan single-site MH: every sweep visits all live latent
// addresses in sorted order. Each site draws from a stream derived from
// (seed, sweep, address), so chains are reproducible and a fallback at one
// site leaves every other site's draws unchanged.
inline ChainOutput run_chain(const Model& model, const std::map<Address, Value>& observations,
                             const Proposer& prop, const ChainConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  ChainOutput out;
  try {
    World w = World::ancestral(model, RngStream::substream(cfg.seed, "ancestral"), observations);
    for (const auto& [a, v] : cfg.init) w.set_value(a, v);

    Proposer chain_prop = prop;
    ProposerState pstate;
    const auto* rwmh = std::get_if<RwmhProposer>(&chain_prop);
    Tape scratch;

    const std::size_t total = cfg.burn_in + cfg.num_samples * std::max<std::size_t>(1, cfg.thinning);
    for (std::size_t iter = 0; iter < total; ++iter) {
      const std::vector<Address> latents = w.latent_addresses();
      for (const Address& addr : latents) {
        if (!w.contains(addr)) continue;  // destroyed earlier in this sweep
        RngStream site_rng(hash_combine(hash_combine(mix64(cfg.seed), iter), addr.stable_hash()));
        const bool acc = mh_step(w, addr, chain_prop, pstate, site_rng, scratch);
        out.proposed[addr] += 1;
        if (acc) out.accepted[addr] += 1;
        if (rwmh && rwmh->adapt && iter < cfg.burn_in) {
          const std::size_t n = ++pstate.proposals[addr];
          double& ls = pstate.log_step.try_emplace(addr, std::log(rwmh->initial_step)).first->second;
          ls = adapt_rwmh(ls, acc, n, rwmh->target_rate, rwmh->schedule_constant);
        }
      }
      if (iter >= cfg.burn_in &&
          (iter - cfg.burn_in) % std::max<std::size_t>(1, cfg.thinning) == 0 &&
          out.num_recorded < cfg.num_samples) {
        for (const Address& addr : w.latent_addresses()) {
          auto& seq = out.samples[addr];
          seq.resize(out.num_recorded, std::nullopt);  // backfill newly created addresses
          seq.push_back(w.node(addr).value.as_double());
        }
        ++out.num_recorded;
        for (auto& [addr, seq] : out.samples) seq.resize(out.num_recorded, std::nullopt);
      }
    }
  } catch (const std::exception& e) {
    out.failure = e.what();
  }
  out.infer_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// Independent chains with seeds cfg.seed + chain index; outputs ordered by
// chain index regardless of scheduling.
inline std::vector<ChainOutput> run_chains(const Model& model,
                                           const std::map<Address, Value>& observations,
                                           const Proposer& prop, const ChainConfig& cfg,
                                           std::size_t n_chains, bool parallel = true) {
  std::vector<ChainOutput> outs(n_chains);
  auto worker = [&](std::size_t i) {
    ChainConfig c = cfg;
    c.seed = cfg.seed + i;
    outs[i] = run_chain(model, observations, prop, c);
  };
  if (!parallel || n_chains <= 1 || std::thread::hardware_concurrency() <= 1) {
    for (std::size_t i = 0; i < n_chains; ++i) worker(i);
    return outs;
  }
  std::vector<std::thread> threads;
  threads.reserve(n_chains);
  for (std::size_t i = 0; i < n_chains; ++i) threads.emplace_back(worker, i);
  for (auto& t : threads) t.join();
  return outs;
}

}  // namespace blanket

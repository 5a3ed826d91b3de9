#pragma once

#include <cmath>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "blanket/tape.hpp"
#include "blanket/world.hpp"

namespace blanket {

// ---------------------------------------------------------------------------
// Per-family metadata and networks
// ---------------------------------------------------------------------------

struct FamilyMeta {
  bool continuous = true;
  std::size_t max_support = 0;  // discrete families: one-hot width
  bool boolean = false;         // discrete families: value kind

  std::size_t feature_dim() const { return continuous ? 2 : max_support + 1; }
};

// Node embedding net (one tanh layer into a common space), blanket
// aggregator (bias-free graph-convolution stack) and proposal head (linear).
struct FamilyNets {
  FamilyMeta meta;
  std::size_t mixture_components = 0;  // continuous heads: K
  Tensor embed_w, embed_b;
  Tensor agg_w1, agg_w2, agg_w3;
  Tensor head_w, head_b;

  std::size_t embed_dim() const { return embed_w.rows(); }
  std::size_t hidden_dim() const { return agg_w1.rows(); }
  std::size_t head_dim() const { return head_w.rows(); }

  std::vector<Tensor*> params() {
    return {&embed_w, &embed_b, &agg_w1, &agg_w2, &agg_w3, &head_w, &head_b};
  }
  std::vector<const Tensor*> params() const {
    return {&embed_w, &embed_b, &agg_w1, &agg_w2, &agg_w3, &head_w, &head_b};
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Tensor* t : params()) n += t->size();
    return n;
  }
};

// Trained proposal artifacts, keyed by family. Immutable after training and
// shared read-only across chains.
struct ArtifactStore {
  std::string version = "1";
  std::string model_name;
  nlohmann::json config;
  double final_loss = 0.0;
  double logsd_min = -7.0;  // clamp bounds for emitted component log-sds
  double logsd_max = 4.0;
  std::map<std::string, FamilyNets> families;

  bool has_family(const std::string& fam) const { return families.count(fam) > 0; }

  const FamilyNets& family(const std::string& fam) const {
    auto it = families.find(fam);
    if (it == families.end()) throw missing_artifact_error(fam);
    return it->second;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [f, nets] : families) n += nets.parameter_count();
    return n;
  }

  // Artifact coverage needed to build a proposal at addr: the node's own
  // family plus every family present in its Markov blanket.
  bool covers(const World& w, const Address& addr) const {
    if (!has_family(addr.family())) return false;
    for (const Address& b : w.markov_blanket(addr))
      if (!has_family(b.family())) return false;
    return true;
  }
};

// ---------------------------------------------------------------------------
// Featurization
// ---------------------------------------------------------------------------

// Continuous nodes: [unconstrained value, presence flag]. Discrete nodes:
// one-hot padded to the family's maximum support size, plus the flag.
// mask_self zeroes the value portion but keeps the flag.
inline std::vector<double> featurize(const NodeState& node, bool mask_self, const FamilyMeta& meta) {
  std::vector<double> f(meta.feature_dim(), 0.0);
  f.back() = 1.0;
  if (mask_self) return f;
  if (meta.continuous) {
    const Transform t = transform_for(support_of(node.dist));
    f[0] = to_unconstrained(t, node.value.as_real());
  } else {
    const std::int64_t idx = node.value.category();
    if (idx < 0 || static_cast<std::size_t>(idx) >= meta.max_support)
      throw support_error("featurize: index " + std::to_string(idx) + " exceeds family max support");
    f[static_cast<std::size_t>(idx)] = 1.0;
  }
  return f;
}

// ---------------------------------------------------------------------------
// Traced forward passes
// ---------------------------------------------------------------------------

inline Var embed_node(Tape& tape, const FamilyNets& nets, const std::vector<double>& features) {
  Var f = tape.constant(Tensor::vector(features));
  return tape.tanh_(tape.affine(tape.leaf(nets.embed_w), f, tape.leaf(nets.embed_b)));
}

// Graph-convolution aggregation: a symmetric-degree-normalized sum over the
// blanket embeddings followed by a stack of bias-free tanh layers. An empty
// blanket contributes the zero vector.
inline Var aggregate_mb(Tape& tape, const FamilyNets& nets,
                        const std::vector<std::pair<Var, std::size_t>>& mb_embs,
                        std::size_t self_mb_size) {
  Var acc = tape.constant(Tensor({nets.embed_dim()}, 0.0));
  for (const auto& [emb, neighbor_mb_size] : mb_embs) {
    const double c = 1.0 / std::sqrt(static_cast<double>(self_mb_size) *
                                     static_cast<double>(neighbor_mb_size));
    acc = tape.add(acc, tape.scale(emb, c));
  }
  Var h = tape.tanh_(tape.matvec(tape.leaf(nets.agg_w1), acc));
  h = tape.tanh_(tape.matvec(tape.leaf(nets.agg_w2), h));
  h = tape.tanh_(tape.matvec(tape.leaf(nets.agg_w3), h));
  return h;
}

struct PhiInfo {
  bool continuous = true;
  std::size_t mixture_components = 0;
  Transform transform = Identity{};
  std::size_t support = 0;  // discrete: node's support size
  bool boolean = false;
  double logsd_min = -7.0;
  double logsd_max = 4.0;
};

// Full proposal-parameter forward pass for one node: featurize self (value
// masked) and every blanket member, embed per family, aggregate, and map
// the concatenation through the head. Blanket members arrive pre-sorted by
// address, so the summation order is canonical.
inline Var phi_head(Tape& tape, const ArtifactStore& store, const World& w, const Address& addr,
                    PhiInfo* info = nullptr) {
  const FamilyNets& self_nets = store.family(addr.family());
  const NodeState& node = w.node(addr);
  const std::vector<Address> blanket = w.markov_blanket(addr);

  std::vector<std::pair<Var, std::size_t>> mb_embs;
  mb_embs.reserve(blanket.size());
  for (const Address& b : blanket) {
    const FamilyNets& bn = store.family(b.family());
    Var e = embed_node(tape, bn, featurize(w.node(b), false, bn.meta));
    mb_embs.emplace_back(e, w.markov_blanket(b).size());
  }

  Var self_emb = embed_node(tape, self_nets, featurize(node, true, self_nets.meta));
  Var summary = aggregate_mb(tape, self_nets, mb_embs, blanket.size());
  Var head_in = tape.concat({self_emb, summary});
  Var out = tape.affine(tape.leaf(self_nets.head_w), head_in, tape.leaf(self_nets.head_b));

  if (info) {
    info->continuous = self_nets.meta.continuous;
    info->logsd_min = store.logsd_min;
    info->logsd_max = store.logsd_max;
    if (self_nets.meta.continuous) {
      info->mixture_components = self_nets.mixture_components;
      info->transform = transform_for(support_of(node.dist));
    } else {
      const Support s = support_of(node.dist);
      info->support = support_size(s);
      info->boolean = std::holds_alternative<Binary>(s);
      if (info->support > self_nets.meta.max_support)
        throw support_error("node support exceeds family head width at " + addr.str());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Proposal distributions
// ---------------------------------------------------------------------------

struct GmmProposal {
  std::vector<double> weights;
  std::vector<double> means;
  std::vector<double> sds;
  Transform transform;
};

struct DiscreteProposal {
  std::vector<double> logits;
  bool boolean = false;
};

using ProposalDistribution = std::variant<GmmProposal, DiscreteProposal>;

inline ProposalDistribution proposal_from_head(const Tensor& head, const PhiInfo& info) {
  if (info.continuous) {
    const std::size_t k = info.mixture_components;
    GmmProposal p;
    p.transform = info.transform;
    p.weights.resize(k);
    p.means.resize(k);
    p.sds.resize(k);
    double m = head[0];
    for (std::size_t i = 1; i < k; ++i) m = std::max(m, head[i]);
    double tot = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      p.weights[i] = std::exp(head[i] - m);
      tot += p.weights[i];
    }
    for (std::size_t i = 0; i < k; ++i) {
      p.weights[i] /= tot;
      p.means[i] = head[k + i];
      const double ls = std::min(info.logsd_max, std::max(info.logsd_min, head[2 * k + i]));
      p.sds[i] = std::exp(ls);
    }
    return p;
  }
  DiscreteProposal p;
  p.boolean = info.boolean;
  p.logits.assign(head.data.begin(), head.data.begin() + static_cast<long>(info.support));
  return p;
}

// Builds the proposal distribution for a node from the trained artifacts.
// Throws missing_artifact_error when any required family is untrained.
inline ProposalDistribution compute_phi(const ArtifactStore& store, const World& w,
                                        const Address& addr, Tape& scratch) {
  scratch.clear();
  PhiInfo info;
  Var out = phi_head(scratch, store, w, addr, &info);
  return proposal_from_head(scratch.value(out), info);
}

inline ProposalDistribution compute_phi(const ArtifactStore& store, const World& w,
                                        const Address& addr) {
  Tape tape;
  return compute_phi(store, w, addr, tape);
}

inline double proposal_log_prob(const ProposalDistribution& p, const Value& v) {
  if (const auto* g = std::get_if<GmmProposal>(&p)) {
    const double x = v.as_real();
    const double z = to_unconstrained(g->transform, x);
    double best = kNegInf;
    std::vector<double> terms(g->weights.size());
    for (std::size_t i = 0; i < g->weights.size(); ++i) {
      terms[i] = (g->weights[i] > 0.0 ? std::log(g->weights[i]) : kNegInf) +
                 normal_lpdf(z, g->means[i], g->sds[i]);
      if (std::isnan(terms[i])) return terms[i];  // surface bad parameters
      best = std::max(best, terms[i]);
    }
    if (!std::isfinite(best)) return kNegInf;
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - best);
    return best + std::log(acc) - log_abs_det_jacobian(g->transform, x);
  }
  const auto& d = std::get<DiscreteProposal>(p);
  const std::int64_t idx = v.category();
  if (idx < 0 || static_cast<std::size_t>(idx) >= d.logits.size()) return kNegInf;
  double m = d.logits[0];
  for (double l : d.logits) m = std::max(m, l);
  double tot = 0.0;
  for (double l : d.logits) tot += std::exp(l - m);
  return d.logits[static_cast<std::size_t>(idx)] - (m + std::log(tot));
}

inline Value proposal_sample(const ProposalDistribution& p, RngStream& rng) {
  if (const auto* g = std::get_if<GmmProposal>(&p)) {
    const std::size_t k = rng.categorical(g->weights);
    const double z = rng.normal(g->means[k], g->sds[k]);
    return Value::real(from_unconstrained(g->transform, z));
  }
  const auto& d = std::get<DiscreteProposal>(p);
  double m = d.logits[0];
  for (double l : d.logits) m = std::max(m, l);
  std::vector<double> probs(d.logits.size());
  double tot = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    probs[i] = std::exp(d.logits[i] - m);
    tot += probs[i];
  }
  for (double& x : probs) x /= tot;
  const std::size_t idx = rng.categorical(probs);
  return d.boolean ? Value::boolean(idx == 1) : Value::index(static_cast<std::int64_t>(idx));
}

}  // namespace blanket

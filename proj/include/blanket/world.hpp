#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blanket/common.hpp"
#include "blanket/model.hpp"
#include "blanket/rng.hpp"

namespace blanket {

namespace detail {

// Sorted unique address list; cheap to copy, deterministic to iterate.
inline bool sorted_contains(const std::vector<Address>& v, const Address& a) {
  return std::binary_search(v.begin(), v.end(), a);
}
inline void sorted_insert(std::vector<Address>& v, const Address& a) {
  auto it = std::lower_bound(v.begin(), v.end(), a);
  if (it == v.end() || *it != a) v.insert(it, a);
}
inline void sorted_erase(std::vector<Address>& v, const Address& a) {
  auto it = std::lower_bound(v.begin(), v.end(), a);
  if (it != v.end() && *it == a) v.erase(it);
}

}  // namespace detail

struct NodeState {
  Address addr;
  Distribution dist;
  Value value;
  bool observed = false;
  std::vector<Address> parents;   // sorted
  std::vector<Address> children;  // sorted
  double log_prob = 0.0;

  NodeState() : dist(Normal(0.0, 1.0)) {}
};

// Record of one single-site mutation, sufficient to restore the world
// bit-identically: full prior states of every touched node, the addresses
// created, and the full states destroyed.
struct WorldDiff {
  std::map<Address, NodeState> old_states;
  std::vector<Address> created;
  std::vector<NodeState> destroyed;
  double old_log_joint = 0.0;
  double delta_log_joint = 0.0;
  std::uint64_t seq = 0;

  bool empty() const { return old_states.empty() && created.empty() && destroyed.empty(); }
};

// An instantiated Bayesian network: node states keyed by address, with
// mirrored parent/child edges and a cached log joint. Single-threaded
// mutable object; the model it instantiates is immutable and shared.
class World {
 public:
  World(const Model& model, RngStream rng) : model_(&model), rng_(std::move(rng)) {}

  // Ancestral sampling: instantiates everything reachable from the model's
  // query roots and observation addresses, sampling unobserved nodes from
  // their parent-conditional distributions in topological order. Values in
  // `observe` are clamped; pass an empty map to sample observed-role nodes
  // from the prior as well.
  static World ancestral(const Model& model, RngStream rng, const std::map<Address, Value>& observe) {
    World w(model, std::move(rng));
    w.observe_ = observe;
    std::set<Address> roots;
    for (const auto& [a, v] : model.observations) roots.insert(a);
    for (const Address& a : model.queries) roots.insert(a);
    for (const Address& a : roots) w.ensure_instantiated(a);
    return w;
  }

  static World ancestral(const Model& model, RngStream rng) {
    return ancestral(model, std::move(rng), model.observations);
  }

  const Model& model() const { return *model_; }
  double log_joint() const { return log_joint_; }
  std::size_t size() const { return nodes_.size(); }
  bool contains(const Address& addr) const { return nodes_.count(addr) > 0; }

  const NodeState& node(const Address& addr) const {
    auto it = nodes_.find(addr);
    if (it == nodes_.end()) throw unknown_address_error("unknown address " + addr.str());
    return it->second;
  }

  const std::map<Address, NodeState>& nodes() const { return nodes_; }

  std::vector<Address> latent_addresses() const {
    std::vector<Address> out;
    for (const auto& [a, n] : nodes_)
      if (!n.observed) out.push_back(a);
    return out;
  }

  // Parents, children and children's other parents, sorted, self excluded.
  std::vector<Address> markov_blanket(const Address& addr) const {
    const NodeState& n = node(addr);
    std::set<Address> mb(n.parents.begin(), n.parents.end());
    for (const Address& c : n.children) {
      mb.insert(c);
      const NodeState& cn = node(c);
      for (const Address& p : cn.parents) mb.insert(p);
    }
    mb.erase(addr);
    return std::vector<Address>(mb.begin(), mb.end());
  }

  // log p(x | parents) plus the log factors of every child.
  double mb_log_prob(const Address& addr) const {
    const NodeState& n = node(addr);
    double acc = n.log_prob;
    for (const Address& c : n.children) acc += node(c).log_prob;
    return acc;
  }

  // Replaces the value at an unobserved address, re-evaluating children
  // against the model. Newly read addresses are instantiated; nodes left
  // without a path to any observed node or query root are destroyed.
  WorldDiff set_value(const Address& addr, const Value& new_value) {
    NodeState& n = mutable_node(addr);
    if (n.observed) throw support_error("set_value: node is observed: " + addr.str());
    if (!new_value.finite()) throw support_error("set_value: non-finite value");
    if (!value_in_support(n.dist, new_value))
      throw support_error("set_value: value outside support of " + addr.str());

    WorldDiff diff;
    diff.old_log_joint = log_joint_;
    diff.seq = ++seq_;
    if (new_value == n.value) {
      diff.delta_log_joint = 0.0;
      return diff;
    }

    active_diff_ = &diff;
    touch(addr);
    n.value = new_value;
    set_log_prob(n, log_prob(n.dist, new_value));

    bool edges_changed = false;
    const std::vector<Address> children = n.children;
    for (const Address& caddr : children) {
      NodeState& child = mutable_node(caddr);
      touch(caddr);
      RecordingReader reader(*this);
      Distribution d = model_->evaluate(caddr, reader);
      const std::vector<Address>& new_parents = reader.reads();
      if (new_parents != child.parents) {
        for (const Address& p : child.parents) {
          if (!detail::sorted_contains(new_parents, p)) {
            touch(p);
            detail::sorted_erase(mutable_node(p).children, caddr);
            edges_changed = true;
          }
        }
        for (const Address& p : new_parents) {
          if (!detail::sorted_contains(child.parents, p)) {
            touch(p);
            detail::sorted_insert(mutable_node(p).children, caddr);
            edges_changed = true;
          }
        }
        child.parents = new_parents;
      }
      child.dist = std::move(d);
      set_log_prob(child, log_prob(child.dist, child.value));
    }

    if (edges_changed || !diff.created.empty()) collect_garbage(diff);

    active_diff_ = nullptr;
    diff.delta_log_joint = log_joint_ - diff.old_log_joint;
    return diff;
  }

  // Restores the state prior to the most recent unreverted set_value.
  void revert(const WorldDiff& diff) {
    if (diff.seq != seq_) throw error("revert: stale diff");
    --seq_;
    if (diff.empty()) {
      log_joint_ = diff.old_log_joint;
      return;
    }
    for (const NodeState& d : diff.destroyed) nodes_[d.addr] = d;
    for (const Address& a : diff.created) nodes_.erase(a);
    for (const auto& [a, s] : diff.old_states) nodes_[a] = s;
    log_joint_ = diff.old_log_joint;
  }

  // Recomputed (non-cached) sum of factors; test/diagnostic use.
  double recompute_log_joint() const {
    double acc = 0.0;
    for (const auto& [a, n] : nodes_) acc += n.log_prob;
    return acc;
  }

  nlohmann::json to_json() const {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& [a, n] : nodes_) {
      nlohmann::json jn;
      jn["family"] = a.family();
      jn["args"] = a.args();
      switch (n.value.kind()) {
        case Value::Kind::Real: jn["value"] = n.value.as_real(); break;
        case Value::Kind::Boolean: jn["value"] = n.value.as_boolean(); break;
        case Value::Kind::Index: jn["value"] = n.value.as_index(); break;
      }
      jn["observed"] = n.observed;
      jn["log_prob"] = n.log_prob;
      nlohmann::json parents = nlohmann::json::array();
      for (const Address& p : n.parents) parents.push_back(p.str());
      jn["parents"] = parents;
      nodes.push_back(jn);
    }
    return nlohmann::json{{"nodes", nodes}, {"log_joint", log_joint_}};
  }

  RngStream& rng() { return rng_; }

 private:
  friend class RecordingReader;

  class RecordingReader : public NodeReader {
   public:
    explicit RecordingReader(World& w) : w_(w) {}
    Value value(const Address& addr) override {
      w_.ensure_instantiated(addr);
      detail::sorted_insert(reads_, addr);
      return w_.nodes_.at(addr).value;
    }
    const std::vector<Address>& reads() const { return reads_; }

   private:
    World& w_;
    std::vector<Address> reads_;
  };

  NodeState& mutable_node(const Address& addr) {
    auto it = nodes_.find(addr);
    if (it == nodes_.end()) throw unknown_address_error("unknown address " + addr.str());
    return it->second;
  }

  void set_log_prob(NodeState& n, double lp) {
    log_joint_ += lp - n.log_prob;
    n.log_prob = lp;
  }

  void ensure_instantiated(const Address& addr) {
    if (nodes_.count(addr)) return;
    if (in_progress_.count(addr))
      throw cycle_error("dependency cycle through " + addr.str());
    in_progress_.insert(addr);

    RecordingReader reader(*this);
    Distribution dist = model_->evaluate(addr, reader);

    NodeState n;
    n.addr = addr;
    n.parents = reader.reads();
    auto obs = observe_.find(addr);
    if (obs != observe_.end()) {
      n.observed = true;
      n.value = obs->second;
      if (!value_in_support(dist, n.value))
        throw support_error("observed value outside support of " + addr.str());
    } else {
      n.observed = false;
      n.value = sample(dist, rng_);
      if (!n.value.finite()) throw support_error("sampled non-finite value at " + addr.str());
    }
    n.log_prob = log_prob(dist, n.value);
    if (n.observed && n.log_prob == kNegInf)
      throw support_error("zero-density observation at " + addr.str());
    n.dist = std::move(dist);

    for (const Address& p : n.parents) {
      if (active_diff_) touch(p);
      detail::sorted_insert(nodes_.at(p).children, addr);
    }
    log_joint_ += n.log_prob;
    nodes_.emplace(addr, std::move(n));
    if (active_diff_) active_diff_->created.push_back(addr);
    in_progress_.erase(addr);
  }

  // Snapshot a node's state into the active diff unless it was created by
  // this same mutation (created nodes are simply erased on revert).
  void touch(const Address& addr) {
    if (!active_diff_) return;
    if (active_diff_->old_states.count(addr)) return;
    for (const Address& c : active_diff_->created)
      if (c == addr) return;
    auto it = nodes_.find(addr);
    if (it != nodes_.end()) active_diff_->old_states.emplace(addr, it->second);
  }

  // Destroys every node with no directed path to an observed node or query
  // root. Marking walks parent edges upward from the root set.
  void collect_garbage(WorldDiff& diff) {
    std::set<Address> alive;
    std::vector<Address> stack;
    for (const auto& [a, n] : nodes_) {
      if (n.observed || is_query(a)) {
        alive.insert(a);
        stack.push_back(a);
      }
    }
    while (!stack.empty()) {
      Address a = stack.back();
      stack.pop_back();
      for (const Address& p : nodes_.at(a).parents) {
        if (alive.insert(p).second) stack.push_back(p);
      }
    }
    std::vector<Address> dead;
    for (const auto& [a, n] : nodes_)
      if (!alive.count(a)) dead.push_back(a);
    for (const Address& a : dead) {
      NodeState& n = nodes_.at(a);
      for (const Address& p : n.parents) {
        if (alive.count(p)) {
          touch(p);
          detail::sorted_erase(nodes_.at(p).children, a);
        }
      }
      log_joint_ -= n.log_prob;
      bool was_created = false;
      auto& created = diff.created;
      auto it = std::find(created.begin(), created.end(), a);
      if (it != created.end()) {
        created.erase(it);
        was_created = true;
      }
      // Destroyed nodes are recorded with their state at death, even when
      // also snapshotted in old_states: the removed log_prob feeds the
      // trans-dimensional acceptance correction, and revert overwrites with
      // the pre-mutation snapshot afterwards.
      if (!was_created) diff.destroyed.push_back(n);
      nodes_.erase(a);
    }
  }

  bool is_query(const Address& a) const {
    for (const Address& q : model_->queries)
      if (q == a) return true;
    return false;
  }

  const Model* model_;
  RngStream rng_;
  std::map<Address, NodeState> nodes_;
  std::map<Address, Value> observe_;
  std::set<Address> in_progress_;
  double log_joint_ = 0.0;
  std::uint64_t seq_ = 0;
  WorldDiff* active_diff_ = nullptr;
};

}  // namespace blanket

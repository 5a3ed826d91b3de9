#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blanket/adam.hpp"
#include "blanket/nn.hpp"
#include "blanket/world.hpp"

namespace blanket {

struct TrainingConfig {
  std::size_t num_worlds = 10000;
  std::size_t epochs = 20;
  std::size_t minibatch = 64;
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t components = 10;  // mixture components for continuous heads
  std::uint64_t seed = 0;
  std::size_t embed_dim = 4;
  std::size_t hidden_dim = 8;
  double logsd_min = -7.0;
  double logsd_max = 4.0;
  // Optional scale multiplier applied to the sds of root nodes while
  // drawing the training set; 1.0 leaves the generative model untouched.
  double root_sd_inflation = 1.0;

  nlohmann::json to_json() const {
    return {{"num_worlds", num_worlds}, {"epochs", epochs},       {"minibatch", minibatch},
            {"lr", lr},                 {"adam_beta1", adam_beta1}, {"adam_beta2", adam_beta2},
            {"adam_eps", adam_eps},     {"components", components}, {"seed", seed},
            {"embed_dim", embed_dim},   {"hidden_dim", hidden_dim}, {"logsd_min", logsd_min},
            {"logsd_max", logsd_max},   {"root_sd_inflation", root_sd_inflation}};
  }

  static TrainingConfig from_json(const nlohmann::json& j) {
    TrainingConfig c;
    c.num_worlds = j.value("num_worlds", c.num_worlds);
    c.epochs = j.value("epochs", c.epochs);
    c.minibatch = j.value("minibatch", c.minibatch);
    c.lr = j.value("lr", c.lr);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.components = j.value("components", c.components);
    c.seed = j.value("seed", c.seed);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.logsd_min = j.value("logsd_min", c.logsd_min);
    c.logsd_max = j.value("logsd_max", c.logsd_max);
    c.root_sd_inflation = j.value("root_sd_inflation", c.root_sd_inflation);
    return c;
  }
};

// Forward-sampled training set. Holds the sampling model so the worlds'
// model pointers stay valid after moves.
struct Dataset {
  std::shared_ptr<const Model> sampling_model;
  std::vector<World> worlds;
};

namespace detail {

inline Distribution inflate_root_sd(Distribution d, double factor) {
  if (auto* n = std::get_if<Normal>(&d)) return Normal(n->mean, n->sd * factor);
  if (auto* t = std::get_if<StudentT>(&d)) return StudentT(t->dof, t->loc, t->scale * factor);
  if (auto* h = std::get_if<HalfCauchy>(&d)) return HalfCauchy(h->scale * factor);
  if (auto* m = std::get_if<NormalMixture>(&d)) {
    std::vector<double> sds = m->sds;
    for (double& s : sds) s *= factor;
    return NormalMixture(m->weights, m->means, sds);
  }
  return d;
}

}  // namespace detail

// Draws N independent ancestral samples from the generative model with no
// observations clamped; declared-observed nodes are sampled like any other.
inline Dataset generate_dataset(const Model& model, std::size_t n, std::uint64_t seed,
                                double root_sd_inflation = 1.0) {
  Dataset ds;
  auto sampling = std::make_shared<Model>(model);
  if (root_sd_inflation != 1.0) {
    auto base = model.fn;
    double factor = root_sd_inflation;
    sampling->fn = [base, factor](const Address& a, NodeReader& r) {
      class CountingReader : public NodeReader {
       public:
        CountingReader(NodeReader& inner) : inner_(inner) {}
        Value value(const Address& addr) override {
          ++reads_;
          return inner_.value(addr);
        }
        std::size_t reads() const { return reads_; }

       private:
        NodeReader& inner_;
        std::size_t reads_ = 0;
      };
      CountingReader counting(r);
      Distribution d = base(a, counting);
      return counting.reads() == 0 ? detail::inflate_root_sd(std::move(d), factor) : d;
    };
  }
  ds.sampling_model = sampling;
  ds.worlds.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.worlds.push_back(
        World::ancestral(*ds.sampling_model, RngStream::substream(seed, "world", i), {}));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Traced loss
// ---------------------------------------------------------------------------

// -log q(value | phi) for one node, on the tape.
inline Var node_loss(Tape& tape, const ArtifactStore& store, const World& w, const Address& addr) {
  PhiInfo info;
  Var head = phi_head(tape, store, w, addr, &info);
  const NodeState& node = w.node(addr);
  if (info.continuous) {
    const std::size_t k = info.mixture_components;
    const double x = node.value.as_real();
    const double z = to_unconstrained(info.transform, x);
    Var logits = tape.slice(head, 0, k);
    Var means = tape.slice(head, k, k);
    Var logsd = tape.clamp(tape.slice(head, 2 * k, k), info.logsd_min, info.logsd_max);
    Var log_w = tape.add_scalar(logits, tape.neg(tape.logsumexp(logits)));
    Var diff = tape.add_scalar(tape.neg(means), tape.constant(z));
    Var u = tape.mul(diff, tape.exp_(tape.neg(logsd)));
    Var comp = tape.add(tape.add(tape.scale(tape.mul(u, u), -0.5), tape.neg(logsd)), log_w);
    Var lp_z = tape.add(tape.logsumexp(comp), tape.constant(-0.5 * kLog2Pi));
    const double lad = log_abs_det_jacobian(info.transform, x);
    return tape.add(tape.neg(lp_z), tape.constant(lad));
  }
  const std::int64_t idx = node.value.category();
  Var logits = tape.slice(head, 0, info.support);
  Var picked = tape.slice(logits, static_cast<std::size_t>(idx), 1);
  return tape.sub(tape.logsumexp(logits), picked);
}

// Sum of node losses over the latent-role nodes of one world. Role is
// decided by the model declaration: nodes declared observed contribute as
// blanket features only, even though their values were forward-sampled.
inline Var world_loss(Tape& tape, const ArtifactStore& store, const World& w) {
  Var total = tape.constant(0.0);
  for (const auto& [addr, node] : w.nodes()) {
    if (w.model().declares_observed(addr)) continue;
    total = tape.add(total, node_loss(tape, store, w, addr));
  }
  return total;
}

// ---------------------------------------------------------------------------
// Store initialization
// ---------------------------------------------------------------------------

namespace detail {

struct FamilyStats {
  FamilyMeta meta;
  double value_sd = 1.0;  // sd of the unconstrained value over the dataset
};

inline std::map<std::string, FamilyStats> scan_families(const Dataset& ds) {
  std::map<std::string, FamilyStats> out;
  std::map<std::string, std::vector<double>> values;
  for (const World& w : ds.worlds) {
    for (const auto& [addr, node] : w.nodes()) {
      const Support s = support_of(node.dist);
      const bool cont = support_is_continuous(s);
      auto [it, fresh] = out.try_emplace(addr.family());
      FamilyStats& fs = it->second;
      if (fresh) {
        fs.meta.continuous = cont;
      } else if (fs.meta.continuous != cont) {
        throw type_error("family " + addr.family() + " mixes continuous and discrete supports");
      }
      if (cont) {
        values[addr.family()].push_back(
            to_unconstrained(transform_for(s), node.value.as_real()));
      } else {
        fs.meta.max_support = std::max(fs.meta.max_support, support_size(s));
        fs.meta.boolean = std::holds_alternative<Binary>(s);
      }
    }
  }
  for (auto& [fam, fs] : out) {
    if (!fs.meta.continuous) continue;
    const auto& v = values[fam];
    double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= std::max<std::size_t>(1, v.size());
    fs.value_sd = std::sqrt(var);
  }
  return out;
}

inline void init_uniform(Tensor& t, RngStream& rng, double bound) {
  for (double& x : t.data) x = rng.uniform(-bound, bound);
}

inline FamilyNets init_family(const FamilyStats& fs, const TrainingConfig& cfg, RngStream& rng) {
  FamilyNets nets;
  nets.meta = fs.meta;
  nets.mixture_components = fs.meta.continuous ? cfg.components : 0;
  const std::size_t de = cfg.embed_dim;
  const std::size_t dh = cfg.hidden_dim;
  const std::size_t fdim = fs.meta.feature_dim();
  const std::size_t odim =
      fs.meta.continuous ? 3 * nets.mixture_components : fs.meta.max_support;

  nets.embed_w = Tensor({de, fdim});
  nets.embed_b = Tensor({de}, 0.0);
  // Scale the value column by the observed spread so wide-prior families do
  // not start saturated.
  const double col_scale = 1.0 / std::max(1.0, fs.value_sd);
  init_uniform(nets.embed_w, rng, 1.0 / std::sqrt(static_cast<double>(fdim)));
  if (fs.meta.continuous) {
    for (std::size_t r = 0; r < de; ++r) nets.embed_w.at(r, 0) *= col_scale;
  }

  nets.agg_w1 = Tensor({dh, de});
  nets.agg_w2 = Tensor({dh, dh});
  nets.agg_w3 = Tensor({dh, dh});
  init_uniform(nets.agg_w1, rng, 1.0 / std::sqrt(static_cast<double>(de)));
  init_uniform(nets.agg_w2, rng, 1.0 / std::sqrt(static_cast<double>(dh)));
  init_uniform(nets.agg_w3, rng, 1.0 / std::sqrt(static_cast<double>(dh)));

  nets.head_w = Tensor({odim, de + dh});
  nets.head_b = Tensor({odim}, 0.0);
  init_uniform(nets.head_w, rng, 1.0 / std::sqrt(static_cast<double>(de + dh)));
  if (fs.meta.continuous) {
    const std::size_t k = nets.mixture_components;
    // Spread component means so the mixture does not start collapsed;
    // start component sds mildly wide.
    for (std::size_t i = 0; i < k; ++i) {
      nets.head_b[k + i] = rng.uniform(-1.0, 1.0);
      nets.head_b[2 * k + i] = 0.5;
    }
  }
  return nets;
}

}  // namespace detail

inline ArtifactStore init_store(const Dataset& ds, const TrainingConfig& cfg,
                                const std::string& model_name) {
  ArtifactStore store;
  store.model_name = model_name;
  store.config = cfg.to_json();
  auto stats = detail::scan_families(ds);
  RngStream rng = RngStream::substream(cfg.seed, "init");
  for (const auto& [fam, fs] : stats) {
    store.families.emplace(fam, detail::init_family(fs, cfg, rng));
  }
  return store;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

// Minibatch Adam on the summed negative proposal log-density of forward
// samples. Deterministic given the config seed.
inline ArtifactStore train(const Model& model, const TrainingConfig& cfg) {
  Dataset ds = generate_dataset(model, cfg.num_worlds, RngStream::substream(cfg.seed, "data").next_u64(),
                                cfg.root_sd_inflation);
  ArtifactStore store = init_store(ds, cfg, model.name);
  store.logsd_min = cfg.logsd_min;
  store.logsd_max = cfg.logsd_max;

  AdamConfig ac{cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
  std::map<std::string, std::vector<AdamState>> adam;
  for (auto& [fam, nets] : store.families) adam[fam].resize(nets.params().size());

  std::vector<std::size_t> order(ds.worlds.size());
  std::iota(order.begin(), order.end(), 0);
  RngStream shuffle_rng = RngStream::substream(cfg.seed, "shuffle");

  Tape tape;
  double epoch_loss = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.minibatch) {
      const std::size_t stop = std::min(order.size(), start + cfg.minibatch);
      tape.clear();
      Var total = tape.constant(0.0);
      for (std::size_t i = start; i < stop; ++i) {
        total = tape.add(total, world_loss(tape, store, ds.worlds[order[i]]));
      }
      Var loss = tape.scale(total, 1.0 / static_cast<double>(stop - start));
      const double loss_value = tape.value(loss)[0];
      if (!std::isfinite(loss_value))
        throw error("training diverged: non-finite loss at epoch " + std::to_string(epoch));
      epoch_loss += loss_value * static_cast<double>(stop - start);

      std::vector<Tensor> grads = tape.backward(loss);
      for (auto& [fam, nets] : store.families) {
        auto params = nets.params();
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
          Var leaf = tape.leaf(*params[pi]);
          if (static_cast<std::size_t>(leaf.id) >= grads.size()) continue;  // untouched this batch
          adam_step(*params[pi], grads[static_cast<std::size_t>(leaf.id)], adam[fam][pi], ac);
        }
      }
    }
  }
  store.final_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(1, ds.worlds.size()));
  return store;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json tensor_to_json(const Tensor& t) {
  return {{"shape", t.shape}, {"data", t.data}};
}

inline Tensor tensor_from_json(const nlohmann::json& j) {
  return Tensor(j.at("shape").get<std::vector<std::size_t>>(),
                j.at("data").get<std::vector<double>>());
}

}  // namespace detail

inline nlohmann::json store_to_json(const ArtifactStore& store) {
  nlohmann::json families = nlohmann::json::object();
  for (const auto& [fam, nets] : store.families) {
    families[fam] = {
        {"embed", {{"w", detail::tensor_to_json(nets.embed_w)}, {"b", detail::tensor_to_json(nets.embed_b)}}},
        {"agg",
         {{"w1", detail::tensor_to_json(nets.agg_w1)},
          {"w2", detail::tensor_to_json(nets.agg_w2)},
          {"w3", detail::tensor_to_json(nets.agg_w3)}}},
        {"head", {{"w", detail::tensor_to_json(nets.head_w)}, {"b", detail::tensor_to_json(nets.head_b)}}},
        {"support",
         {{"continuous", nets.meta.continuous},
          {"max_support", nets.meta.max_support},
          {"boolean", nets.meta.boolean},
          {"components", nets.mixture_components}}}};
  }
  return nlohmann::json{{"version", store.version},
                        {"model", store.model_name},
                        {"config", store.config},
                        {"final_loss", store.final_loss},
                        {"logsd_min", store.logsd_min},
                        {"logsd_max", store.logsd_max},
                        {"families", families}};
}

inline ArtifactStore store_from_json(const nlohmann::json& j) {
  const std::string version = j.value("version", "");
  if (version != "1") throw version_error("unsupported artifact version '" + version + "'");
  ArtifactStore store;
  store.version = version;
  store.model_name = j.value("model", "");
  store.config = j.value("config", nlohmann::json::object());
  store.final_loss = j.value("final_loss", 0.0);
  store.logsd_min = j.value("logsd_min", -7.0);
  store.logsd_max = j.value("logsd_max", 4.0);
  for (const auto& [fam, jn] : j.at("families").items()) {
    FamilyNets nets;
    nets.embed_w = detail::tensor_from_json(jn.at("embed").at("w"));
    nets.embed_b = detail::tensor_from_json(jn.at("embed").at("b"));
    nets.agg_w1 = detail::tensor_from_json(jn.at("agg").at("w1"));
    nets.agg_w2 = detail::tensor_from_json(jn.at("agg").at("w2"));
    nets.agg_w3 = detail::tensor_from_json(jn.at("agg").at("w3"));
    nets.head_w = detail::tensor_from_json(jn.at("head").at("w"));
    nets.head_b = detail::tensor_from_json(jn.at("head").at("b"));
    const auto& sup = jn.at("support");
    nets.meta.continuous = sup.at("continuous").get<bool>();
    nets.meta.max_support = sup.at("max_support").get<std::size_t>();
    nets.meta.boolean = sup.at("boolean").get<bool>();
    nets.mixture_components = sup.at("components").get<std::size_t>();
    store.families.emplace(fam, std::move(nets));
  }
  return store;
}

inline void save(const ArtifactStore& store, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw error("cannot write artifact file " + path);
  out << store_to_json(store).dump(2) << "\n";
}

inline ArtifactStore load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw error("cannot read artifact file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw error("malformed artifact file " + path + ": " + e.what());
  }
  return store_from_json(j);
}

}  // namespace blanket

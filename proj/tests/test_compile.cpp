#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "blanket/compile.hpp"
#include "blanket/infer.hpp"
#include "blanket/models.hpp"
#include "helpers.hpp"

using namespace blanket;

TEST_CASE("dataset generation samples the full joint", "[compile]") {
  ZooModel zm = conj_normal();
  Dataset one = generate_dataset(*zm.model, 1, 3);
  REQUIRE(one.worlds.size() == 1);
  CHECK(one.worlds[0].size() == 2);
  // Observed-role nodes are sampled, not clamped.
  CHECK_FALSE(one.worlds[0].node(Address("y")).observed);
  CHECK(one.worlds[0].node(Address("y")).value.as_real() != 0.25);

  Dataset a = generate_dataset(*zm.model, 5, 42);
  Dataset b = generate_dataset(*zm.model, 5, 42);
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(a.worlds[i].to_json().dump() == b.worlds[i].to_json().dump());
}

TEST_CASE("marginal spread of the sampled observation", "[compile][slow]") {
  ZooModel zm = conj_normal(2.0, 0.1);
  Dataset ds = generate_dataset(*zm.model, 10000, 11);
  std::vector<double> ys;
  ys.reserve(ds.worlds.size());
  for (const World& w : ds.worlds) ys.push_back(w.node(Address("y")).value.as_real());
  CHECK(std::sqrt(oracle::var_of(ys)) == Catch::Approx(std::sqrt(4.0 + 0.01)).margin(0.05));
}

TEST_CASE("root sd inflation only widens the training draw", "[compile]") {
  ZooModel zm = conj_normal(2.0, 0.1);
  Dataset plain = generate_dataset(*zm.model, 4000, 5, 1.0);
  Dataset wide = generate_dataset(*zm.model, 4000, 5, 2.0);
  std::vector<double> xp, xw;
  for (const World& w : plain.worlds) xp.push_back(w.node(Address("x")).value.as_real());
  for (const World& w : wide.worlds) xw.push_back(w.node(Address("x")).value.as_real());
  CHECK(std::sqrt(oracle::var_of(xp)) == Catch::Approx(2.0).margin(0.15));
  CHECK(std::sqrt(oracle::var_of(xw)) == Catch::Approx(4.0).margin(0.3));
}

TEST_CASE("uniform discrete proposal costs log 2", "[compile]") {
  // A single binary latent with an empty blanket and all-zero head weights.
  Model m;
  m.name = "coin";
  m.fn = [](const Address&, NodeReader&) -> Distribution { return Bernoulli(0.5); };
  m.queries = {Address("c")};
  Dataset ds = generate_dataset(m, 10, 1);
  TrainingConfig cfg;
  cfg.seed = 1;
  ArtifactStore store = init_store(ds, cfg, m.name);
  FamilyNets& nets = store.families.at("c");
  for (Tensor* t : nets.params())
    for (double& x : t->data) x = 0.0;

  Tape tape;
  Var loss = world_loss(tape, store, ds.worlds[0]);
  CHECK(tape.value(loss)[0] == Catch::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("training reduces the objective on the conjugate pair", "[compile][train]") {
  ZooModel zm = conj_normal();
  TrainingConfig cfg;
  cfg.num_worlds = 300;
  cfg.epochs = 60;
  cfg.minibatch = 64;
  cfg.components = 1;
  cfg.lr = 5e-3;
  cfg.seed = 3;

  // Loss at initialization, averaged over the dataset.
  Dataset ds = generate_dataset(*zm.model, cfg.num_worlds,
                                RngStream::substream(cfg.seed, "data").next_u64());
  ArtifactStore init = init_store(ds, cfg, zm.name);
  init.logsd_min = cfg.logsd_min;
  init.logsd_max = cfg.logsd_max;
  Tape tape;
  double init_loss = 0.0;
  for (const World& w : ds.worlds) {
    tape.clear();
    init_loss += tape.value(world_loss(tape, init, w))[0];
  }
  init_loss /= static_cast<double>(ds.worlds.size());

  ArtifactStore trained = train(*zm.model, cfg);
  CHECK(trained.final_loss < init_loss - 0.1);
  // Inclusive-KL lower bound: the posterior's differential entropy.
  const double entropy = 0.5 * std::log(2.0 * M_PI * M_E * (1.0 / (0.25 + 100.0)));
  CHECK(trained.final_loss > entropy - 0.02);
}

TEST_CASE("training is seed-deterministic", "[compile][train]") {
  ZooModel zm = conj_normal();
  TrainingConfig cfg;
  cfg.num_worlds = 100;
  cfg.epochs = 5;
  cfg.components = 2;
  cfg.seed = 9;
  ArtifactStore a = train(*zm.model, cfg);
  ArtifactStore b = train(*zm.model, cfg);
  CHECK(a.final_loss == b.final_loss);
  CHECK(store_to_json(a).dump() == store_to_json(b).dump());
}

TEST_CASE("families never sampled are simply absent", "[compile][train]") {
  // The rare branch is never taken, so no artifact is built for it.
  Model m;
  m.name = "gated";
  const Address z("z"), obs("obs");
  m.fn = [z, obs](const Address& a, NodeReader& r) -> Distribution {
    if (a == z) return Bernoulli(0.0);
    if (a.family() == "rare") return Normal(0, 1);
    if (a == obs) {
      if (r.boolean(z)) return Normal(r.real(Address("rare", 0)), 1.0);
      return Normal(0.0, 1.0);
    }
    throw unknown_address_error(a.str());
  };
  m.observations = {{obs, Value::real(0.2)}};
  m.queries = {z};

  TrainingConfig cfg;
  cfg.num_worlds = 50;
  cfg.epochs = 2;
  cfg.seed = 4;
  ArtifactStore store = train(m, cfg);
  CHECK(store.has_family("z"));
  CHECK(store.has_family("obs"));
  CHECK_FALSE(store.has_family("rare"));
}

TEST_CASE("nuisance parameter accounting", "[compile][train]") {
  TrainingConfig cfg;
  cfg.num_worlds = 40;
  cfg.epochs = 1;
  cfg.seed = 6;
  ZooModel none = nuisance_model(0);
  ZooModel some = nuisance_model(3);
  ArtifactStore a = train(*none.model, cfg);
  ArtifactStore b = train(*some.model, cfg);
  CHECK_FALSE(a.has_family("nuisance"));
  REQUIRE(b.has_family("nuisance"));
  CHECK(b.parameter_count() == a.parameter_count() + b.family("nuisance").parameter_count());
  for (const std::string fam : {"x", "y", "noisy_sq_length"})
    CHECK(a.family(fam).parameter_count() == b.family(fam).parameter_count());
}

TEST_CASE("artifact persistence round trip", "[compile]") {
  ZooModel zm = conj_normal();
  TrainingConfig cfg;
  cfg.num_worlds = 50;
  cfg.epochs = 2;
  cfg.components = 3;
  cfg.seed = 8;
  ArtifactStore store = train(*zm.model, cfg);

  const std::string path = "test_artifact_roundtrip.json";
  save(store, path);
  ArtifactStore loaded = load(path);
  CHECK(store_to_json(loaded).dump() == store_to_json(store).dump());
  for (const auto& [fam, nets] : store.families) {
    const FamilyNets& other = loaded.family(fam);
    auto pa = nets.params();
    auto pb = other.params();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->data == pb[i]->data);
  }

  // compute_phi through the reloaded store is bit-identical.
  World w = World::ancestral(*zm.model, RngStream(2));
  auto p1 = std::get<GmmProposal>(compute_phi(store, w, Address("x")));
  auto p2 = std::get<GmmProposal>(compute_phi(loaded, w, Address("x")));
  CHECK(p1.means == p2.means);
  CHECK(p1.sds == p2.sds);
  CHECK(p1.weights == p2.weights);
  std::remove(path.c_str());
}

TEST_CASE("artifact version and format errors", "[compile]") {
  nlohmann::json j = store_to_json(ArtifactStore{});
  j["version"] = "999";
  CHECK_THROWS_AS(store_from_json(j), version_error);

  const std::string path = "test_artifact_bad.json";
  {
    std::ofstream out(path);
    out << "{ not json";
  }
  CHECK_THROWS_AS(load(path), error);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load("does_not_exist.json"), error);
}

TEST_CASE("inference does not mutate the store", "[compile][train]") {
  ZooModel zm = conj_normal();
  TrainingConfig cfg;
  cfg.num_worlds = 80;
  cfg.epochs = 3;
  cfg.components = 1;
  cfg.seed = 12;
  ArtifactStore store = train(*zm.model, cfg);
  const std::string before = store_to_json(store).dump();

  ChainConfig cc;
  cc.num_samples = 50;
  cc.burn_in = 20;
  cc.seed = 1;
  run_chain(*zm.model, zm.model->observations, LicProposer{&store}, cc);
  CHECK(store_to_json(store).dump() == before);
}

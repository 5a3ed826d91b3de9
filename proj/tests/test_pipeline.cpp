#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "blanket/pipeline.hpp"
#include "helpers.hpp"

using namespace blanket;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string str() const { return path.string(); }
};

RunSpec small_compile_spec(const std::string& out) {
  RunSpec spec;
  spec.command = "compile";
  spec.model = "conj-normal";
  spec.seed = 1234;
  spec.training.num_worlds = 120;
  spec.training.epochs = 4;
  spec.training.components = 1;
  spec.out_dir = out;
  return spec;
}

}  // namespace

TEST_CASE("compile writes artifact and report", "[pipeline]") {
  TempDir dir("blanket_compile_test");
  RunSpec spec = small_compile_spec(dir.str());
  CommandResult res = cmd_compile(spec);
  CHECK(res.exit_code == 0);
  CHECK(res.report.contains("param_count"));
  CHECK(res.report.contains("compile_seconds"));
  CHECK(std::filesystem::exists(dir.path / "artifact.json"));
  CHECK(std::filesystem::exists(dir.path / "training_report.json"));
  CHECK(std::filesystem::exists(dir.path / "manifest.json"));

  // Same seed twice: byte-identical artifacts.
  TempDir dir2("blanket_compile_test2");
  RunSpec spec2 = small_compile_spec(dir2.str());
  cmd_compile(spec2);
  CHECK(slurp(dir.str() + "/artifact.json") == slurp(dir2.str() + "/artifact.json"));
}

TEST_CASE("infer pipeline outputs and reruns byte-identically", "[pipeline]") {
  TempDir cdir("blanket_pipe_compile");
  RunSpec cspec = small_compile_spec(cdir.str());
  cmd_compile(cspec);

  auto infer_into = [&](const std::string& out) {
    RunSpec spec;
    spec.command = "infer";
    spec.model = "conj-normal";
    spec.proposer = "lic";
    spec.seed = 99;
    spec.chains = 3;
    spec.samples = 40;
    spec.burn_in = 20;
    spec.artifact = cdir.str() + "/artifact.json";
    spec.out_dir = out;
    spec.dump_world = out + "/world.json";
    return spec;
  };

  TempDir a("blanket_pipe_infer_a"), b("blanket_pipe_infer_b");
  CommandResult ra = cmd_infer(infer_into(a.str()));
  CHECK(ra.exit_code == 0);
  for (const char* f : {"samples.csv", "metrics.json", "timings.json", "manifest.json", "world.json"})
    CHECK(std::filesystem::exists(a.path / f));

  cmd_infer(infer_into(b.str()));
  CHECK(slurp(a.str() + "/samples.csv") == slurp(b.str() + "/samples.csv"));
  CHECK(slurp(a.str() + "/metrics.json") == slurp(b.str() + "/metrics.json"));

  // Rerun from the emitted manifest alone.
  TempDir c("blanket_pipe_infer_c");
  nlohmann::json manifest = nlohmann::json::parse(slurp(a.str() + "/manifest.json"));
  RunSpec replay = RunSpec::from_json(manifest);
  replay.out_dir = c.str();
  replay.dump_world.clear();
  cmd_infer(replay);
  CHECK(slurp(c.str() + "/samples.csv") == slurp(a.str() + "/samples.csv"));
  CHECK(slurp(c.str() + "/metrics.json") == slurp(a.str() + "/metrics.json"));

  // World snapshot has the expected shape.
  nlohmann::json world = nlohmann::json::parse(slurp(a.str() + "/world.json"));
  CHECK(world.contains("nodes"));
  CHECK(world.contains("log_joint"));
}

TEST_CASE("lic inference requires an artifact", "[pipeline]") {
  RunSpec spec;
  spec.command = "infer";
  spec.model = "conj-normal";
  spec.proposer = "lic";
  spec.artifact = "missing_artifact_file.json";
  spec.out_dir = "unused";
  CHECK_THROWS_AS(cmd_infer(spec), error);
}

TEST_CASE("zero-sample runs are flagged", "[pipeline]") {
  TempDir dir("blanket_pipe_zero");
  RunSpec spec;
  spec.command = "infer";
  spec.model = "conj-normal";
  spec.proposer = "prior";
  spec.samples = 0;
  spec.burn_in = 5;
  spec.chains = 2;
  spec.out_dir = dir.str();
  CommandResult res = cmd_infer(spec);
  CHECK(res.exit_code == 0);
  nlohmann::json metrics = nlohmann::json::parse(slurp(dir.str() + "/metrics.json"));
  CHECK(metrics.value("insufficient_draws", false));
  const std::string csv = slurp(dir.str() + "/samples.csv");
  CHECK(csv == "chain,iteration,family,args,value\n");
}

TEST_CASE("samples csv round trip", "[pipeline]") {
  ZooModel zm = discrete_gmm();
  ChainConfig cc;
  cc.num_samples = 25;
  cc.burn_in = 10;
  cc.seed = 5;
  auto chains = run_chains(*zm.model, zm.model->observations, PriorProposer{}, cc, 2);
  const std::string csv = samples_to_csv(chains);
  auto parsed = samples_from_csv(csv);
  REQUIRE(parsed.size() == 2);
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(parsed[c].num_recorded == chains[c].num_recorded);
    for (const auto& [addr, seq] : chains[c].samples) {
      REQUIRE(parsed[c].samples.count(addr) == 1);
      const auto& got = parsed[c].samples.at(addr);
      for (std::size_t d = 0; d < seq.size(); ++d) {
        REQUIRE(got[d].has_value() == seq[d].has_value());
        if (seq[d]) CHECK(*got[d] == *seq[d]);
      }
    }
  }
}

TEST_CASE("diagnose recomputes metrics from a csv", "[pipeline]") {
  TempDir run("blanket_diag_run"), diag("blanket_diag_out");
  RunSpec spec;
  spec.command = "infer";
  spec.model = "discrete-gmm";
  spec.proposer = "prior";
  spec.seed = 4;
  spec.chains = 4;
  spec.samples = 200;
  spec.burn_in = 50;
  spec.out_dir = run.str();
  cmd_infer(spec);

  RunSpec dspec;
  dspec.command = "diagnose";
  dspec.samples_csv = run.str() + "/samples.csv";
  dspec.out_dir = diag.str();
  CommandResult res = cmd_diagnose(dspec);
  CHECK(res.exit_code == 0);

  nlohmann::json a = nlohmann::json::parse(slurp(run.str() + "/metrics.json"));
  nlohmann::json b = nlohmann::json::parse(slurp(diag.str() + "/metrics.json"));
  CHECK(a.at("ess") == b.at("ess"));
  CHECK(a.at("rhat") == b.at("rhat"));
  CHECK(a.at("min_ess") == b.at("min_ess"));
}

TEST_CASE("unknown names fail cleanly", "[pipeline]") {
  RunSpec spec;
  spec.model = "no-such-model";
  CHECK_THROWS_AS(build_zoo(spec), error);
  spec.model = "conj-normal";
  spec.proposer = "no-such-proposer";
  CHECK_THROWS_AS(build_proposer(spec, nullptr), error);
  CHECK_THROWS_AS(cmd_experiment("no-such-experiment", spec), error);
}

TEST_CASE("run spec json round trip", "[pipeline]") {
  RunSpec spec;
  spec.model = "blr";
  spec.params = {{"rows", 500}, {"features", 5}};
  spec.proposer = "rwmh";
  spec.seed = 7;
  spec.training.epochs = 11;
  RunSpec back = RunSpec::from_json(spec.to_json());
  CHECK(back.to_json() == spec.to_json());
}

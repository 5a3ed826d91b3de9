#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blanket/compile.hpp"
#include "blanket/diagnostics.hpp"
#include "blanket/infer.hpp"
#include "blanket/models.hpp"

namespace blanket {

inline const std::string kEngineVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Run specification
// ---------------------------------------------------------------------------

struct RunSpec {
  std::string command = "infer";
  std::string model = "conj-normal";
  nlohmann::json params = nlohmann::json::object();
  std::string proposer = "lic";
  std::uint64_t seed = 0;
  std::size_t chains = 10;
  std::size_t samples = 100;
  std::size_t burn_in = 1000;
  std::size_t thinning = 1;
  TrainingConfig training;
  std::string out_dir = "out";
  std::string artifact;
  std::string samples_csv;  // diagnose input
  std::string dump_world;   // optional world-snapshot output path

  nlohmann::json to_json() const {
    return {{"command", command}, {"model", model},     {"params", params},
            {"proposer", proposer}, {"seed", seed},     {"chains", chains},
            {"samples", samples},   {"burn_in", burn_in}, {"thinning", thinning},
            {"training", training.to_json()}, {"out_dir", out_dir},
            {"artifact", artifact}, {"samples_csv", samples_csv}, {"dump_world", dump_world}};
  }

  static RunSpec from_json(const nlohmann::json& in) {
    const nlohmann::json& j = in.contains("spec") ? in.at("spec") : in;
    RunSpec s;
    s.command = j.value("command", s.command);
    s.model = j.value("model", s.model);
    s.params = j.value("params", s.params);
    s.proposer = j.value("proposer", s.proposer);
    s.seed = j.value("seed", s.seed);
    s.chains = j.value("chains", s.chains);
    s.samples = j.value("samples", s.samples);
    s.burn_in = j.value("burn_in", s.burn_in);
    s.thinning = j.value("thinning", s.thinning);
    if (j.contains("training")) s.training = TrainingConfig::from_json(j.at("training"));
    s.out_dir = j.value("out_dir", s.out_dir);
    s.artifact = j.value("artifact", s.artifact);
    s.samples_csv = j.value("samples_csv", s.samples_csv);
    s.dump_world = j.value("dump_world", s.dump_world);
    return s;
  }
};

// Named substreams off the master seed keep compile/data/infer randomness
// independent but reproducible from one number.
inline std::uint64_t derive_seed(std::uint64_t master, const std::string& purpose) {
  return RngStream::substream(master, purpose).next_u64();
}

// ---------------------------------------------------------------------------
// Model construction from a spec
// ---------------------------------------------------------------------------

inline ZooModel build_zoo(const RunSpec& spec) {
  const nlohmann::json& p = spec.params;
  if (spec.model == "conj-normal") {
    return conj_normal(p.value("sigma_x", 2.0), p.value("sigma_y", 0.1), p.value("y", 0.25));
  }
  if (spec.model == "gmm2d") {
    Gmm2dSpec g;
    g.y_obs = p.value("y", g.y_obs);
    return gmm2d(g);
  }
  if (spec.model == "nuisance") {
    return nuisance_model(p.value("n", std::size_t{100}), p.value("obs_sq", 25.0));
  }
  if (spec.model == "blr") {
    BlrConfig c;
    c.n_rows = p.value("rows", c.n_rows);
    c.n_features = p.value("features", c.n_features);
    c.seed = p.value("data_seed", derive_seed(spec.seed, "data"));
    c.prior_entries_are_variances = p.value("prior_entries_are_variances", true);
    return blr(c);
  }
  if (spec.model == "nschools") {
    NschoolsConfig c;
    c.n_schools = p.value("schools", c.n_schools);
    c.n_states = p.value("states", c.n_states);
    c.n_districts = p.value("districts", c.n_districts);
    c.n_types = p.value("types", c.n_types);
    c.seed = p.value("data_seed", derive_seed(spec.seed, "data"));
    return nschools(c);
  }
  if (spec.model == "discrete-gmm") {
    return discrete_gmm();
  }
  throw error("unknown model '" + spec.model + "'");
}

inline Proposer build_proposer(const RunSpec& spec, const ArtifactStore* store) {
  if (spec.proposer == "lic") {
    if (!store) throw error("proposer 'lic' requires an artifact");
    return LicProposer{store};
  }
  if (spec.proposer == "prior") return PriorProposer{};
  if (spec.proposer == "rwmh") return RwmhProposer{};
  throw error("unknown proposer '" + spec.proposer + "'");
}

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("cannot write " + path);
  out << text;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

inline std::string args_token(const Address& a) {
  std::string s;
  for (std::size_t i = 0; i < a.args().size(); ++i) {
    if (i) s += ";";
    s += std::to_string(a.args()[i]);
  }
  return s;
}

}  // namespace detail

inline void write_data_csv(const std::string& path, const nlohmann::json& table) {
  if (!table.contains("columns")) return;
  std::string csv;
  const auto& cols = table.at("columns");
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) csv += ",";
    csv += cols[i].get<std::string>();
  }
  csv += "\n";
  for (const auto& row : table.at("rows")) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) csv += ",";
      if (row[i].is_string()) csv += row[i].get<std::string>();
      else if (row[i].is_number_float()) csv += detail::fmt_double(row[i].get<double>());
      else csv += row[i].dump();
    }
    csv += "\n";
  }
  detail::write_text(path, csv);
}

inline std::string samples_to_csv(const std::vector<ChainOutput>& chains) {
  std::string csv = "chain,iteration,family,args,value\n";
  for (std::size_t c = 0; c < chains.size(); ++c) {
    for (std::size_t d = 0; d < chains[c].num_recorded; ++d) {
      for (const auto& [addr, seq] : chains[c].samples) {
        if (d >= seq.size() || !seq[d].has_value()) continue;
        csv += std::to_string(c) + "," + std::to_string(d) + "," + addr.family() + "," +
               detail::args_token(addr) + "," + detail::fmt_double(*seq[d]) + "\n";
      }
    }
  }
  return csv;
}

inline std::vector<ChainOutput> samples_from_csv(const std::string& text) {
  std::vector<ChainOutput> chains;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string chain_s, iter_s, family, args_s, value_s;
    std::getline(row, chain_s, ',');
    std::getline(row, iter_s, ',');
    std::getline(row, family, ',');
    std::getline(row, args_s, ',');
    std::getline(row, value_s, ',');
    const std::size_t c = std::stoul(chain_s);
    const std::size_t d = std::stoul(iter_s);
    std::vector<int> args;
    std::istringstream as(args_s);
    std::string tok;
    while (std::getline(as, tok, ';'))
      if (!tok.empty()) args.push_back(std::stoi(tok));
    if (chains.size() <= c) chains.resize(c + 1);
    auto& seq = chains[c].samples[Address(family, args)];
    if (seq.size() <= d) seq.resize(d + 1, std::nullopt);
    seq[d] = std::stod(value_s);
  }
  for (auto& c : chains) {
    std::size_t n = 0;
    for (auto& [a, seq] : c.samples) n = std::max(n, seq.size());
    for (auto& [a, seq] : c.samples) seq.resize(n, std::nullopt);
    c.num_recorded = n;
  }
  return chains;
}

inline nlohmann::json make_manifest(const RunSpec& spec, const nlohmann::json& derived,
                                    const std::vector<std::string>& outputs) {
  return {{"spec", spec.to_json()},
          {"derived", derived},
          {"versions", {{"engine", kEngineVersion}, {"artifact_format", "1"}}},
          {"outputs", outputs}};
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct CommandResult {
  int exit_code = 0;
  nlohmann::json report;
};

inline std::string default_artifact_path(const RunSpec& spec) {
  return spec.artifact.empty() ? spec.out_dir + "/artifact.json" : spec.artifact;
}

inline CommandResult cmd_compile(const RunSpec& spec) {
  ZooModel zoo = build_zoo(spec);
  TrainingConfig cfg = spec.training;
  cfg.seed = derive_seed(spec.seed, "compile");

  const auto t0 = std::chrono::steady_clock::now();
  ArtifactStore store = train(*zoo.model, cfg);
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const std::string artifact_path = default_artifact_path(spec);
  save(store, artifact_path);

  nlohmann::json per_family = nlohmann::json::object();
  for (const auto& [fam, nets] : store.families) per_family[fam] = nets.parameter_count();
  nlohmann::json report{{"param_count", store.parameter_count()},
                        {"param_count_by_family", per_family},
                        {"compile_seconds", dt},
                        {"final_loss", store.final_loss},
                        {"artifact", artifact_path}};
  detail::write_json(spec.out_dir + "/training_report.json", report);
  detail::write_json(spec.out_dir + "/manifest.json",
                     make_manifest(spec, {{"compile_seed", cfg.seed}},
                                   {"training_report.json", "artifact.json"}));
  return {0, report};
}

inline CommandResult cmd_infer(const RunSpec& spec) {
  ZooModel zoo = build_zoo(spec);
  ArtifactStore store;
  const bool needs_artifact = spec.proposer == "lic";
  if (needs_artifact) store = load(default_artifact_path(spec));
  Proposer prop = build_proposer(spec, needs_artifact ? &store : nullptr);

  ChainConfig cc;
  cc.num_samples = spec.samples;
  cc.burn_in = spec.burn_in;
  cc.thinning = spec.thinning;
  cc.seed = derive_seed(spec.seed, "infer");

  if (!spec.dump_world.empty()) {
    World w = World::ancestral(*zoo.model, RngStream::substream(cc.seed, "ancestral"),
                               zoo.model->observations);
    detail::write_json(spec.dump_world, w.to_json());
  }

  std::vector<ChainOutput> chains =
      run_chains(*zoo.model, zoo.model->observations, prop, cc, spec.chains);

  bool failed = false;
  nlohmann::json failures = nlohmann::json::array();
  for (std::size_t i = 0; i < chains.size(); ++i) {
    if (!chains[i].failure.empty()) {
      failed = true;
      failures.push_back({{"chain", i}, {"error", chains[i].failure}});
    }
  }

  MetricsReport metrics = compute_metrics(chains);
  if (!zoo.heldout.empty() && !failed) {
    auto assignments = pooled_assignments(chains);
    if (!assignments.empty()) metrics.pll_value = pll(assignments, *zoo.model, zoo.heldout);
  }

  detail::write_text(spec.out_dir + "/samples.csv", samples_to_csv(chains));
  detail::write_json(spec.out_dir + "/metrics.json", metrics.to_json());

  nlohmann::json timings{{"infer_seconds_total", 0.0}, {"per_chain", nlohmann::json::array()}};
  double total = 0.0;
  for (const ChainOutput& c : chains) {
    total += c.infer_seconds;
    timings["per_chain"].push_back(c.infer_seconds);
  }
  timings["infer_seconds_total"] = total;
  detail::write_json(spec.out_dir + "/timings.json", timings);

  nlohmann::json derived{{"infer_seed", cc.seed}};
  if (failed) derived["partial"] = true;
  if (failed) derived["failures"] = failures;
  detail::write_json(spec.out_dir + "/manifest.json",
                     make_manifest(spec, derived, {"samples.csv", "metrics.json", "timings.json"}));

  nlohmann::json report = metrics.to_json();
  report["dataset_manifest"] = zoo.manifest;
  return {failed ? 2 : 0, report};
}

inline CommandResult cmd_diagnose(const RunSpec& spec) {
  std::ifstream in(spec.samples_csv, std::ios::binary);
  if (!in) throw error("cannot read samples csv " + spec.samples_csv);
  std::stringstream buf;
  buf << in.rdbuf();
  std::vector<ChainOutput> chains = samples_from_csv(buf.str());
  MetricsReport metrics = compute_metrics(chains);
  detail::write_json(spec.out_dir + "/metrics.json", metrics.to_json());
  detail::write_json(spec.out_dir + "/manifest.json",
                     make_manifest(spec, nlohmann::json::object(), {"metrics.json"}));
  return {0, metrics.to_json()};
}

// ---------------------------------------------------------------------------
// Experiments (generate -> compile -> infer -> diagnose -> verdicts)
// ---------------------------------------------------------------------------

namespace detail {

struct Verdicts {
  nlohmann::json criteria = nlohmann::json::object();
  bool all_pass = true;

  void add(const std::string& name, bool pass, nlohmann::json details) {
    details["pass"] = pass;
    criteria[name] = details;
    all_pass = all_pass && pass;
  }
};

inline double sample_mean(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

}  // namespace detail

// Proposal-mean tracking against the closed-form posterior over a grid of
// observed values.
inline CommandResult experiment_conj_normal(RunSpec spec) {
  spec.model = "conj-normal";
  const double sigma_x = spec.params.value("sigma_x", 2.0);
  const double sigma_y = spec.params.value("sigma_y", 0.1);

  TrainingConfig cfg = spec.training;
  cfg.components = 1;
  cfg.num_worlds = 1000;
  if (cfg.epochs == TrainingConfig{}.epochs) cfg.epochs = 3000;
  cfg.seed = derive_seed(spec.seed, "compile");
  ZooModel zoo = build_zoo(spec);

  const auto t0 = std::chrono::steady_clock::now();
  ArtifactStore store = train(*zoo.model, cfg);
  const double compile_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const Address x("x"), y("y");
  std::vector<double> errors;
  nlohmann::json grid = nlohmann::json::array();
  Tape scratch;
  for (int i = 0; i < 33; ++i) {
    const double yv = -4.0 + 8.0 * static_cast<double>(i) / 32.0;
    Model probe = *zoo.model;
    probe.observations[y] = Value::real(yv);
    World w = World::ancestral(probe, RngStream::substream(spec.seed, "grid", i), probe.observations);
    const auto phi = std::get<GmmProposal>(compute_phi(store, w, x, scratch));
    const double target = conj_normal_posterior(yv, sigma_x, sigma_y).mean;
    errors.push_back(std::fabs(phi.means[0] - target));
    grid.push_back({{"y", yv}, {"proposal_mean", phi.means[0]}, {"posterior_mean", target}});
  }
  const double max_err = *std::max_element(errors.begin(), errors.end());
  const double mean_err = detail::sample_mean(errors);

  detail::Verdicts v;
  v.add("conjugate_tracking_max", max_err <= 0.1, {{"max_abs_mean_error", max_err}});
  v.add("conjugate_tracking_mean", mean_err <= 0.05, {{"mean_abs_error", mean_err}});

  // Full sampling pass at the default observation; the posterior mean of a
  // correct chain lands within Monte-Carlo error of the closed form.
  ChainConfig cc;
  cc.num_samples = spec.samples;
  cc.burn_in = std::min<std::size_t>(spec.burn_in, 200);
  cc.seed = derive_seed(spec.seed, "infer");
  auto chains = run_chains(*zoo.model, zoo.model->observations, LicProposer{&store}, cc, spec.chains);
  for (const auto& c : chains)
    if (!c.failure.empty()) throw error("conj-normal chain failed: " + c.failure);
  MetricsReport metrics = compute_metrics(chains);
  detail::write_text(spec.out_dir + "/samples.csv", samples_to_csv(chains));
  detail::write_json(spec.out_dir + "/metrics.json", metrics.to_json());

  std::vector<double> xs;
  for (const auto& c : chains)
    for (const auto& s : c.samples.at(x)) xs.push_back(*s);
  const ConjPosterior post = conj_normal_posterior(spec.params.value("y", 0.25), sigma_x, sigma_y);
  const double sample_sd = std::sqrt(std::max(1e-12, [&] {
    double m = detail::sample_mean(xs), acc = 0.0;
    for (double xv : xs) acc += (xv - m) * (xv - m);
    return acc / static_cast<double>(xs.size() - 1);
  }()));
  const double mcse = sample_sd / std::sqrt(metrics.ess_by_address.at(x));
  const double mean_gap = std::fabs(detail::sample_mean(xs) - post.mean);
  v.add("conj_posterior_mean", mean_gap <= 3.0 * mcse,
        {{"sample_mean", detail::sample_mean(xs)}, {"posterior_mean", post.mean}, {"mcse", mcse}});

  nlohmann::json report{{"experiment", "conj-normal"},
                        {"compile_seconds", compile_seconds},
                        {"final_loss", store.final_loss},
                        {"param_count", store.parameter_count()},
                        {"max_abs_mean_error", max_err},
                        {"mean_abs_error", mean_err},
                        {"metrics", metrics.to_json()},
                        {"grid", grid},
                        {"criteria", v.criteria}};
  detail::write_json(spec.out_dir + "/experiment_report.json", report);
  detail::write_json(spec.out_dir + "/manifest.json",
                     make_manifest(spec, {{"compile_seed", cfg.seed}}, {"experiment_report.json"}));
  return {v.all_pass ? 0 : 3, report};
}

// Mode escape on the bimodal target: a compiled chain started in the left
// mode must recover both modes and their masses, while a fixed-step random
// walk stays trapped.
inline CommandResult experiment_mode_escape(RunSpec spec) {
  spec.model = "gmm2d";
  ZooModel zoo = build_zoo(spec);
  const Address x("x");

  TrainingConfig cfg = spec.training;
  if (cfg.components < 2) cfg.components = 2;
  cfg.num_worlds = spec.training.num_worlds == TrainingConfig{}.num_worlds ? 4000 : spec.training.num_worlds;
  if (cfg.epochs == TrainingConfig{}.epochs) cfg.epochs = 400;
  cfg.seed = derive_seed(spec.seed, "compile");
  ArtifactStore store = train(*zoo.model, cfg);

  ChainConfig cc;
  cc.num_samples = 1000;
  cc.burn_in = 0;
  cc.seed = derive_seed(spec.seed, "infer");
  cc.init = {{x, Value::real(0.0)}};
  ChainOutput lic_chain = run_chain(*zoo.model, zoo.model->observations, LicProposer{&store}, cc);
  if (!lic_chain.failure.empty()) throw error("mode-escape chain failed: " + lic_chain.failure);
  detail::write_text(spec.out_dir + "/samples.csv", samples_to_csv({lic_chain}));
  detail::write_json(spec.out_dir + "/metrics.json", compute_metrics({lic_chain}).to_json());

  std::size_t right = 0, left = 0;
  for (const auto& s : lic_chain.samples.at(x)) {
    if (*s > 5.0) ++right;
    else ++left;
  }
  const double right_mass = static_cast<double>(right) / 1000.0;
  const double oracle_mass = gmm2d_posterior(0.25).right_mode_mass();

  // Energy-barrier control: non-adaptive sigma=0.5 random walk, five seeds.
  std::size_t control_escapes = 0;
  nlohmann::json control = nlohmann::json::array();
  for (std::size_t rep = 0; rep < 5; ++rep) {
    ChainConfig rc = cc;
    rc.seed = derive_seed(spec.seed, "control") + rep;
    RwmhProposer rw;
    rw.initial_step = 0.5;
    rw.adapt = false;
    ChainOutput c = run_chain(*zoo.model, zoo.model->observations, rw, rc);
    double max_x = kNegInf;
    for (const auto& s : c.samples.at(x)) max_x = std::max(max_x, *s);
    control.push_back({{"replicate", rep}, {"max_x", max_x}});
    if (max_x > 5.0) ++control_escapes;
  }

  detail::Verdicts v;
  v.add("mode_escape_visits_both", left > 0 && right > 0,
        {{"left_visits", left}, {"right_visits", right}});
  v.add("mode_escape_mass", std::fabs(right_mass - oracle_mass) <= 0.1,
        {{"right_mode_mass", right_mass}, {"oracle", oracle_mass}});
  v.add("energy_barrier_control", control_escapes == 0, {{"escapes", control_escapes}});

  nlohmann::json report{{"experiment", "mode-escape"},
                        {"right_mode_mass", right_mass},
                        {"oracle_right_mode_mass", oracle_mass},
                        {"control", control},
                        {"final_loss", store.final_loss},
                        {"criteria", v.criteria}};
  detail::write_json(spec.out_dir + "/experiment_report.json", report);
  detail::write_json(spec.out_dir + "/manifest.json",
                     make_manifest(spec, {{"compile_seed", cfg.seed}, {"infer_seed", cc.seed}},
                                   {"experiment_report.json"}));
  return {v.all_pass ? 0 : 3, report};
}

// Parameter-count invariance to nuisance variables, plus sampling quality
// of the queried sites with and without the nuisance block.
inline CommandResult experiment_nuisance(RunSpec spec) {
  spec.model = "nuisance";
  const std::vector<std::size_t> counts{0, 10, 100};
  const std::vector<std::string> core_families{"noisy_sq_length", "x", "y"};

  TrainingConfig cfg = spec.training;
  cfg.num_worlds = spec.training.num_worlds == TrainingConfig{}.num_worlds ? 2000 : spec.training.num_worlds;
  if (cfg.epochs == TrainingConfig{}.epochs) cfg.epochs = 60;
  cfg.seed = derive_seed(spec.seed, "compile");

  std::map<std::size_t, ArtifactStore> stores;
  std::map<std::size_t, std::size_t> core_counts;
  nlohmann::json per_n = nlohmann::json::object();
  for (std::size_t n : counts) {
    RunSpec s = spec;
    s.params["n"] = n;
    ZooModel zoo = build_zoo(s);
    ArtifactStore store = train(*zoo.model, cfg);
    std::size_t core = 0;
    for (const std::string& fam : core_families) core += store.family(fam).parameter_count();
    core_counts[n] = core;
    per_n[std::to_string(n)] = {{"core_param_count", core},
                                {"total_param_count", store.parameter_count()}};
    stores.emplace(n, std::move(store));
  }
  const bool counts_equal =
      core_counts[0] == core_counts[10] && core_counts[10] == core_counts[100];

  ChainConfig cc;
  cc.num_samples = 100;
  cc.burn_in = spec.burn_in;
  cc.seed = derive_seed(spec.seed, "infer");
  const Address x("x");
  std::map<std::size_t, double> ess_x;
  for (std::size_t n : {std::size_t{0}, std::size_t{100}}) {
    RunSpec s = spec;
    s.params["n"] = n;
    ZooModel zoo = build_zoo(s);
    auto chains = run_chains(*zoo.model, zoo.model->observations, LicProposer{&stores.at(n)}, cc,
                             spec.chains);
    for (const auto& c : chains)
      if (!c.failure.empty()) throw error("nuisance chain failed: " + c.failure);
    auto mats = sample_matrices(chains);
    ess_x[n] = ess(mats.at(x));
    if (n == 100) {
      detail::write_text(spec.out_dir + "/samples.csv", samples_to_csv(chains));
      detail::write_json(spec.out_dir + "/metrics.json", compute_metrics(chains).to_json());
    }
  }
  const double ratio = std::max(ess_x[0], ess_x[100]) / std::min(ess_x[0], ess_x[100]);

  detail::Verdicts v;
  v.add("nuisance_param_invariance", counts_equal,
        {{"core_param_counts", {core_counts[0], core_counts[10], core_counts[100]}}});
  v.add("nuisance_ess_ratio", ratio < 2.0,
        {{"ess_x_0", ess_x[0]}, {"ess_x_100", ess_x[100]}, {"ratio", ratio}});

  nlohmann::json report{{"experiment", "nuisance"},
                        {"per_n", per_n},
                        {"param_count_delta_nonnuisance_families",
                         static_cast<long>(core_counts[100]) - static_cast<long>(core_counts[0])},
                        {"ess_x", {{"n0", ess_x[0]}, {"n100", ess_x[100]}}},
                        {"criteria", v.criteria}};
  detail::write_json(spec.out_dir + "/experiment_report.json", report);
  detail::write_json(spec.out_dir + "/manifest.json",
                     make_manifest(spec, {{"compile_seed", cfg.seed}, {"infer_seed", cc.seed}},
                                   {"experiment_report.json"}));
  return {v.all_pass ? 0 : 3, report};
}

// Desk-scale Bayesian logistic regression: compiled proposals against the
// adaptive random-walk baseline on ESS, predictive log-likelihood and R-hat.
inline CommandResult experiment_blr(RunSpec spec) {
  spec.model = "blr";
  if (!spec.params.contains("rows")) spec.params["rows"] = 500;
  if (!spec.params.contains("features")) spec.params["features"] = 5;
  ZooModel zoo = build_zoo(spec);
  write_data_csv(spec.out_dir + "/data.csv", zoo.data_table);
  detail::write_json(spec.out_dir + "/data_manifest.json", zoo.manifest);

  TrainingConfig cfg = spec.training;
  cfg.num_worlds = spec.training.num_worlds == TrainingConfig{}.num_worlds ? 2000 : spec.training.num_worlds;
  if (cfg.epochs == TrainingConfig{}.epochs) cfg.epochs = 30;
  cfg.seed = derive_seed(spec.seed, "compile");
  const auto t0 = std::chrono::steady_clock::now();
  ArtifactStore store = train(*zoo.model, cfg);
  const double compile_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  ChainConfig cc;
  cc.num_samples = spec.samples;
  cc.burn_in = spec.burn_in;
  cc.seed = derive_seed(spec.seed, "infer");

  auto run_side = [&](const Proposer& prop, bool write_outputs) {
    auto chains = run_chains(*zoo.model, zoo.model->observations, prop, cc, spec.chains);
    for (const auto& c : chains)
      if (!c.failure.empty()) throw error("blr chain failed: " + c.failure);
    MetricsReport m = compute_metrics(chains);
    auto assignments = pooled_assignments(chains);
    m.pll_value = pll(assignments, *zoo.model, zoo.heldout);
    if (write_outputs) {
      detail::write_text(spec.out_dir + "/samples.csv", samples_to_csv(chains));
      detail::write_json(spec.out_dir + "/metrics.json", m.to_json());
    }
    return m;
  };
  MetricsReport lic = run_side(LicProposer{&store}, true);
  MetricsReport rwmh = run_side(RwmhProposer{}, false);

  const double n_test = static_cast<double>(zoo.heldout.size());
  detail::Verdicts v;
  v.add("blr_ess", lic.min_ess >= rwmh.min_ess,
        {{"lic_min_ess", lic.min_ess}, {"rwmh_min_ess", rwmh.min_ess}});
  v.add("blr_pll", *lic.pll_value >= *rwmh.pll_value - 0.02 * n_test,
        {{"lic_pll", *lic.pll_value}, {"rwmh_pll", *rwmh.pll_value}, {"n_test", n_test}});
  v.add("blr_rhat", lic.max_rhat <= 1.1, {{"lic_max_rhat", lic.max_rhat}});

  nlohmann::json report{{"experiment", "blr"},
                        {"compile_seconds", compile_seconds},
                        {"param_count", store.parameter_count()},
                        {"lic", lic.to_json()},
                        {"rwmh", rwmh.to_json()},
                        {"dataset_manifest", zoo.manifest},
                        {"criteria", v.criteria}};
  detail::write_json(spec.out_dir + "/experiment_report.json", report);
  detail::write_json(spec.out_dir + "/manifest.json",
                     make_manifest(spec, {{"compile_seed", cfg.seed}, {"infer_seed", cc.seed}},
                                   {"experiment_report.json"}));
  return {v.all_pass ? 0 : 3, report};
}

// Desk-scale n-schools: compiled proposals against the prior proposer.
inline CommandResult experiment_nschools(RunSpec spec) {
  spec.model = "nschools";
  ZooModel zoo = build_zoo(spec);
  write_data_csv(spec.out_dir + "/data.csv", zoo.data_table);
  detail::write_json(spec.out_dir + "/data_manifest.json", zoo.manifest);

  TrainingConfig cfg = spec.training;
  cfg.num_worlds = spec.training.num_worlds == TrainingConfig{}.num_worlds ? 3000 : spec.training.num_worlds;
  if (cfg.epochs == TrainingConfig{}.epochs) cfg.epochs = 40;
  cfg.seed = derive_seed(spec.seed, "compile");
  ArtifactStore store = train(*zoo.model, cfg);

  ChainConfig cc;
  cc.num_samples = spec.samples;
  cc.burn_in = spec.burn_in;
  cc.seed = derive_seed(spec.seed, "infer");

  auto run_side = [&](const Proposer& prop, bool write_outputs) {
    auto chains = run_chains(*zoo.model, zoo.model->observations, prop, cc, spec.chains);
    for (const auto& c : chains)
      if (!c.failure.empty()) throw error("nschools chain failed: " + c.failure);
    MetricsReport m = compute_metrics(chains);
    auto assignments = pooled_assignments(chains);
    if (!assignments.empty()) m.pll_value = pll(assignments, *zoo.model, zoo.heldout);
    if (write_outputs) {
      detail::write_text(spec.out_dir + "/samples.csv", samples_to_csv(chains));
      detail::write_json(spec.out_dir + "/metrics.json", m.to_json());
    }
    return m;
  };
  MetricsReport lic = run_side(LicProposer{&store}, true);
  MetricsReport prior = run_side(PriorProposer{}, false);

  detail::Verdicts v;
  v.add("nschools_rhat", lic.max_rhat <= 1.1, {{"lic_max_rhat", lic.max_rhat}});
  v.add("nschools_ess", lic.min_ess >= prior.min_ess,
        {{"lic_min_ess", lic.min_ess}, {"prior_min_ess", prior.min_ess}});

  nlohmann::json report{{"experiment", "nschools"},
                        {"param_count", store.parameter_count()},
                        {"lic", lic.to_json()},
                        {"prior", prior.to_json()},
                        {"dataset_manifest", zoo.manifest},
                        {"criteria", v.criteria}};
  detail::write_json(spec.out_dir + "/experiment_report.json", report);
  detail::write_json(spec.out_dir + "/manifest.json",
                     make_manifest(spec, {{"compile_seed", cfg.seed}, {"infer_seed", cc.seed}},
                                   {"experiment_report.json"}));
  return {v.all_pass ? 0 : 3, report};
}

inline CommandResult cmd_experiment(const std::string& name, const RunSpec& spec) {
  if (name == "conj-normal") return experiment_conj_normal(spec);
  if (name == "mode-escape") return experiment_mode_escape(spec);
  if (name == "nuisance") return experiment_nuisance(spec);
  if (name == "blr") return experiment_blr(spec);
  if (name == "nschools") return experiment_nschools(spec);
  throw error("unknown experiment '" + name + "'");
}

}  // namespace blanket

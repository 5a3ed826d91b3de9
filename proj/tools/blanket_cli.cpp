// Batch entry point: compile proposal artifacts, run inference, compute
// diagnostics, and reproduce the benchmark experiments end to end.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "blanket/pipeline.hpp"

namespace {

void apply_params(blanket::RunSpec& spec, const std::vector<std::string>& kvs) {
  for (const std::string& kv : kvs) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw blanket::error("--param expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string val = kv.substr(eq + 1);
    try {
      std::size_t used = 0;
      const double x = std::stod(val, &used);
      if (used == val.size()) {
        if (x == static_cast<double>(static_cast<long long>(x)))
          spec.params[key] = static_cast<long long>(x);
        else
          spec.params[key] = x;
        continue;
      }
    } catch (...) {
    }
    spec.params[key] = val;
  }
}

// The config file provides defaults; flags parsed on top of it win.
blanket::RunSpec load_config(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      std::ifstream in(argv[i + 1]);
      if (!in) throw blanket::error(std::string("cannot read config ") + argv[i + 1]);
      nlohmann::json j;
      in >> j;
      return blanket::RunSpec::from_json(j);
    }
  }
  return blanket::RunSpec{};
}

}  // namespace

int main(int argc, char** argv) {
  blanket::RunSpec spec;
  try {
    spec = load_config(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::string config_path;
  std::string experiment_name;
  std::vector<std::string> params;

  CLI::App app{"graph-native probabilistic inference with compiled proposals"};
  app.require_subcommand(1);

  CLI::App* compile = app.add_subcommand("compile", "train proposal artifacts");
  CLI::App* infer = app.add_subcommand("infer", "run MCMC and diagnostics");
  CLI::App* diagnose = app.add_subcommand("diagnose", "compute metrics from a samples CSV");
  CLI::App* experiment = app.add_subcommand("experiment", "run a benchmark end to end");
  for (CLI::App* cmd : {compile, infer, diagnose, experiment}) {
    cmd->add_option("--model", spec.model, "model name");
    cmd->add_option("--param", params, "model parameter key=value (repeatable)");
    cmd->add_option("--proposer", spec.proposer, "proposer: lic, prior or rwmh")
        ->check(CLI::IsMember({"lic", "prior", "rwmh"}));
    cmd->add_option("--seed", spec.seed, "master seed");
    cmd->add_option("--chains", spec.chains, "number of chains");
    cmd->add_option("--samples", spec.samples, "post burn-in samples per chain");
    cmd->add_option("--burn-in", spec.burn_in, "burn-in sweeps");
    cmd->add_option("--thinning", spec.thinning, "record every k-th sweep");
    cmd->add_option("--out", spec.out_dir, "output directory");
    cmd->add_option("--artifact", spec.artifact, "artifact file path");
    cmd->add_option("--config", config_path, "JSON config file (flags win)");
    cmd->add_option("--train-samples", spec.training.num_worlds, "training worlds");
    cmd->add_option("--epochs", spec.training.epochs, "training epochs");
    cmd->add_option("--minibatch", spec.training.minibatch, "minibatch size");
    cmd->add_option("--lr", spec.training.lr, "learning rate");
    cmd->add_option("--components", spec.training.components, "mixture components");
  }
  infer->add_option("--dump-world", spec.dump_world, "write the initial world snapshot");
  diagnose->add_option("--samples-csv", spec.samples_csv, "samples.csv to analyze");
  experiment
      ->add_option("--name", experiment_name,
                   "one of: conj-normal, mode-escape, nuisance, blr, nschools")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    apply_params(spec, params);
    blanket::CommandResult result;
    if (compile->parsed()) {
      spec.command = "compile";
      result = blanket::cmd_compile(spec);
    } else if (infer->parsed()) {
      spec.command = "infer";
      result = blanket::cmd_infer(spec);
    } else if (diagnose->parsed()) {
      spec.command = "diagnose";
      if (spec.samples_csv.empty()) {
        std::cerr << "error: diagnose requires --samples-csv\n";
        return 1;
      }
      result = blanket::cmd_diagnose(spec);
    } else {
      spec.command = "experiment";
      result = blanket::cmd_experiment(experiment_name, spec);
      if (result.report.contains("criteria")) {
        for (const auto& [name, c] : result.report.at("criteria").items()) {
          std::printf("[%s] %s\n", c.at("pass").get<bool>() ? "PASS" : "FAIL", name.c_str());
        }
      }
    }
    std::cout << result.report.dump(2) << "\n";
    return result.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

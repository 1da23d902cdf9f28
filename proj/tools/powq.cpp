// Command-line front end: theory tables, single simulations, attacks,
// Markov-chain estimates, named experiment grids and CSV summaries.

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "powq/experiment.hpp"

namespace {

using powq::exp::ExperimentSpec;
using powq::exp::UsageError;
using json = nlohmann::json;

constexpr const char* kSeedEnv = "POWQ_SEED";

struct Flags {
  std::vector<std::size_t> k;
  std::vector<double> alpha;
  std::vector<double> latency_rel;
  std::vector<double> latency_split;
  std::vector<double> churn;
  std::vector<double> failure;
  std::size_t nodes = 0;
  std::size_t blocks = 0;
  std::size_t runs = 0;
  std::uint64_t seed = 0;
  std::uint64_t trials = 0;
  std::size_t threads = 0;
  double confidence = 0;
  std::string strategy;
  std::string out;
  std::string config;
  bool full_scale = false;
  std::string experiment;
  std::string summarize_path;

  std::map<std::string, CLI::Option*> given;
  bool has(const std::string& name) const {
    auto it = given.find(name);
    return it != given.end() && it->second->count() > 0;
  }
};

void add_grid_flags(CLI::App* app, Flags& f) {
  f.given["k"] = app->add_option("--k", f.k, "Quorum sizes");
  f.given["alpha"] = app->add_option("--alpha", f.alpha, "Attacker compute shares");
  f.given["latency-rel"] =
      app->add_option("--latency-rel", f.latency_rel, "Mean latency relative to the block target");
  f.given["latency-split"] = app->add_option("--latency-split", f.latency_split,
                                             "Block and vote latency means in seconds")
                                 ->expected(2);
  f.given["churn"] = app->add_option("--churn", f.churn, "Churn ratios");
  f.given["failure"] = app->add_option("--failure", f.failure, "Leader failure rates");
}

void add_run_flags(CLI::App* app, Flags& f) {
  f.given["nodes"] = app->add_option("--nodes", f.nodes, "Honest nodes");
  f.given["blocks"] = app->add_option("--blocks", f.blocks, "Committed blocks per run");
  f.given["runs"] = app->add_option("--runs", f.runs, "Runs per grid point");
  f.given["threads"] = app->add_option("--threads", f.threads, "Worker threads (0 = all cores)");
  f.given["full-scale"] = app->add_flag("--full-scale", f.full_scale, "500 blocks x 100 runs");
}

void add_output_flags(CLI::App* app, Flags& f) {
  f.given["seed"] = app->add_option("--seed", f.seed, std::string("Master seed (default $") + kSeedEnv + " or 1)");
  f.given["out"] = app->add_option("--out", f.out, "CSV output path (default stdout)");
  f.given["config"] = app->add_option("--config", f.config, "JSON configuration file")->check(CLI::ExistingFile);
}

template <class T>
std::vector<T> as_list(const json& value) {
  if (value.is_array()) return value.get<std::vector<T>>();
  return {value.get<T>()};
}

/// Config-file values first, then flags given on the command line.
void apply_settings(ExperimentSpec& s, const Flags& f, const json& cfg) {
  using powq::exp::LatencySetting;
  auto set_latencies = [&](const std::vector<double>& rel) {
    s.grid.latencies.clear();
    for (double r : rel) s.grid.latencies.push_back({r, std::nullopt});
  };
  auto set_split = [&](const std::vector<double>& v) {
    if (v.size() != 2) throw UsageError("latency split needs a block and a vote mean");
    s.grid.latencies = {LatencySetting{0, std::pair{v[0], v[1]}}};
  };

  if (cfg.contains("k")) s.grid.ks = as_list<std::size_t>(cfg["k"]);
  if (cfg.contains("alpha")) s.grid.alphas = as_list<double>(cfg["alpha"]);
  if (cfg.contains("latency_rel")) set_latencies(as_list<double>(cfg["latency_rel"]));
  if (cfg.contains("latency_split")) set_split(as_list<double>(cfg["latency_split"]));
  if (cfg.contains("churn")) s.grid.churns = as_list<double>(cfg["churn"]);
  if (cfg.contains("failure")) s.grid.failures = as_list<double>(cfg["failure"]);
  if (cfg.contains("nodes")) s.nodes = cfg["nodes"].get<std::size_t>();
  if (cfg.contains("blocks")) s.blocks = cfg["blocks"].get<std::size_t>();
  if (cfg.contains("runs")) s.runs = cfg["runs"].get<std::size_t>();
  if (cfg.contains("seed")) s.seed = cfg["seed"].get<std::uint64_t>();
  if (cfg.contains("trials")) s.mc_trials = cfg["trials"].get<std::uint64_t>();
  if (cfg.contains("threads")) s.threads = cfg["threads"].get<std::size_t>();
  if (cfg.contains("confidence")) s.confidence = cfg["confidence"].get<double>();
  if (cfg.contains("strategy") && !s.strategies.empty()) {
    s.strategies = {powq::exp::parse_strategy(cfg["strategy"].get<std::string>())};
  }

  if (f.has("k")) s.grid.ks = f.k;
  if (f.has("alpha")) s.grid.alphas = f.alpha;
  if (f.has("latency-rel")) set_latencies(f.latency_rel);
  if (f.has("latency-split")) set_split(f.latency_split);
  if (f.has("churn")) s.grid.churns = f.churn;
  if (f.has("failure")) s.grid.failures = f.failure;
  if (f.has("nodes")) s.nodes = f.nodes;
  if (f.has("blocks")) s.blocks = f.blocks;
  if (f.has("runs")) s.runs = f.runs;
  if (f.has("seed")) s.seed = f.seed;
  if (f.has("trials")) s.mc_trials = f.trials;
  if (f.has("threads")) s.threads = f.threads;
  if (f.has("confidence")) s.confidence = f.confidence;
  if (f.has("strategy") && !s.strategies.empty()) s.strategies = {powq::exp::parse_strategy(f.strategy)};
}

json load_config(const Flags& f) {
  if (f.config.empty()) return json::object();
  std::ifstream in(f.config);
  if (!in) throw std::runtime_error("cannot open '" + f.config + "'");
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(f.config + ": " + e.what());
  }
  if (!cfg.is_object()) throw UsageError(f.config + ": expected a JSON object");
  static const std::vector<std::string> known{
      "k",    "alpha", "latency_rel", "latency_split", "churn",   "failure",    "nodes",
      "blocks", "runs", "seed",       "trials",        "threads", "confidence", "strategy",
      "out",  "full_scale"};
  for (const auto& [key, _] : cfg.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw UsageError(f.config + ": unknown key '" + key + "'");
    }
  }
  return cfg;
}

std::uint64_t default_seed() {
  if (const char* env = std::getenv(kSeedEnv)) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw UsageError(std::string(kSeedEnv) + " is not an unsigned integer");
    }
  }
  return 1;
}

int execute(ExperimentSpec spec, const Flags& f, const json& cfg) {
  powq::exp::validate(spec);
  std::string out = cfg.contains("out") ? cfg["out"].get<std::string>() : std::string{};
  if (f.has("out")) out = f.out;

  const auto result = powq::exp::run_experiment(spec);
  if (out.empty()) {
    powq::exp::write_csv(std::cout, result.rows);
  } else {
    std::ofstream file(out, std::ios::binary);
    if (!file) throw std::runtime_error("cannot write '" + out + "'");
    powq::exp::write_csv(file, result.rows);
  }
  if (result.failures > 0) {
    std::cerr << "error: " << result.failures << " run(s) made no progress\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proof-of-work quorum consensus: theory, simulation and attack experiments"};
  app.require_subcommand(1);
  Flags f;

  auto* theory = app.add_subcommand("theory", "Closed-form tables");
  theory->require_subcommand(1);
  auto* poa = theory->add_subcommand("poa", "Probability of ambiguity at the expected quorum time");
  auto* eclipse = theory->add_subcommand("eclipse", "Eclipse detection window in block times");
  auto* overhead = theory->add_subcommand("overhead", "Block header overhead in bytes");
  for (auto* sub : {poa, eclipse, overhead}) {
    f.given["k"] = sub->add_option("--k", f.k, "Quorum sizes");
    f.given["out"] = sub->add_option("--out", f.out, "CSV output path (default stdout)");
  }
  f.given["confidence"] = eclipse->add_option("--confidence", f.confidence, "Confidence level p");

  auto* simulate = app.add_subcommand("simulate", "Honest network simulation");
  auto* attack = app.add_subcommand("attack", "Network simulation with an attacker");
  auto* mc = app.add_subcommand("mc", "Markov-chain estimate of censor leadership");
  auto* reproduce = app.add_subcommand("reproduce", "Run a named experiment grid");
  for (auto* sub : {simulate, attack, reproduce}) {
    add_grid_flags(sub, f);
    add_run_flags(sub, f);
    add_output_flags(sub, f);
  }
  f.given["strategy"] = attack->add_option("--strategy", f.strategy, "naive or censor");
  f.given["trials"] = reproduce->add_option("--trials", f.trials, "Markov-chain trials per point");
  mc->add_option("--k", f.k, "Quorum sizes");
  mc->add_option("--alpha", f.alpha, "Attacker compute shares");
  f.given["trials"] = mc->add_option("--trials", f.trials, "Markov-chain trials per point");
  add_output_flags(mc, f);
  reproduce->add_option("experiment", f.experiment, "Experiment name")
      ->required()
      ->check(CLI::IsMember(powq::exp::experiment_names()));

  auto* summarize = app.add_subcommand("summarize", "Mean and standard error per grid point");
  summarize->add_option("csv", f.summarize_path, "CSV file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;  // help and version exit cleanly
  }

  // Options registered on several subcommands share a key; look them up on
  // the subcommand that actually ran.
  auto rebind = [&](CLI::App* sub) {
    for (auto& [name, opt] : f.given) {
      if (auto* o = sub->get_option_no_throw("--" + name)) opt = o;
    }
  };

  try {
    if (*summarize) {
      powq::exp::print_summary(std::cout, powq::exp::summarize_file(f.summarize_path));
      return 0;
    }
    if (*theory) {
      CLI::App* sub = *poa ? poa : (*eclipse ? eclipse : overhead);
      rebind(sub);
      const std::string name = *poa ? "table-poa" : (*eclipse ? "table-eclipse" : "table-overhead");
      ExperimentSpec spec = powq::exp::named_experiment(name);
      spec.seed = default_seed();
      apply_settings(spec, f, json::object());
      return execute(spec, f, json::object());
    }

    CLI::App* sub = *simulate ? simulate : (*attack ? attack : (*mc ? mc : reproduce));
    rebind(sub);
    const json cfg = load_config(f);
    const bool full_scale = f.full_scale || cfg.value("full_scale", false);

    ExperimentSpec spec;
    if (*reproduce) {
      spec = powq::exp::named_experiment(f.experiment, full_scale);
    } else {
      spec = powq::exp::named_experiment("custom", full_scale);
      spec.grid.ks = {8};
      spec.runs = full_scale ? spec.runs : 1;
      if (*attack) {
        spec.grid.alphas = {1.0 / 3};
        spec.strategies = {powq::Strategy::censor};
      } else if (*mc) {
        spec.grid.alphas = {1.0 / 3};
        spec.strategies.clear();
        spec.include_mc = true;
      }
    }
    spec.seed = default_seed();
    apply_settings(spec, f, cfg);
    if (*attack && spec.strategies == std::vector{powq::Strategy::none}) {
      throw UsageError("attack needs --strategy naive or censor");
    }
    return execute(spec, f, cfg);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const powq::exp::ParseError& e) {
    std::cerr << "parse error: " << f.summarize_path << ": " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

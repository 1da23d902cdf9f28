#pragma once

// Experiment grids, a small worker pool, and the long-format CSV the CLI
// writes: one row per (grid point, run, metric). Rows come out in grid
// order no matter which worker finished first, so equal seeds give
// byte-identical files.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "powq/mcmodel.hpp"
#include "powq/simnet.hpp"
#include "powq/theory.hpp"

namespace powq::exp {

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

inline constexpr const char* kCsvHeader =
    "experiment,source,k,alpha,latency_rel,churn,failure_rate,run,seed,metric,value";

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{
      "table-poa",   "table-eclipse", "table-overhead",      "fig-latency",    "fig-churn",
      "fig-failure", "fig-failure-latency", "fig-leadership", "fig-votes",      "custom"};
  return names;
}

/// Realistic deployment latency: 10 s for blocks and 100 ms for votes with
/// a ten-minute block target.
inline constexpr double kRealisticBlockLatency = 10.0;
inline constexpr double kRealisticVoteLatency = 0.1;

/// A latency grid value: either a mean relative to the block target, or
/// absolute per-kind means in seconds.
struct LatencySetting {
  double relative = 0;
  std::optional<std::pair<double, double>> split;

  std::string label() const;
  friend bool operator==(const LatencySetting&, const LatencySetting&) = default;
};

struct Grid {
  std::vector<std::size_t> ks;
  std::vector<double> alphas{0.0};
  std::vector<LatencySetting> latencies{LatencySetting{}};
  std::vector<double> churns{0.0};
  std::vector<double> failures{0.0};
};

struct ExperimentSpec {
  std::string name = "custom";
  Grid grid;
  std::size_t runs = 10;
  std::uint64_t seed = 1;
  std::size_t nodes = 1000;
  std::size_t blocks = 100;
  std::vector<Strategy> strategies{Strategy::none};
  bool include_mc = false;
  std::uint64_t mc_trials = 100'000;
  double confidence = 0.001;  // eclipse detection
  std::size_t threads = 0;    // 0 selects hardware concurrency
  std::uint64_t event_ceiling = 0;  // 0 keeps the simulator default
};

struct Row {
  std::string experiment;
  std::string source;
  std::size_t k = 0;
  double alpha = 0;
  std::string latency_rel = "0";
  double churn = 0;
  double failure_rate = 0;
  std::size_t run = 0;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0;
};

// ---- formatting -----------------------------------------------------------

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::string LatencySetting::label() const {
  if (split) return "split:" + format_number(split->first) + ":" + format_number(split->second);
  return format_number(relative);
}

inline std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::none: return "none";
    case Strategy::naive: return "naive";
    case Strategy::censor: return "censor";
  }
  return "none";
}

inline Strategy parse_strategy(const std::string& text) {
  if (text == "none") return Strategy::none;
  if (text == "naive") return Strategy::naive;
  if (text == "censor") return Strategy::censor;
  throw UsageError("unknown strategy '" + text + "' (expected none, naive or censor)");
}

inline void write_row(std::ostream& out, const Row& r) {
  out << r.experiment << ',' << r.source << ',' << r.k << ',' << format_number(r.alpha) << ','
      << r.latency_rel << ',' << format_number(r.churn) << ',' << format_number(r.failure_rate)
      << ',' << r.run << ',' << r.seed << ',' << r.metric << ',' << format_number(r.value) << '\n';
}

inline void write_csv(std::ostream& out, const std::vector<Row>& rows) {
  out << kCsvHeader << '\n';
  for (const auto& r : rows) write_row(out, r);
}

// ---- named grids ----------------------------------------------------------

inline std::vector<std::size_t> powers_of_two(std::size_t from, std::size_t to) {
  std::vector<std::size_t> out;
  for (std::size_t k = from; k <= to; k *= 2) out.push_back(k);
  return out;
}

/// Applies the desk-scale or full-scale defaults of a named experiment.
inline ExperimentSpec named_experiment(const std::string& name, bool full_scale = false) {
  ExperimentSpec s;
  s.name = name;
  if (full_scale) {
    s.blocks = 500;
    s.runs = 100;
    s.mc_trials = 1'000'000;
  }
  const std::vector<std::size_t> sim_ks{2, 8, 32, 128};
  const std::vector<double> rates{0, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5};
  const LatencySetting realistic{0, std::pair{kRealisticBlockLatency, kRealisticVoteLatency}};
  if (name == "table-poa" || name == "table-overhead") {
    s.grid.ks = {1, 2, 16, 64, 256};
    s.runs = 1;
  } else if (name == "table-eclipse") {
    s.grid.ks = powers_of_two(1, 256);
    s.runs = 1;
  } else if (name == "fig-latency") {
    s.grid.ks = sim_ks;
    s.grid.latencies.clear();
    for (int i = 0; i <= 6; ++i) s.grid.latencies.push_back({std::pow(10.0, -4.0 + 0.5 * i), std::nullopt});
    s.grid.latencies.push_back(realistic);
  } else if (name == "fig-churn") {
    s.grid.ks = sim_ks;
    s.grid.churns = rates;
  } else if (name == "fig-failure") {
    s.grid.ks = sim_ks;
    s.grid.failures = rates;
  } else if (name == "fig-failure-latency") {
    s.grid.ks = sim_ks;
    s.grid.failures = rates;
    s.grid.latencies = {realistic};
  } else if (name == "fig-leadership" || name == "fig-votes") {
    s.grid.ks = powers_of_two(1, 256);
    s.grid.alphas = {1.0 / 50, 1.0 / 10, 1.0 / 5, 1.0 / 3, 1.0 / 2};
    s.strategies = {Strategy::naive, Strategy::censor};
    s.include_mc = true;
  } else if (name == "custom") {
    // grids come from the caller
  } else {
    throw UsageError("unknown experiment '" + name + "'");
  }
  return s;
}

inline bool is_theory(const std::string& name) {
  return name == "table-poa" || name == "table-eclipse" || name == "table-overhead";
}

inline void validate(const ExperimentSpec& s) {
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), s.name) == names.end()) {
    throw UsageError("unknown experiment '" + s.name + "'");
  }
  const Grid& g = s.grid;
  if (g.ks.empty() || g.alphas.empty() || g.latencies.empty() || g.churns.empty() ||
      g.failures.empty()) {
    throw UsageError("every grid dimension needs at least one value");
  }
  for (auto k : g.ks) {
    if (k < 1) throw UsageError("k must be at least 1");
  }
  if (is_theory(s.name)) {
    if (s.name == "table-eclipse" && !(s.confidence > 0 && s.confidence < 1)) {
      throw UsageError("confidence must be in (0, 1)");
    }
    return;
  }
  if (s.strategies.empty() && !s.include_mc) throw UsageError("nothing to run");
  if (s.runs < 1) throw UsageError("runs must be at least 1");
  if (s.nodes < 1) throw UsageError("nodes must be at least 1");
  if (s.blocks < 2) throw UsageError("blocks must be at least 2");
  if (s.include_mc && s.mc_trials < 1) throw UsageError("trials must be at least 1");
  for (double a : g.alphas) {
    if (!(a >= 0 && a < 1)) throw UsageError("alpha must be in [0, 1)");
  }
  for (const auto& l : g.latencies) {
    if (!(l.relative >= 0) || (l.split && (!(l.split->first >= 0) || !(l.split->second >= 0)))) {
      throw UsageError("latency must be nonnegative");
    }
  }
  for (double c : g.churns) {
    if (!(c >= 0 && c < 1)) throw UsageError("churn must be in [0, 1)");
  }
  for (double f : g.failures) {
    if (!(f >= 0 && f <= 1)) throw UsageError("failure rate must be in [0, 1]");
  }
  for (auto st : s.strategies) {
    if (st != Strategy::none) continue;
    for (double a : g.alphas) {
      if (a != 0) throw UsageError("alpha > 0 needs an attacker strategy");
    }
  }
}

// ---- execution ------------------------------------------------------------

/// Runs `count` independent tasks on a pool of worker threads.
template <class Task>
void parallel_for(std::size_t count, std::size_t threads, Task&& task) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

/// Seed of run `run`. Independent of the grid point, so every point sees
/// the same random streams (common random numbers across the grid).
inline std::uint64_t run_seed(std::uint64_t master, std::size_t run) {
  return derive_seed(master, "run", run);
}

inline sim::SimConfig sim_config(const ExperimentSpec& s, std::size_t k, double alpha,
                                 const LatencySetting& latency, double churn, double failure,
                                 Strategy strategy, std::uint64_t seed) {
  sim::SimConfig c;
  c.n_nodes = s.nodes;
  c.k = k;
  c.alpha = alpha;
  c.strategy = strategy;
  c.churn_ratio = churn;
  c.leader_failure_rate = failure;
  c.n_blocks = s.blocks;
  c.seed = seed;
  c.event_ceiling = s.event_ceiling;
  if (latency.split) {
    c.latency = sim::LatencyModel::split(latency.split->first, latency.split->second);
  } else if (latency.relative > 0) {
    c.latency = sim::LatencyModel::exponential(latency.relative * c.block_target());
  }
  return c;
}

struct RunResult {
  std::vector<Row> rows;
  bool failed = false;
};

struct ExperimentResult {
  std::vector<Row> rows;
  std::size_t failures = 0;
};

inline std::vector<Row> theory_rows(const ExperimentSpec& s) {
  std::vector<Row> rows;
  for (auto k : s.grid.ks) {
    Row r;
    r.experiment = s.name;
    r.source = "theory";
    r.k = k;
    if (s.name == "table-poa") {
      r.metric = "poa";
      r.value = theory::poa_at_expected_time(k).value();
      rows.push_back(r);
      r.metric = "negligibility_bound";
      r.value = theory::negligibility_bound(k);
    } else if (s.name == "table-eclipse") {
      r.metric = "eclipse_time";
      r.value = theory::eclipse_detection_time(k, s.confidence);
    } else {
      r.metric = "header_bytes";
      r.value = static_cast<double>(theory::header_overhead_bytes(k));
    }
    rows.push_back(r);
  }
  return rows;
}

inline ExperimentResult run_experiment(const ExperimentSpec& s) {
  validate(s);
  if (is_theory(s.name)) return {theory_rows(s), 0};

  struct Task {
    std::size_t k;
    double alpha;
    LatencySetting latency;
    double churn;
    double failure;
    std::optional<Strategy> strategy;  // empty for a Markov-chain estimate
    std::size_t run;
  };
  std::vector<Task> tasks;
  const Grid& g = s.grid;
  for (auto k : g.ks)
    for (double a : g.alphas)
      for (const auto& l : g.latencies)
        for (double c : g.churns)
          for (double f : g.failures) {
            for (auto st : s.strategies) {
              for (std::size_t run = 0; run < s.runs; ++run) tasks.push_back({k, a, l, c, f, st, run});
            }
            if (s.include_mc) tasks.push_back({k, a, l, c, f, std::nullopt, 0});
          }

  std::vector<RunResult> results(tasks.size());
  parallel_for(tasks.size(), s.threads, [&](std::size_t i) {
    const Task& t = tasks[i];
    Row base;
    base.experiment = s.name;
    base.k = t.k;
    base.alpha = t.alpha;
    base.latency_rel = t.latency.label();
    base.churn = t.churn;
    base.failure_rate = t.failure;
    base.run = t.run;
    auto emit = [&](const std::string& metric, double value) {
      Row r = base;
      r.metric = metric;
      r.value = value;
      results[i].rows.push_back(std::move(r));
    };
    if (!t.strategy) {
      base.source = "mc";
      base.seed = derive_seed(s.seed, "mc-point", i);
      const auto e = mc::mc_estimate(t.alpha, t.k, s.mc_trials, base.seed);
      emit("leadership", e.leadership);
      emit("leadership_stderr", e.leadership_stderr);
      emit("vote_share", e.vote_share);
      emit("vote_share_stderr", e.vote_share_stderr);
      return;
    }
    base.source = *t.strategy == Strategy::none ? "sim" : "sim-" + strategy_name(*t.strategy);
    base.seed = run_seed(s.seed, t.run);
    try {
      const auto m = sim::run_simulation(
          sim_config(s, t.k, t.alpha, t.latency, t.churn, t.failure, *t.strategy, base.seed));
      emit("commit_interval", m.commit_interval);
      emit("committed_blocks", static_cast<double>(m.committed_blocks));
      emit("fork_alarms", static_cast<double>(m.fork_alarms));
      emit("inconsistent_nodes", static_cast<double>(m.inconsistent_nodes));
      if (*t.strategy != Strategy::none) {
        emit("attacker_block_share", m.attacker_block_share);
        emit("attacker_vote_share", m.attacker_vote_share);
      }
    } catch (const sim::NoProgressError&) {
      emit("error", std::nan(""));
      results[i].failed = true;
    }
  });

  ExperimentResult out;
  for (auto& r : results) {
    out.failures += r.failed ? 1 : 0;
    for (auto& row : r.rows) out.rows.push_back(std::move(row));
  }
  return out;
}

// ---- summaries ------------------------------------------------------------

struct SummaryLine {
  std::string key;  // experiment,source,k,alpha,latency_rel,churn,failure_rate,metric
  std::size_t count = 0;
  double mean = 0;
  double stderr_ = 0;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_value(const std::string& text, std::size_t line) {
  if (text == "nan") return std::nan("");
  if (text == "inf") return INFINITY;
  if (text == "-inf") return -INFINITY;
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ParseError(line, "value '" + text + "' is not a number");
  }
}

/// Mean and standard error per grid point and metric, in first-seen order.
inline std::vector<SummaryLine> summarize(std::istream& in) {
  std::string line;
  std::size_t number = 0;
  if (!std::getline(in, line)) throw ParseError(1, "missing header");
  ++number;
  if (!line.empty() && line.back() == '\r') throw ParseError(number, "CRLF line ending");
  if (line != kCsvHeader) throw ParseError(number, "unexpected header '" + line + "'");

  struct Acc {
    std::size_t n = 0;
    double sum = 0, sq = 0;
  };
  std::vector<std::string> order;
  std::map<std::string, Acc> acc;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 11) {
      throw ParseError(number, "expected 11 fields, found " + std::to_string(f.size()));
    }
    parse_value(f[2], number);
    parse_value(f[7], number);
    const double v = parse_value(f[10], number);
    const std::string key =
        f[0] + ',' + f[1] + ',' + f[2] + ',' + f[3] + ',' + f[4] + ',' + f[5] + ',' + f[6] + ',' + f[9];
    auto [it, inserted] = acc.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.n += 1;
    it->second.sum += v;
    it->second.sq += v * v;
  }
  std::vector<SummaryLine> out;
  for (const auto& key : order) {
    const Acc& a = acc[key];
    SummaryLine s;
    s.key = key;
    s.count = a.n;
    s.mean = a.sum / static_cast<double>(a.n);
    if (a.n > 1) {
      const double var = std::max(0.0, (a.sq - a.sum * s.mean) / static_cast<double>(a.n - 1));
      s.stderr_ = std::sqrt(var / static_cast<double>(a.n));
    }
    out.push_back(s);
  }
  return out;
}

inline std::vector<SummaryLine> summarize_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return summarize(in);
}

inline void print_summary(std::ostream& out, const std::vector<SummaryLine>& lines) {
  out << "experiment,source,k,alpha,latency_rel,churn,failure_rate,metric,n,mean,stderr\n";
  for (const auto& l : lines) {
    out << l.key << ',' << l.count << ',' << format_number(l.mean) << ','
        << format_number(l.stderr_) << '\n';
  }
}

}  // namespace powq::exp

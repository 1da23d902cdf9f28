#pragma once

// Discrete-event network simulation. A single priority queue orders ATV,
// broadcast and delivery events by (time, sequence). ATVs form a Poisson
// process and are assigned to the attacker with probability alpha, else to
// a uniformly chosen honest node. Broadcasts fan out to every other node
// with injected latency, churn muting and leader failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "powq/adversary.hpp"
#include "powq/app.hpp"
#include "powq/crypto.hpp"
#include "powq/protocol.hpp"
#include "powq/rng.hpp"

namespace powq::sim {

using SimNode = Node<FastCrypto, CounterApp>;
using SimCensor = CensorNode<FastCrypto, CounterApp>;
using SimMessage = Message<FastCrypto, CounterApp>;
using SimVote = Vote<FastCrypto>;
using SimBlock = BlockHandle<FastCrypto, CounterApp>;

/// Default time unit is seconds with a ten-minute expected block time.
inline constexpr double kDefaultBlockTarget = 600.0;

enum class MessageKind { vote, block };

inline MessageKind kind_of(const SimMessage& m) {
  return std::holds_alternative<SimVote>(m) ? MessageKind::vote : MessageKind::block;
}

struct LatencyModel {
  enum class Kind { none, exponential, split };
  Kind kind = Kind::none;
  double mean = 0;        // exponential
  double block_mean = 0;  // split
  double vote_mean = 0;   // split

  static LatencyModel none() { return {}; }
  static LatencyModel exponential(double mean) { return {Kind::exponential, mean, 0, 0}; }
  static LatencyModel split(double block_mean, double vote_mean) {
    return {Kind::split, 0, block_mean, vote_mean};
  }
};

inline double sample_latency(const LatencyModel& model, MessageKind kind, Rng& rng) {
  switch (model.kind) {
    case LatencyModel::Kind::none:
      return 0.0;
    case LatencyModel::Kind::exponential:
      return model.mean > 0 ? powq::exponential(rng, 1.0 / model.mean) : 0.0;
    case LatencyModel::Kind::split: {
      const double mean = kind == MessageKind::block ? model.block_mean : model.vote_mean;
      return mean > 0 ? powq::exponential(rng, 1.0 / mean) : 0.0;
    }
  }
  return 0.0;
}

/// Proposals are lost as a whole with probability `rate`; votes never are.
inline bool apply_leader_failure(MessageKind kind, double rate, Rng& rng) {
  return kind == MessageKind::block && rate > 0 && bernoulli(rng, rate);
}

/// Back-to-back churn episodes. Each episode mutes a fresh uniform subset
/// of floor(ratio * n) honest nodes. Episodes are drawn from their own
/// derived streams, so the schedule can be queried in any order.
class ChurnSchedule {
 public:
  ChurnSchedule(std::size_t n_honest, double ratio, double episode_length, std::uint64_t seed)
      : n_(n_honest), ratio_(ratio), length_(episode_length), seed_(seed), muted_(n_honest, false) {
    if (!(ratio >= 0.0 && ratio < 1.0)) throw std::domain_error("churn ratio must be in [0, 1)");
    if (!(episode_length > 0.0)) throw std::domain_error("churn episode length must be positive");
  }

  std::size_t muted_per_episode() const {
    return static_cast<std::size_t>(std::floor(ratio_ * static_cast<double>(n_)));
  }
  double episode_length() const { return length_; }
  std::uint64_t episode_of(double time) const { return static_cast<std::uint64_t>(time / length_); }

  bool muted(std::size_t node, double time) {
    if (muted_per_episode() == 0 || node >= n_) return false;
    select(episode_of(time));
    return muted_[node];
  }

  /// Muted nodes of one episode, in ascending order.
  std::vector<std::size_t> muted_nodes(std::uint64_t episode) {
    select(episode);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n_; ++i) {
      if (muted_[i]) out.push_back(i);
    }
    return out;
  }

 private:
  void select(std::uint64_t episode) {
    if (current_ == episode) return;
    current_ = episode;
    std::fill(muted_.begin(), muted_.end(), false);
    const std::size_t m = muted_per_episode();
    if (m == 0) return;
    Rng rng = make_stream(seed_, "churn", episode);
    std::vector<std::size_t> perm(n_);
    for (std::size_t i = 0; i < n_; ++i) perm[i] = i;
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, n_ - i));
      std::swap(perm[i], perm[j]);
      muted_[perm[i]] = true;
    }
  }

  std::size_t n_;
  double ratio_;
  double length_;
  std::uint64_t seed_;
  std::optional<std::uint64_t> current_;
  std::vector<bool> muted_;
};

struct SimConfig {
  std::size_t n_nodes = 1000;  // honest nodes; the attacker comes on top
  std::size_t k = 8;
  double lambda = 0;           // 0 selects k / kDefaultBlockTarget
  LatencyModel latency;
  double churn_ratio = 0;
  double churn_episode_blocks = 10;
  double leader_failure_rate = 0;
  double alpha = 0;
  Strategy strategy = Strategy::none;
  std::size_t n_blocks = 100;
  std::uint64_t seed = 1;
  std::uint64_t event_ceiling = 0;  // 0 selects 10^4 * k * n_blocks

  double rate() const { return lambda > 0 ? lambda : static_cast<double>(k) / kDefaultBlockTarget; }
  double block_target() const { return static_cast<double>(k) / rate(); }
  std::uint64_t ceiling() const {
    return event_ceiling > 0 ? event_ceiling : 10'000ULL * k * n_blocks;
  }

  void validate() const {
    if (n_nodes < 1) throw std::invalid_argument("n_nodes must be positive");
    if (k < 1) throw std::invalid_argument("k must be positive");
    if (n_blocks < 2) throw std::invalid_argument("n_blocks must be at least 2");
    if (!(lambda >= 0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be positive");
    if (!(churn_ratio >= 0 && churn_ratio < 1)) throw std::invalid_argument("churn ratio must be in [0, 1)");
    if (!(churn_episode_blocks > 0)) throw std::invalid_argument("churn episode length must be positive");
    if (!(leader_failure_rate >= 0 && leader_failure_rate <= 1)) {
      throw std::invalid_argument("leader failure rate must be in [0, 1]");
    }
    if (!(alpha >= 0 && alpha < 1)) throw std::invalid_argument("alpha must be in [0, 1)");
    if (latency.mean < 0 || latency.block_mean < 0 || latency.vote_mean < 0) {
      throw std::invalid_argument("latency means must be nonnegative");
    }
  }
};

class NoProgressError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raw observations of one run; `collect_metrics` reduces them.
struct RunTrace {
  std::size_t k = 0;
  double block_target = 0;
  std::vector<double> commit_times;  // time at which height i+1 became committed at node 0
  std::size_t attacker_blocks = 0;
  std::size_t attacker_votes = 0;
  std::size_t counted_blocks = 0;
  std::size_t fork_alarms = 0;
  std::size_t inconsistent_nodes = 0;
  std::size_t duplicate_quorum_entries = 0;
  std::uint64_t events = 0;
  std::uint64_t atvs = 0;
  std::uint64_t attacker_atvs = 0;
  std::uint64_t attacker_vote_messages = 0;
  std::uint64_t dropped_proposals = 0;
  std::uint64_t block_broadcasts = 0;
  double sim_time = 0;
};

struct Metrics {
  std::size_t committed_blocks = 0;
  double commit_interval = 0;  // mean inter-commit time over block_target
  double attacker_block_share = 0;
  double attacker_vote_share = 0;
  std::size_t fork_alarms = 0;
  std::size_t inconsistent_nodes = 0;
  std::size_t duplicate_quorum_entries = 0;
  std::uint64_t events = 0;
  std::uint64_t atvs = 0;
  std::uint64_t attacker_atvs = 0;
  std::uint64_t attacker_vote_messages = 0;
  std::uint64_t dropped_proposals = 0;
  std::uint64_t block_broadcasts = 0;
  double sim_time = 0;
  double wall_seconds = 0;  // not part of the deterministic result

  bool same_outcome(const Metrics& o) const {
    return committed_blocks == o.committed_blocks && commit_interval == o.commit_interval &&
           attacker_block_share == o.attacker_block_share &&
           attacker_vote_share == o.attacker_vote_share && fork_alarms == o.fork_alarms &&
           inconsistent_nodes == o.inconsistent_nodes &&
           duplicate_quorum_entries == o.duplicate_quorum_entries && events == o.events &&
           atvs == o.atvs && attacker_atvs == o.attacker_atvs &&
           attacker_vote_messages == o.attacker_vote_messages &&
           dropped_proposals == o.dropped_proposals && block_broadcasts == o.block_broadcasts &&
           sim_time == o.sim_time;
  }
};

inline Metrics collect_metrics(const RunTrace& trace) {
  if (trace.commit_times.empty()) throw NoProgressError("no block was committed");
  Metrics m;
  m.committed_blocks = trace.commit_times.size();
  if (trace.commit_times.size() >= 2) {
    const double span = trace.commit_times.back() - trace.commit_times.front();
    m.commit_interval =
        span / static_cast<double>(trace.commit_times.size() - 1) / trace.block_target;
  } else {
    m.commit_interval = std::numeric_limits<double>::quiet_NaN();
  }
  const std::size_t blocks = trace.counted_blocks > 0 ? trace.counted_blocks : m.committed_blocks;
  m.attacker_block_share = static_cast<double>(trace.attacker_blocks) / static_cast<double>(blocks);
  m.attacker_vote_share = static_cast<double>(trace.attacker_votes) /
                          (static_cast<double>(trace.k) * static_cast<double>(blocks));
  m.fork_alarms = trace.fork_alarms;
  m.inconsistent_nodes = trace.inconsistent_nodes;
  m.duplicate_quorum_entries = trace.duplicate_quorum_entries;
  m.events = trace.events;
  m.atvs = trace.atvs;
  m.attacker_atvs = trace.attacker_atvs;
  m.attacker_vote_messages = trace.attacker_vote_messages;
  m.dropped_proposals = trace.dropped_proposals;
  m.block_broadcasts = trace.block_broadcasts;
  m.sim_time = trace.sim_time;
  return m;
}

class Simulation {
 public:
  explicit Simulation(SimConfig config)
      : config_(checked(std::move(config))),
        churn_(config_.n_nodes, config_.churn_ratio, config_.churn_episode_blocks * config_.block_target(),
               derive_seed(config_.seed, "churn-schedule")),
        atv_rng_(make_stream(config_.seed, "atv")),
        assign_rng_(make_stream(config_.seed, "assign")),
        nonce_rng_(make_stream(config_.seed, "nonce")),
        latency_rng_(make_stream(config_.seed, "latency")),
        failure_rng_(make_stream(config_.seed, "failure")) {
    ProtocolConfig<FastCrypto, CounterApp> protocol;
    protocol.k = config_.k;
    honest_.reserve(config_.n_nodes);
    for (std::size_t i = 0; i < config_.n_nodes; ++i) {
      Rng keys = make_stream(config_.seed, "keys", i);
      honest_.emplace_back(protocol, keys);
    }
    Rng keys = make_stream(config_.seed, "keys", config_.n_nodes);
    if (config_.strategy == Strategy::naive) {
      attacker_.emplace<SimNode>(protocol, keys);
    } else if (config_.strategy == Strategy::censor) {
      attacker_.emplace<SimCensor>(protocol, FastCrypto::generate_keypair(keys));
    }
    participants_ = config_.n_nodes + (has_attacker() ? 1 : 0);
    backlog_.resize(config_.n_nodes);
  }

  Metrics run() {
    const auto started = std::chrono::steady_clock::now();
    schedule({powq::exponential(atv_rng_, config_.rate()), next_seq_++, 0, EventKind::atv, 0});
    if (churn_.muted_per_episode() > 0) {
      schedule({churn_.episode_length(), next_seq_++, 0, EventKind::churn, 1});
    }
    while (trace_.commit_times.size() < config_.n_blocks) {
      if (queue_.empty()) throw NoProgressError("event queue ran dry");
      if (trace_.events >= config_.ceiling()) {
        throw NoProgressError("event ceiling of " + std::to_string(config_.ceiling()) +
                              " reached after " + std::to_string(trace_.commit_times.size()) +
                              " commits");
      }
      const Event ev = queue_.top();
      queue_.pop();
      now_ = ev.time;
      switch (ev.kind) {
        case EventKind::atv: handle_atv(); break;
        case EventKind::broadcast: handle_broadcast(ev); break;
        case EventKind::deliver: handle_deliver(ev); break;
        case EventKind::churn: handle_churn(ev); break;
      }
    }
    finish_trace();
    Metrics m = collect_metrics(trace_);
    m.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return m;
  }

  const SimNode& honest(std::size_t i) const { return honest_.at(i); }
  std::size_t honest_count() const { return honest_.size(); }
  const SimConfig& config() const { return config_; }
  const RunTrace& trace() const { return trace_; }

 private:
  enum class EventKind : std::uint8_t { atv, broadcast, deliver, churn };

  struct Event {
    double time;
    std::uint64_t seq;
    std::uint32_t sub;
    EventKind kind;
    std::uint32_t slot;
  };

  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.time != b.time) return a.time > b.time;
      if (a.seq != b.seq) return a.seq > b.seq;
      return a.sub > b.sub;
    }
  };

  struct Pending {
    SimMessage message;
    std::uint32_t sender = 0;
    std::uint64_t seq = 0;
    std::vector<std::pair<double, std::uint32_t>> schedule;
  };

  static SimConfig checked(SimConfig c) {
    c.validate();
    return c;
  }

  bool has_attacker() const { return !std::holds_alternative<std::monostate>(attacker_); }
  std::size_t attacker_index() const { return config_.n_nodes; }

  void schedule(const Event& e) { queue_.push(e); }

  template <class F>
  void with_participant(std::size_t i, F&& f) {
    if (i < honest_.size()) {
      f(honest_[i]);
    } else {
      std::visit(
          [&](auto& a) {
            if constexpr (!std::is_same_v<std::decay_t<decltype(a)>, std::monostate>) f(a);
          },
          attacker_);
    }
  }

  void after_handler(std::size_t i) {
    with_participant(i, [&](auto& p) {
      for (auto& m : p.take_outbox()) {
        if (i == attacker_index() && kind_of(m) == MessageKind::vote) ++trace_.attacker_vote_messages;
        std::uint32_t slot = allocate_slot();
        pending_[slot].message = std::move(m);
        pending_[slot].sender = static_cast<std::uint32_t>(i);
        schedule({now_, next_seq_++, 0, EventKind::broadcast, slot});
      }
    });
    if (i == 0) record_commits();
  }

  void record_commits() {
    const std::uint64_t committed = honest_[0].committed_height();
    while (trace_.commit_times.size() < committed && trace_.commit_times.size() < config_.n_blocks) {
      trace_.commit_times.push_back(now_);
    }
  }

  void handle_atv() {
    ++trace_.events;
    ++trace_.atvs;
    std::size_t target;
    if (has_attacker() && bernoulli(assign_rng_, config_.alpha)) {
      target = attacker_index();
      ++trace_.attacker_atvs;
    } else {
      target = static_cast<std::size_t>(uniform_index(assign_rng_, config_.n_nodes));
    }
    const Nonce nonce = nonce_rng_();
    with_participant(target, [&](auto& p) { p.on_atv(nonce); });
    after_handler(target);
    schedule({now_ + powq::exponential(atv_rng_, config_.rate()), next_seq_++, 0, EventKind::atv, 0});
  }

  void handle_broadcast(const Event& ev) {
    Pending& p = pending_[ev.slot];
    const MessageKind kind = kind_of(p.message);
    if (kind == MessageKind::block) ++trace_.block_broadcasts;
    trace_.events += participants_;  // the broadcast plus one delivery per other node
    const bool muted_sender = p.sender < config_.n_nodes && churn_.muted(p.sender, now_);
    if (muted_sender) {
      release_slot(ev.slot);
      return;
    }
    if (apply_leader_failure(kind, config_.leader_failure_rate, failure_rng_)) {
      ++trace_.dropped_proposals;
      release_slot(ev.slot);
      return;
    }
    p.seq = next_seq_++;
    p.schedule.clear();
    p.schedule.reserve(participants_ - 1);
    for (std::uint32_t r = 0; r < participants_; ++r) {
      if (r == p.sender) continue;
      p.schedule.emplace_back(now_ + sample_latency(config_.latency, kind, latency_rng_), r);
    }
    if (config_.latency.kind != LatencyModel::Kind::none) {
      std::sort(p.schedule.begin(), p.schedule.end());
    }
    if (p.schedule.empty()) {
      release_slot(ev.slot);
      return;
    }
    schedule({p.schedule.front().first, p.seq, 0, EventKind::deliver, ev.slot});
  }

  void handle_deliver(const Event& ev) {
    std::uint32_t index = ev.sub;
    for (;;) {
      Pending& p = pending_[ev.slot];
      const std::uint32_t recipient = p.schedule[index].second;
      if (recipient < config_.n_nodes && churn_.muted(recipient, now_)) {
        backlog_[recipient].push_back(p.message);
      } else {
        deliver(recipient, p.message);
      }
      if (trace_.commit_times.size() >= config_.n_blocks) return;
      Pending& q = pending_[ev.slot];  // slots may have been reallocated
      ++index;
      if (index >= q.schedule.size()) {
        release_slot(ev.slot);
        return;
      }
      const Event next{q.schedule[index].first, q.seq, index, EventKind::deliver, ev.slot};
      if (next.time == now_ && (queue_.empty() || Later{}(queue_.top(), next))) continue;
      schedule(next);
      return;
    }
  }

  void deliver(std::size_t recipient, const SimMessage& message) {
    with_participant(recipient, [&](auto& p) { p.on_message(message); });
    after_handler(recipient);
  }

  void handle_churn(const Event& ev) {
    const std::uint64_t episode = ev.slot;
    for (std::size_t i = 0; i < config_.n_nodes; ++i) {
      if (backlog_[i].empty() || churn_.muted(i, now_)) continue;
      std::vector<SimMessage> pending = std::move(backlog_[i]);
      backlog_[i].clear();
      for (const auto& m : pending) deliver(i, m);
    }
    schedule({static_cast<double>(episode + 1) * churn_.episode_length(), next_seq_++, 0,
              EventKind::churn, static_cast<std::uint32_t>(episode + 1)});
  }

  std::uint32_t allocate_slot() {
    if (!free_slots_.empty()) {
      const std::uint32_t s = free_slots_.back();
      free_slots_.pop_back();
      return s;
    }
    pending_.emplace_back();
    return static_cast<std::uint32_t>(pending_.size() - 1);
  }

  void release_slot(std::uint32_t slot) {
    pending_[slot].message = SimMessage{};
    pending_[slot].schedule.clear();
    free_slots_.push_back(slot);
  }

  const FastCrypto::PublicKey* attacker_key() const {
    if (const auto* n = std::get_if<SimNode>(&attacker_)) return &n->public_key();
    if (const auto* c = std::get_if<SimCensor>(&attacker_)) return &c->public_key();
    return nullptr;
  }

  void finish_trace() {
    trace_.k = config_.k;
    trace_.block_target = config_.block_target();
    trace_.sim_time = now_;

    const SimNode& reference = honest_[0];
    const auto* top = &reference.committed_entry();
    std::vector<const SimNode::Entry*> chain(top->height + 1, nullptr);
    for (const auto* e = top; e != nullptr; e = e->parent) chain[e->height] = e;

    const auto* key = attacker_key();
    trace_.counted_blocks = std::min<std::size_t>(config_.n_blocks, top->height);
    for (std::size_t h = 1; h <= trace_.counted_blocks; ++h) {
      const auto& quorum = chain[h]->block->block().quorum;
      if (key != nullptr) {
        if (quorum.front().voter == *key) ++trace_.attacker_blocks;
        for (const auto& q : quorum) trace_.attacker_votes += (q.voter == *key) ? 1 : 0;
      }
      std::vector<std::pair<FastCrypto::PublicKey, Nonce>> seen;
      for (const auto& q : quorum) seen.emplace_back(q.voter, q.solution);
      std::sort(seen.begin(), seen.end());
      trace_.duplicate_quorum_entries += static_cast<std::size_t>(
          seen.end() - std::unique(seen.begin(), seen.end()));
    }

    for (const auto& node : honest_) {
      trace_.fork_alarms += node.fork_alarms();
      const auto* c = &node.committed_entry();
      const std::uint64_t h = std::min(c->height, top->height);
      const auto* at = SimNode::ancestor(*c, c->height - h);
      if (at->id != chain[h]->id) ++trace_.inconsistent_nodes;
    }
    if (const auto* n = std::get_if<SimNode>(&attacker_)) trace_.fork_alarms += n->fork_alarms();
    if (const auto* c = std::get_if<SimCensor>(&attacker_)) trace_.fork_alarms += c->view().fork_alarms();
  }

  SimConfig config_;
  ChurnSchedule churn_;
  Rng atv_rng_, assign_rng_, nonce_rng_, latency_rng_, failure_rng_;
  std::vector<SimNode> honest_;
  std::variant<std::monostate, SimNode, SimCensor> attacker_;
  std::size_t participants_ = 0;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::vector<Pending> pending_;
  std::vector<std::uint32_t> free_slots_;
  std::vector<std::vector<SimMessage>> backlog_;
  std::uint64_t next_seq_ = 0;
  double now_ = 0;
  RunTrace trace_;
};

inline Metrics run_simulation(const SimConfig& config) { return Simulation(config).run(); }

}  // namespace powq::sim

#pragma once

// Per-node consensus state machine over proof-of-work quorums: a hash-linked
// block tree with vote sets, leader election by smallest vote, a three-block
// commit rule and quorum-progress block preference.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "powq/app.hpp"
#include "powq/bytes.hpp"
#include "powq/crypto.hpp"
#include "powq/rng.hpp"

namespace powq {

template <CryptoSuite Crypto>
struct Vote {
  typename Crypto::Digest ref;
  typename Crypto::PublicKey voter;
  Nonce solution = 0;

  friend bool operator==(const Vote&, const Vote&) = default;
};

/// One quorum certificate entry; the reference is implicit (the block's parent).
template <CryptoSuite Crypto>
struct QuorumEntry {
  typename Crypto::PublicKey voter;
  Nonce solution = 0;

  friend bool operator==(const QuorumEntry&, const QuorumEntry&) = default;
};

/// A vote together with its puzzle hash. Ordered by (hash, voter, solution),
/// which is the canonical quorum order with a total tie-break.
template <CryptoSuite Crypto>
struct RankedVote {
  typename Crypto::Digest pow;
  typename Crypto::PublicKey voter;
  Nonce solution = 0;

  friend bool operator==(const RankedVote&, const RankedVote&) = default;
  friend auto operator<=>(const RankedVote&, const RankedVote&) = default;
};

template <CryptoSuite Crypto, Application App>
struct Block {
  typename Crypto::Digest parent;
  std::vector<QuorumEntry<Crypto>> quorum;  // certifies `parent`, not this block
  typename App::Update payload;
  typename Crypto::Signature signature;
};

template <CryptoSuite Crypto, Application App>
void encode_header(const Block<Crypto, App>& b, ByteBuffer& out) {
  append_bytes(out, b.parent.bytes());
  for (const auto& e : b.quorum) {
    append_bytes(out, e.voter.bytes());
    append_u64(out, e.solution);
  }
}

/// Bytes covered by the leader signature: parent, quorum and payload.
template <CryptoSuite Crypto, Application App>
ByteBuffer encode_unsigned(const Block<Crypto, App>& b) {
  ByteBuffer out;
  out.reserve(Crypto::Digest::size + b.quorum.size() * (Crypto::PublicKey::size + 8) + 64);
  encode_header(b, out);
  ByteBuffer payload;
  App::encode(b.payload, payload);
  append_u64(out, payload.size());
  append_bytes(out, payload);
  return out;
}

template <CryptoSuite Crypto, Application App>
typename Crypto::Digest signing_digest(const Block<Crypto, App>& b) {
  return Crypto::hash_list(encode_unsigned(b));
}

template <CryptoSuite Crypto, Application App>
typename Crypto::Digest block_id(const Block<Crypto, App>& b) {
  ByteBuffer bytes = encode_unsigned(b);
  append_bytes(bytes, b.signature.bytes());
  return Crypto::hash_list(bytes);
}

/// Immutable block plus its list hash, shared between all holders.
template <CryptoSuite Crypto, Application App>
class SealedBlock {
 public:
  explicit SealedBlock(Block<Crypto, App> block) : block_(std::move(block)) {
    ByteBuffer bytes = encode_unsigned(block_);
    signing_digest_ = Crypto::hash_list(bytes);
    append_bytes(bytes, block_.signature.bytes());
    id_ = Crypto::hash_list(bytes);
  }

  const Block<Crypto, App>& block() const { return block_; }
  const typename Crypto::Digest& id() const { return id_; }
  const typename Crypto::Digest& signing_digest() const { return signing_digest_; }

 private:
  Block<Crypto, App> block_;
  typename Crypto::Digest signing_digest_;
  typename Crypto::Digest id_;
};

template <CryptoSuite Crypto, Application App>
using BlockHandle = std::shared_ptr<const SealedBlock<Crypto, App>>;

template <CryptoSuite Crypto, Application App>
BlockHandle<Crypto, App> seal(Block<Crypto, App> block) {
  return std::make_shared<const SealedBlock<Crypto, App>>(std::move(block));
}

template <CryptoSuite Crypto, Application App>
using Message = std::variant<Vote<Crypto>, BlockHandle<Crypto, App>>;

template <CryptoSuite Crypto, Application App>
struct ProtocolConfig {
  std::size_t k = 1;
  typename Crypto::Digest vote_threshold = Crypto::max_digest();
  typename Crypto::Digest genesis = Crypto::hash_list({});
  typename App::State initial_state = App::initial_state();
  /// When false the node never proposes on its own initiative; used by
  /// strategic wrappers that decide leadership themselves.
  bool auto_propose = true;
};

template <CryptoSuite Crypto, Application App>
class Node {
 public:
  using Digest = typename Crypto::Digest;
  using PublicKey = typename Crypto::PublicKey;
  using KeyPair = typename Crypto::KeyPair;
  using State = typename App::State;
  using BlockT = Block<Crypto, App>;
  using Handle = BlockHandle<Crypto, App>;
  using VoteT = Vote<Crypto>;
  using QuorumEntryT = QuorumEntry<Crypto>;
  using Ranked = RankedVote<Crypto>;
  using MessageT = Message<Crypto, App>;
  using Config = ProtocolConfig<Crypto, App>;

  struct Entry {
    Handle block;  // null for genesis
    const Entry* parent = nullptr;
    Digest id;
    std::uint64_t height = 0;
    State state;
    std::vector<Ranked> votes;  // sorted, duplicate-free
  };

  Node(Config config, KeyPair keys) : config_(std::move(config)), keys_(std::move(keys)) {
    if (config_.k == 0) throw std::invalid_argument("quorum size k must be at least 1");
    Entry genesis;
    genesis.id = config_.genesis;
    genesis.state = config_.initial_state;
    head_ = &blocks_.emplace(config_.genesis, std::move(genesis)).first->second;
  }

  Node(Config config, Rng& rng) : Node(std::move(config), Crypto::generate_keypair(rng)) {}

  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;
  Node(Node&&) noexcept = default;
  Node& operator=(Node&&) noexcept = default;

  // ---- event handlers ---------------------------------------------------

  void on_atv(Nonce solution) {
    const Digest ref = head_->id;
    const VoteT vote{ref, keys_.public_key, solution};
    if (!collect_vote(vote)) return;
    if (!propose_if_leader(ref)) outbox_.emplace_back(vote);
  }

  void on_vote(const VoteT& vote) {
    collect_vote(vote);
    propose_if_leader(vote.ref);
  }

  void on_block(const Handle& handle) {
    const BlockT& b = handle->block();
    if (blocks_.contains(handle->id())) {
      // its quorum votes were collected when it was first stored
      propose_if_leader(b.parent);
      return;
    }
    std::vector<Digest> pows;
    pows.reserve(b.quorum.size());
    for (const auto& e : b.quorum) {
      pows.push_back(Crypto::hash_pow(b.parent, e.voter, e.solution));
      collect_ranked(b.parent, Ranked{pows.back(), e.voter, e.solution});
    }
    propose_if_leader(b.parent);
    if (!blocks_.contains(b.parent)) {
      store_block(handle);  // buffered until the parent shows up
    } else if (validate_block(b, pows, handle->signing_digest())) {
      store_block(handle);
    }
  }

  void on_message(const MessageT& message) {
    if (const auto* vote = std::get_if<VoteT>(&message)) {
      on_vote(*vote);
    } else if (const auto& handle = std::get<Handle>(message)) {
      on_block(handle);
    }
  }

  /// Messages emitted since the last call, in emission order.
  std::vector<MessageT> take_outbox() { return std::exchange(outbox_, {}); }
  const std::vector<MessageT>& outbox() const { return outbox_; }

  // ---- protocol procedures ----------------------------------------------

  /// Inserts a block whose parent is known; blocks with unknown parents are
  /// buffered and retried once the parent is stored. Returns true if the
  /// block was inserted now.
  bool store_block(const Handle& handle) {
    if (blocks_.contains(handle->id())) return false;
    if (!blocks_.contains(handle->block().parent)) {
      auto& waiting = orphan_blocks_[handle->block().parent];
      const bool seen = std::any_of(waiting.begin(), waiting.end(),
                                    [&](const Handle& h) { return h->id() == handle->id(); });
      if (!seen) waiting.push_back(handle);
      return false;
    }

    std::vector<Handle> work{handle};
    bool first = true;
    while (!work.empty()) {
      Handle h = std::move(work.back());
      work.pop_back();
      const bool is_root = std::exchange(first, false);
      if (blocks_.contains(h->id())) continue;
      if (!is_root && !validate_block(h->block(), {}, h->signing_digest())) continue;
      insert_entry(h);

      auto waiting = orphan_blocks_.find(h->id());
      if (waiting != orphan_blocks_.end()) {
        std::vector<Handle> children = std::move(waiting->second);
        orphan_blocks_.erase(waiting);
        for (auto it = children.rbegin(); it != children.rend(); ++it) work.push_back(std::move(*it));
      }
    }
    return true;
  }

  /// Adds a valid vote to the referenced block (or the orphan buffer).
  /// Returns false for invalid or already known votes.
  bool collect_vote(const VoteT& vote) {
    return collect_ranked(vote.ref,
                          Ranked{Crypto::hash_pow(vote.ref, vote.voter, vote.solution), vote.voter,
                                 vote.solution});
  }

  /// Quorum conditions (size, threshold, order), leader signature, and
  /// application-level validity of the payload against the parent state.
  bool validate_block(const BlockT& b) const { return validate_block(b, {}, signing_digest(b)); }

 private:
  bool collect_ranked(const Digest& ref, const Ranked& ranked) {
    if (ranked.pow > config_.vote_threshold) return false;
    auto it = blocks_.find(ref);
    if (it == blocks_.end()) return insert_sorted(orphan_votes_[ref], ranked);
    if (!insert_vote(it->second, ranked)) return false;
    update_head(ref);
    return true;
  }

  /// `pows` optionally holds the already computed puzzle hashes of the quorum.
  bool validate_block(const BlockT& b, std::span<const Digest> pows, const Digest& digest) const {
    const Entry* parent = find(b.parent);
    if (parent == nullptr) return false;
    std::size_t count = 0;
    Digest previous{};
    for (const auto& e : b.quorum) {
      const Digest pow = count < pows.size()
                             ? pows[count]
                             : Crypto::hash_pow(b.parent, e.voter, e.solution);  // binds to the parent
      if (pow > config_.vote_threshold) return false;
      if (count > 0 && pow < previous) return false;
      previous = pow;
      ++count;
    }
    return count == config_.k &&
           Crypto::check_signature(b.quorum.front().voter, digest, b.signature) &&
           App::check_update(parent->state, b.payload);
  }

 public:
  /// The k smallest votes on `ref` if the smallest one is this node's.
  std::optional<std::vector<QuorumEntryT>> leader_quorum(const Digest& ref) const {
    const Entry* e = find(ref);
    if (e == nullptr || e->votes.size() < config_.k) return std::nullopt;
    if (e->votes.front().voter != keys_.public_key) return std::nullopt;
    std::vector<QuorumEntryT> quorum;
    quorum.reserve(config_.k);
    for (std::size_t i = 0; i < config_.k; ++i) {
      quorum.push_back(QuorumEntryT{e->votes[i].voter, e->votes[i].solution});
    }
    return quorum;
  }

  bool propose_if_leader(const Digest& ref) {
    if (!config_.auto_propose) return false;
    auto quorum = leader_quorum(ref);
    if (!quorum) return false;
    propose(ref, std::move(*quorum));
    return true;
  }

  /// Builds, signs, stores and emits a block on `ref` with the given quorum.
  Handle propose(const Digest& ref, std::vector<QuorumEntryT> quorum) {
    const Entry* parent = find(ref);
    if (parent == nullptr) throw std::logic_error("cannot propose on an unknown block");
    BlockT b{ref, std::move(quorum), App::propose_update(parent->state), {}};
    b.signature = Crypto::sign(keys_, signing_digest(b));
    Handle handle = seal(std::move(b));
    store_block(handle);
    outbox_.emplace_back(handle);
    return handle;
  }

  /// State of head's third ancestor; near genesis this is the initial state.
  const State& read_committed_state() const { return committed_entry().state; }

  /// Longest-chain preference with quorum progress as tie-break. Switching
  /// to a branch that disagrees on the committed prefix is refused and
  /// counted as a fork alarm.
  void update_head(const Digest& ref) {
    const Entry* r = find(ref);
    if (r == nullptr || r == head_) return;
    const Entry& h = *head_;
    if (r->height > h.height || (r->height == h.height && r->votes.size() > h.votes.size())) {
      const Entry* walked = ancestor(*r, r->height - h.height);
      if (ancestor(*walked, 3) == ancestor(h, 3)) {
        head_ = r;
      } else {
        ++fork_alarms_;
      }
    }
  }

  /// Real-work mining: tries `trials` random nonces against the current
  /// head and raises an ATV for every solution under the threshold.
  template <class Sink>
  std::size_t solve_puzzle(Rng& rng, std::size_t trials, Sink&& on_solution) const {
    std::size_t found = 0;
    for (std::size_t i = 0; i < trials; ++i) {
      const Nonce n = rng();
      if (Crypto::hash_pow(head_->id, keys_.public_key, n) <= config_.vote_threshold) {
        ++found;
        on_solution(n);
      }
    }
    return found;
  }

  std::size_t mine(Rng& rng, std::size_t trials) {
    std::vector<Nonce> solutions;
    solve_puzzle(rng, trials, [&](Nonce n) { solutions.push_back(n); });
    for (Nonce n : solutions) on_atv(n);
    return solutions.size();
  }

  // ---- observers --------------------------------------------------------

  const Entry* find(const Digest& id) const {
    auto it = blocks_.find(id);
    return it == blocks_.end() ? nullptr : &it->second;
  }

  /// Walks `steps` parents up, stopping at genesis.
  static const Entry* ancestor(const Entry& from, std::uint64_t steps) {
    const Entry* e = &from;
    while (steps-- > 0 && e->parent != nullptr) e = e->parent;
    return e;
  }

  const Entry& head_entry() const { return *head_; }
  const Digest& head() const { return head_->id; }
  const Entry& committed_entry() const { return *ancestor(*head_, 3); }
  std::uint64_t committed_height() const { return committed_entry().height; }

  const PublicKey& public_key() const { return keys_.public_key; }
  const KeyPair& keys() const { return keys_; }
  const Config& config() const { return config_; }
  std::size_t fork_alarms() const { return fork_alarms_; }
  std::size_t block_count() const { return blocks_.size(); }

  std::size_t orphan_block_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : orphan_blocks_) n += v.size();
    return n;
  }
  std::size_t orphan_vote_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : orphan_votes_) n += v.size();
    return n;
  }

  /// Order-independent digest of the block store, head and buffers.
  std::uint64_t fingerprint() const {
    std::uint64_t acc = splitmix64(head_->id.prefix_u64()) ^ splitmix64(fork_alarms_ + 17);
    for (const auto& [id, e] : blocks_) {
      std::uint64_t h = splitmix64(id.prefix_u64() ^ e.height);
      for (const auto& v : e.votes) h = splitmix64(h ^ v.pow.prefix_u64() ^ v.solution);
      acc += splitmix64(h);
    }
    acc ^= splitmix64(orphan_block_count() * 31 + orphan_vote_count());
    return acc;
  }

 private:
  static bool insert_sorted(std::vector<Ranked>& votes, const Ranked& v) {
    auto pos = std::lower_bound(votes.begin(), votes.end(), v);
    if (pos != votes.end() && *pos == v) return false;
    votes.insert(pos, v);
    return true;
  }

  static bool insert_vote(Entry& e, const Ranked& v) { return insert_sorted(e.votes, v); }

  void insert_entry(const Handle& h) {
    const BlockT& b = h->block();
    const Entry& parent = blocks_.at(b.parent);
    Entry e;
    e.block = h;
    e.parent = &parent;
    e.id = h->id();
    e.height = parent.height + 1;
    e.state = App::apply_update(parent.state, b.payload);
    Entry& stored = blocks_.emplace(e.id, std::move(e)).first->second;

    bool attached = false;
    auto pending = orphan_votes_.find(stored.id);
    if (pending != orphan_votes_.end()) {
      for (const auto& v : pending->second) attached |= insert_vote(stored, v);
      orphan_votes_.erase(pending);
    }
    update_head(stored.id);
    if (attached) propose_if_leader(stored.id);
  }

  Config config_;
  KeyPair keys_;
  std::unordered_map<Digest, Entry, FixedBytesHash> blocks_;
  const Entry* head_ = nullptr;
  std::unordered_map<Digest, std::vector<Handle>, FixedBytesHash> orphan_blocks_;
  std::unordered_map<Digest, std::vector<Ranked>, FixedBytesHash> orphan_votes_;
  std::vector<MessageT> outbox_;
  std::size_t fork_alarms_ = 0;
};

}  // namespace powq

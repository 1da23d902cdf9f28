#pragma once

// Attacker strategies. The naive attacker is a plain protocol node whose
// blocks and votes are attributed to the attacker by key. The censor
// withholds every vote it finds and reveals them only inside its own block
// proposals, which it makes whenever it holds the smallest vote on its head.

#include <algorithm>
#include <iterator>
#include <unordered_map>
#include <vector>

#include "powq/protocol.hpp"

namespace powq {

enum class Strategy { none, naive, censor };

template <CryptoSuite Crypto, Application App>
class CensorNode {
 public:
  using NodeT = Node<Crypto, App>;
  using Digest = typename Crypto::Digest;
  using Ranked = RankedVote<Crypto>;
  using MessageT = Message<Crypto, App>;

  CensorNode(typename NodeT::Config config, typename NodeT::KeyPair keys)
      : view_(passive(std::move(config)), std::move(keys)) {}

  void on_atv(Nonce solution) {
    const Digest ref = view_.head();
    const Digest pow = Crypto::hash_pow(ref, view_.public_key(), solution);
    if (pow > view_.config().vote_threshold) return;
    auto& held = withheld_[ref];
    const Ranked vote{pow, view_.public_key(), solution};
    auto pos = std::lower_bound(held.begin(), held.end(), vote);
    if (pos == held.end() || *pos != vote) held.insert(pos, vote);
    lead_if_possible();
  }

  void on_message(const MessageT& message) {
    view_.on_message(message);
    lead_if_possible();
  }

  std::vector<MessageT> take_outbox() { return view_.take_outbox(); }

  const NodeT& view() const { return view_; }
  const typename Crypto::PublicKey& public_key() const { return view_.public_key(); }

  std::size_t withheld_on(const Digest& ref) const {
    auto it = withheld_.find(ref);
    return it == withheld_.end() ? 0 : it->second.size();
  }

  /// Public votes on the head merged with withheld ones, in canonical order.
  std::vector<Ranked> visible_and_withheld(const Digest& ref) const {
    std::vector<Ranked> all;
    const auto* entry = view_.find(ref);
    auto it = withheld_.find(ref);
    static const std::vector<Ranked> empty;
    const auto& pub = entry ? entry->votes : empty;
    const auto& held = it == withheld_.end() ? empty : it->second;
    std::set_union(pub.begin(), pub.end(), held.begin(), held.end(), std::back_inserter(all));
    return all;
  }

 private:
  static typename NodeT::Config passive(typename NodeT::Config config) {
    config.auto_propose = false;
    return config;
  }

  void lead_if_possible() {
    const Digest ref = view_.head();
    auto it = withheld_.find(ref);
    if (it == withheld_.end() || it->second.empty()) return;
    const auto* entry = view_.find(ref);
    const std::size_t k = view_.config().k;
    if (entry->votes.size() + it->second.size() < k) return;
    const auto& pub = entry->votes;
    if (!pub.empty() && pub.front() < it->second.front() && pub.front().voter != view_.public_key()) return;
    std::vector<Ranked> all = visible_and_withheld(ref);
    if (all.size() < k || all.front().voter != view_.public_key()) return;
    std::vector<QuorumEntry<Crypto>> quorum;
    quorum.reserve(k);
    for (std::size_t i = 0; i < k; ++i) quorum.push_back({all[i].voter, all[i].solution});
    withheld_.erase(it);
    view_.propose(ref, std::move(quorum));
  }

  NodeT view_;
  std::unordered_map<Digest, std::vector<Ranked>, FixedBytesHash> withheld_;
};

}  // namespace powq

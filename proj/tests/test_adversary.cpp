#include <gtest/gtest.h>

#include <cmath>

#include "powq/adversary.hpp"
#include "powq/mcmodel.hpp"
#include "powq/simnet.hpp"
#include "support/harness.hpp"
#include "support/mc_oracle.hpp"

using namespace powq;
using namespace powq::testing;

namespace {

using Censor = CensorNode<FastCrypto, CounterApp>;
const Digest kGenesis = TestConfig{}.genesis;

Nonce nonce_below(const PublicKey& pk, std::uint64_t bound) {
  return find_nonce(kGenesis, pk, [&](const Digest& d) { return d.prefix_u64() < bound; });
}
Nonce nonce_above(const PublicKey& pk, std::uint64_t bound) {
  return find_nonce(kGenesis, pk, [&](const Digest& d) { return d.prefix_u64() > bound; });
}

sim::SimConfig attack(Strategy s, double alpha, std::size_t k, std::uint64_t seed, std::size_t blocks) {
  sim::SimConfig c;
  c.n_nodes = 100;
  c.k = k;
  c.alpha = alpha;
  c.strategy = s;
  c.n_blocks = blocks;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Censor, WithholdsItsVotes) {
  Censor censor(config_with_k(3), key_for(1));
  censor.on_atv(5);
  censor.on_atv(6);
  EXPECT_TRUE(censor.take_outbox().empty());
  EXPECT_EQ(censor.withheld_on(kGenesis), 2u);
  EXPECT_TRUE(censor.view().head_entry().votes.empty());
}

TEST(Censor, LeadsWithWithheldSmallestVote) {
  const auto me = key_for(1), honest = key_for(2);
  Censor censor(config_with_k(2), me);
  const Nonce mine = nonce_below(me.public_key, 1ULL << 58);
  censor.on_atv(mine);
  EXPECT_TRUE(censor.take_outbox().empty());
  censor.on_message(TestVote{kGenesis, honest.public_key, 77});
  const auto out = censor.take_outbox();
  ASSERT_EQ(out.size(), 1u);
  const auto& block = std::get<TestHandle>(out[0])->block();
  ASSERT_EQ(block.quorum.size(), 2u);
  EXPECT_EQ(block.quorum[0], (QuorumEntry<FastCrypto>{me.public_key, mine}));
  EXPECT_EQ(block.quorum[1], (QuorumEntry<FastCrypto>{honest.public_key, 77}));
  EXPECT_EQ(censor.withheld_on(kGenesis), 0u);

  TestNode observer(config_with_k(2), key_for(9));
  EXPECT_TRUE(observer.validate_block(block));
}

TEST(Censor, StaysSilentWhenAPublicVoteIsSmaller) {
  const auto me = key_for(1), honest = key_for(2), other = key_for(3);
  Censor censor(config_with_k(2), me);
  censor.on_message(TestVote{kGenesis, honest.public_key, nonce_below(honest.public_key, 1ULL << 58)});
  censor.on_atv(nonce_above(me.public_key, 1ULL << 62));
  censor.on_message(TestVote{kGenesis, other.public_key, nonce_above(other.public_key, 1ULL << 63)});
  EXPECT_TRUE(censor.take_outbox().empty());
  EXPECT_EQ(censor.withheld_on(kGenesis), 1u);
  EXPECT_EQ(censor.visible_and_withheld(kGenesis).size(), 3u);
}

TEST(Censor, FollowsHonestChain) {
  const auto chain = make_chain(kGenesis, 1, 4, 2, 10);
  Censor censor(config_with_k(2), key_for(1));
  for (const auto& b : chain) censor.on_message(b);
  EXPECT_EQ(censor.view().head(), chain.back()->id());
  censor.on_atv(3);
  EXPECT_EQ(censor.withheld_on(chain.back()->id()), 1u);
}

TEST(AttackSimulation, CensorNeverBroadcastsVotes) {
  const auto m = sim::run_simulation(attack(Strategy::censor, 1.0 / 3, 8, 1, 100));
  EXPECT_EQ(m.attacker_vote_messages, 0u);
  EXPECT_GT(m.attacker_block_share, 0.0);
  EXPECT_EQ(m.fork_alarms, 0u);
  EXPECT_EQ(m.inconsistent_nodes, 0u);
}

TEST(AttackSimulation, NaiveAttackerGetsProportionalShares) {
  double blocks = 0, votes = 0;
  constexpr int seeds = 4;
  constexpr std::size_t n = 150;
  for (int s = 1; s <= seeds; ++s) {
    const auto m = sim::run_simulation(attack(Strategy::naive, 0.3, 4, s, n));
    blocks += m.attacker_block_share;
    votes += m.attacker_vote_share;
    EXPECT_EQ(m.fork_alarms, 0u);
  }
  // each block leader is the attacker with probability alpha
  const double se = std::sqrt(0.3 * 0.7 / (seeds * n));
  EXPECT_NEAR(blocks / seeds, 0.3, 4 * se);
  EXPECT_NEAR(votes / seeds, 0.3, 4 * se);
}

TEST(AttackSimulation, CensorMatchesChainModel) {
  constexpr double alpha = 1.0 / 3;
  constexpr std::size_t k = 8, n = 200;
  constexpr int seeds = 4;
  double share = 0;
  for (int s = 1; s <= seeds; ++s) share += sim::run_simulation(attack(Strategy::censor, alpha, k, s, n)).attacker_block_share;
  const double expected = mc_exact(alpha, k).leadership;
  EXPECT_NEAR(share / seeds, expected, 4 * std::sqrt(expected * (1 - expected) / (seeds * n)));
  EXPECT_GT(share / seeds, alpha);
}

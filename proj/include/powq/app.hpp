#pragma once

#include <concepts>
#include <cstdint>
#include <string>
#include <vector>

#include "powq/bytes.hpp"

namespace powq {

/// Hooks into the replicated application. The protocol treats states and
/// updates as opaque values; `encode` feeds an update into block hashing.
template <class A>
concept Application = std::copyable<typename A::State> && std::copyable<typename A::Update> &&
    requires(const typename A::State& s, const typename A::Update& u, ByteBuffer& out) {
  { A::initial_state() } -> std::convertible_to<typename A::State>;
  { A::check_update(s, u) } -> std::same_as<bool>;
  { A::apply_update(s, u) } -> std::convertible_to<typename A::State>;
  { A::propose_update(s) } -> std::convertible_to<typename A::Update>;
  A::encode(u, out);
};

/// Replicated counter; every block must increment it by exactly one.
struct CounterApp {
  using State = std::uint64_t;
  using Update = std::uint64_t;

  static State initial_state() { return 0; }
  static bool check_update(const State& s, const Update& u) { return u == s + 1; }
  static State apply_update(const State&, const Update& u) { return u; }
  static Update propose_update(const State& s) { return s + 1; }
  static void encode(const Update& u, ByteBuffer& out) { append_u64(out, u); }
};

/// Append-only log of text entries.
struct LogApp {
  using State = std::vector<std::string>;
  using Update = std::string;

  static State initial_state() { return {}; }
  static bool check_update(const State& s, const Update& u) { return u == entry_for(s.size()); }
  static State apply_update(const State& s, const Update& u) {
    State next = s;
    next.push_back(u);
    return next;
  }
  static Update propose_update(const State& s) { return entry_for(s.size()); }
  static void encode(const Update& u, ByteBuffer& out) {
    out.insert(out.end(), u.begin(), u.end());
  }

  static std::string entry_for(std::size_t index) { return "entry-" + std::to_string(index); }
};

static_assert(Application<CounterApp>);
static_assert(Application<LogApp>);

}  // namespace powq

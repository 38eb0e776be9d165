// SPDX-License-Identifier: Apache-2.0
//
// Per-user state, actions, transition kernel and stage cost of the
// multi-user / multi-server edge offloading model.
#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "aoinest/rng.hpp"

namespace aoinest {

/// When a task becomes eligible to complete.
///
/// `strict`: a task generated at slot G may finish at the end of slot t only
/// if t - G > tau_min; the generation slot is always deterministic.
/// `inclusive`: the generation slot is the first compute slot and a task may
/// finish at the end of its tau_min-th compute slot (so tau_min = 1 allows a
/// task to finish in the slot it was offloaded).
enum class CompletionRule { strict, inclusive };

/// What happens to a computing user that is not given a server in a slot.
enum class UnassignedRule { drop, hold };

struct UserGroup {
  int count = 0;
  int tau_min = 1;
  std::vector<double> success_prob;  // one entry per server
  bool operator==(const UserGroup&) const = default;
};

struct ScenarioConfig {
  int num_users = 0;
  int num_servers = 0;
  std::vector<UserGroup> groups;
  int horizon = 0;
  double smoothing = 50.0;
  std::vector<double> initial_costs;  // empty means all zero
  int truncation = 0;                 // Delta_max
  std::uint64_t rng_seed = 1;
  int scale = 1;
  CompletionRule completion_rule = CompletionRule::strict;
  bool allow_server_switch = true;
  UnassignedRule on_unassigned = UnassignedRule::drop;

  /// Throws Error(invalid_argument) naming the offending field.
  void validate() const;

  int group_of(int user) const;
  int tau_min(int user) const { return groups[static_cast<std::size_t>(group_of(user))].tau_min; }
  double success_prob(int user, int server) const;
  /// Elapsed compute time (slots since generation) from which completion is possible.
  int first_eligible_elapsed(int group) const;
  std::vector<double> costs_or_zero() const;

  bool operator==(const ScenarioConfig&) const = default;
};

/// Smallest elapsed time at which a task may complete under `rule`.
int first_eligible_elapsed(CompletionRule rule, int tau_min);

/// Truncation suggested for a scenario: 40 * max tau_min * max(1/p), capped.
int default_truncation(const ScenarioConfig& cfg, int cap = 512);

struct Idle {
  int age = 1;
  bool operator==(const Idle&) const = default;
};

struct Computing {
  int age = 1;
  int gen_age = 1;
  int server = 0;
  bool operator==(const Computing&) const = default;
};

using UserState = std::variant<Idle, Computing>;

inline int age_of(const UserState& s) {
  return std::visit([](const auto& v) { return v.age; }, s);
}
inline bool is_computing(const UserState& s) { return std::holds_alternative<Computing>(s); }

class Action {
 public:
  static constexpr Action noop() { return Action(-1); }
  static constexpr Action offload(int server) { return Action(server); }
  constexpr bool is_noop() const { return server_ < 0; }
  constexpr int server() const { return server_; }
  bool operator==(const Action&) const = default;

 private:
  constexpr explicit Action(int s) : server_(s) {}
  int server_;
};

struct Outcome {
  UserState state;
  double prob = 0.0;
};

using TransitionDistribution = std::vector<Outcome>;

/// Clamp ages to the truncated space; layer-2 clamping keeps elapsed time
/// exact by lowering the generation age while the age is saturated.
UserState clamp_state(const UserState& s, int delta_max);

TransitionDistribution successor_distribution(const UserState& state, Action action,
                                              const ScenarioConfig& cfg, int user);

UserState sample_transition(const UserState& state, Action action, const ScenarioConfig& cfg,
                            int user, RngStream& rng);

/// Allocation-free sampling for the simulator; draws exactly like
/// sample_transition. `action` is -1 for NoOp.
UserState advance_user(const UserState& state, int action, double success_prob,
                       int first_eligible, int delta_max, RngStream& rng);

/// Delta + nu_m for offloading to m, Delta for NoOp.
double stage_cost(const UserState& state, Action action, const std::vector<double>& costs);

}  // namespace aoinest

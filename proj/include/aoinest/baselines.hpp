// SPDX-License-Identifier: Apache-2.0
//
// Benchmark scheduling rules and the relaxed-problem lower bound.
#pragma once

#include <vector>

#include "aoinest/mdp.hpp"
#include "aoinest/model.hpp"
#include "aoinest/rng.hpp"
#include "aoinest/scheduler.hpp"

namespace aoinest {

/// Servers ordered by success probability averaged over users, best first
/// (lower index on ties).
std::vector<int> servers_by_quality(const ScenarioConfig& cfg);

/// Oldest users first; the k-th user gets the k-th best server.
ActionList mamp_step(const std::vector<UserState>& states, const ScenarioConfig& cfg);

/// Ranking weight age + (age - gen_age) / p, with gen_age = age for idle users.
double marp_weight(const UserState& s, double success_prob);
ActionList marp_step(const std::vector<UserState>& states, const ScenarioConfig& cfg);

struct AscentOptions {
  int iters = 150;
  // step a * S / (b + iter), S the total cost per server at zero prices
  double step_scale = 1.0;   // a
  double step_offset = 10.0; // b
  bool price_units = true;   // false: S = 1
  PolicyIterationOptions solver;
};

/// Per-user relaxed optimum at the best dual prices found.
struct RelaxedSolution {
  std::vector<double> nu;
  double dual_value = 0.0;  // sum_n gamma_n(nu) - sum_m nu_m
  double bound = 0.0;       // dual_value / N, comparable with normalized AoI
  int iters = 0;
  bool converged = false;
  std::vector<double> history;  // dual value per iteration
  std::vector<int> family_of_group;
  std::vector<SubproblemSolution> families;  // one per distinct group model, at nu
  std::vector<std::vector<double>> usage;    // expected server use per user of each family

  const SubproblemSolution& solution_for_group(int g) const {
    return families[static_cast<std::size_t>(family_of_group[static_cast<std::size_t>(g)])];
  }
};

/// Projected supergradient ascent on the capacity prices.
RelaxedSolution relaxed_lower_bound(const ScenarioConfig& cfg, const AscentOptions& opts = {});

/// Dual value at fixed prices (every price vector gives a valid bound).
double relaxed_dual_value(const ScenarioConfig& cfg, const std::vector<double>& nu,
                          const PolicyIterationOptions& solver = {});

/// Relaxed solution at fixed prices (no ascent; iters = 0).
RelaxedSolution relaxed_solution_at(const ScenarioConfig& cfg, const std::vector<double>& nu,
                                    const PolicyIterationOptions& solver = {});

/// Every user proposes its relaxed action; proposals are served in random
/// order, moving to a free server of the same class when the proposed one is
/// taken, and the rest idle.
ActionList rrp_step(const std::vector<UserState>& states, const RelaxedSolution& relaxed,
                    const ScenarioConfig& cfg, RngStream& rng);

/// Relaxed actions without the capacity constraint.
ActionList relaxed_replay_step(const std::vector<UserState>& states, const RelaxedSolution& relaxed,
                               const ScenarioConfig& cfg);

/// MDP state of a user for a group model.
MdpState to_mdp_state(const UserState& s, const SubproblemModel& model);

}  // namespace aoinest

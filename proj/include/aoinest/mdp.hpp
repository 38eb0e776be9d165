// SPDX-License-Identifier: Apache-2.0
//
// Decoupled single-user subproblem: truncated 2-layer state space, relative
// value iteration, expected action costs, passive sets, threshold extraction
// and the numerical structure verifiers.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aoinest/model.hpp"

namespace aoinest {

/// Servers a user cannot tell apart: same success probability.
struct ServerClass {
  double p = 1.0;
  std::vector<int> servers;  // ascending index
};

/// Single-user MDP parameters for one user group.
struct SubproblemModel {
  int delta_max = 0;
  int eligible_elapsed = 0;  // first elapsed time at which completion is possible
  std::vector<double> success_prob;  // per server
  std::vector<ServerClass> classes;  // ascending p
  std::vector<int> class_of_server;
  bool class_blocks = false;  // layer-2 states remember the class (no cross-class switching)

  static SubproblemModel from_config(const ScenarioConfig& cfg, int group);
  /// Direct construction, mostly for tests.
  static SubproblemModel make(int delta_max, int eligible_elapsed, std::vector<double> success_prob,
                              bool allow_server_switch = true);

  int num_servers() const { return static_cast<int>(success_prob.size()); }
  int num_classes() const { return static_cast<int>(classes.size()); }
  int num_blocks() const { return class_blocks ? num_classes() : 1; }
};

struct MdpState {
  int layer = 1;  // 1 idle, 2 computing
  int age = 1;
  int gen_age = 0;  // 0 in layer 1
  int block = 0;
  bool operator==(const MdpState&) const = default;
};

/// Dense enumeration of Idle(1..Dmax) followed by Computing(A, D), 1 <= D <= A <= Dmax,
/// for each layer-2 block.
class TruncatedStateSpace {
 public:
  TruncatedStateSpace() = default;
  TruncatedStateSpace(int delta_max, int blocks);

  int size() const { return delta_max_ + blocks_ * tri_; }
  int delta_max() const { return delta_max_; }
  int blocks() const { return blocks_; }
  int layer_size(int layer) const { return layer == 1 ? delta_max_ : blocks_ * tri_; }

  int idle(int age) const { return age - 1; }
  int computing(int age, int gen_age, int block = 0) const {
    return delta_max_ + block * tri_ + (age - 1) * age / 2 + (gen_age - 1);
  }
  int index_of(const MdpState& s) const {
    return s.layer == 1 ? idle(s.age) : computing(s.age, s.gen_age, s.block);
  }
  MdpState state(int index) const;

 private:
  int delta_max_ = 0;
  int blocks_ = 1;
  int tri_ = 0;
};

/// Action codes used in policy tables: -1 NoOp, otherwise a server index.
constexpr int kNoOp = -1;

/// Chain of states sharing (layer, block, generation age) ordered by age,
/// and the ages at which the greedy action changes.
struct ThresholdChain {
  int layer = 1;
  int block = 0;
  int gen_age = 0;
  int first_age = 1;
  int initial_action = kNoOp;
  std::vector<std::pair<int, int>> switches;  // (age, new action)

  int action_at(int age) const;
  /// First age at which the policy switches from `from` to `to`.
  std::optional<int> switch_age(int from, int to) const;
};

struct RviOptions {
  double tol = 1e-9;
  int max_iters = 500000;
  double damping = 0.9;  // aperiodicity transform weight on the Bellman update
  double tie_tol = 1e-8;
  const std::vector<double>* warm_start = nullptr;
};

struct SubproblemSolution {
  SubproblemModel model;
  std::vector<double> costs;  // nu, one per server
  TruncatedStateSpace space;
  double gamma_star = 0.0;
  std::vector<double> value;  // V(Idle(1)) == 0
  std::vector<int> policy;
  std::vector<ThresholdChain> thresholds;
  int iterations = 0;
  double span = 0.0;
  bool truncation_warning = false;

  const ThresholdChain* chain(int layer, int block, int gen_age) const;
};

/// Cheapest server of each class at the given costs (lowest index on ties).
std::vector<int> class_representatives(const SubproblemModel& model, const std::vector<double>& costs);

/// Throws Error(not_converged) with the final span when max_iters is hit.
SubproblemSolution relative_value_iteration(const SubproblemModel& model,
                                            const std::vector<double>& costs,
                                            const RviOptions& opts = {});

struct PolicyIterationOptions {
  int max_rounds = 200;
  double tie_tol = 1e-8;
  const std::vector<int>* warm_policy = nullptr;  // any policy on the same space
};

/// Howard policy iteration with exact evaluation. The computing layer is
/// folded into the idle layer, so each evaluation is one dense solve of
/// size delta_max. gamma_star is the exact average cost of the returned
/// (greedy, RVI tie-breaking) policy; span is the final Bellman residual.
/// Throws Error(numerical) on a multichain evaluation.
SubproblemSolution policy_iteration(const SubproblemModel& model, const std::vector<double>& costs,
                                    const PolicyIterationOptions& opts = {});

bool action_allowed(const SubproblemModel& model, const MdpState& s, int action);

/// Successors of (state, action) in the truncated space.
std::vector<std::pair<int, double>> mdp_successors(const SubproblemModel& model,
                                                   const TruncatedStateSpace& space,
                                                   const MdpState& s, int action);

/// mu(s, a) = C(s, a) + sum_s' q(s'|s,a) V(s') - gamma*.
double action_cost_mu(const SubproblemSolution& sol, int state_index, int action);

struct PassiveSet {
  int server = 0;
  int layer = 1;
  std::vector<double> costs;
  std::vector<int> members;  // state indices
};

/// States of `layer` where some other allowed action (NoOp or another server)
/// has mu no larger than server m.
PassiveSet passive_set(const SubproblemSolution& sol, int server, int layer, double tol = 1e-9);

struct SweepPoint {
  double cost = 0.0;
  int passive_layer1 = 0;
  int passive_layer2 = 0;
};

struct IndexabilitySweep {
  std::vector<SweepPoint> points;
  int layer1_size = 0;
  int layer2_size = 0;
  bool monotone_layer1 = true;
  bool monotone_layer2 = true;
  bool step_condition = true;  // p_m - p_{m-1} <= p_m^2 over the ordered classes
  std::vector<std::string> violations;
};

IndexabilitySweep indexability_sweep(const SubproblemModel& model, int server,
                                     const std::vector<double>& base_costs,
                                     const std::vector<double>& grid, const RviOptions& opts = {});

struct VerifyReport {
  bool ok = true;
  int checked = 0;
  std::vector<std::string> violations;
  double worst_margin = 0.0;  // most negative slack seen (0 when none)

  void violate(const std::string& what, double margin);
};

/// Multi-layer threshold structure of the greedy policy: quality of the chosen
/// server is non-decreasing in age along each chain and the best class is used
/// beyond the last switch. Layer-2 drops are counted, not treated as violations.
struct MlttReport : VerifyReport {
  int drop_states = 0;
  bool replay_exact = true;
};
MlttReport verify_mltt(const SubproblemSolution& sol, int margin = 0);

/// V((A,D)) non-decreasing in A and V((A,D)) - V(Idle(A-D)) non-decreasing in A.
/// States with A > Dmax - margin are skipped.
VerifyReport verify_value_monotonicity(const SubproblemSolution& sol, int margin = 0,
                                       double tol = 1e-7);

/// Expected stage cost of an eligible layer-2 offload equals nu_m + A - p_m D
/// (stage cost written with the next-slot age, shifted by one).
VerifyReport verify_stage_cost_identity(const SubproblemSolution& sol, double tol = 1e-9);

/// Re-solves at nu + delta e_m and checks V' - V < delta / p_m^2 on layer 2, and
/// V' - V > -delta / p_{m+1}^2 where the policy at nu already prefers a faster class.
VerifyReport verify_perturbation_bounds(const SubproblemModel& model, const std::vector<double>& costs,
                                        double delta, int server, const RviOptions& opts = {},
                                        int margin = 0);

/// At every extracted switching age A between consecutive classes,
/// nu_prev - nu_next + A <= gamma* <= nu_prev - nu_next + A + 1.
VerifyReport verify_threshold_sandwich(const SubproblemSolution& sol, double tol = 1e-7);

/// Stationary behaviour of the greedy policy started from Idle(1).
struct PolicyOccupancy {
  std::vector<double> mass;          // per state
  std::vector<double> server_usage;  // expected number of slots per slot on each server
  double average_age = 0.0;
  double average_cost = 0.0;
  double truncated_mass = 0.0;  // mass on states with age == Dmax
};
PolicyOccupancy policy_occupancy(const SubproblemModel& model, const TruncatedStateSpace& space,
                                 const std::vector<int>& policy, const std::vector<double>& costs);
PolicyOccupancy policy_occupancy(const SubproblemSolution& sol);

/// CSV with columns layer,delta,gen_age,action,value.
void write_solution_csv(const SubproblemSolution& sol, const std::string& path);

}  // namespace aoinest

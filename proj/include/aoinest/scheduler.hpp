// SPDX-License-Identifier: Apache-2.0
//
// Online nested-index scheduling: per-slot indices, the assignment problem,
// smoothed dual prices and the multi-user episode loop.
#pragma once

#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "aoinest/assignment.hpp"
#include "aoinest/index.hpp"
#include "aoinest/mdp.hpp"
#include "aoinest/model.hpp"

namespace aoinest {

struct DualState {
  std::vector<double> nu;
  double step = 0.02;  // 1 / smoothing
};

/// nu <- (1 - step) nu + step duals, componentwise.
DualState dual_cost_update(const DualState& state, const std::vector<double>& duals);

/// gamma* of user subproblems, solved by policy iteration on a grid of class
/// costs and interpolated multilinearly in between (gamma* is concave and
/// piecewise linear in the costs, with slopes in [0, 1]). gamma* depends only
/// on the class structure and the cheapest cost in each class, so one cache
/// serves every scaled copy of a scenario. The
/// reported value is that of the canonical greedy policy; it does not depend
/// on which stored policy warm-started the solve or on request order.
/// Thread-safe.
class GammaCache {
 public:
  explicit GammaCache(double grid = 0.5, PolicyIterationOptions opts = {});

  /// Family id of a subproblem model (models with equal class structure share one).
  int family_of(const SubproblemModel& model);
  /// Family ids for each group of a scenario.
  std::vector<int> families_of(const ScenarioConfig& cfg);
  /// gamma* of `family` at costs `nu`, for a model with the given server classes.
  double gamma(int family, const SubproblemModel& model, const std::vector<double>& nu);

  int solves() const;
  double grid() const { return grid_; }

 private:
  struct Family {
    SubproblemModel reduced;  // one server per class
    std::map<std::vector<int>, double> gamma;
    std::map<std::vector<int>, std::vector<int>> policies;  // bounded warm-start store
    std::list<std::vector<int>> recent;
  };
  double solve_key(Family& f, const std::vector<int>& key);

  double grid_;
  PolicyIterationOptions opts_;
  std::vector<Family> families_;
  int solves_ = 0;
  mutable std::mutex mu_;
};

enum class PolicyId { nested, mamp, marp, rrp, lower_bound_replay };

PolicyId parse_policy(std::string_view name);
const char* to_string(PolicyId p);

/// Chosen action per user: kNoOp or a server index.
using ActionList = std::vector<int>;

struct NestedStep {
  ActionList actions;
  DualState dual;
  Assignment assignment;
  IndexTable indices;  // filled when requested
};

/// Weights (user term) + (server term) describe every index when all groups
/// share one server class layout and switching is unrestricted.
bool indices_separable(const ScenarioConfig& cfg);

NestedStep nested_index_policy_step(const std::vector<UserState>& states, const DualState& dual,
                                    GammaCache& cache, const ScenarioConfig& cfg,
                                    bool want_indices = false);

struct RelaxedSolution;  // baselines.hpp

struct SeedMetrics {
  std::uint64_t seed = 0;
  double avg_aoi = 0.0;
  long completions = 0;
  std::vector<double> final_nu;
  std::vector<double> tail_nu_mean;  // per server over the tail window
  std::vector<double> tail_nu_sd;
  // per-slot records, only when requested
  std::vector<double> mean_age;
  std::vector<std::vector<double>> nu;
  std::vector<int> slot_completions;
  double wall_seconds = 0.0;
};

struct EpisodeMetrics {
  PolicyId policy = PolicyId::nested;
  int scale = 1;
  std::vector<SeedMetrics> seeds;
  double mean_aoi = 0.0;
  double std_error = 0.0;
};

struct SimulationOptions {
  bool record_timeseries = false;
  int tail_window = 1000;
  int workers = 0;  // 0: AOI_NEST_WORKERS or hardware concurrency
  double burn_in = 0.1;
  GammaCache* cache = nullptr;              // nested; created internally when null
  const RelaxedSolution* relaxed = nullptr; // rrp and lower-bound-replay; computed when null
};

/// Worker budget from AOI_NEST_WORKERS, else the hardware concurrency.
int worker_budget(int requested = 0);

EpisodeMetrics run_simulation(const ScenarioConfig& cfg, PolicyId policy,
                              const std::vector<std::uint64_t>& seeds,
                              const SimulationOptions& opts = {});

/// Mean and standard error of the mean (0 for a single value).
std::pair<double, double> mean_and_stderr(const std::vector<double>& xs);

}  // namespace aoinest

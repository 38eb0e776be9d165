// SPDX-License-Identifier: Apache-2.0
//
// Experiment orchestration: scale sweeps, summary statistics, CSV output and
// the property-check runner.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aoinest/baselines.hpp"
#include "aoinest/fluid.hpp"
#include "aoinest/index.hpp"
#include "aoinest/scheduler.hpp"

namespace aoinest {

enum class BoundKind { lower_bound, fluid };
BoundKind parse_bound_kind(const std::string& name);
const char* to_string(BoundKind b);

struct ExperimentPlan {
  std::string scenario_path;
  std::vector<PolicyId> policies;
  std::vector<int> scales;
  int seeds = 1;
  std::string out_dir;
  BoundKind comparison = BoundKind::lower_bound;
  AscentOptions ascent;
  int workers = 0;

  /// Throws Error(invalid_argument) for empty lists and Error(io) when the
  /// output directory cannot be created or written.
  void validate() const;
};

/// Seeds 0..count-1; every stream also mixes in the scenario's rng_seed.
std::vector<std::uint64_t> seed_list(int count);

struct SummaryRow {
  PolicyId policy = PolicyId::nested;
  int scale = 1;
  int seeds = 0;
  double mean_aoi = 0.0;   // normalized: per-user time average
  double std_error = 0.0;
  double total_aoi = 0.0;  // mean_aoi * N
  double bound = 0.0;      // per user
  double gap_pct = 0.0;    // 100 (mean - bound) / bound
  double wall_seconds = 0.0;
  std::string error;       // non-empty when the cell failed
};

SummaryRow summarize(const EpisodeMetrics& m, int num_users, double bound);

struct ScaleBound {
  int scale = 1;
  BoundKind kind = BoundKind::lower_bound;
  double value = 0.0;
  std::vector<double> nu;
  int iters = 0;
  std::string error;
};

struct SweepResult {
  std::vector<SummaryRow> rows;
  std::vector<ScaleBound> bounds;
  std::vector<EpisodeMetrics> cells;  // successful cells, in row order
};

/// Runs every (policy, scale) cell over the plan's seeds and writes
/// sweep.csv, sweep_seeds.csv, sweep_bounds.csv and sweep_timing.csv to the
/// output directory. A failing cell is recorded and the sweep continues.
/// `cache` may be shared across calls; one is created when null.
SweepResult sweep_scale(const ExperimentPlan& plan, GammaCache* cache = nullptr);
SweepResult sweep_scale(const ScenarioConfig& base, const ExperimentPlan& plan, GammaCache* cache = nullptr);

// CSV emitters; all numbers use fmt_num and rows end in LF.
void write_timeseries_csv(const std::string& path, const SeedMetrics& seed, int num_servers);
void write_summary_csv(const std::string& path, const std::vector<EpisodeMetrics>& cells);
void write_sweep_csv(const std::string& path, const std::vector<SummaryRow>& rows);
void write_sweep_seeds_csv(const std::string& path, const std::vector<EpisodeMetrics>& cells);
void write_sweep_timing_csv(const std::string& path, const std::vector<SummaryRow>& rows);
void write_bound_csv(const std::string& path, const std::vector<double>& nu, double bound_value, int iters);
/// kind,family,layer,delta,gen_age,action,value with the objective, the
/// server duals and the top_k largest occupancy entries.
void write_fluid_csv(const std::string& path, const FluidSolution& sol, int top_k = 20);
void write_index_csv(const std::string& path, const std::vector<UserState>& states, const IndexTable& table,
                     const ScenarioConfig& cfg);

/// Index table for a given population state at prices nu.
IndexTable index_table(const std::vector<UserState>& states, const ScenarioConfig& cfg,
                       const std::vector<double>& nu, IndexMethod method);

struct CheckItem {
  std::string name;
  bool ok = true;
  std::string detail;
  double seconds = 0.0;
};

struct CheckOptions {
  int random_instances = 20;
  std::uint64_t seed = 7;
  int kernel_truncation = 60;
  bool quick = false;  // fewer instances and smaller grids
};

/// Transition sums and agreement of the user kernel with the MDP kernel on
/// every (state, action) of the truncated space. Returns violations.
std::vector<std::string> check_kernel(const ScenarioConfig& cfg, int delta_max, double tol = 1e-12);

/// Runs the structural property suites on `cfg` and on random instances.
std::vector<CheckItem> run_property_checks(const ScenarioConfig& cfg, const CheckOptions& opts = {});

}  // namespace aoinest

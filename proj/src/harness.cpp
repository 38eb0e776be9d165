// SPDX-License-Identifier: Apache-2.0
#include "aoinest/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <tuple>

#include "aoinest/csv.hpp"
#include "aoinest/error.hpp"
#include "aoinest/rng.hpp"
#include "aoinest/scenario.hpp"

namespace aoinest {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string path_in(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

std::vector<std::string> nu_header(int num_servers) {
  std::vector<std::string> h;
  for (int m = 1; m <= num_servers; ++m) h.push_back("nu_" + std::to_string(m));
  return h;
}

}  // namespace

BoundKind parse_bound_kind(const std::string& name) {
  if (name == "lower-bound" || name == "lower_bound") return BoundKind::lower_bound;
  if (name == "fluid") return BoundKind::fluid;
  fail(ErrorCode::invalid_argument, "unknown bound '" + name + "' (expected lower-bound or fluid)");
}

const char* to_string(BoundKind b) { return b == BoundKind::fluid ? "fluid" : "lower-bound"; }

void ExperimentPlan::validate() const {
  if (policies.empty()) fail(ErrorCode::invalid_argument, "plan: policies list is empty");
  if (scales.empty()) fail(ErrorCode::invalid_argument, "plan: scales list is empty");
  for (int r : scales)
    if (r < 1) fail(ErrorCode::invalid_argument, "plan: scale " + std::to_string(r) + " is not a positive integer");
  if (seeds < 1) fail(ErrorCode::invalid_argument, "plan: seeds must be positive");
  if (out_dir.empty()) fail(ErrorCode::invalid_argument, "plan: output directory is empty");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  const std::string probe = path_in(out_dir, ".write-probe");
  {
    std::ofstream f(probe);
    if (!f) fail(ErrorCode::io, "plan: output directory '" + out_dir + "' is not writable");
  }
  std::filesystem::remove(probe, ec);
}

std::vector<std::uint64_t> seed_list(int count) {
  std::vector<std::uint64_t> out;
  for (int k = 0; k < count; ++k) out.push_back(static_cast<std::uint64_t>(k));
  return out;
}

SummaryRow summarize(const EpisodeMetrics& m, int num_users, double bound) {
  SummaryRow row;
  row.policy = m.policy;
  row.scale = m.scale;
  row.seeds = static_cast<int>(m.seeds.size());
  row.mean_aoi = m.mean_aoi;
  row.std_error = m.std_error;
  row.total_aoi = m.mean_aoi * num_users;
  row.bound = bound;
  row.gap_pct = bound > 0.0 ? 100.0 * (m.mean_aoi - bound) / bound : std::nan("");
  for (const auto& s : m.seeds) row.wall_seconds += s.wall_seconds;
  return row;
}

SweepResult sweep_scale(const ExperimentPlan& plan, GammaCache* cache) {
  return sweep_scale(parse_scenario(plan.scenario_path), plan, cache);
}

SweepResult sweep_scale(const ScenarioConfig& base, const ExperimentPlan& plan, GammaCache* cache) {
  plan.validate();
  base.validate();
  GammaCache own;
  if (!cache) cache = &own;
  const auto seeds = seed_list(plan.seeds);

  // The relaxed problem of a scaled copy at replicated prices is r copies of
  // the base problem, so one ascent serves every scale.
  bool need_relaxed = plan.comparison == BoundKind::lower_bound;
  for (auto p : plan.policies) need_relaxed = need_relaxed || p == PolicyId::rrp || p == PolicyId::lower_bound_replay;
  RelaxedSolution base_relaxed;
  std::string relaxed_error;
  if (need_relaxed) {
    try {
      base_relaxed = relaxed_lower_bound(base, plan.ascent);
    } catch (const std::exception& e) {
      relaxed_error = e.what();
    }
  }

  SweepResult out;
  for (int r : plan.scales) {
    const ScenarioConfig cfg = scale_scenario(base, r);
    RelaxedSolution relaxed;
    bool have_relaxed = false;
    if (need_relaxed && relaxed_error.empty()) {
      try {
        if (r == 1) {
          relaxed = base_relaxed;
        } else {
          std::vector<double> nu;
          for (int k = 0; k < r; ++k) nu.insert(nu.end(), base_relaxed.nu.begin(), base_relaxed.nu.end());
          relaxed = relaxed_solution_at(cfg, nu, plan.ascent.solver);
          relaxed.iters = base_relaxed.iters;
          relaxed.converged = base_relaxed.converged;
        }
        have_relaxed = true;
      } catch (const std::exception& e) {
        relaxed_error = e.what();
      }
    }
    ScaleBound sb;
    sb.scale = r;
    sb.kind = plan.comparison;
    sb.value = std::nan("");
    if (plan.comparison == BoundKind::lower_bound) {
      if (have_relaxed) {
        sb.value = relaxed.bound;
        sb.nu = relaxed.nu;
        sb.iters = relaxed.iters;
      } else {
        sb.error = relaxed_error;
      }
    } else {
      try {
        const auto fluid = fluid_lp(cfg);
        sb.value = fluid.objective;
        sb.nu = fluid.nu;
        sb.iters = fluid.pivots;
      } catch (const std::exception& e) {
        sb.error = e.what();
      }
    }
    out.bounds.push_back(sb);

    for (PolicyId policy : plan.policies) {
      const auto t0 = std::chrono::steady_clock::now();
      SummaryRow row;
      row.policy = policy;
      row.scale = r;
      try {
        const bool uses_relaxed = policy == PolicyId::rrp || policy == PolicyId::lower_bound_replay;
        if (uses_relaxed && !have_relaxed) fail(ErrorCode::numerical, "relaxed solution unavailable: " + relaxed_error);
        SimulationOptions so;
        so.cache = cache;
        so.relaxed = have_relaxed ? &relaxed : nullptr;
        so.workers = plan.workers;
        EpisodeMetrics m = run_simulation(cfg, policy, seeds, so);
        m.scale = r;
        row = summarize(m, cfg.num_users, sb.value);
        out.cells.push_back(std::move(m));
      } catch (const std::exception& e) {
        row.seeds = plan.seeds;
        row.mean_aoi = row.std_error = row.total_aoi = row.gap_pct = std::nan("");
        row.bound = sb.value;
        row.error = e.what();
      }
      row.wall_seconds = seconds_since(t0);
      out.rows.push_back(row);
    }
  }
  write_sweep_csv(path_in(plan.out_dir, "sweep.csv"), out.rows);
  write_sweep_seeds_csv(path_in(plan.out_dir, "sweep_seeds.csv"), out.cells);
  write_sweep_timing_csv(path_in(plan.out_dir, "sweep_timing.csv"), out.rows);
  {
    CsvWriter w(path_in(plan.out_dir, "sweep_bounds.csv"));
    w.row({"scale", "kind", "bound_value", "iters", "error"});
    for (const auto& b : out.bounds)
      w.row({std::to_string(b.scale), to_string(b.kind), fmt_num(b.value), std::to_string(b.iters), b.error});
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

void write_timeseries_csv(const std::string& path, const SeedMetrics& seed, int num_servers) {
  if (seed.mean_age.empty()) fail(ErrorCode::invalid_argument, "no timeseries recorded for " + path);
  CsvWriter w(path);
  std::vector<std::string> head{"t", "mean_age"};
  for (auto& h : nu_header(num_servers)) head.push_back(h);
  head.push_back("completions");
  w.row(head);
  for (std::size_t t = 0; t < seed.mean_age.size(); ++t) {
    std::vector<std::string> row{std::to_string(t), fmt_num(seed.mean_age[t])};
    for (double v : seed.nu[t]) row.push_back(fmt_num(v));
    row.push_back(std::to_string(seed.slot_completions[t]));
    w.row(row);
  }
}

void write_summary_csv(const std::string& path, const std::vector<EpisodeMetrics>& cells) {
  CsvWriter w(path);
  w.row({"policy", "scale", "seed", "avg_aoi"});
  for (const auto& c : cells)
    for (const auto& s : c.seeds)
      w.row({to_string(c.policy), std::to_string(c.scale), std::to_string(s.seed), fmt_num(s.avg_aoi)});
}

void write_sweep_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
  CsvWriter w(path);
  w.row({"policy", "scale", "seeds", "mean_aoi", "std_error", "total_aoi", "bound", "gap_pct", "error"});
  for (const auto& r : rows)
    w.row({to_string(r.policy), std::to_string(r.scale), std::to_string(r.seeds), fmt_num(r.mean_aoi),
           fmt_num(r.std_error), fmt_num(r.total_aoi), fmt_num(r.bound), fmt_num(r.gap_pct), r.error});
}

void write_sweep_seeds_csv(const std::string& path, const std::vector<EpisodeMetrics>& cells) {
  write_summary_csv(path, cells);
}

void write_sweep_timing_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
  CsvWriter w(path);
  w.row({"policy", "scale", "wall_seconds"});
  for (const auto& r : rows) w.row({to_string(r.policy), std::to_string(r.scale), fmt_num(r.wall_seconds)});
}

void write_bound_csv(const std::string& path, const std::vector<double>& nu, double bound_value, int iters) {
  CsvWriter w(path);
  auto head = nu_header(static_cast<int>(nu.size()));
  head.push_back("bound_value");
  head.push_back("iters");
  w.row(head);
  std::vector<std::string> row;
  for (double v : nu) row.push_back(fmt_num(v));
  row.push_back(fmt_num(bound_value));
  row.push_back(std::to_string(iters));
  w.row(row);
}

void write_fluid_csv(const std::string& path, const FluidSolution& sol, int top_k) {
  CsvWriter w(path);
  w.row({"kind", "family", "layer", "delta", "gen_age", "action", "value"});
  w.row({"objective", "", "", "", "", "", fmt_num(sol.objective)});
  w.row({"residual", "", "", "", "", "", fmt_num(sol.residual)});
  for (std::size_t m = 0; m < sol.nu.size(); ++m)
    w.row({"dual", "", "", "", "", std::to_string(m + 1), fmt_num(sol.nu[m])});
  struct Entry {
    double value;
    int family, state, action;
  };
  std::vector<Entry> entries;
  for (std::size_t f = 0; f < sol.rho.size(); ++f) {
    const int stride = static_cast<int>(sol.nu.size()) + 1;
    for (std::size_t k = 0; k < sol.rho[f].size(); ++k)
      if (sol.rho[f][k] > 0.0)
        entries.push_back({sol.rho[f][k], static_cast<int>(f), static_cast<int>(k) / stride,
                           static_cast<int>(k) % stride - 1});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return std::tie(b.value, a.family, a.state, a.action) < std::tie(a.value, b.family, b.state, b.action);
  });
  if (static_cast<int>(entries.size()) > top_k) entries.resize(static_cast<std::size_t>(top_k));
  for (const auto& e : entries) {
    const auto& model = sol.families[static_cast<std::size_t>(e.family)];
    const TruncatedStateSpace space(model.delta_max, model.num_blocks());
    const MdpState s = space.state(e.state);
    w.row({"occupancy", std::to_string(e.family), std::to_string(s.layer), std::to_string(s.age),
           std::to_string(s.gen_age), e.action < 0 ? "noop" : std::to_string(e.action + 1), fmt_num(e.value)});
  }
}

void write_index_csv(const std::string& path, const std::vector<UserState>& states, const IndexTable& table,
                     const ScenarioConfig& cfg) {
  if (static_cast<int>(states.size()) != table.num_users) fail(ErrorCode::invalid_argument, "index table size mismatch");
  CsvWriter w(path);
  w.row({"user", "server", "layer", "delta", "gen_age", "index", "method"});
  for (int n = 0; n < table.num_users; ++n) {
    const auto model = SubproblemModel::from_config(cfg, cfg.group_of(n));
    const MdpState s = to_mdp_state(states[static_cast<std::size_t>(n)], model);
    for (int m = 0; m < table.num_servers; ++m)
      w.row({std::to_string(n + 1), std::to_string(m + 1), std::to_string(s.layer), std::to_string(s.age),
             std::to_string(s.gen_age), fmt_num(table.at(n, m)), to_string(table.method)});
  }
}

IndexTable index_table(const std::vector<UserState>& states, const ScenarioConfig& cfg,
                       const std::vector<double>& nu, IndexMethod method) {
  cfg.validate();
  if (static_cast<int>(states.size()) != cfg.num_users) fail(ErrorCode::invalid_argument, "one state per user is required");
  if (static_cast<int>(nu.size()) != cfg.num_servers) fail(ErrorCode::invalid_argument, "price vector length mismatch");
  IndexTable table(cfg.num_users, cfg.num_servers, method);
  std::map<int, std::pair<SubproblemModel, double>> solved;  // group -> (model, gamma*)
  std::map<std::pair<int, int>, BisectionIndex> bisect;
  for (int n = 0; n < cfg.num_users; ++n) {
    const int g = cfg.group_of(n);
    auto it = solved.find(g);
    if (it == solved.end()) {
      auto model = SubproblemModel::from_config(cfg, g);
      double gamma = 0.0;
      if (method == IndexMethod::closed_form) {
        try {
          gamma = policy_iteration(model, nu).gamma_star;
        } catch (const Error&) {
          gamma = relative_value_iteration(model, nu).gamma_star;
        }
      }
      it = solved.emplace(g, std::pair{std::move(model), gamma}).first;
    }
    const auto& [model, gamma] = it->second;
    const MdpState s = to_mdp_state(states[static_cast<std::size_t>(n)], model);
    for (int m = 0; m < cfg.num_servers; ++m) {
      bool noop = false;
      if (method == IndexMethod::closed_form) {
        table.at(n, m) = index_closed_form(model, s, m, nu, gamma, &noop);
      } else {
        auto b = bisect.find({g, m});
        if (b == bisect.end()) b = bisect.emplace(std::pair{g, m}, BisectionIndex(model, nu, m)).first;
        table.at(n, m) = action_allowed(model, s, m) ? b->second.index(s) : 0.0;
        noop = closed_form_predecessor(model, m, nu).server == kNoOp;
      }
      table.no_pred[static_cast<std::size_t>(n) * cfg.num_servers + m] = noop ? 1 : 0;
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// property checks

std::vector<std::string> check_kernel(const ScenarioConfig& base, int delta_max, double tol) {
  base.validate();
  // Delta_max may sit below the minimum compute time of some groups here
  ScenarioConfig cfg = base;
  cfg.truncation = delta_max;
  std::vector<std::string> bad;
  auto report = [&](const std::string& s) {
    if (bad.size() < 64) bad.push_back(s);
  };
  int first_user = 0;
  for (int g = 0; g < static_cast<int>(cfg.groups.size()); ++g) {
    const auto model = SubproblemModel::from_config(cfg, g);
    const TruncatedStateSpace space(delta_max, model.num_blocks());
    for (int i = 0; i < space.size(); ++i) {
      const MdpState s = space.state(i);
      const int carrier = model.class_blocks ? model.classes[static_cast<std::size_t>(s.block)].servers.front() : 0;
      const UserState us = s.layer == 1 ? UserState{Idle{s.age}} : UserState{Computing{s.age, s.gen_age, carrier}};
      for (int a = -1; a < cfg.num_servers; ++a) {
        if (!action_allowed(model, s, a)) continue;
        const std::string where = "group " + std::to_string(g + 1) + " state " + std::to_string(i) + " action " +
                                  std::to_string(a);
        const auto user = successor_distribution(us, a < 0 ? Action::noop() : Action::offload(a), cfg, first_user);
        std::map<int, double> lhs, rhs;
        double total = 0.0;
        for (const auto& o : user) {
          total += o.prob;
          lhs[space.index_of(to_mdp_state(o.state, model))] += o.prob;
        }
        if (std::abs(total - 1.0) > tol) report(where + ": user kernel sums to " + fmt_num(total));
        double mdp_total = 0.0;
        for (const auto& [j, p] : mdp_successors(model, space, s, a)) {
          rhs[j] += p;
          mdp_total += p;
        }
        if (std::abs(mdp_total - 1.0) > tol) report(where + ": state kernel sums to " + fmt_num(mdp_total));
        for (const auto& [j, p] : lhs)
          if (std::abs(p - rhs[j]) > tol) report(where + ": kernels differ at successor " + std::to_string(j));
        for (const auto& [j, p] : rhs)
          if (std::abs(p - lhs[j]) > tol) report(where + ": kernels differ at successor " + std::to_string(j));
      }
    }
    first_user += cfg.groups[static_cast<std::size_t>(g)].count;
  }
  return bad;
}

namespace {

struct Instance {
  std::string label;
  SubproblemModel model;
  std::vector<double> costs;
};

// Ascending p with p_m - p_{m-1} <= p_m^2.
std::vector<double> step_limited_probs(RngStream& rng, int servers) {
  for (;;) {
    std::vector<double> p(static_cast<std::size_t>(servers));
    for (auto& x : p) x = 0.2 + 0.8 * rng.uniform();
    std::sort(p.begin(), p.end());
    bool ok = true;
    for (std::size_t m = 1; m < p.size(); ++m) ok = ok && p[m] - p[m - 1] <= p[m] * p[m];
    if (ok) return p;
  }
}

std::vector<Instance> random_instances(const CheckOptions& opts) {
  RngStream rng(opts.seed, "property-instances");
  std::vector<Instance> out;
  for (int k = 0; k < opts.random_instances; ++k) {
    const int servers = 1 + static_cast<int>(rng.below(3));
    const int e0 = static_cast<int>(rng.below(4));
    const int dmax = (opts.quick ? 18 : 24) + static_cast<int>(rng.below(opts.quick ? 6 : 16));
    auto p = step_limited_probs(rng, servers);
    std::vector<double> costs(static_cast<std::size_t>(servers));
    for (auto& c : costs) c = 4.0 * rng.uniform();
    out.push_back({"random " + std::to_string(k + 1), SubproblemModel::make(dmax, e0, p), costs});
  }
  return out;
}

std::vector<Instance> scenario_instances(const ScenarioConfig& cfg) {
  const std::vector<double> costs = cfg.initial_costs.empty()
                                        ? std::vector<double>(static_cast<std::size_t>(cfg.num_servers), 5.0)
                                        : cfg.initial_costs;
  std::vector<Instance> out;
  for (int g = 0; g < static_cast<int>(cfg.groups.size()); ++g)
    out.push_back({"group " + std::to_string(g + 1), SubproblemModel::from_config(cfg, g), costs});
  return out;
}

// Layer-2 and layer-1 samples spread over the ages a user actually visits.
std::vector<MdpState> division_samples(const SubproblemModel& model, int count) {
  std::vector<MdpState> out;
  const int top = std::max(2, model.delta_max * 3 / 4);
  for (int k = 0; k < count; ++k) {
    const int age = 1 + (k * (top - 1)) / std::max(1, count - 1);
    out.push_back({1, age, 0, 0});
    const int d = 1 + age / 2;
    if (d <= age) out.push_back({2, age, d, 0});
  }
  return out;
}

int structure_margin(const SubproblemModel& m) { return std::max(2, m.delta_max / 10); }

}  // namespace

std::vector<CheckItem> run_property_checks(const ScenarioConfig& cfg, const CheckOptions& opts) {
  cfg.validate();
  std::vector<CheckItem> items;
  {
    const auto t0 = std::chrono::steady_clock::now();
    CheckItem item{"kernel", true, "", 0.0};
    const auto bad = check_kernel(cfg, std::max(opts.kernel_truncation, 0) > 0 ? opts.kernel_truncation : cfg.truncation);
    item.ok = bad.empty();
    item.detail = bad.empty() ? "all distributions sum to one and agree" : bad.front();
    item.seconds = seconds_since(t0);
    items.push_back(item);
  }

  std::vector<Instance> instances = scenario_instances(cfg);
  for (auto& inst : random_instances(opts)) instances.push_back(std::move(inst));

  const char* names[] = {"mltt",         "value-monotonicity", "stage-cost",      "threshold-sandwich",
                         "perturbation-bounds", "indexability", "precise-division"};
  std::map<std::string, CheckItem> agg;
  for (const char* n : names) agg[n] = CheckItem{n, true, "", 0.0};
  std::map<std::string, int> failures;
  auto note = [&](const std::string& name, bool ok, const std::string& label, const std::string& detail,
                  double secs) {
    auto& it = agg[name];
    it.seconds += secs;
    if (!ok) {
      if (failures[name]++ == 0) it.detail = label + ": " + detail;
      it.ok = false;
    }
  };

  for (const auto& inst : instances) {
    auto t0 = std::chrono::steady_clock::now();
    const auto sol = relative_value_iteration(inst.model, inst.costs);
    const int margin = structure_margin(inst.model);
    const double solve_secs = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    const auto mltt = verify_mltt(sol, margin);
    note("mltt", mltt.ok, inst.label, mltt.violations.empty() ? "" : mltt.violations.front(), solve_secs + seconds_since(t0));

    t0 = std::chrono::steady_clock::now();
    const auto mono = verify_value_monotonicity(sol, margin);
    note("value-monotonicity", mono.ok, inst.label, mono.violations.empty() ? "" : mono.violations.front(), seconds_since(t0));

    t0 = std::chrono::steady_clock::now();
    const auto stage = verify_stage_cost_identity(sol);
    note("stage-cost", stage.ok, inst.label, stage.violations.empty() ? "" : stage.violations.front(), seconds_since(t0));

    t0 = std::chrono::steady_clock::now();
    const auto sandwich = verify_threshold_sandwich(sol);
    note("threshold-sandwich", sandwich.ok, inst.label, sandwich.violations.empty() ? "" : sandwich.violations.front(),
         seconds_since(t0));

    const auto reps = class_representatives(inst.model, inst.costs);
    for (int m : reps) {
      t0 = std::chrono::steady_clock::now();
      const auto pert = verify_perturbation_bounds(inst.model, inst.costs, 0.5, m, {}, margin);
      note("perturbation-bounds", pert.ok, inst.label + " server " + std::to_string(m + 1),
           pert.violations.empty() ? "" : pert.violations.front(), seconds_since(t0));

      t0 = std::chrono::steady_clock::now();
      std::vector<double> grid{0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0};
      if (!opts.quick) grid.insert(grid.end(), {64.0, 128.0});
      grid.push_back(1e6);
      const auto sweep = indexability_sweep(inst.model, m, inst.costs, grid);
      const bool ok = sweep.monotone_layer1 && sweep.monotone_layer2;
      note("indexability", ok, inst.label + " server " + std::to_string(m + 1),
           sweep.violations.empty() ? "passive sets not monotone" : sweep.violations.front(), seconds_since(t0));
    }

    t0 = std::chrono::steady_clock::now();
    const auto div = precise_division_check(inst.model, inst.costs, division_samples(inst.model, opts.quick ? 3 : 5));
    note("precise-division", div.ok, inst.label, div.violations.empty() ? "" : div.violations.front(), seconds_since(t0));
  }
  for (const char* n : names) {
    auto& it = agg[n];
    const int f = failures[n];
    it.detail = f == 0 ? std::to_string(instances.size()) + " instances clean"
                       : std::to_string(f) + " failing instance(s); first: " + it.detail;
    items.push_back(it);
  }

  {
    const auto t0 = std::chrono::steady_clock::now();
    ScenarioConfig small;
    small.num_users = 2;
    small.num_servers = 1;
    small.horizon = 1;
    small.truncation = 20;
    small.groups = {{2, 2, {0.6}}};
    CheckItem item{"fluid-residuals", true, "", 0.0};
    try {
      const auto f = fluid_lp(small);
      item.ok = f.residual < 1e-8;
      item.detail = "max residual " + fmt_num(f.residual);
    } catch (const std::exception& e) {
      item.ok = false;
      item.detail = e.what();
    }
    item.seconds = seconds_since(t0);
    items.push_back(item);
  }
  return items;
}

}  // namespace aoinest

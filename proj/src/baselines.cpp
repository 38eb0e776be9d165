// SPDX-License-Identifier: Apache-2.0
#include "aoinest/baselines.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "aoinest/error.hpp"

namespace aoinest {

std::vector<int> servers_by_quality(const ScenarioConfig& cfg) {
  std::vector<double> mean(static_cast<std::size_t>(cfg.num_servers), 0.0);
  double users = 0.0;
  for (const auto& g : cfg.groups) {
    users += g.count;
    for (int m = 0; m < cfg.num_servers; ++m) mean[static_cast<std::size_t>(m)] += g.count * g.success_prob[static_cast<std::size_t>(m)];
  }
  if (users > 0.0)
    for (auto& x : mean) x /= users;
  std::vector<int> order(static_cast<std::size_t>(cfg.num_servers));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return mean[static_cast<std::size_t>(a)] > mean[static_cast<std::size_t>(b)]; });
  return order;
}

namespace {

ActionList rank_and_assign(const std::vector<double>& weight, const ScenarioConfig& cfg) {
  std::vector<int> users(weight.size());
  std::iota(users.begin(), users.end(), 0);
  std::stable_sort(users.begin(), users.end(),
                   [&](int a, int b) { return weight[static_cast<std::size_t>(a)] > weight[static_cast<std::size_t>(b)]; });
  const auto servers = servers_by_quality(cfg);
  ActionList out(weight.size(), kNoOp);
  const std::size_t k = std::min(users.size(), servers.size());
  for (std::size_t i = 0; i < k; ++i) out[static_cast<std::size_t>(users[i])] = servers[i];
  return out;
}

double group_mean_prob(const UserGroup& g) {
  double s = 0.0;
  for (double p : g.success_prob) s += p;
  return g.success_prob.empty() ? 0.0 : s / static_cast<double>(g.success_prob.size());
}

void check_states(const std::vector<UserState>& states, const ScenarioConfig& cfg) {
  if (static_cast<int>(states.size()) != cfg.num_users)
    fail(ErrorCode::invalid_argument, "one state per user is required");
}

}  // namespace

ActionList mamp_step(const std::vector<UserState>& states, const ScenarioConfig& cfg) {
  check_states(states, cfg);
  std::vector<double> w;
  w.reserve(states.size());
  for (const auto& s : states) w.push_back(age_of(s));
  return rank_and_assign(w, cfg);
}

double marp_weight(const UserState& s, double success_prob) {
  const int age = age_of(s);
  const auto* c = std::get_if<Computing>(&s);
  const int gen = c ? c->gen_age : age;
  return age + (age - gen) / success_prob;
}

ActionList marp_step(const std::vector<UserState>& states, const ScenarioConfig& cfg) {
  check_states(states, cfg);
  std::vector<double> w;
  w.reserve(states.size());
  int n = 0;
  for (std::size_t g = 0; g < cfg.groups.size(); ++g) {
    const double p = group_mean_prob(cfg.groups[g]);
    for (int k = 0; k < cfg.groups[g].count; ++k, ++n) w.push_back(marp_weight(states[static_cast<std::size_t>(n)], p));
  }
  return rank_and_assign(w, cfg);
}

MdpState to_mdp_state(const UserState& s, const SubproblemModel& model) {
  if (const auto* idle = std::get_if<Idle>(&s)) return {1, idle->age, 0, 0};
  const auto& c = std::get<Computing>(s);
  const int block = model.class_blocks ? model.class_of_server[static_cast<std::size_t>(c.server)] : 0;
  return {2, c.age, c.gen_age, block};
}

// ---------------------------------------------------------------------------
// relaxed problem

namespace {

bool same_model(const SubproblemModel& a, const SubproblemModel& b) {
  return a.delta_max == b.delta_max && a.eligible_elapsed == b.eligible_elapsed &&
         a.success_prob == b.success_prob && a.class_blocks == b.class_blocks;
}

struct Families {
  std::vector<int> family_of_group;
  std::vector<SubproblemModel> models;
  std::vector<double> users;  // users per family
};

Families make_families(const ScenarioConfig& cfg) {
  Families f;
  for (int g = 0; g < static_cast<int>(cfg.groups.size()); ++g) {
    auto model = SubproblemModel::from_config(cfg, g);
    int found = -1;
    for (std::size_t i = 0; i < f.models.size(); ++i)
      if (same_model(f.models[i], model)) found = static_cast<int>(i);
    if (found < 0) {
      found = static_cast<int>(f.models.size());
      f.models.push_back(std::move(model));
      f.users.push_back(0.0);
    }
    f.family_of_group.push_back(found);
    f.users[static_cast<std::size_t>(found)] += cfg.groups[static_cast<std::size_t>(g)].count;
  }
  return f;
}

// Solves every family at nu, in parallel when there is more than one.
// Policy iteration, falling back to value iteration on a multichain evaluation.
std::vector<SubproblemSolution> solve_families(const Families& f, const std::vector<double>& nu,
                                               const PolicyIterationOptions& solver,
                                               const std::vector<SubproblemSolution>* warm) {
  std::vector<SubproblemSolution> out(f.models.size());
  std::vector<std::string> errors(f.models.size());
  auto solve = [&](std::size_t i) {
    try {
      PolicyIterationOptions o = solver;
      if (warm && i < warm->size()) o.warm_policy = &(*warm)[i].policy;
      try {
        out[i] = policy_iteration(f.models[i], nu, o);
      } catch (const Error&) {
        out[i] = relative_value_iteration(f.models[i], nu);
      }
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  };
  const int workers = std::min<int>(worker_budget(), static_cast<int>(f.models.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < out.size(); ++i) solve(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < out.size(); i = next++) solve(i);
      });
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (!e.empty()) fail(ErrorCode::not_converged, "relaxed subproblem: " + e);
  return out;
}

// Expected per-slot use of each server by one user; the use of a class is
// shared equally by its servers of minimal cost.
std::vector<double> server_usage(const SubproblemSolution& sol) {
  const auto occ = policy_occupancy(sol);
  const auto& model = sol.model;
  std::vector<double> usage(static_cast<std::size_t>(model.num_servers()), 0.0);
  for (const auto& cls : model.classes) {
    double total = 0.0, lo = INFINITY;
    for (int s : cls.servers) {
      total += occ.server_usage[static_cast<std::size_t>(s)];
      lo = std::min(lo, sol.costs[static_cast<std::size_t>(s)]);
    }
    std::vector<int> tied;
    for (int s : cls.servers)
      if (sol.costs[static_cast<std::size_t>(s)] <= lo + 1e-12) tied.push_back(s);
    for (int s : tied) usage[static_cast<std::size_t>(s)] = total / static_cast<double>(tied.size());
  }
  return usage;
}

double dual_of(const Families& f, const std::vector<SubproblemSolution>& sols, const std::vector<double>& nu) {
  double v = 0.0;
  for (std::size_t i = 0; i < sols.size(); ++i) v += f.users[i] * sols[i].gamma_star;
  for (double x : nu) v -= x;
  return v;
}

}  // namespace

double relaxed_dual_value(const ScenarioConfig& cfg, const std::vector<double>& nu,
                          const PolicyIterationOptions& solver) {
  cfg.validate();
  if (static_cast<int>(nu.size()) != cfg.num_servers) fail(ErrorCode::invalid_argument, "price vector length mismatch");
  for (double x : nu)
    if (x < 0.0) fail(ErrorCode::invalid_argument, "prices must be non-negative");
  const auto f = make_families(cfg);
  return dual_of(f, solve_families(f, nu, solver, nullptr), nu);
}

RelaxedSolution relaxed_solution_at(const ScenarioConfig& cfg, const std::vector<double>& nu,
                                    const PolicyIterationOptions& solver) {
  cfg.validate();
  if (static_cast<int>(nu.size()) != cfg.num_servers) fail(ErrorCode::invalid_argument, "price vector length mismatch");
  for (double x : nu)
    if (!(x >= 0.0)) fail(ErrorCode::invalid_argument, "prices must be non-negative");
  const auto f = make_families(cfg);
  RelaxedSolution out;
  out.family_of_group = f.family_of_group;
  out.nu = nu;
  out.families = solve_families(f, nu, solver, nullptr);
  for (const auto& sol : out.families) out.usage.push_back(server_usage(sol));
  out.dual_value = dual_of(f, out.families, nu);
  out.history = {out.dual_value};
  out.bound = cfg.num_users > 0 ? out.dual_value / cfg.num_users : 0.0;
  return out;
}

RelaxedSolution relaxed_lower_bound(const ScenarioConfig& cfg, const AscentOptions& opts) {
  cfg.validate();
  if (opts.iters < 1) fail(ErrorCode::invalid_argument, "ascent needs at least one iteration");
  if (!(opts.step_scale > 0.0) || !(opts.step_offset > 0.0))
    fail(ErrorCode::invalid_argument, "step schedule must be positive");
  const auto f = make_families(cfg);
  const std::size_t n_servers = static_cast<std::size_t>(cfg.num_servers);

  RelaxedSolution best;
  best.family_of_group = f.family_of_group;
  best.dual_value = -INFINITY;
  std::vector<double> nu(n_servers, 0.0);
  std::vector<SubproblemSolution> sols;
  int since_gain = 0;
  double units = 1.0;
  for (int it = 0; it < opts.iters; ++it) {
    sols = solve_families(f, nu, opts.solver, sols.empty() ? nullptr : &sols);
    std::vector<std::vector<double>> usage;
    std::vector<double> grad(n_servers, -1.0);
    for (std::size_t i = 0; i < sols.size(); ++i) {
      usage.push_back(server_usage(sols[i]));
      for (std::size_t m = 0; m < n_servers; ++m) grad[m] += f.users[i] * usage.back()[m];
    }
    const double value = dual_of(f, sols, nu);
    best.history.push_back(value);
    best.iters = it + 1;
    if (value > best.dual_value + 1e-9 * std::max(1.0, std::abs(value))) {
      best.dual_value = value;
      best.nu = nu;
      best.families = sols;
      best.usage = usage;
      since_gain = 0;
    } else {
      ++since_gain;
    }
    // a feasible relaxed policy with complementary slackness is optimal
    bool stationary = true;
    for (std::size_t m = 0; m < n_servers; ++m) {
      if (grad[m] > 1e-9 || (nu[m] > 0.0 && grad[m] < -1e-9)) stationary = false;
    }
    if (stationary) {
      best.converged = true;
      if (value >= best.dual_value) {
        best.dual_value = value;
        best.nu = nu;
        best.families = sols;
        best.usage = usage;
      }
      break;
    }
    if (it == 0) units = opts.price_units ? std::max(1.0, value / cfg.num_servers) : 1.0;
    const double step = opts.step_scale * units / (opts.step_offset + it);
    for (std::size_t m = 0; m < n_servers; ++m) nu[m] = std::max(0.0, nu[m] + step * grad[m]);
  }
  if (!best.converged) best.converged = since_gain >= std::max(10, opts.iters / 4);
  best.bound = cfg.num_users > 0 ? best.dual_value / cfg.num_users : 0.0;
  return best;
}

// ---------------------------------------------------------------------------
// relaxed replays

namespace {

ActionList relaxed_proposals(const std::vector<UserState>& states, const RelaxedSolution& relaxed,
                             const ScenarioConfig& cfg) {
  check_states(states, cfg);
  ActionList out(states.size(), kNoOp);
  int n = 0;
  for (int g = 0; g < static_cast<int>(cfg.groups.size()); ++g) {
    const auto& sol = relaxed.solution_for_group(g);
    for (int k = 0; k < cfg.groups[static_cast<std::size_t>(g)].count; ++k, ++n) {
      const MdpState s = to_mdp_state(states[static_cast<std::size_t>(n)], sol.model);
      out[static_cast<std::size_t>(n)] = sol.policy[static_cast<std::size_t>(sol.space.index_of(s))];
    }
  }
  return out;
}

}  // namespace

ActionList relaxed_replay_step(const std::vector<UserState>& states, const RelaxedSolution& relaxed,
                               const ScenarioConfig& cfg) {
  return relaxed_proposals(states, relaxed, cfg);
}

ActionList rrp_step(const std::vector<UserState>& states, const RelaxedSolution& relaxed,
                    const ScenarioConfig& cfg, RngStream& rng) {
  const ActionList proposal = relaxed_proposals(states, relaxed, cfg);
  std::vector<int> order(states.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i)))]);

  std::vector<int> group_of(states.size());
  {
    std::size_t n = 0;
    for (int g = 0; g < static_cast<int>(cfg.groups.size()); ++g)
      for (int k = 0; k < cfg.groups[static_cast<std::size_t>(g)].count; ++k) group_of[n++] = g;
  }
  std::vector<char> busy(static_cast<std::size_t>(cfg.num_servers), 0);
  ActionList out(states.size(), kNoOp);
  for (int n : order) {
    const int want = proposal[static_cast<std::size_t>(n)];
    if (want == kNoOp) continue;
    int got = kNoOp;
    if (!busy[static_cast<std::size_t>(want)]) {
      got = want;
    } else {
      const auto& model = relaxed.solution_for_group(group_of[static_cast<std::size_t>(n)]).model;
      const int cls = model.class_of_server[static_cast<std::size_t>(want)];
      for (int s : model.classes[static_cast<std::size_t>(cls)].servers)
        if (!busy[static_cast<std::size_t>(s)]) {
          got = s;
          break;
        }
    }
    if (got != kNoOp) {
      busy[static_cast<std::size_t>(got)] = 1;
      out[static_cast<std::size_t>(n)] = got;
    }
  }
  return out;
}

}  // namespace aoinest

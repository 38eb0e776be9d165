// SPDX-License-Identifier: Apache-2.0
#include "aoinest/scheduler.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>
#include <tuple>

#include "aoinest/baselines.hpp"
#include "aoinest/error.hpp"

namespace aoinest {

DualState dual_cost_update(const DualState& state, const std::vector<double>& duals) {
  if (duals.size() != state.nu.size()) fail(ErrorCode::invalid_argument, "dual vector length mismatch");
  DualState out = state;
  for (std::size_t m = 0; m < duals.size(); ++m) {
    if (duals[m] < 0.0) fail(ErrorCode::invalid_argument, "duals must be non-negative");
    out.nu[m] = (1.0 - state.step) * state.nu[m] + state.step * duals[m];
  }
  return out;
}

// ---------------------------------------------------------------------------
// gamma cache

namespace {

constexpr std::size_t kWarmStore = 24;

SubproblemModel reduced_model(const SubproblemModel& m) {
  std::vector<double> p;
  for (const auto& c : m.classes) p.push_back(c.p);
  return SubproblemModel::make(m.delta_max, m.eligible_elapsed, std::move(p), !m.class_blocks);
}

bool same_structure(const SubproblemModel& a, const SubproblemModel& b) {
  return a.delta_max == b.delta_max && a.eligible_elapsed == b.eligible_elapsed &&
         a.success_prob == b.success_prob && a.class_blocks == b.class_blocks;
}

}  // namespace

GammaCache::GammaCache(double grid, PolicyIterationOptions opts) : grid_(grid), opts_(opts) {
  if (!(grid > 0.0)) fail(ErrorCode::invalid_argument, "cache grid must be positive");
  opts_.warm_policy = nullptr;
}

int GammaCache::family_of(const SubproblemModel& model) {
  auto reduced = reduced_model(model);
  std::lock_guard<std::mutex> lock(mu_);
  for (std::size_t f = 0; f < families_.size(); ++f)
    if (same_structure(families_[f].reduced, reduced)) return static_cast<int>(f);
  families_.push_back(Family{std::move(reduced), {}, {}, {}});
  return static_cast<int>(families_.size()) - 1;
}

std::vector<int> GammaCache::families_of(const ScenarioConfig& cfg) {
  std::vector<int> out;
  for (int g = 0; g < static_cast<int>(cfg.groups.size()); ++g)
    out.push_back(family_of(SubproblemModel::from_config(cfg, g)));
  return out;
}

int GammaCache::solves() const {
  std::lock_guard<std::mutex> lock(mu_);
  return solves_;
}

double GammaCache::gamma(int family, const SubproblemModel& model, const std::vector<double>& nu) {
  const auto rep = class_representatives(model, nu);
  const std::size_t d = rep.size();
  std::vector<int> lo(d);
  std::vector<double> frac(d);
  for (std::size_t c = 0; c < d; ++c) {
    const double x = nu[static_cast<std::size_t>(rep[c])] / grid_;
    lo[c] = static_cast<int>(std::floor(x));
    frac[c] = x - lo[c];
  }
  std::lock_guard<std::mutex> lock(mu_);
  if (family < 0 || family >= static_cast<int>(families_.size()))
    fail(ErrorCode::invalid_argument, "unknown subproblem family");
  Family& f = families_[static_cast<std::size_t>(family)];
  if (d != f.reduced.classes.size()) fail(ErrorCode::invalid_argument, "model does not match its family");
  // multilinear interpolation over the 2^d surrounding grid points; corners
  // with zero weight are skipped so on-grid queries cost one lookup
  double value = 0.0;
  std::vector<int> key(d);
  for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
    double w = 1.0;
    for (std::size_t c = 0; c < d; ++c) {
      const bool up = (corner >> c) & 1U;
      key[c] = lo[c] + (up ? 1 : 0);
      w *= up ? frac[c] : 1.0 - frac[c];
    }
    if (w == 0.0) continue;
    auto it = f.gamma.find(key);
    value += w * (it != f.gamma.end() ? it->second : solve_key(f, key));
  }
  return value;
}

double GammaCache::solve_key(Family& f, const std::vector<int>& key) {
  std::vector<double> costs(key.size());
  for (std::size_t c = 0; c < key.size(); ++c) costs[c] = key[c] * grid_;
  // warm start from the closest stored policy
  const std::vector<int>* warm = nullptr;
  long best = 0;
  for (const auto& [k, pol] : f.policies) {
    long dist = 0;
    for (std::size_t c = 0; c < k.size(); ++c) dist += std::labs(static_cast<long>(k[c]) - key[c]);
    if (!warm || dist < best) {
      warm = &pol;
      best = dist;
    }
  }
  PolicyIterationOptions o = opts_;
  o.warm_policy = warm;
  SubproblemSolution sol;
  try {
    sol = policy_iteration(f.reduced, costs, o);
  } catch (const Error&) {
    sol = relative_value_iteration(f.reduced, costs);
  }
  ++solves_;
  f.gamma[key] = sol.gamma_star;
  f.policies[key] = std::move(sol.policy);
  f.recent.push_back(key);
  while (f.recent.size() > kWarmStore) {
    f.policies.erase(f.recent.front());
    f.recent.pop_front();
  }
  return sol.gamma_star;
}

// ---------------------------------------------------------------------------
// policy ids

PolicyId parse_policy(std::string_view name) {
  if (name == "nested") return PolicyId::nested;
  if (name == "mamp") return PolicyId::mamp;
  if (name == "marp") return PolicyId::marp;
  if (name == "rrp") return PolicyId::rrp;
  if (name == "lower-bound-replay") return PolicyId::lower_bound_replay;
  fail(ErrorCode::invalid_argument, "unknown policy '" + std::string(name) +
                                        "' (expected nested, mamp, marp, rrp or lower-bound-replay)");
}

const char* to_string(PolicyId p) {
  switch (p) {
    case PolicyId::nested: return "nested";
    case PolicyId::mamp: return "mamp";
    case PolicyId::marp: return "marp";
    case PolicyId::rrp: return "rrp";
    case PolicyId::lower_bound_replay: return "lower-bound-replay";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// one nested-index slot

bool indices_separable(const ScenarioConfig& cfg) {
  if (cfg.groups.empty()) return false;
  const auto first = SubproblemModel::from_config(cfg, 0);
  if (first.class_blocks) return false;
  for (int g = 1; g < static_cast<int>(cfg.groups.size()); ++g) {
    const auto m = SubproblemModel::from_config(cfg, g);
    if (m.class_blocks || m.class_of_server != first.class_of_server) return false;
  }
  return true;
}

namespace {

struct NestedContext {
  std::vector<int> group_of_user;
  std::vector<SubproblemModel> models;  // per group
  std::vector<int> family;              // per group, when a cache is attached
  bool separable = false;
};

NestedContext make_context(const ScenarioConfig& cfg, GammaCache* cache) {
  NestedContext ctx;
  ctx.group_of_user.reserve(static_cast<std::size_t>(cfg.num_users));
  for (int g = 0; g < static_cast<int>(cfg.groups.size()); ++g) {
    for (int k = 0; k < cfg.groups[static_cast<std::size_t>(g)].count; ++k) ctx.group_of_user.push_back(g);
    ctx.models.push_back(SubproblemModel::from_config(cfg, g));
    if (cache) ctx.family.push_back(cache->family_of(ctx.models.back()));
  }
  ctx.separable = indices_separable(cfg);
  return ctx;
}

NestedStep nested_step_impl(const std::vector<UserState>& states, const DualState& dual, GammaCache& cache,
                            const ScenarioConfig& cfg, const NestedContext& ctx, bool want_indices) {
  const int n_users = cfg.num_users;
  const int n_servers = cfg.num_servers;
  std::vector<double> gamma(cfg.groups.size());
  for (std::size_t g = 0; g < cfg.groups.size(); ++g) gamma[g] = cache.gamma(ctx.family[g], ctx.models[g], dual.nu);

  NestedStep out;
  if (want_indices) out.indices = IndexTable(n_users, n_servers, IndexMethod::closed_form);
  if (ctx.separable) {
    const auto& model = ctx.models[0];
    std::vector<double> server_term(static_cast<std::size_t>(n_servers));
    for (int m = 0; m < n_servers; ++m) server_term[static_cast<std::size_t>(m)] = closed_form_predecessor(model, m, dual.nu).cost;
    std::vector<double> user_term(static_cast<std::size_t>(n_users));
    for (int n = 0; n < n_users; ++n)
      user_term[static_cast<std::size_t>(n)] = age_of(states[static_cast<std::size_t>(n)]) -
                                               gamma[static_cast<std::size_t>(ctx.group_of_user[static_cast<std::size_t>(n)])];
    out.assignment = separable_assignment(user_term, server_term);
    if (want_indices)
      for (int n = 0; n < n_users; ++n)
        for (int m = 0; m < n_servers; ++m) {
          out.indices.at(n, m) = std::max(0.0, user_term[static_cast<std::size_t>(n)] + server_term[static_cast<std::size_t>(m)]);
          out.indices.no_pred[static_cast<std::size_t>(n) * n_servers + m] =
              closed_form_predecessor(model, m, dual.nu).server == kNoOp;
        }
  } else {
    IndexTable table(n_users, n_servers, IndexMethod::closed_form);
    for (int n = 0; n < n_users; ++n) {
      const int g = ctx.group_of_user[static_cast<std::size_t>(n)];
      const auto& model = ctx.models[static_cast<std::size_t>(g)];
      const MdpState s = to_mdp_state(states[static_cast<std::size_t>(n)], model);
      for (int m = 0; m < n_servers; ++m) {
        bool noop = false;
        table.at(n, m) = index_closed_form(model, s, m, dual.nu, gamma[static_cast<std::size_t>(g)], &noop);
        table.no_pred[static_cast<std::size_t>(n) * n_servers + m] = noop;
      }
    }
    out.assignment = max_weight_assignment(table.values, n_users, n_servers);
    if (want_indices) out.indices = std::move(table);
  }
  out.actions.assign(static_cast<std::size_t>(n_users), kNoOp);
  for (int n = 0; n < n_users; ++n) out.actions[static_cast<std::size_t>(n)] = out.assignment.user_server[static_cast<std::size_t>(n)];
  out.dual = dual_cost_update(dual, out.assignment.server_duals);
  return out;
}

}  // namespace

NestedStep nested_index_policy_step(const std::vector<UserState>& states, const DualState& dual,
                                    GammaCache& cache, const ScenarioConfig& cfg, bool want_indices) {
  if (static_cast<int>(states.size()) != cfg.num_users)
    fail(ErrorCode::invalid_argument, "one state per user is required");
  return nested_step_impl(states, dual, cache, cfg, make_context(cfg, &cache), want_indices);
}

// ---------------------------------------------------------------------------
// episodes

int worker_budget(int requested) {
  int budget = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
  if (budget <= 0) budget = 1;
  if (const char* env = std::getenv("AOI_NEST_WORKERS")) {
    const int cap = std::atoi(env);
    if (cap > 0) budget = std::min(budget, cap);
  }
  return budget;
}

std::pair<double, double> mean_and_stderr(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double var = ss / static_cast<double>(xs.size() - 1);
  return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

namespace {

std::uint64_t stream_seed(std::uint64_t base, std::uint64_t seed) {
  return base ^ (seed * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
}

SeedMetrics simulate_seed(const ScenarioConfig& cfg, PolicyId policy, std::uint64_t seed,
                          const SimulationOptions& opts, GammaCache* cache, const RelaxedSolution* relaxed,
                          const NestedContext& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  const int n_users = cfg.num_users;
  const int n_servers = cfg.num_servers;
  const int horizon = cfg.horizon;
  RngStream trans(stream_seed(cfg.rng_seed, seed), "transitions");
  RngStream pick(stream_seed(cfg.rng_seed, seed), "rrp-selection");

  std::vector<UserState> states(static_cast<std::size_t>(n_users), Idle{1});
  std::vector<int> eligible(cfg.groups.size());
  for (std::size_t g = 0; g < cfg.groups.size(); ++g) eligible[g] = cfg.first_eligible_elapsed(static_cast<int>(g));
  DualState dual{cfg.costs_or_zero(), 1.0 / cfg.smoothing};

  SeedMetrics out;
  out.seed = seed;
  const int burn = static_cast<int>(std::floor(opts.burn_in * horizon));
  const int tail_from = std::max(0, horizon - opts.tail_window);
  std::vector<double> tail_sum(static_cast<std::size_t>(n_servers), 0.0), tail_sq(static_cast<std::size_t>(n_servers), 0.0);
  double age_sum = 0.0;
  if (opts.record_timeseries) {
    out.mean_age.reserve(static_cast<std::size_t>(horizon));
    out.nu.reserve(static_cast<std::size_t>(horizon));
    out.slot_completions.reserve(static_cast<std::size_t>(horizon));
  }

  for (int t = 0; t < horizon; ++t) {
    double ages = 0.0;
    for (const auto& s : states) ages += age_of(s);
    const double mean_age = ages / n_users;
    if (t >= burn) age_sum += mean_age;

    ActionList actions;
    switch (policy) {
      case PolicyId::nested: {
        auto step = nested_step_impl(states, dual, *cache, cfg, ctx, false);
        actions = std::move(step.actions);
        dual = std::move(step.dual);
        break;
      }
      case PolicyId::mamp: actions = mamp_step(states, cfg); break;
      case PolicyId::marp: actions = marp_step(states, cfg); break;
      case PolicyId::rrp: actions = rrp_step(states, *relaxed, cfg, pick); break;
      case PolicyId::lower_bound_replay: actions = relaxed_replay_step(states, *relaxed, cfg); break;
    }
#ifndef NDEBUG
    {
      std::vector<int> load(static_cast<std::size_t>(n_servers), 0);
      for (int a : actions)
        if (a >= 0) ++load[static_cast<std::size_t>(a)];
      if (policy != PolicyId::lower_bound_replay)
        for (int l : load)
          if (l > 1) fail(ErrorCode::numerical, "server assigned to more than one user");
    }
#endif

    int done = 0;
    for (int n = 0; n < n_users; ++n) {
      auto& s = states[static_cast<std::size_t>(n)];
      int act = actions[static_cast<std::size_t>(n)];
      const int g = ctx.group_of_user[static_cast<std::size_t>(n)];
      const auto* c = std::get_if<Computing>(&s);
      if (act >= 0 && c && !cfg.allow_server_switch &&
          cfg.groups[static_cast<std::size_t>(g)].success_prob[static_cast<std::size_t>(act)] !=
              cfg.groups[static_cast<std::size_t>(g)].success_prob[static_cast<std::size_t>(c->server)])
        act = kNoOp;  // a different class cannot take over the task
      if (act == kNoOp && c && cfg.on_unassigned == UnassignedRule::hold) {
        s = clamp_state(Computing{c->age + 1, c->gen_age, c->server}, cfg.truncation);
        continue;
      }
      const double p = act >= 0 ? cfg.groups[static_cast<std::size_t>(g)].success_prob[static_cast<std::size_t>(act)] : 1.0;
      s = advance_user(s, act, p, eligible[static_cast<std::size_t>(g)], cfg.truncation, trans);
      if (act >= 0 && std::holds_alternative<Idle>(s)) ++done;
    }
    out.completions += done;

    if (t >= tail_from)
      for (int m = 0; m < n_servers; ++m) {
        const double v = dual.nu[static_cast<std::size_t>(m)];
        tail_sum[static_cast<std::size_t>(m)] += v;
        tail_sq[static_cast<std::size_t>(m)] += v * v;
      }
    if (opts.record_timeseries) {
      out.mean_age.push_back(mean_age);
      out.nu.push_back(dual.nu);
      out.slot_completions.push_back(done);
    }
  }
  const int kept = horizon - burn;
  out.avg_aoi = kept > 0 ? age_sum / kept : 0.0;
  out.final_nu = dual.nu;
  const double w = static_cast<double>(horizon - tail_from);
  out.tail_nu_mean.resize(static_cast<std::size_t>(n_servers));
  out.tail_nu_sd.resize(static_cast<std::size_t>(n_servers));
  for (int m = 0; m < n_servers; ++m) {
    const double mean = tail_sum[static_cast<std::size_t>(m)] / w;
    out.tail_nu_mean[static_cast<std::size_t>(m)] = mean;
    out.tail_nu_sd[static_cast<std::size_t>(m)] = std::sqrt(std::max(0.0, tail_sq[static_cast<std::size_t>(m)] / w - mean * mean));
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace

EpisodeMetrics run_simulation(const ScenarioConfig& cfg, PolicyId policy, const std::vector<std::uint64_t>& seeds,
                              const SimulationOptions& opts) {
  if (seeds.empty()) fail(ErrorCode::invalid_argument, "seed list is empty");
  cfg.validate();
  std::unique_ptr<GammaCache> own_cache;
  GammaCache* cache = opts.cache;
  if (policy == PolicyId::nested && !cache) {
    own_cache = std::make_unique<GammaCache>();
    cache = own_cache.get();
  }
  const NestedContext ctx = make_context(cfg, cache);
  std::unique_ptr<RelaxedSolution> own_relaxed;
  const RelaxedSolution* relaxed = opts.relaxed;
  if ((policy == PolicyId::rrp || policy == PolicyId::lower_bound_replay) && !relaxed) {
    own_relaxed = std::make_unique<RelaxedSolution>(relaxed_lower_bound(cfg));
    relaxed = own_relaxed.get();
  }

  EpisodeMetrics out;
  out.policy = policy;
  out.scale = cfg.scale;
  out.seeds.resize(seeds.size());
  const int workers = std::min<int>(worker_budget(opts.workers), static_cast<int>(seeds.size()));
  std::atomic<std::size_t> next{0};
  std::vector<std::string> errors(seeds.size());
  auto work = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        out.seeds[i] = simulate_seed(cfg, policy, seeds[i], opts, cache, relaxed, ctx);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (!e.empty()) fail(ErrorCode::numerical, "simulation failed: " + e);
  std::vector<double> avgs;
  for (const auto& s : out.seeds) avgs.push_back(s.avg_aoi);
  std::tie(out.mean_aoi, out.std_error) = mean_and_stderr(avgs);
  return out;
}

}  // namespace aoinest

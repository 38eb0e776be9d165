// SPDX-License-Identifier: Apache-2.0
#include "aoinest/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "aoinest/csv.hpp"
#include "aoinest/error.hpp"
#include "mdp_internal.hpp"

namespace aoinest {

using detail::Kernel;

// ---------------------------------------------------------------------------
// model

SubproblemModel SubproblemModel::make(int delta_max, int eligible_elapsed,
                                      std::vector<double> success_prob, bool allow_server_switch) {
  if (success_prob.empty()) fail(ErrorCode::invalid_argument, "at least one server is required");
  if (delta_max < 2) fail(ErrorCode::invalid_argument, "truncation must be at least 2");
  if (eligible_elapsed < 0) fail(ErrorCode::invalid_argument, "eligible elapsed time must be >= 0");
  for (double p : success_prob)
    if (!(p > 0.0 && p <= 1.0)) fail(ErrorCode::invalid_argument, "success_prob must lie in (0,1]");

  SubproblemModel m;
  m.delta_max = delta_max;
  m.eligible_elapsed = eligible_elapsed;
  m.success_prob = std::move(success_prob);
  const int ns = m.num_servers();
  std::vector<int> order(static_cast<std::size_t>(ns));
  for (int i = 0; i < ns; ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return m.success_prob[static_cast<std::size_t>(a)] < m.success_prob[static_cast<std::size_t>(b)];
  });
  m.class_of_server.assign(static_cast<std::size_t>(ns), 0);
  for (int s : order) {
    const double p = m.success_prob[static_cast<std::size_t>(s)];
    if (m.classes.empty() || m.classes.back().p != p) m.classes.push_back({p, {}});
    m.classes.back().servers.push_back(s);
    m.class_of_server[static_cast<std::size_t>(s)] = m.num_classes() - 1;
  }
  for (auto& c : m.classes) std::sort(c.servers.begin(), c.servers.end());
  m.class_blocks = !allow_server_switch && m.num_classes() > 1;
  return m;
}

SubproblemModel SubproblemModel::from_config(const ScenarioConfig& cfg, int group) {
  if (group < 0 || group >= static_cast<int>(cfg.groups.size()))
    fail(ErrorCode::invalid_argument, "group index out of range");
  const auto& g = cfg.groups[static_cast<std::size_t>(group)];
  return make(cfg.truncation, cfg.first_eligible_elapsed(group), g.success_prob,
              cfg.allow_server_switch);
}

TruncatedStateSpace::TruncatedStateSpace(int delta_max, int blocks)
    : delta_max_(delta_max), blocks_(blocks), tri_(delta_max * (delta_max + 1) / 2) {
  if (delta_max < 1 || blocks < 1) fail(ErrorCode::invalid_argument, "bad state space dimensions");
}

MdpState TruncatedStateSpace::state(int index) const {
  if (index < 0 || index >= size()) fail(ErrorCode::invalid_argument, "state index out of range");
  if (index < delta_max_) return {1, index + 1, 0, 0};
  int r = index - delta_max_;
  const int block = r / tri_;
  r %= tri_;
  int age = static_cast<int>((1.0 + std::sqrt(1.0 + 8.0 * r)) / 2.0);
  while ((age - 1) * age / 2 > r) --age;
  while (age * (age + 1) / 2 <= r) ++age;
  return {2, age, r - (age - 1) * age / 2 + 1, block};
}

int ThresholdChain::action_at(int age) const {
  int a = initial_action;
  for (const auto& [at, act] : switches) {
    if (at > age) break;
    a = act;
  }
  return a;
}

std::optional<int> ThresholdChain::switch_age(int from, int to) const {
  int prev = initial_action;
  for (const auto& [at, act] : switches) {
    if (prev == from && act == to) return at;
    prev = act;
  }
  return std::nullopt;
}

const ThresholdChain* SubproblemSolution::chain(int layer, int block, int gen_age) const {
  for (const auto& c : thresholds)
    if (c.layer == layer && c.block == block && c.gen_age == gen_age) return &c;
  return nullptr;
}

std::vector<int> class_representatives(const SubproblemModel& model, const std::vector<double>& costs) {
  if (static_cast<int>(costs.size()) != model.num_servers())
    fail(ErrorCode::invalid_argument, "cost vector length does not match the number of servers");
  std::vector<int> rep;
  rep.reserve(model.classes.size());
  for (const auto& c : model.classes) {
    int best = c.servers.front();
    for (int s : c.servers)
      if (costs[static_cast<std::size_t>(s)] < costs[static_cast<std::size_t>(best)]) best = s;
    rep.push_back(best);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// kernel

namespace detail {

Kernel build_kernel(const SubproblemModel& model, const TruncatedStateSpace& space) {
  Kernel k;
  const int dm = model.delta_max;
  const int nk = model.num_classes();
  const int e0 = model.eligible_elapsed;
  k.n = space.size();
  k.classes = nk;
  k.noop.resize(static_cast<std::size_t>(k.n));
  k.cont.assign(static_cast<std::size_t>(k.n) * nk, -1);
  k.done.assign(static_cast<std::size_t>(k.n) * nk, -1);
  k.age.resize(static_cast<std::size_t>(k.n));
  for (const auto& c : model.classes) k.p.push_back(c.p);

  for (int a = 1; a <= dm; ++a) {
    const auto s = static_cast<std::size_t>(space.idle(a));
    k.age[s] = a;
    k.noop[s] = space.idle(std::min(a + 1, dm));
    const auto [a2, d2] = advance_computing(a, a, dm);
    for (int c = 0; c < nk; ++c) {
      const int block = model.class_blocks ? c : 0;
      k.cont[s * nk + c] = space.computing(a2, d2, block);
      if (e0 == 0) k.done[s * nk + c] = space.idle(1);
    }
  }
  for (int b = 0; b < space.blocks(); ++b) {
    for (int a = 1; a <= dm; ++a) {
      for (int d = 1; d <= a; ++d) {
        const auto s = static_cast<std::size_t>(space.computing(a, d, b));
        k.age[s] = a;
        k.noop[s] = space.idle(std::min(a + 1, dm));
        const auto [a2, d2] = advance_computing(a, d, dm);
        const int elapsed = a - d;
        for (int c = 0; c < nk; ++c) {
          if (model.class_blocks && c != b) continue;
          k.cont[s * nk + c] = space.computing(a2, d2, b);
          if (elapsed >= e0) k.done[s * nk + c] = space.idle(elapsed + 1);
        }
      }
    }
  }
  return k;
}

namespace {

// Q-values of NoOp and of each class (using the class's cheapest server).
inline double class_q(const Kernel& k, std::size_t s, int c, double class_cost,
                      const std::vector<double>& v) {
  const int cont = k.cont[s * k.classes + c];
  const int done = k.done[s * k.classes + c];
  const double p = k.p[static_cast<std::size_t>(c)];
  double ev = v[static_cast<std::size_t>(cont)];
  if (done >= 0) ev = p * v[static_cast<std::size_t>(done)] + (1.0 - p) * ev;
  return k.age[s] + class_cost + ev;
}

}  // namespace

std::vector<int> greedy_policy(const SubproblemModel& model, const Kernel& k,
                               const std::vector<double>& costs, const std::vector<double>& value,
                               double tie_tol) {
  const auto rep = class_representatives(model, costs);
  // classes visited in ascending order of their representative server
  std::vector<int> order(rep.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return rep[static_cast<std::size_t>(a)] < rep[static_cast<std::size_t>(b)];
  });
  std::vector<int> policy(static_cast<std::size_t>(k.n), kNoOp);
  for (int si = 0; si < k.n; ++si) {
    const auto s = static_cast<std::size_t>(si);
    double best = k.age[s] + value[static_cast<std::size_t>(k.noop[s])];
    int act = kNoOp;
    for (int c : order) {
      if (k.cont[s * k.classes + c] < 0) continue;
      const int server = rep[static_cast<std::size_t>(c)];
      const double q = class_q(k, s, c, costs[static_cast<std::size_t>(server)], value);
      if (q < best - tie_tol) {
        best = q;
        act = server;
      }
    }
    policy[s] = act;
  }
  return policy;
}

std::vector<ThresholdChain> extract_thresholds(const SubproblemModel& model,
                                               const TruncatedStateSpace& space,
                                               const std::vector<int>& policy) {
  std::vector<ThresholdChain> out;
  const int dm = model.delta_max;
  auto scan = [&](ThresholdChain c, auto index_of_age) {
    c.initial_action = policy[static_cast<std::size_t>(index_of_age(c.first_age))];
    int prev = c.initial_action;
    for (int a = c.first_age + 1; a <= dm; ++a) {
      const int act = policy[static_cast<std::size_t>(index_of_age(a))];
      if (act != prev) c.switches.emplace_back(a, act);
      prev = act;
    }
    out.push_back(std::move(c));
  };
  scan(ThresholdChain{1, 0, 0, 1, kNoOp, {}}, [&](int a) { return space.idle(a); });
  for (int b = 0; b < space.blocks(); ++b)
    for (int d = 1; d <= dm; ++d)
      scan(ThresholdChain{2, b, d, d, kNoOp, {}}, [&](int a) { return space.computing(a, d, b); });
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// relative value iteration

SubproblemSolution relative_value_iteration(const SubproblemModel& model,
                                            const std::vector<double>& costs,
                                            const RviOptions& opts) {
  if (!(opts.tol > 0.0)) fail(ErrorCode::invalid_argument, "tolerance must be positive");
  if (!(opts.damping > 0.0 && opts.damping <= 1.0))
    fail(ErrorCode::invalid_argument, "damping must lie in (0,1]");
  for (double c : costs)
    if (!(c >= 0.0) || !std::isfinite(c)) fail(ErrorCode::invalid_argument, "costs must be finite and >= 0");

  SubproblemSolution sol;
  sol.model = model;
  sol.costs = costs;
  sol.space = TruncatedStateSpace(model.delta_max, model.num_blocks());
  const Kernel k = detail::build_kernel(model, sol.space);
  const auto rep = class_representatives(model, costs);
  std::vector<double> class_cost(rep.size());
  for (std::size_t c = 0; c < rep.size(); ++c) class_cost[c] = costs[static_cast<std::size_t>(rep[c])];

  const auto n = static_cast<std::size_t>(k.n);
  std::vector<double> v(n, 0.0);
  if (opts.warm_start && opts.warm_start->size() == n) v = *opts.warm_start;
  std::vector<double> tv(n);
  const double theta = opts.damping;
  const int nk = k.classes;

  double span = std::numeric_limits<double>::infinity();
  double lo = 0.0, hi = 0.0;
  int it = 0;
  for (; it < opts.max_iters; ++it) {
    lo = std::numeric_limits<double>::infinity();
    hi = -lo;
    for (std::size_t s = 0; s < n; ++s) {
      double best = k.age[s] + v[static_cast<std::size_t>(k.noop[s])];
      const std::size_t row = s * static_cast<std::size_t>(nk);
      for (int c = 0; c < nk; ++c) {
        const int cont = k.cont[row + static_cast<std::size_t>(c)];
        if (cont < 0) continue;
        const int done = k.done[row + static_cast<std::size_t>(c)];
        double ev = v[static_cast<std::size_t>(cont)];
        if (done >= 0) {
          const double p = k.p[static_cast<std::size_t>(c)];
          ev += p * (v[static_cast<std::size_t>(done)] - ev);
        }
        const double q = k.age[s] + class_cost[static_cast<std::size_t>(c)] + ev;
        if (q < best) best = q;
      }
      tv[s] = best;
      const double d = best - v[s];
      if (d < lo) lo = d;
      if (d > hi) hi = d;
    }
    span = hi - lo;
    if (span < opts.tol) break;
    const double anchor = (1.0 - theta) * v[0] + theta * tv[0];
    for (std::size_t s = 0; s < n; ++s) v[s] = (1.0 - theta) * v[s] + theta * tv[s] - anchor;
  }
  if (!(span < opts.tol))
    fail(ErrorCode::not_converged, "relative value iteration did not converge in " +
                                       std::to_string(opts.max_iters) +
                                       " iterations (span " + std::to_string(span) + ")");
  sol.gamma_star = 0.5 * (lo + hi);
  sol.iterations = it + 1;
  sol.span = span;
  // Re-anchor exactly; Bellman differences are shift invariant.
  const double v0 = v[0];
  for (auto& x : v) x -= v0;
  sol.value = std::move(v);
  sol.policy = detail::greedy_policy(model, k, costs, sol.value, opts.tie_tol);
  sol.thresholds = detail::extract_thresholds(model, sol.space, sol.policy);

  // Truncation is suspect when layer 1 waits until the boundary before offloading.
  int first_offload = model.delta_max + 1;
  for (int a = 1; a <= model.delta_max; ++a)
    if (sol.policy[static_cast<std::size_t>(sol.space.idle(a))] != kNoOp) {
      first_offload = a;
      break;
    }
  sol.truncation_warning = first_offload >= model.delta_max - 1;
  return sol;
}

// ---------------------------------------------------------------------------
// action costs and passive sets

bool action_allowed(const SubproblemModel& model, const MdpState& s, int action) {
  if (action == kNoOp) return true;
  if (action < 0 || action >= model.num_servers()) return false;
  if (s.layer == 2 && model.class_blocks)
    return model.class_of_server[static_cast<std::size_t>(action)] == s.block;
  return true;
}

std::vector<std::pair<int, double>> mdp_successors(const SubproblemModel& model,
                                                   const TruncatedStateSpace& space,
                                                   const MdpState& s, int action) {
  const int dm = model.delta_max;
  if (action == kNoOp) return {{space.idle(std::min(s.age + 1, dm)), 1.0}};
  if (!action_allowed(model, s, action))
    fail(ErrorCode::invalid_argument, "action " + std::to_string(action) + " not allowed in state");
  const int c = model.class_of_server[static_cast<std::size_t>(action)];
  const int gen = s.layer == 1 ? s.age : s.gen_age;
  const int block = model.class_blocks ? c : 0;
  const auto [a2, d2] = detail::advance_computing(s.age, gen, dm);
  const int cont = space.computing(a2, d2, block);
  const int elapsed = s.age - gen;
  if (elapsed < model.eligible_elapsed) return {{cont, 1.0}};
  const double p = model.success_prob[static_cast<std::size_t>(action)];
  std::vector<std::pair<int, double>> out{{space.idle(elapsed + 1), p}};
  if (p < 1.0) out.emplace_back(cont, 1.0 - p);
  return out;
}

double action_cost_mu(const SubproblemSolution& sol, int state_index, int action) {
  const MdpState s = sol.space.state(state_index);
  double mu = s.age - sol.gamma_star;
  if (action != kNoOp) mu += sol.costs[static_cast<std::size_t>(action)];
  for (const auto& [next, prob] : mdp_successors(sol.model, sol.space, s, action))
    mu += prob * sol.value[static_cast<std::size_t>(next)];
  return mu;
}

PassiveSet passive_set(const SubproblemSolution& sol, int server, int layer, double tol) {
  if (server < 0 || server >= sol.model.num_servers())
    fail(ErrorCode::invalid_argument, "server index out of range");
  if (layer != 1 && layer != 2) fail(ErrorCode::invalid_argument, "layer must be 1 or 2");
  PassiveSet ps;
  ps.server = server;
  ps.layer = layer;
  ps.costs = sol.costs;
  const int begin = layer == 1 ? 0 : sol.space.delta_max();
  const int end = layer == 1 ? sol.space.delta_max() : sol.space.size();
  const int ns = sol.model.num_servers();
  for (int i = begin; i < end; ++i) {
    const MdpState s = sol.space.state(i);
    if (!action_allowed(sol.model, s, server)) {
      ps.members.push_back(i);
      continue;
    }
    const double mine = action_cost_mu(sol, i, server);
    double other = action_cost_mu(sol, i, kNoOp);
    for (int m = 0; m < ns && other > mine + tol; ++m)
      if (m != server && action_allowed(sol.model, s, m)) other = std::min(other, action_cost_mu(sol, i, m));
    if (other <= mine + tol) ps.members.push_back(i);
  }
  return ps;
}

IndexabilitySweep indexability_sweep(const SubproblemModel& model, int server,
                                     const std::vector<double>& base_costs,
                                     const std::vector<double>& grid, const RviOptions& opts) {
  if (server < 0 || server >= model.num_servers())
    fail(ErrorCode::invalid_argument, "server index out of range");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) fail(ErrorCode::invalid_argument, "grid must be strictly increasing");

  IndexabilitySweep out;
  const TruncatedStateSpace space(model.delta_max, model.num_blocks());
  out.layer1_size = space.layer_size(1);
  out.layer2_size = space.layer_size(2);
  for (std::size_t c = 1; c < model.classes.size(); ++c) {
    const double pm = model.classes[c].p;
    const double prev = model.classes[c - 1].p;
    if (pm - prev > pm * pm) out.step_condition = false;
  }

  std::vector<double> warm;
  RviOptions o = opts;
  for (double x : grid) {
    auto costs = base_costs;
    costs[static_cast<std::size_t>(server)] = x;
    o.warm_start = warm.empty() ? opts.warm_start : &warm;
    const auto sol = relative_value_iteration(model, costs, o);
    warm = sol.value;
    SweepPoint pt{x, static_cast<int>(passive_set(sol, server, 1).members.size()),
                  static_cast<int>(passive_set(sol, server, 2).members.size())};
    if (!out.points.empty()) {
      const auto& last = out.points.back();
      if (pt.passive_layer1 < last.passive_layer1) {
        out.monotone_layer1 = false;
        out.violations.push_back("layer 1 passive set shrinks between cost " + fmt_num(last.cost) +
                                 " and " + fmt_num(x));
      }
      if (pt.passive_layer2 < last.passive_layer2) {
        out.monotone_layer2 = false;
        out.violations.push_back("layer 2 passive set shrinks between cost " + fmt_num(last.cost) +
                                 " and " + fmt_num(x));
      }
    }
    out.points.push_back(pt);
  }
  return out;
}

}  // namespace aoinest

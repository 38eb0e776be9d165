// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "aoinest/csv.hpp"
#include "aoinest/error.hpp"
#include "aoinest/mdp.hpp"
#include "mdp_internal.hpp"

namespace aoinest {

namespace {

constexpr std::size_t kMaxReported = 64;

std::string describe(const MdpState& s) {
  if (s.layer == 1) return "Idle(" + std::to_string(s.age) + ")";
  std::string out = "Computing(" + std::to_string(s.age) + "," + std::to_string(s.gen_age);
  if (s.block) out += ",block " + std::to_string(s.block);
  return out + ")";
}

double quality(const SubproblemModel& m, int action) {
  return action == kNoOp ? 0.0 : m.success_prob[static_cast<std::size_t>(action)];
}

// Successor class index of `c` in the ordered classes, or -1.
int next_class(const SubproblemModel& m, int c) { return c + 1 < m.num_classes() ? c + 1 : -1; }

}  // namespace

void VerifyReport::violate(const std::string& what, double margin) {
  ok = false;
  if (violations.size() < kMaxReported) violations.push_back(what);
  worst_margin = std::min(worst_margin, margin);
}

MlttReport verify_mltt(const SubproblemSolution& sol, int margin) {
  MlttReport rep;
  const auto& m = sol.model;
  const auto& sp = sol.space;
  const int last = m.delta_max - margin;
  const double top = m.classes.back().p;

  // layer 1
  double prev_q = -1.0;
  int prev_age = 0;
  for (int a = 1; a <= last; ++a) {
    const int act = sol.policy[static_cast<std::size_t>(sp.idle(a))];
    const double q = quality(m, act);
    ++rep.checked;
    if (q < prev_q)
      rep.violate("layer 1: quality drops from Idle(" + std::to_string(prev_age) + ") to Idle(" +
                      std::to_string(a) + ")",
                  q - prev_q);
    prev_q = q;
    prev_age = a;
  }
  if (last >= 1) {
    const int act = sol.policy[static_cast<std::size_t>(sp.idle(last))];
    if (quality(m, act) != top)
      rep.violate("layer 1: best class not reached by Idle(" + std::to_string(last) + ")",
                  quality(m, act) - top);
  }

  // layer 2, per generation age; drops are tallied separately
  for (int b = 0; b < sp.blocks(); ++b) {
    for (int d = 1; d <= last; ++d) {
      double pq = -1.0;
      int pa = 0;
      for (int a = d; a <= last; ++a) {
        const int act = sol.policy[static_cast<std::size_t>(sp.computing(a, d, b))];
        ++rep.checked;
        if (act == kNoOp) {
          ++rep.drop_states;
          continue;
        }
        const double q = quality(m, act);
        if (q < pq)
          rep.violate("layer 2: quality drops from " + describe({2, pa, d, b}) + " to " +
                          describe({2, a, d, b}),
                      q - pq);
        pq = q;
        pa = a;
      }
    }
  }

  // replay thresholds
  for (const auto& c : sol.thresholds) {
    for (int a = c.first_age; a <= m.delta_max; ++a) {
      const int idx = c.layer == 1 ? sp.idle(a) : sp.computing(a, c.gen_age, c.block);
      if (c.action_at(a) != sol.policy[static_cast<std::size_t>(idx)]) {
        rep.replay_exact = false;
        rep.violate("threshold replay mismatch at " + describe(sp.state(idx)), 0.0);
      }
    }
  }
  return rep;
}

VerifyReport verify_value_monotonicity(const SubproblemSolution& sol, int margin, double tol) {
  VerifyReport rep;
  const auto& sp = sol.space;
  const int last = sol.model.delta_max - margin;
  const auto& v = sol.value;
  for (int b = 0; b < sp.blocks(); ++b) {
    for (int d = 1; d < last; ++d) {
      for (int a = d; a < last; ++a) {
        const double here = v[static_cast<std::size_t>(sp.computing(a, d, b))];
        const double next = v[static_cast<std::size_t>(sp.computing(a + 1, d, b))];
        ++rep.checked;
        if (next < here - tol)
          rep.violate("V decreases from " + describe({2, a, d, b}) + " to " + describe({2, a + 1, d, b}),
                      next - here);
        if (a - d >= 1) {
          const double g0 = here - v[static_cast<std::size_t>(sp.idle(a - d))];
          const double g1 = next - v[static_cast<std::size_t>(sp.idle(a + 1 - d))];
          ++rep.checked;
          if (g1 < g0 - tol)
            rep.violate("V(A,D) - V(Idle(A-D)) decreases at " + describe({2, a, d, b}), g1 - g0);
        }
      }
    }
  }
  return rep;
}

VerifyReport verify_stage_cost_identity(const SubproblemSolution& sol, double tol) {
  VerifyReport rep;
  const auto& m = sol.model;
  const auto& sp = sol.space;
  for (int b = 0; b < sp.blocks(); ++b) {
    for (int a = 1; a < m.delta_max; ++a) {
      for (int d = 1; d <= a; ++d) {
        if (a - d < m.eligible_elapsed) continue;
        const MdpState s{2, a, d, b};
        for (int srv = 0; srv < m.num_servers(); ++srv) {
          if (!action_allowed(m, s, srv)) continue;
          double next_age = 0.0;
          for (const auto& [idx, prob] : mdp_successors(m, sp, s, srv))
            next_age += prob * sp.state(idx).age;
          const double nu = sol.costs[static_cast<std::size_t>(srv)];
          const double expected = nu + next_age - 1.0;
          const double identity = nu + a - m.success_prob[static_cast<std::size_t>(srv)] * d;
          ++rep.checked;
          if (std::abs(expected - identity) > tol)
            rep.violate("stage cost identity fails at " + describe(s), -std::abs(expected - identity));
        }
      }
    }
  }
  return rep;
}

VerifyReport verify_perturbation_bounds(const SubproblemModel& model, const std::vector<double>& costs,
                                        double delta, int server, const RviOptions& opts, int margin) {
  if (delta < 0.0) fail(ErrorCode::invalid_argument, "perturbation must be non-negative");
  if (server < 0 || server >= model.num_servers())
    fail(ErrorCode::invalid_argument, "server index out of range");
  const auto base = relative_value_iteration(model, costs, opts);
  auto bumped_costs = costs;
  bumped_costs[static_cast<std::size_t>(server)] += delta;
  RviOptions o = opts;
  o.warm_start = &base.value;
  const auto bumped = relative_value_iteration(model, bumped_costs, o);

  VerifyReport rep;
  const auto& sp = base.space;
  const double tol = 1e-7;
  const int cls = model.class_of_server[static_cast<std::size_t>(server)];
  const double pm = model.success_prob[static_cast<std::size_t>(server)];
  const double upper = delta / (pm * pm);
  const int nc = next_class(model, cls);
  const double lower = nc >= 0 ? -delta / (model.classes[static_cast<std::size_t>(nc)].p *
                                            model.classes[static_cast<std::size_t>(nc)].p)
                               : 0.0;
  const int last = model.delta_max - margin;
  for (int b = 0; b < sp.blocks(); ++b) {
    for (int d = 1; d <= last; ++d) {
      // lower-bound domain starts where the chain switches from m's class to the next
      int lower_from = last + 1;
      if (nc >= 0) {
        const auto* ch = base.chain(2, b, d);
        int prev = ch->initial_action;
        for (const auto& [age, act] : ch->switches) {
          if (prev != kNoOp && act != kNoOp &&
              model.class_of_server[static_cast<std::size_t>(prev)] == cls &&
              model.class_of_server[static_cast<std::size_t>(act)] == nc) {
            lower_from = age;
            break;
          }
          prev = act;
        }
      }
      for (int a = d; a <= last; ++a) {
        const auto idx = static_cast<std::size_t>(sp.computing(a, d, b));
        const double diff = bumped.value[idx] - base.value[idx];
        ++rep.checked;
        if (diff > upper + tol)
          rep.violate("upper bound exceeded at " + describe({2, a, d, b}), upper - diff);
        if (a >= lower_from && diff < lower - tol)
          rep.violate("lower bound violated at " + describe({2, a, d, b}), diff - lower);
      }
    }
  }
  return rep;
}

VerifyReport verify_threshold_sandwich(const SubproblemSolution& sol, double tol) {
  VerifyReport rep;
  const auto& m = sol.model;
  const auto* ch = sol.chain(1, 0, 0);
  int prev = ch->initial_action;
  for (const auto& [age, act] : ch->switches) {
    const int from_class = prev == kNoOp ? -1 : m.class_of_server[static_cast<std::size_t>(prev)];
    const int to_class = act == kNoOp ? -1 : m.class_of_server[static_cast<std::size_t>(act)];
    if (act != kNoOp && to_class == from_class + 1) {
      const double nu_from = prev == kNoOp ? 0.0 : sol.costs[static_cast<std::size_t>(prev)];
      const double nu_to = sol.costs[static_cast<std::size_t>(act)];
      const double lo = nu_from - nu_to + age;
      ++rep.checked;
      if (sol.gamma_star < lo - tol)
        rep.violate("gamma* below sandwich at Idle(" + std::to_string(age) + ")", sol.gamma_star - lo);
      if (sol.gamma_star > lo + 1.0 + tol)
        rep.violate("gamma* above sandwich at Idle(" + std::to_string(age) + ")",
                    lo + 1.0 - sol.gamma_star);
    }
    prev = act;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// stationary occupancy
//
// Under a deterministic policy each state has at most one non-completing
// successor, so the chain between two completions is a fixed path. The
// stationary law follows from the embedded chain on the idle states entered by
// completion, plus the path occupancies.

namespace {

struct Step {
  int next = -1;     // successor when the slot does not complete
  int exit = -1;     // idle state entered on completion
  double q = 0.0;    // completion probability
};

struct Walk {
  std::vector<std::pair<int, double>> occupancy;  // state, expected visits
  std::vector<std::pair<int, double>> exits;      // idle state, probability
  bool trapped = false;
  std::vector<int> trap_cycle;
};

Walk walk_from(int start, const std::vector<Step>& steps, std::vector<int>& pos) {
  Walk w;
  std::vector<int> path;
  std::vector<double> surv;
  int s = start;
  double alive = 1.0;
  while (true) {
    pos[static_cast<std::size_t>(s)] = static_cast<int>(path.size());
    path.push_back(s);
    surv.push_back(alive);
    const Step& st = steps[static_cast<std::size_t>(s)];
    const int nxt = st.next;
    alive *= 1.0 - st.q;
    if (alive <= 0.0 || nxt < 0) break;
    const int seen = pos[static_cast<std::size_t>(nxt)];
    if (seen >= 0) {
      // cycle path[seen..]: every pass survives with probability alive / surv[seen]
      const double loop = alive / surv[static_cast<std::size_t>(seen)];
      if (1.0 - loop <= 1e-15) {
        w.trapped = true;
        w.trap_cycle.assign(path.begin() + seen, path.end());
      } else {
        const double factor = 1.0 / (1.0 - loop);
        for (std::size_t i = static_cast<std::size_t>(seen); i < surv.size(); ++i) surv[i] *= factor;
      }
      break;
    }
    s = nxt;
  }
  for (std::size_t i = 0; i < path.size(); ++i) {
    const Step& st = steps[static_cast<std::size_t>(path[i])];
    w.occupancy.emplace_back(path[i], surv[i]);
    if (st.q > 0.0) w.exits.emplace_back(st.exit, surv[i] * st.q);
  }
  for (int p : path) pos[static_cast<std::size_t>(p)] = -1;
  return w;
}

}  // namespace

PolicyOccupancy policy_occupancy(const SubproblemModel& model, const TruncatedStateSpace& space,
                                 const std::vector<int>& policy, const std::vector<double>& costs) {
  const int n = space.size();
  if (static_cast<int>(policy.size()) != n)
    fail(ErrorCode::invalid_argument, "policy length does not match the state space");
  std::vector<Step> steps(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const MdpState s = space.state(i);
    const int act = policy[static_cast<std::size_t>(i)];
    Step st;
    const auto succ = mdp_successors(model, space, s, act);
    const int gen = s.layer == 1 ? s.age : s.gen_age;
    if (act != kNoOp && s.age - gen >= model.eligible_elapsed) {
      // completion branch first, continuation (if any) second
      st.exit = succ[0].first;
      st.q = succ[0].second;
      if (succ.size() > 1) st.next = succ[1].first;
    } else {
      st.next = succ[0].first;
    }
    steps[static_cast<std::size_t>(i)] = st;
  }

  // embedded chain over entry points reachable from Idle(1)
  std::vector<int> pos(static_cast<std::size_t>(n), -1);
  std::vector<int> node_of(static_cast<std::size_t>(n) + 1, -1);
  std::vector<int> entries;
  std::vector<Walk> walks;
  auto add_entry = [&](int s) {
    if (node_of[static_cast<std::size_t>(s)] >= 0) return;
    node_of[static_cast<std::size_t>(s)] = static_cast<int>(entries.size());
    entries.push_back(s);
  };
  add_entry(space.idle(1));
  for (std::size_t e = 0; e < entries.size(); ++e) {
    walks.push_back(walk_from(entries[e], steps, pos));
    for (const auto& [target, prob] : walks.back().exits) add_entry(target);
  }
  const auto r = static_cast<Eigen::Index>(entries.size());
  Eigen::MatrixXd kmat = Eigen::MatrixXd::Zero(r, r);
  for (Eigen::Index e = 0; e < r; ++e) {
    const Walk& w = walks[static_cast<std::size_t>(e)];
    double total = 0.0;
    for (const auto& [target, prob] : w.exits) {
      kmat(e, node_of[static_cast<std::size_t>(target)]) += prob;
      total += prob;
    }
    if (w.trapped || total < 1.0 - 1e-12) kmat(e, e) += 1.0 - total;  // absorbing remainder
  }
  // pi (K - I) = 0, sum pi = 1: replace one equation by the normalisation
  Eigen::MatrixXd a = kmat.transpose() - Eigen::MatrixXd::Identity(r, r);
  a.row(r - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(r);
  rhs(r - 1) = 1.0;
  Eigen::VectorXd pi = a.fullPivLu().solve(rhs);
  const bool bad = !pi.allFinite() || pi.minCoeff() < -1e-9 ||
                   ((kmat.transpose() * pi - pi).cwiseAbs().maxCoeff() > 1e-8);
  if (bad) {
    // several closed classes: iterate the lazy chain from Idle(1)
    pi = Eigen::VectorXd::Zero(r);
    pi(0) = 1.0;
    const Eigen::MatrixXd kt = kmat.transpose();
    for (int it = 0; it < 200000; ++it) {
      Eigen::VectorXd next = 0.5 * pi + 0.5 * (kt * pi);
      const double change = (next - pi).cwiseAbs().sum();
      pi = next;
      if (change < 1e-14) break;
    }
  }

  PolicyOccupancy occ;
  occ.mass.assign(static_cast<std::size_t>(n), 0.0);
  double total_time = 0.0;
  for (Eigen::Index e = 0; e < r; ++e) {
    const double w_e = std::max(0.0, pi(e));
    if (w_e == 0.0) continue;
    const Walk& w = walks[static_cast<std::size_t>(e)];
    if (w.trapped) {
      // only the trap cycle is visited in the long run
      for (int s : w.trap_cycle) occ.mass[static_cast<std::size_t>(s)] += w_e;
      total_time += w_e * static_cast<double>(w.trap_cycle.size());
      continue;
    }
    for (const auto& [s, visits] : w.occupancy) {
      occ.mass[static_cast<std::size_t>(s)] += w_e * visits;
      total_time += w_e * visits;
    }
  }
  if (!(total_time > 0.0)) fail(ErrorCode::numerical, "degenerate occupancy");
  occ.server_usage.assign(static_cast<std::size_t>(model.num_servers()), 0.0);
  for (int i = 0; i < n; ++i) {
    auto& mass = occ.mass[static_cast<std::size_t>(i)];
    mass /= total_time;
    const MdpState s = space.state(i);
    const int act = policy[static_cast<std::size_t>(i)];
    occ.average_age += mass * s.age;
    occ.average_cost += mass * s.age;
    if (act != kNoOp) {
      occ.server_usage[static_cast<std::size_t>(act)] += mass;
      occ.average_cost += mass * costs[static_cast<std::size_t>(act)];
    }
    if (s.age == space.delta_max()) occ.truncated_mass += mass;
  }
  return occ;
}

PolicyOccupancy policy_occupancy(const SubproblemSolution& sol) {
  return policy_occupancy(sol.model, sol.space, sol.policy, sol.costs);
}

void write_solution_csv(const SubproblemSolution& sol, const std::string& path) {
  CsvWriter out(path);
  out.row({"layer", "delta", "gen_age", "action", "value"});
  for (int i = 0; i < sol.space.size(); ++i) {
    const MdpState s = sol.space.state(i);
    const int act = sol.policy[static_cast<std::size_t>(i)];
    out.row({std::to_string(s.layer), std::to_string(s.age), std::to_string(s.gen_age),
             act == kNoOp ? std::string("noop") : std::to_string(act + 1),
             fmt_num(sol.value[static_cast<std::size_t>(i)])});
  }
}

}  // namespace aoinest

// SPDX-License-Identifier: Apache-2.0
#include "aoinest/index.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <limits>

#include "aoinest/csv.hpp"
#include "aoinest/error.hpp"
#include "mdp_internal.hpp"

namespace aoinest {

const char* to_string(IndexMethod m) {
  return m == IndexMethod::bisection ? "bisection" : "closed-form";
}

Predecessor closed_form_predecessor(const SubproblemModel& model, int server,
                                    const std::vector<double>& costs) {
  const int c = model.class_of_server[static_cast<std::size_t>(server)];
  if (c == 0) return {};
  const auto rep = class_representatives(model, costs);
  const int s = rep[static_cast<std::size_t>(c - 1)];
  return {s, costs[static_cast<std::size_t>(s)]};
}

double index_closed_form(const SubproblemModel& model, const MdpState& s, int server,
                         const std::vector<double>& costs, double gamma_star, bool* used_noop) {
  if (server < 0 || server >= model.num_servers())
    fail(ErrorCode::invalid_argument, "server index out of range");
  const Predecessor pred = closed_form_predecessor(model, server, costs);
  if (used_noop) *used_noop = pred.server == kNoOp;
  if (!action_allowed(model, s, server)) return 0.0;
  return std::max(0.0, pred.cost + s.age - gamma_star);
}

double best_competitor_mu(const SubproblemSolution& sol, int state_index, int server) {
  const MdpState s = sol.space.state(state_index);
  double best = action_cost_mu(sol, state_index, kNoOp);
  for (int m = 0; m < sol.model.num_servers(); ++m)
    if (m != server && action_allowed(sol.model, s, m))
      best = std::min(best, action_cost_mu(sol, state_index, m));
  return best;
}

// ---------------------------------------------------------------------------
// bisection

BisectionIndex::BisectionIndex(SubproblemModel model, std::vector<double> costs, int server,
                               BisectionOptions opts)
    : model_(std::move(model)), costs_(std::move(costs)), server_(server), opts_(opts),
      space_(model_.delta_max, model_.num_blocks()) {
  if (server < 0 || server >= model_.num_servers())
    fail(ErrorCode::invalid_argument, "server index out of range");
  if (static_cast<int>(costs_.size()) != model_.num_servers())
    fail(ErrorCode::invalid_argument, "cost vector length does not match the number of servers");
  if (!(opts_.tol > 0.0)) fail(ErrorCode::invalid_argument, "bisection tolerance must be positive");
}

const SubproblemSolution& BisectionIndex::solve_at(double x) {
  // The values depend on the costs only through each class's cheapest server,
  // so solves are shared between all x giving the same class costs.
  auto costs = costs_;
  costs[static_cast<std::size_t>(server_)] = x;
  const auto rep = class_representatives(model_, costs);
  std::vector<double> key;
  for (int r : rep) key.push_back(costs[static_cast<std::size_t>(r)]);
  const double k0 = key[static_cast<std::size_t>(model_.class_of_server[static_cast<std::size_t>(server_)])];
  auto it = cache_.find(k0);
  if (it != cache_.end()) return it->second;
  if (cache_.size() >= 4096) cache_.clear();

  RviOptions o = opts_.rvi;
  if (!cache_.empty()) {
    auto near = cache_.lower_bound(k0);
    if (near == cache_.end()) --near;
    o.warm_start = &near->second.value;
  }
  auto sol = relative_value_iteration(model_, costs, o);
  return cache_.emplace(k0, std::move(sol)).first->second;
}

double BisectionIndex::passive_margin(const MdpState& s, double x) {
  const SubproblemSolution& sol = solve_at(x);
  const int i = space_.index_of(s);
  // the cached solve may carry a different cost for this server
  const double mine = action_cost_mu(sol, i, server_) - sol.costs[static_cast<std::size_t>(server_)] + x;
  return mine - best_competitor_mu(sol, i, server_);
}

double BisectionIndex::index(const MdpState& s) {
  if (!action_allowed(model_, s, server_)) return 0.0;
  if (passive_margin(s, 0.0) > 0.0) return 0.0;
  double hi = opts_.bracket_hi > 0.0 ? opts_.bracket_hi : static_cast<double>(model_.delta_max);
  while (!(passive_margin(s, hi) > 0.0)) {
    hi *= 2.0;
    if (hi > opts_.cap)
      fail(ErrorCode::numerical, "no crossing below the bracket cap " + fmt_num(opts_.cap) +
                                     " at age " + std::to_string(s.age) + " (non-indexable sample)");
  }
  double lo = 0.0;
  while (hi - lo > opts_.tol) {
    const double mid = 0.5 * (lo + hi);
    if (passive_margin(s, mid) > 0.0)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// exact policy evaluation and the threshold search

PolicyEvaluation evaluate_policy(const SubproblemModel& model, const std::vector<double>& costs,
                                 const std::vector<int>& policy) {
  const TruncatedStateSpace space(model.delta_max, model.num_blocks());
  const int n = space.size();
  if (static_cast<int>(policy.size()) != n)
    fail(ErrorCode::invalid_argument, "policy length does not match the state space");
  // unknown 0 is gamma (it replaces V(Idle(1)) = 0)
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(n) * 4);
  Eigen::VectorXd rhs(n);
  for (int i = 0; i < n; ++i) {
    const MdpState s = space.state(i);
    const int act = policy[static_cast<std::size_t>(i)];
    rhs(i) = s.age + (act == kNoOp ? 0.0 : costs[static_cast<std::size_t>(act)]);
    trip.emplace_back(i, 0, 1.0);
    if (i != 0) trip.emplace_back(i, i, 1.0);
    for (const auto& [j, pr] : mdp_successors(model, space, s, act))
      if (j != 0) trip.emplace_back(i, j, -pr);
  }
  Eigen::SparseMatrix<double> a(n, n);
  a.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) fail(ErrorCode::numerical, "singular policy evaluation system");
  Eigen::VectorXd x = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !x.allFinite() || (a * x - rhs).cwiseAbs().maxCoeff() > 1e-6)
    fail(ErrorCode::numerical, "singular policy evaluation system");
  PolicyEvaluation out;
  out.gamma = x(0);
  out.value.assign(x.data(), x.data() + n);
  out.value[0] = 0.0;
  return out;
}

std::vector<int> policy_from_thresholds(const SubproblemModel& model,
                                        const std::vector<ThresholdChain>& chains) {
  const TruncatedStateSpace space(model.delta_max, model.num_blocks());
  std::vector<int> policy(static_cast<std::size_t>(space.size()), kNoOp);
  for (const auto& c : chains)
    for (int a = c.first_age; a <= model.delta_max; ++a) {
      const int i = c.layer == 1 ? space.idle(a) : space.computing(a, c.gen_age, c.block);
      policy[static_cast<std::size_t>(i)] = c.action_at(a);
    }
  return policy;
}

ClosedFormGamma gamma_star_closed_form(const SubproblemModel& model, const std::vector<double>& costs,
                                       int max_rounds) {
  if (model.eligible_elapsed != 0)
    fail(ErrorCode::invalid_argument, "closed-form system requires a unit minimum compute time");
  const TruncatedStateSpace space(model.delta_max, model.num_blocks());
  const int n = space.size();
  const auto rep = class_representatives(model, costs);
  std::vector<int> cand(rep.begin(), rep.end());
  std::sort(cand.begin(), cand.end());

  // start from the fastest class everywhere it is allowed
  std::vector<int> policy(static_cast<std::size_t>(n), kNoOp);
  for (int i = 0; i < n; ++i) {
    const MdpState s = space.state(i);
    for (auto it = model.classes.rbegin(); it != model.classes.rend(); ++it) {
      const int srv = rep[static_cast<std::size_t>(std::distance(it, model.classes.rend()) - 1)];
      if (action_allowed(model, s, srv)) {
        policy[static_cast<std::size_t>(i)] = srv;
        break;
      }
    }
  }

  ClosedFormGamma out;
  for (int round = 0; round < max_rounds; ++round) {
    const auto ev = evaluate_policy(model, costs, policy);
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      const MdpState s = space.state(i);
      auto q = [&](int act) {
        double v = s.age + (act == kNoOp ? 0.0 : costs[static_cast<std::size_t>(act)]);
        for (const auto& [j, pr] : mdp_successors(model, space, s, act))
          v += pr * ev.value[static_cast<std::size_t>(j)];
        return v;
      };
      const int cur = policy[static_cast<std::size_t>(i)];
      const double qcur = q(cur);
      int best = kNoOp;
      double qbest = q(kNoOp);
      for (int srv : cand)
        if (action_allowed(model, s, srv)) {
          const double v = q(srv);
          if (v < qbest - 1e-10) {
            qbest = v;
            best = srv;
          }
        }
      // keep the current action unless strictly improved
      if (qbest < qcur - 1e-9 && best != cur) {
        policy[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    out.rounds = round + 1;
    out.gamma_star = ev.gamma;
    if (!changed) {
      out.policy = policy;
      out.thresholds = detail::extract_thresholds(model, space, policy);
      return out;
    }
  }
  fail(ErrorCode::not_converged, "threshold search did not settle in " + std::to_string(max_rounds) +
                                     " rounds");
}

double gamma_star_closed_form(const SubproblemModel& model, const std::vector<double>& costs,
                              const std::vector<ThresholdChain>& thresholds) {
  if (model.eligible_elapsed != 0)
    fail(ErrorCode::invalid_argument, "closed-form system requires a unit minimum compute time");
  return evaluate_policy(model, costs, policy_from_thresholds(model, thresholds)).gamma;
}

// ---------------------------------------------------------------------------
// precise division

PreciseDivisionReport precise_division_check(const SubproblemModel& model,
                                             const std::vector<double>& costs,
                                             const std::vector<MdpState>& samples,
                                             const BisectionOptions& opts, double tol) {
  PreciseDivisionReport rep;
  const auto sol = relative_value_iteration(model, costs, opts.rvi);
  const double itol = 4.0 * opts.tol;
  auto violate = [&](const std::string& what, double margin) {
    rep.ok = false;
    if (rep.violations.size() < 64) rep.violations.push_back(what);
    rep.worst_margin = std::min(rep.worst_margin, margin);
  };
  for (int m = 0; m < model.num_servers(); ++m) {
    BisectionIndex bis(model, costs, m, opts);
    const double nu = costs[static_cast<std::size_t>(m)];
    for (const auto& s : samples) {
      if (!action_allowed(model, s, m)) {
        ++rep.vacuous;
        continue;
      }
      const int i = sol.space.index_of(s);
      const double idx = bis.index(s);
      const double gap = action_cost_mu(sol, i, m) - best_competitor_mu(sol, i, m);
      const std::string where = "server " + std::to_string(m + 1) + " age " + std::to_string(s.age) +
                                (s.layer == 2 ? " gen " + std::to_string(s.gen_age) : std::string());
      ++rep.checked;
      if (std::abs(idx - nu) <= itol) {
        if (gap > tol) violate(where + ": index equals cost but server is not weakly optimal", tol - gap);
      } else if (idx > nu) {
        if (gap >= tol) violate(where + ": index above cost but server is not strictly optimal", tol - gap);
      } else if (gap <= -tol) {
        violate(where + ": index below cost but server is strictly optimal", gap + tol);
      }
    }
  }
  return rep;
}

}  // namespace aoinest

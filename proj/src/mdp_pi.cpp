// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "aoinest/error.hpp"
#include "aoinest/mdp.hpp"
#include "mdp_internal.hpp"

namespace aoinest {

namespace {

// Under a fixed policy every computing state has at most one computing
// successor, so its value is an affine function of the idle values and gamma.
class Evaluator {
 public:
  Evaluator(const detail::Kernel& k, int delta_max, const std::vector<double>& class_cost)
      : k_(k), dm_(delta_max), cost_(class_cost) {}

  struct Result {
    double gamma = 0.0;
    std::vector<double> value;
  };

  // cls[s]: class index, or -1 for NoOp
  Result evaluate(const std::vector<int>& cls) const {
    const int dm = dm_;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dm, dm);
    Eigen::VectorXd rhs(dm);
    std::vector<int> entry_row(static_cast<std::size_t>(k_.n), -1);
    std::vector<Affine> forms;
    for (int i = 0; i < dm; ++i) {
      const auto s = static_cast<std::size_t>(i);
      if (i != 0) m(i, i) += 1.0;
      m(i, 0) += 1.0;  // column 0 carries gamma since V(Idle(1)) = 0
      const int c = cls[s];
      if (c < 0) {
        const int to = k_.noop[s];
        if (to != 0) m(i, to) -= 1.0;
        rhs(i) = k_.age[s];
        continue;
      }
      const int cont = k_.cont[s * k_.classes + c];
      const int done = k_.done[s * k_.classes + c];
      const double q = done >= 0 ? k_.p[static_cast<std::size_t>(c)] : 0.0;
      if (done > 0) m(i, done) -= q;
      int& row = entry_row[static_cast<std::size_t>(cont)];
      if (row < 0) {
        row = static_cast<int>(forms.size());
        forms.push_back(walk(cont, cls));
      }
      const Affine& f = forms[static_cast<std::size_t>(row)];
      for (int j = 1; j < dm; ++j) m(i, j) -= (1.0 - q) * f.coef[static_cast<std::size_t>(j)];
      m(i, 0) += (1.0 - q) * f.slots;
      rhs(i) = k_.age[s] + cost_[static_cast<std::size_t>(c)] + (1.0 - q) * f.constant;
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
    const Eigen::VectorXd x = lu.solve(rhs);
    const double resid = (m * x - rhs).cwiseAbs().maxCoeff();
    if (!x.allFinite() || !(resid <= 1e-8 * (1.0 + rhs.cwiseAbs().maxCoeff())))
      fail(ErrorCode::numerical, "policy evaluation is singular (multichain policy?)");

    Result out;
    out.gamma = x(0);
    out.value.assign(static_cast<std::size_t>(k_.n), 0.0);
    for (int j = 1; j < dm; ++j) out.value[static_cast<std::size_t>(j)] = x(j);
    fill_computing(cls, out);
    return out;
  }

 private:
  struct Affine {
    double constant = 0.0;
    double slots = 0.0;       // coefficient of -gamma
    std::vector<double> coef;  // per idle state
  };

  Affine walk(int start, const std::vector<int>& cls) const {
    Affine f;
    f.coef.assign(static_cast<std::size_t>(dm_), 0.0);
    double mass = 1.0;
    int s = start;
    for (int steps = 0; mass > 0.0; ++steps) {
      if (steps > k_.n) fail(ErrorCode::numerical, "policy walk does not terminate");
      const auto su = static_cast<std::size_t>(s);
      const int c = cls[su];
      if (c < 0) {
        f.constant += mass * k_.age[su];
        f.slots += mass;
        f.coef[static_cast<std::size_t>(k_.noop[su])] += mass;
        break;
      }
      const int next = k_.cont[su * k_.classes + c];
      const int done = k_.done[su * k_.classes + c];
      const double q = done >= 0 ? k_.p[static_cast<std::size_t>(c)] : 0.0;
      const double r = k_.age[su] + cost_[static_cast<std::size_t>(c)];
      if (next == s) {
        if (!(q > 0.0)) fail(ErrorCode::numerical, "policy computes forever without completing");
        f.constant += mass * r / q;
        f.slots += mass / q;
        f.coef[static_cast<std::size_t>(done)] += mass;
        break;
      }
      f.constant += mass * r;
      f.slots += mass;
      if (q > 0.0) f.coef[static_cast<std::size_t>(done)] += mass * q;
      mass *= 1.0 - q;
      s = next;
    }
    return f;
  }

  void fill_computing(const std::vector<int>& cls, Result& out) const {
    std::vector<char> known(static_cast<std::size_t>(k_.n), 0);
    std::fill(known.begin(), known.begin() + dm_, 1);
    std::vector<int> path;
    auto& v = out.value;
    const double g = out.gamma;
    for (int start = dm_; start < k_.n; ++start) {
      int s = start;
      path.clear();
      // follow computing successors until a known value or an end of chain
      while (!known[static_cast<std::size_t>(s)]) {
        path.push_back(s);
        const int c = cls[static_cast<std::size_t>(s)];
        if (c < 0) break;
        const int next = k_.cont[static_cast<std::size_t>(s) * k_.classes + c];
        if (next == s) break;
        s = next;
      }
      for (auto it = path.rbegin(); it != path.rend(); ++it) {
        const auto su = static_cast<std::size_t>(*it);
        const int c = cls[su];
        double val;
        if (c < 0) {
          val = k_.age[su] - g + v[static_cast<std::size_t>(k_.noop[su])];
        } else {
          const int next = k_.cont[su * k_.classes + c];
          const int done = k_.done[su * k_.classes + c];
          const double q = done >= 0 ? k_.p[static_cast<std::size_t>(c)] : 0.0;
          const double r = k_.age[su] + cost_[static_cast<std::size_t>(c)] - g;
          const double exit = q > 0.0 ? q * v[static_cast<std::size_t>(done)] : 0.0;
          val = next == *it ? (r + exit) / q : r + exit + (1.0 - q) * v[static_cast<std::size_t>(next)];
        }
        v[su] = val;
        known[su] = 1;
      }
    }
  }

  const detail::Kernel& k_;
  int dm_;
  const std::vector<double>& cost_;
};

double q_value(const detail::Kernel& k, std::size_t s, int c, const std::vector<double>& cost,
               const std::vector<double>& v) {
  if (c < 0) return k.age[s] + v[static_cast<std::size_t>(k.noop[s])];
  const int cont = k.cont[s * k.classes + c];
  const int done = k.done[s * k.classes + c];
  double ev = v[static_cast<std::size_t>(cont)];
  if (done >= 0) ev += k.p[static_cast<std::size_t>(c)] * (v[static_cast<std::size_t>(done)] - ev);
  return k.age[s] + cost[static_cast<std::size_t>(c)] + ev;
}

}  // namespace

SubproblemSolution policy_iteration(const SubproblemModel& model, const std::vector<double>& costs,
                                    const PolicyIterationOptions& opts) {
  for (double c : costs)
    if (!(c >= 0.0) || !std::isfinite(c)) fail(ErrorCode::invalid_argument, "costs must be finite and >= 0");
  SubproblemSolution sol;
  sol.model = model;
  sol.costs = costs;
  sol.space = TruncatedStateSpace(model.delta_max, model.num_blocks());
  const detail::Kernel k = detail::build_kernel(model, sol.space);
  const auto rep = class_representatives(model, costs);
  std::vector<double> class_cost(rep.size());
  for (std::size_t c = 0; c < rep.size(); ++c) class_cost[c] = costs[static_cast<std::size_t>(rep[c])];
  const auto n = static_cast<std::size_t>(k.n);
  const int nk = k.classes;

  // start: the given policy, else the fastest allowed class everywhere
  std::vector<int> cls(n, -1);
  const bool warm = opts.warm_policy && opts.warm_policy->size() == n;
  for (std::size_t s = 0; s < n; ++s) {
    if (warm) {
      const int a = (*opts.warm_policy)[s];
      if (a >= 0 && a < model.num_servers()) {
        const int c = model.class_of_server[static_cast<std::size_t>(a)];
        if (k.cont[s * nk + c] >= 0) cls[s] = c;
      }
      continue;
    }
    for (int c = nk - 1; c >= 0; --c)
      if (k.cont[s * nk + c] >= 0) {
        cls[s] = c;
        break;
      }
  }

  const Evaluator ev(k, model.delta_max, class_cost);
  Evaluator::Result res;
  int round = 0;
  for (;; ++round) {
    if (round >= opts.max_rounds)
      fail(ErrorCode::not_converged, "policy iteration did not settle in " + std::to_string(opts.max_rounds) + " rounds");
    res = ev.evaluate(cls);
    bool changed = false;
    for (std::size_t s = 0; s < n; ++s) {
      const double qcur = q_value(k, s, cls[s], class_cost, res.value);
      int best = cls[s];
      double qbest = qcur;
      for (int c = -1; c < nk; ++c) {
        if (c >= 0 && k.cont[s * nk + c] < 0) continue;
        const double q = q_value(k, s, c, class_cost, res.value);
        if (q < qbest) {
          qbest = q;
          best = c;
        }
      }
      if (best != cls[s] && qbest < qcur - 1e-10 * (1.0 + std::abs(qcur))) {
        cls[s] = best;
        changed = true;
      }
    }
    if (!changed) break;
  }

  // report the canonical greedy policy and its exact value
  sol.policy = detail::greedy_policy(model, k, costs, res.value, opts.tie_tol);
  bool same = true;
  for (std::size_t s = 0; s < n; ++s) {
    const int a = sol.policy[s];
    const int c = a == kNoOp ? -1 : model.class_of_server[static_cast<std::size_t>(a)];
    same = same && c == cls[s];
    cls[s] = c;
  }
  if (!same) res = ev.evaluate(cls);
  double lo = INFINITY, hi = -INFINITY;
  for (std::size_t s = 0; s < n; ++s) {
    double best = q_value(k, s, -1, class_cost, res.value);
    for (int c = 0; c < nk; ++c)
      if (k.cont[s * nk + c] >= 0) best = std::min(best, q_value(k, s, c, class_cost, res.value));
    const double d = best - res.value[s];
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  sol.gamma_star = res.gamma;
  sol.value = std::move(res.value);
  sol.iterations = round + 1;
  sol.span = std::max(std::abs(hi - res.gamma), std::abs(lo - res.gamma));
  sol.thresholds = detail::extract_thresholds(model, sol.space, sol.policy);
  int first_offload = model.delta_max + 1;
  for (int a = 1; a <= model.delta_max; ++a)
    if (sol.policy[static_cast<std::size_t>(sol.space.idle(a))] != kNoOp) {
      first_offload = a;
      break;
    }
  sol.truncation_warning = first_offload >= model.delta_max - 1;
  return sol;
}

}  // namespace aoinest

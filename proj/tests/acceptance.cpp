// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion on stdout, details in
// acceptance_details.log. A criterion that is not met is reported, not thrown;
// the binary fails only when a computation itself errors.
#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "aoinest/baselines.hpp"
#include "aoinest/fluid.hpp"
#include "aoinest/harness.hpp"
#include "aoinest/index.hpp"
#include "aoinest/mdp.hpp"
#include "aoinest/scenario.hpp"
#include "aoinest/scheduler.hpp"

using namespace aoinest;
namespace fs = std::filesystem;

#ifndef AOINEST_SCENARIO_DIR
#define AOINEST_SCENARIO_DIR "scenarios"
#endif

namespace {

std::ofstream& details() {
  static std::ofstream log("acceptance_details.log");
  return log;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void report(int id, bool ok, const std::string& summary, double secs, double limit_secs = 0.0) {
  std::string line = summary;
  char buf[64];
  std::snprintf(buf, sizeof buf, " [%.1fs]", secs);
  line += buf;
  if (limit_secs > 0.0 && secs > limit_secs) {
    ok = false;
    std::snprintf(buf, sizeof buf, " over the %.0fs budget", limit_secs);
    line += buf;
  }
  std::printf("criterion %2d: %s %s\n", id, ok ? "PASS" : "FAIL", line.c_str());
  std::fflush(stdout);
  details() << "== criterion " << id << ": " << (ok ? "PASS " : "FAIL ") << line << "\n";
  details().flush();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::string scenario_path(const char* name) { return std::string(AOINEST_SCENARIO_DIR) + "/" + name; }

// ----------------------------------------------------------------------------
// Kernel written out case by case from the model definition.

using Dist = std::map<std::pair<int, std::vector<int>>, double>;

std::vector<int> code_of(const UserState& s) {
  if (const auto* i = std::get_if<Idle>(&s)) return {i->age};
  const auto& c = std::get<Computing>(s);
  return {c.age, c.gen_age, c.server};
}

void add(Dist& d, const UserState& s, double p) { d[{is_computing(s) ? 2 : 1, code_of(s)}] += p; }

Dist reference_kernel(const UserState& s, int action, int tau, double p, bool strict, int dmax) {
  Dist out;
  const int age = age_of(s);
  if (action < 0) {
    add(out, Idle{std::min(age + 1, dmax)}, 1.0);
    return out;
  }
  const int gen = is_computing(s) ? std::get<Computing>(s).gen_age : age;
  const int elapsed = age - gen;
  const bool can_finish = strict ? elapsed > tau : elapsed + 1 >= tau;
  int next_age = age + 1;
  int next_gen = gen;
  if (next_age > dmax) {
    next_gen = std::max(1, gen - (next_age - dmax));
    next_age = dmax;
  }
  const Computing cont{next_age, next_gen, action};
  if (!can_finish) {
    add(out, cont, 1.0);
    return out;
  }
  add(out, Idle{elapsed + 1}, p);
  if (p < 1.0) add(out, cont, 1.0 - p);
  return out;
}

// ----------------------------------------------------------------------------
// Single-user oracle on its own state space: Idle(a), Computing(A, D).

class UserOracle {
 public:
  UserOracle(int dmax, int eligible, std::vector<double> p, std::vector<double> nu)
      : dmax_(dmax), eligible_(eligible), p_(std::move(p)), nu_(std::move(nu)) {}

  int size() const { return dmax_ + dmax_ * (dmax_ + 1) / 2; }
  int servers() const { return static_cast<int>(p_.size()); }
  int idle(int a) const { return a - 1; }
  int computing(int a, int d) const { return dmax_ + (a - 1) * a / 2 + (d - 1); }
  bool is_idle(int s) const { return s < dmax_; }

  struct Step {
    double cost = 0.0;
    int count = 0;
    int to[2] = {0, 0};
    double prob[2] = {0.0, 0.0};
  };

  Step step(int s, int action) const {
    int age = 0, gen = 0;
    decode(s, age, gen);
    Step st;
    st.cost = age + (action >= 0 ? nu_[static_cast<std::size_t>(action)] : 0.0);
    if (action < 0) {
      push(st, idle(std::min(age + 1, dmax_)), 1.0);
      return st;
    }
    const int elapsed = age - gen;
    int na = age + 1, nd = gen;
    if (na > dmax_) {
      nd = std::max(1, gen - (na - dmax_));
      na = dmax_;
    }
    const double p = p_[static_cast<std::size_t>(action)];
    if (elapsed < eligible_) {
      push(st, computing(na, nd), 1.0);
    } else {
      push(st, idle(elapsed + 1), p);
      if (p < 1.0) push(st, computing(na, nd), 1.0 - p);
    }
    return st;
  }

  // Average cost and relative values (h(Idle(1)) = 0) of a stationary policy.
  bool evaluate(const std::vector<int>& policy, double& gain, std::vector<double>& h) const {
    const int n = size();
    std::vector<Eigen::Triplet<double>> t;
    Eigen::VectorXd rhs(n);
    for (int s = 0; s < n; ++s) {
      const auto st = step(s, policy[static_cast<std::size_t>(s)]);
      rhs[s] = st.cost;
      t.emplace_back(s, 0, 1.0);  // column 0 carries the gain
      if (s != 0) t.emplace_back(s, s, 1.0);
      for (int k = 0; k < st.count; ++k)
        if (st.to[k] != 0) t.emplace_back(s, st.to[k], -st.prob[k]);
    }
    Eigen::SparseMatrix<double> a(n, n);
    a.setFromTriplets(t.begin(), t.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success) return false;
    const Eigen::VectorXd x = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !x.allFinite()) return false;
    gain = x[0];
    h.assign(static_cast<std::size_t>(n), 0.0);
    for (int s = 1; s < n; ++s) h[static_cast<std::size_t>(s)] = x[s];
    return true;
  }

  double q_value(int s, int action, const std::vector<double>& h) const {
    const auto st = step(s, action);
    double v = st.cost;
    for (int k = 0; k < st.count; ++k) v += st.prob[k] * h[static_cast<std::size_t>(st.to[k])];
    return v;
  }

  // Best computing-layer policy with the idle layer held fixed (Howard iteration).
  double best_response(std::vector<int>& policy) const {
    double gain = 0.0;
    std::vector<double> h;
    for (int round = 0; round < 200; ++round) {
      if (!evaluate(policy, gain, h)) return INFINITY;
      bool changed = false;
      for (int s = dmax_; s < size(); ++s) {
        int& cur = policy[static_cast<std::size_t>(s)];
        double best = q_value(s, cur, h);
        for (int a = -1; a < servers(); ++a) {
          const double q = q_value(s, a, h);
          if (q < best - 1e-11 * (1.0 + std::abs(best))) {
            best = q;
            cur = a;
            changed = true;
          }
        }
      }
      if (!changed) return gain;
    }
    return gain;
  }

  // Gain reduction from one full improvement round; zero at an optimal policy.
  double improvement_gap(const std::vector<int>& policy) const {
    double gain = 0.0, next = 0.0;
    std::vector<double> h, unused;
    if (!evaluate(policy, gain, h)) return INFINITY;
    std::vector<int> improved = policy;
    for (int s = 0; s < size(); ++s) {
      int& cur = improved[static_cast<std::size_t>(s)];
      double best = q_value(s, cur, h);
      for (int a = -1; a < servers(); ++a) {
        const double q = q_value(s, a, h);
        if (q < best - 1e-11 * (1.0 + std::abs(best))) {
          best = q;
          cur = a;
        }
      }
    }
    if (!evaluate(improved, next, unused)) return INFINITY;
    return gain - next;
  }

 private:
  void decode(int s, int& age, int& gen) const {
    if (s < dmax_) {
      age = gen = s + 1;
      return;
    }
    int r = s - dmax_;
    age = 1;
    while (r >= age) {
      r -= age;
      ++age;
    }
    gen = r + 1;
  }
  static void push(Step& st, int to, double p) {
    st.to[st.count] = to;
    st.prob[st.count] = p;
    ++st.count;
  }

  int dmax_;
  int eligible_;
  std::vector<double> p_;
  std::vector<double> nu_;
};

struct OracleResult {
  double gamma = INFINITY;
  int shapes = 0;
  double improvement_gap = 0.0;
};

// Exhaustive over idle-layer threshold shapes (NoOp below h1, server a on
// [h1, h2), server b from h2), each with its optimal computing-layer response.
OracleResult threshold_oracle(const UserOracle& o, int dmax) {
  OracleResult r;
  const int M = o.servers();
  std::vector<int> policy(static_cast<std::size_t>(o.size()), 0);
  std::vector<int> best_policy;
  for (int a = 0; a < M; ++a) {
    const int b = M == 1 ? a : 1 - a;
    for (int h1 = 1; h1 <= dmax + 1; ++h1)
      for (int h2 = h1; h2 <= dmax + 1; ++h2) {
        if (M == 1 && h2 != dmax + 1) continue;
        for (int age = 1; age <= dmax; ++age)
          policy[static_cast<std::size_t>(o.idle(age))] = age < h1 ? kNoOp : (age < h2 ? a : b);
        const double g = o.best_response(policy);
        ++r.shapes;
        if (g < r.gamma) {
          r.gamma = g;
          best_policy = policy;
        }
      }
  }
  if (!best_policy.empty()) r.improvement_gap = o.improvement_gap(best_policy);
  return r;
}

// ----------------------------------------------------------------------------
// Exhaustive partial matchings.

double brute_matching(const std::vector<double>& w, int users, int servers, int u, unsigned used) {
  if (u == users) return 0.0;
  double best = brute_matching(w, users, servers, u + 1, used);
  for (int m = 0; m < servers; ++m)
    if (!(used & (1u << m)))
      best = std::max(best, w[static_cast<std::size_t>(u * servers + m)] +
                                brute_matching(w, users, servers, u + 1, used | (1u << m)));
  return best;
}

// ----------------------------------------------------------------------------
// Scale experiments shared by criteria 7 to 10.

struct ScaleRuns {
  SweepResult trend;   // nested at r = 1, 2, 5, 10
  SweepResult top;     // all policies at r = 20
  double seconds = 0.0;
};

const SummaryRow* find_row(const SweepResult& s, PolicyId p, int scale) {
  for (const auto& r : s.rows)
    if (r.policy == p && r.scale == scale && r.error.empty()) return &r;
  return nullptr;
}

const EpisodeMetrics* find_cell(const SweepResult& s, PolicyId p, int scale) {
  for (const auto& c : s.cells)
    if (c.policy == p && c.scale == scale) return &c;
  return nullptr;
}

const ScaleBound* find_bound(const SweepResult& s, int scale) {
  for (const auto& b : s.bounds)
    if (b.scale == scale && b.error.empty()) return &b;
  return nullptr;
}

const ScaleRuns& scale_runs() {
  static std::unique_ptr<ScaleRuns> runs;
  if (runs) return *runs;
  Stopwatch clock;
  runs = std::make_unique<ScaleRuns>();
  GammaCache cache;
  const auto base = parse_scenario(scenario_path("base.scn"));
  const fs::path out = fs::current_path() / "acceptance_out";

  ExperimentPlan trend;
  trend.policies = {PolicyId::nested};
  trend.scales = {1, 2, 5, 10};
  trend.seeds = 5;
  trend.out_dir = (out / "trend").string();
  fs::create_directories(trend.out_dir);
  runs->trend = sweep_scale(base, trend, &cache);

  ExperimentPlan top;
  top.policies = {PolicyId::nested, PolicyId::mamp, PolicyId::marp, PolicyId::rrp};
  top.scales = {20};
  top.seeds = 20;
  top.out_dir = (out / "r20").string();
  fs::create_directories(top.out_dir);
  runs->top = sweep_scale(base, top, &cache);

  runs->seconds = clock.seconds();
  details() << "scale runs: " << runs->seconds << " s, " << cache.solves() << " gamma solves\n";
  for (const auto* s : {&runs->trend, &runs->top})
    for (const auto& r : s->rows)
      details() << "  " << to_string(r.policy) << " r=" << r.scale << " mean=" << r.mean_aoi
                << " se=" << r.std_error << " bound=" << r.bound << " gap%=" << r.gap_pct
                << (r.error.empty() ? "" : " error=" + r.error) << "\n";
  return *runs;
}

}  // namespace

int main(int argc, char** argv) {
  doctest::Context ctx(argc, argv);
  return ctx.run();
}

TEST_CASE("criterion 01 kernel exactness") {
  Stopwatch clock;
  auto cfg = parse_scenario(scenario_path("base.scn"));
  const int dmax = 60;
  auto violations = check_kernel(cfg, dmax);
  cfg.truncation = dmax;
  long pairs = 0, mismatches = 0;
  const bool strict = cfg.completion_rule == CompletionRule::strict;
  int first_user = 0;
  for (std::size_t g = 0; g < cfg.groups.size(); ++g) {
    const auto& grp = cfg.groups[g];
    std::vector<UserState> states;
    for (int a = 1; a <= dmax; ++a) states.push_back(Idle{a});
    for (int a = 1; a <= dmax; ++a)
      for (int d = 1; d <= a; ++d)
        for (int m = 0; m < cfg.num_servers; ++m) states.push_back(Computing{a, d, m});
    for (const auto& s : states)
      for (int act = -1; act < cfg.num_servers; ++act) {
        const auto act_obj = act < 0 ? Action::noop() : Action::offload(act);
        const auto got = successor_distribution(s, act_obj, cfg, first_user);
        Dist lib;
        double sum = 0.0;
        for (const auto& o : got) {
          add(lib, o.state, o.prob);
          sum += o.prob;
        }
        const auto want = reference_kernel(s, act, grp.tau_min, grp.success_prob[static_cast<std::size_t>(std::max(act, 0))],
                                           strict, dmax);
        ++pairs;
        bool same = std::abs(sum - 1.0) <= 1e-12 && lib.size() == want.size();
        for (const auto& [k, p] : want) {
          const auto it = lib.find(k);
          same = same && it != lib.end() && std::abs(it->second - p) <= 1e-12;
        }
        if (!same && ++mismatches <= 5)
          details() << "kernel mismatch: group " << g << " age " << age_of(s) << " action " << act << "\n";
      }
    first_user += grp.count;
  }
  for (std::size_t i = 0; i < std::min<std::size_t>(violations.size(), 5); ++i)
    details() << "check_kernel: " << violations[i] << "\n";
  report(1, violations.empty() && mismatches == 0,
         std::to_string(pairs) + " (state, action) pairs, " + std::to_string(mismatches) +
             " mismatches against the case analysis, " + std::to_string(violations.size()) +
             " kernel-check violations",
         clock.seconds(), 10.0);
}

TEST_CASE("criterion 02 analytic cycle oracle") {
  Stopwatch clock;
  const double nu = 3.0;
  const auto model = SubproblemModel::make(30, 0, {1.0});
  const auto sol = relative_value_iteration(model, {nu});
  const double closed = gamma_star_closed_form(model, {nu}).gamma_star;
  double best = INFINITY;
  for (int k = 1; k <= 30; ++k) best = std::min(best, (k + 1) / 2.0 + nu / k);
  std::vector<int> argmin;
  for (int k = 1; k <= 30; ++k)
    if ((k + 1) / 2.0 + nu / k <= best + 1e-12) argmin.push_back(k);
  int cycle = 0;
  for (int a = 1; a <= 30 && cycle == 0; ++a)
    if (sol.policy[static_cast<std::size_t>(sol.space.idle(a))] != kNoOp) cycle = a;
  const bool ok = std::abs(best - 3.0) <= 1e-12 && argmin == std::vector<int>{2, 3} &&
                  std::abs(sol.gamma_star - 3.0) <= 1e-6 && std::abs(closed - 3.0) <= 1e-6 &&
                  (cycle == 2 || cycle == 3);
  report(2, ok,
         fmt("rvi %.9f, closed form %.9f, oracle %.9f, cycle length %.0f", sol.gamma_star, closed, best, cycle),
         clock.seconds(), 1.0);
}

TEST_CASE("criterion 03 brute-force threshold policies") {
  Stopwatch clock;
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int matched = 0;
  double worst = 0.0, worst_cert = 0.0;
  const int instances = 20;
  for (int i = 0; i < instances; ++i) {
    const int M = 1 + static_cast<int>(rng() % 2);
    const int dmax = 12 + static_cast<int>(rng() % 14);
    const int eligible = static_cast<int>(rng() % 4);
    std::vector<double> p, nu;
    for (int m = 0; m < M; ++m) {
      p.push_back(0.3 + 0.7 * unit(rng));
      nu.push_back(6.0 * unit(rng));
    }
    const auto model = SubproblemModel::make(dmax, eligible, p);
    const double rvi = relative_value_iteration(model, nu).gamma_star;
    const UserOracle o(dmax, eligible, p, nu);
    const auto best = threshold_oracle(o, dmax);
    const double diff = std::abs(rvi - best.gamma);
    worst = std::max(worst, diff);
    worst_cert = std::max(worst_cert, best.improvement_gap);
    if (diff <= 1e-6) ++matched;
    details() << fmt("instance %.0f: M=%.0f dmax=%.0f eligible=%.0f", i, M, dmax, eligible)
              << fmt(" rvi=%.10f oracle=%.10f diff=%.2e", rvi, best.gamma, diff)
              << fmt(" shapes=%.0f improvement_gap=%.2e\n", best.shapes, best.improvement_gap);
  }
  report(3, matched == instances,
         std::to_string(matched) + "/" + std::to_string(instances) +
             fmt(" instances within 1e-6, worst |diff| %.2e, gain from one improvement round at the oracle optimum %.1e",
                 worst, worst_cert),
         clock.seconds(), 120.0);
}

TEST_CASE("criterion 04 structural suites") {
  Stopwatch clock;
  const auto cfg = parse_scenario(scenario_path("base.scn"));
  CheckOptions opts;
  opts.random_instances = 20;
  const auto items = run_property_checks(cfg, opts);
  std::string failed;
  for (const auto& it : items) {
    details() << "  " << it.name << ": " << (it.ok ? "ok" : "FAIL") << " " << it.detail << " (" << it.seconds
              << " s)\n";
    if (!it.ok) failed += (failed.empty() ? "" : ", ") + it.name;
  }
  report(4, failed.empty(),
         std::to_string(items.size()) + " suites" + (failed.empty() ? ", all clean" : ", failing: " + failed),
         clock.seconds(), 600.0);
}

TEST_CASE("criterion 05 closed-form vs bisection index") {
  Stopwatch clock;
  std::mt19937_64 rng(515);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int dmax = 30, per_instance = 50, instances = 10;
  int agree = 0, total = 0;
  for (int i = 0; i < instances; ++i) {
    const int M = 1 + static_cast<int>(rng() % 2);
    std::vector<double> p;
    while (true) {
      p.clear();
      for (int m = 0; m < M; ++m) p.push_back(0.3 + 0.7 * unit(rng));
      std::sort(p.begin(), p.end());
      bool step_ok = true;
      for (int m = 1; m < M; ++m) step_ok = step_ok && p[m] - p[m - 1] <= p[m] * p[m];
      if (step_ok) break;
    }
    std::vector<double> nu;
    for (int m = 0; m < M; ++m) nu.push_back(4.0 * unit(rng));
    const auto model = SubproblemModel::make(dmax, 0, p);
    const double gamma = gamma_star_closed_form(model, nu).gamma_star;
    std::vector<std::unique_ptr<BisectionIndex>> bis;
    for (int m = 0; m < M; ++m) bis.push_back(std::make_unique<BisectionIndex>(model, nu, m));
    for (int k = 0; k < per_instance; ++k) {
      MdpState s;
      s.age = 1 + static_cast<int>(rng() % dmax);
      if (s.age >= 2 && rng() % 2) {
        s.layer = 2;
        s.gen_age = 1 + static_cast<int>(rng() % (s.age - 1));
      }
      const int m = static_cast<int>(rng() % M);
      const double cf = index_closed_form(model, s, m, nu, gamma);
      const double bi = bis[static_cast<std::size_t>(m)]->index(s);
      ++total;
      if (std::abs(cf - bi) <= 1e-3) {
        ++agree;
      } else {
        auto& b = *bis[static_cast<std::size_t>(m)];
        details() << fmt("disagree: layer %.0f age %.0f gen %.0f server %.0f", s.layer, s.age, s.gen_age, m)
                  << fmt(" closed=%.6f bisection=%.6f margin@closed=%.3e margin@bisection=%.3e\n", cf, bi,
                         b.passive_margin(s, cf), b.passive_margin(s, bi));
      }
    }
  }
  const double frac = double(agree) / total;
  report(5, frac >= 0.95, fmt("%.0f/%.0f states agree within 1e-3 (%.1f%%, need 95%%)", agree, total, 100 * frac),
         clock.seconds(), 300.0);
}

TEST_CASE("criterion 06 matching optimality") {
  Stopwatch clock;
  std::mt19937_64 rng(606);
  int exact = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    const int users = 1 + static_cast<int>(rng() % 8);
    const int servers = 1 + static_cast<int>(rng() % 8);
    const bool integral = t % 2 == 0;
    std::vector<double> w(static_cast<std::size_t>(users * servers));
    for (auto& x : w) {
      if (integral)
        x = static_cast<double>(rng() % 21);
      else
        x = rng() % 5 == 0 ? 0.0 : std::uniform_real_distribution<double>(0.0, 10.0)(rng);
    }
    const auto a = max_weight_assignment(w, users, servers);
    const double brute = brute_matching(w, users, servers, 0, 0u);
    double realised = 0.0;
    std::vector<int> seen(static_cast<std::size_t>(servers), 0);
    bool valid = true;
    for (int u = 0; u < users; ++u) {
      const int m = a.user_server[static_cast<std::size_t>(u)];
      if (m < 0) continue;
      valid = valid && m < servers && seen[static_cast<std::size_t>(m)]++ == 0;
      if (valid) realised += w[static_cast<std::size_t>(u * servers + m)];
    }
    const double tol = integral ? 0.0 : 1e-9 * (1.0 + brute);
    if (valid && std::abs(realised - brute) <= tol && std::abs(a.objective - brute) <= tol) ++exact;
    else
      details() << "matching mismatch at trial " << t << ": brute " << brute << " got " << a.objective << "\n";
  }
  report(6, exact == trials, std::to_string(exact) + "/" + std::to_string(trials) + " matrices optimal",
         clock.seconds(), 30.0);
}

TEST_CASE("criterion 07 dual convergence") {
  Stopwatch clock;
  const auto& runs = scale_runs();
  const auto* c2 = find_cell(runs.trend, PolicyId::nested, 2);
  const auto* c20 = find_cell(runs.top, PolicyId::nested, 20);
  const auto* b2 = find_bound(runs.trend, 2);
  const auto* b20 = find_bound(runs.top, 20);
  REQUIRE(c2);
  REQUIRE(c20);
  REQUIRE(b2);
  REQUIRE(b20);
  double worst_cv = 0.0;
  auto cv_of = [&](const EpisodeMetrics& c) {
    const auto& s = c.seeds.front();
    double w = 0.0;
    for (std::size_t m = 0; m < s.tail_nu_mean.size(); ++m)
      w = std::max(w, s.tail_nu_sd[m] / std::max(1e-12, s.tail_nu_mean[m]));
    return w;
  };
  auto distance = [](const EpisodeMetrics& c, const std::vector<double>& star) {
    const auto& s = c.seeds.front();
    double d = 0.0;
    for (std::size_t m = 0; m < star.size(); ++m) d += std::abs(s.tail_nu_mean[m] - star[m]) / star[m];
    return d / static_cast<double>(star.size());
  };
  const double cv2 = cv_of(*c2), cv20 = cv_of(*c20);
  worst_cv = std::max(cv2, cv20);
  const double d2 = distance(*c2, b2->nu), d20 = distance(*c20, b20->nu);
  details() << fmt("nu tail mean r=2 %.4f r=20 %.4f, relaxed nu* %.4f\n", c2->seeds.front().tail_nu_mean.front(),
                   c20->seeds.front().tail_nu_mean.front(), b20->nu.front());
  report(7, worst_cv < 0.05 && d20 < d2,
         fmt("tail sd/mean r=2 %.2f%% r=20 %.2f%% (need < 5%%); relative distance to nu* r=2 %.3f r=20 %.3f",
             100 * cv2, 100 * cv20, d2, d20),
         clock.seconds());
}

TEST_CASE("criterion 08 policy ordering and gaps") {
  Stopwatch clock;
  const auto& runs = scale_runs();
  const auto* nested = find_row(runs.top, PolicyId::nested, 20);
  const auto* mamp = find_row(runs.top, PolicyId::mamp, 20);
  const auto* marp = find_row(runs.top, PolicyId::marp, 20);
  const auto* rrp = find_row(runs.top, PolicyId::rrp, 20);
  REQUIRE(nested);
  REQUIRE(mamp);
  REQUIRE(marp);
  REQUIRE(rrp);
  const double n = nested->mean_aoi;
  const double g_mamp = 100 * (mamp->mean_aoi - n) / n;
  const double g_marp = 100 * (marp->mean_aoi - n) / n;
  const double g_rrp = 100 * (rrp->mean_aoi - n) / n;
  const bool order = n <= rrp->mean_aoi && rrp->mean_aoi <= std::min(mamp->mean_aoi, marp->mean_aoi);
  const bool gaps = std::abs(g_mamp - 40) <= 15 && std::abs(g_marp - 40) <= 15 && std::abs(g_rrp - 21) <= 10;
  report(8, order && gaps,
         fmt("nested %.2f rrp %.2f mamp %.2f marp %.2f", n, rrp->mean_aoi, mamp->mean_aoi, marp->mean_aoi) +
             fmt("; gaps mamp %+.1f%% marp %+.1f%% rrp %+.1f%%", g_mamp, g_marp, g_rrp) +
             (order ? "; ordering holds" : "; ordering violated"),
         clock.seconds());
}

TEST_CASE("criterion 09 asymptotic trend") {
  Stopwatch clock;
  const auto& runs = scale_runs();
  std::vector<const SummaryRow*> rows;
  for (int r : {1, 2, 5, 10}) rows.push_back(find_row(runs.trend, PolicyId::nested, r));
  rows.push_back(find_row(runs.top, PolicyId::nested, 20));
  for (const auto* r : rows) REQUIRE(r);
  bool monotone = true;
  std::string means;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    means += fmt(i ? " %.2f" : "%.2f", rows[i]->mean_aoi);
    if (i > 0) monotone = monotone && rows[i]->mean_aoi <= 1.05 * rows[i - 1]->mean_aoi;
  }
  const bool gap = rows.back()->gap_pct < rows.front()->gap_pct;
  report(9, monotone && gap,
         "nested AoI over r=1,2,5,10,20: " + means + fmt("; gap r=1 %.2f%% r=20 %.2f%%", rows.front()->gap_pct,
                                                          rows.back()->gap_pct),
         clock.seconds());
}

TEST_CASE("criterion 10 bound dominance") {
  Stopwatch clock;
  const auto& runs = scale_runs();
  int cells = 0, dominated = 0;
  for (const auto* s : {&runs.trend, &runs.top})
    for (const auto& r : s->rows) {
      if (!r.error.empty()) continue;
      ++cells;
      if (r.mean_aoi >= r.bound - 3.0 * r.std_error) ++dominated;
    }
  const auto two = parse_scenario(scenario_path("two_user.scn"));
  const double lp = fluid_lp(two).objective;
  AscentOptions a;
  a.iters = 5000;
  const double ascent = relaxed_lower_bound(two, a).bound;
  const double rel = std::abs(lp - ascent) / std::abs(lp);
  report(10, cells > 0 && dominated == cells && rel <= 1e-3,
         std::to_string(dominated) + "/" + std::to_string(cells) + " cells above bound - 3 SE" +
             fmt("; two-user LP %.8f vs ascent %.8f (rel %.1e)", lp, ascent, rel),
         clock.seconds());
}

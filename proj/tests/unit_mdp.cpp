// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "aoinest/error.hpp"
#include "aoinest/mdp.hpp"
#include "aoinest/model.hpp"

using namespace aoinest;

namespace {

// Unit minimum time, certain completion: a policy that offloads at age k
// cycles through ages 1..k, averaging (k+1)/2 + nu/k.
double cycle_oracle(double nu) {
  double best = std::numeric_limits<double>::infinity();
  for (int k = 1; k < 1000; ++k) best = std::min(best, (k + 1) / 2.0 + nu / k);
  return best;
}

SubproblemModel unit_time(int dmax, std::vector<double> p) {
  return SubproblemModel::make(dmax, first_eligible_elapsed(CompletionRule::inclusive, 1), std::move(p));
}

// Stationary law of a fixed policy from a dense linear solve.
std::vector<double> dense_stationary(const SubproblemSolution& sol) {
  const int n = sol.space.size();
  Eigen::MatrixXd pt = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (const auto& [j, pr] :
         mdp_successors(sol.model, sol.space, sol.space.state(i), sol.policy[static_cast<std::size_t>(i)]))
      pt(j, i) += pr;
  // power iteration on the lazy chain from Idle(1)
  Eigen::VectorXd pi = Eigen::VectorXd::Zero(n);
  pi(0) = 1.0;
  for (int it = 0; it < 200000; ++it) {
    Eigen::VectorXd next = 0.5 * pi + 0.5 * (pt * pi);
    const double change = (next - pi).cwiseAbs().sum();
    pi = next;
    if (change < 1e-15) break;
  }
  return {pi.data(), pi.data() + n};
}

}  // namespace

TEST_CASE("state space indexing is a bijection") {
  for (int blocks : {1, 3}) {
    const TruncatedStateSpace sp(9, blocks);
    CHECK(sp.size() == 9 + blocks * 45);
    for (int i = 0; i < sp.size(); ++i) CHECK(sp.index_of(sp.state(i)) == i);
  }
}

TEST_CASE("mdp successors agree with the user-level kernel") {
  ScenarioConfig cfg;
  cfg.num_users = 1;
  cfg.num_servers = 2;
  cfg.groups = {{1, 2, {0.4, 0.9}}};
  cfg.horizon = 1;
  cfg.truncation = 10;
  const auto model = SubproblemModel::from_config(cfg, 0);
  const TruncatedStateSpace sp(10, 1);
  for (int i = 0; i < sp.size(); ++i) {
    const MdpState s = sp.state(i);
    const UserState us = s.layer == 1 ? UserState{Idle{s.age}} : UserState{Computing{s.age, s.gen_age, 0}};
    for (int act = -1; act < 2; ++act) {
      const auto a = mdp_successors(model, sp, s, act);
      const auto b = successor_distribution(us, act < 0 ? Action::noop() : Action::offload(act), cfg, 0);
      REQUIRE(a.size() == b.size());
      for (std::size_t k = 0; k < a.size(); ++k) {
        const MdpState t = sp.state(a[k].first);
        CHECK(t.age == age_of(b[k].state));
        CHECK(t.layer == (is_computing(b[k].state) ? 2 : 1));
        CHECK(a[k].second == doctest::Approx(b[k].prob));
      }
    }
  }
}

TEST_CASE("cycle oracle: certain completion with unit minimum time") {
  const auto model = unit_time(30, {1.0});
  auto sol = relative_value_iteration(model, {3.0});
  CHECK(sol.gamma_star == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(sol.value[0] == 0.0);
  // ages 2 and 3 tie; ties favour NoOp so the first offload is at 3
  CHECK(sol.policy[static_cast<std::size_t>(sol.space.idle(2))] == kNoOp);
  CHECK(sol.policy[static_cast<std::size_t>(sol.space.idle(3))] == 0);

  sol = relative_value_iteration(model, {0.0});
  CHECK(sol.gamma_star == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(sol.policy[0] == 0);

  for (double nu : {0.5, 1.7, 6.0, 12.5, 40.0}) {
    const auto s = relative_value_iteration(model, {nu});
    CHECK(s.gamma_star == doctest::Approx(cycle_oracle(nu)).epsilon(1e-8));
  }
}

TEST_CASE("Bellman consistency and greedy minimality") {
  const auto model = SubproblemModel::make(25, 3, {0.5, 0.8});
  const auto sol = relative_value_iteration(model, {0.7, 2.1});
  for (int i = 0; i < sol.space.size(); ++i) {
    const MdpState s = sol.space.state(i);
    const double chosen = action_cost_mu(sol, i, sol.policy[static_cast<std::size_t>(i)]);
    double best = action_cost_mu(sol, i, kNoOp);
    for (int m = 0; m < 2; ++m)
      if (action_allowed(model, s, m)) best = std::min(best, action_cost_mu(sol, i, m));
    CHECK(chosen == doctest::Approx(best).epsilon(1e-9));
    // gamma* + V(s) = min_a Q(s,a)  <=>  min mu = V(s)
    CHECK(best == doctest::Approx(sol.value[static_cast<std::size_t>(i)]).epsilon(1e-7));
  }
}

TEST_CASE("identical servers have identical action costs") {
  const auto model = SubproblemModel::make(20, 2, {0.6, 0.6});
  const auto sol = relative_value_iteration(model, {1.0, 1.0});
  for (int i = 0; i < sol.space.size(); ++i)
    CHECK(action_cost_mu(sol, i, 0) == doctest::Approx(action_cost_mu(sol, i, 1)));
}

TEST_CASE("occupancy of the greedy policy matches a dense stationary solve") {
  for (auto [e0, p] : {std::pair{0, std::vector<double>{0.5, 0.9}}, std::pair{3, std::vector<double>{0.3, 0.7}}}) {
    const auto model = SubproblemModel::make(14, e0, p);
    const auto sol = relative_value_iteration(model, {0.4, 1.8});
    const auto occ = policy_occupancy(sol);
    const auto ref = dense_stationary(sol);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(occ.mass[i] == doctest::Approx(ref[i]).epsilon(1e-8));
    CHECK(occ.average_cost == doctest::Approx(sol.gamma_star).epsilon(1e-7));
  }
}

TEST_CASE("passive sets and indexability sweeps") {
  const auto model = SubproblemModel::make(20, 2, {0.5, 0.8});
  const auto sol = relative_value_iteration(model, {0.0, 1e6});
  CHECK(passive_set(sol, 1, 1).members.size() == 20);
  CHECK(passive_set(sol, 1, 2).members.size() == static_cast<std::size_t>(sol.space.layer_size(2)));

  const auto single = SubproblemModel::make(20, 2, {0.7});
  const auto ss = relative_value_iteration(single, {0.0});
  const auto ps = passive_set(ss, 0, 1);
  // NoOp is the only competitor; offloading is optimal wherever the passive set is empty
  for (int idx : ps.members) CHECK(ss.policy[static_cast<std::size_t>(idx)] == kNoOp);

  const auto sweep = indexability_sweep(model, 1, {0.0, 0.0}, {0, 1, 2, 5, 10, 1e6});
  CHECK(sweep.monotone_layer1);
  CHECK(sweep.monotone_layer2);
  CHECK(sweep.points.back().passive_layer1 == sweep.layer1_size);
  CHECK(sweep.points.back().passive_layer2 == sweep.layer2_size);
}

TEST_CASE("randomised sweeps stay monotone") {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> up(0.2, 1.0);
  int violations = 0;
  for (int seed = 0; seed < 50; ++seed) {
    std::vector<double> p{up(gen), up(gen)};
    const int e0 = static_cast<int>(gen() % 3);
    const auto model = SubproblemModel::make(14, e0, p);
    const std::vector<double> base{std::uniform_real_distribution<double>(0, 3)(gen), 0.0};
    const auto sw = indexability_sweep(model, 1, base, {0, 0.5, 1, 2, 4, 8, 16, 1e6});
    if (!sw.monotone_layer1 || !sw.monotone_layer2) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("gamma* is non-decreasing in every cost") {
  const auto model = SubproblemModel::make(20, 1, {0.4, 0.9});
  double prev = -1.0;
  for (double x : {0.0, 0.5, 1.0, 3.0, 9.0}) {
    const double g = relative_value_iteration(model, {1.0, x}).gamma_star;
    CHECK(g >= prev - 1e-9);
    prev = g;
  }
}

TEST_CASE("structure checks on a two-server instance") {
  const auto model = SubproblemModel::make(40, 3, {0.5, 0.8});
  const auto sol = relative_value_iteration(model, {0.5, 1.5});
  const auto mltt = verify_mltt(sol, 8);
  CHECK(mltt.replay_exact);
  CHECK(verify_stage_cost_identity(sol).ok);
  const auto single = verify_mltt(relative_value_iteration(SubproblemModel::make(20, 2, {0.6}), {1.0}));
  CHECK(single.replay_exact);
}

TEST_CASE("perturbation by zero changes nothing") {
  const auto model = SubproblemModel::make(20, 2, {0.5, 0.8});
  const auto rep = verify_perturbation_bounds(model, {0.5, 1.0}, 0.0, 0);
  CHECK(rep.ok);
}

TEST_CASE("non-convergence is reported") {
  const auto model = SubproblemModel::make(20, 2, {0.3});
  RviOptions o;
  o.max_iters = 2;
  CHECK_THROWS_AS(relative_value_iteration(model, {1.0}, o), Error);
}

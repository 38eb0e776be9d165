// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "aoinest/baselines.hpp"
#include "aoinest/error.hpp"
#include "aoinest/fluid.hpp"

using namespace aoinest;

namespace {

ScenarioConfig lp_config(int users, int servers, int tau, double p, int dmax) {
  ScenarioConfig cfg;
  cfg.num_users = users;
  cfg.num_servers = servers;
  cfg.groups = {{users, tau, std::vector<double>(static_cast<std::size_t>(servers), p)}};
  cfg.horizon = 100;
  cfg.truncation = dmax;
  return cfg;
}

std::size_t occupancy_slot(const FluidSolution& sol, int state, int action) {
  return static_cast<std::size_t>(state * (1 + static_cast<int>(sol.nu.size())) + action + 1);
}

}  // namespace

TEST_CASE("small linear programs") {
  // min -x - 2y  s.t. x + y <= 4, x + 3y <= 6  ->  x = 3, y = 1
  LinearProgram lp;
  lp.num_vars = 2;
  lp.objective = {-1.0, -2.0};
  lp.ub_rows = {{1.0, 1.0}, {1.0, 3.0}};
  lp.ub_rhs = {4.0, 6.0};
  auto r = solve_lp(lp);
  REQUIRE(r.feasible);
  CHECK(r.objective == doctest::Approx(-5.0));
  CHECK(r.x[0] == doctest::Approx(3.0));
  CHECK(r.x[1] == doctest::Approx(1.0));
  // duals: objective sensitivity to each right-hand side
  CHECK(r.ub_duals[0] == doctest::Approx(-0.5));
  CHECK(r.ub_duals[1] == doctest::Approx(-0.5));

  // equality with a negative right-hand side
  LinearProgram eq;
  eq.num_vars = 2;
  eq.objective = {1.0, 1.0};
  eq.eq_rows = {{-1.0, -2.0}};
  eq.eq_rhs = {-4.0};
  r = solve_lp(eq);
  REQUIRE(r.feasible);
  CHECK(r.objective == doctest::Approx(2.0));
  CHECK(r.eq_duals[0] == doctest::Approx(-0.5));

  LinearProgram bad;
  bad.num_vars = 1;
  bad.objective = {1.0};
  bad.eq_rows = {{1.0}};
  bad.eq_rhs = {2.0};
  bad.ub_rows = {{1.0}};
  bad.ub_rhs = {1.0};
  CHECK_FALSE(solve_lp(bad).feasible);

  LinearProgram open;
  open.num_vars = 1;
  open.objective = {-1.0};
  open.ub_rows = {{-1.0}};
  open.ub_rhs = {0.0};
  r = solve_lp(open);
  CHECK(r.feasible);
  CHECK_FALSE(r.bounded);
}

TEST_CASE("random linear programs satisfy strong duality") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<> u(0.1, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    LinearProgram lp;
    lp.num_vars = 6;
    for (int j = 0; j < lp.num_vars; ++j) lp.objective.push_back(-u(rng));
    for (int i = 0; i < 4; ++i) {
      std::vector<double> row;
      for (int j = 0; j < lp.num_vars; ++j) row.push_back(u(rng));
      lp.ub_rows.push_back(row);
      lp.ub_rhs.push_back(1.0 + u(rng));
    }
    const auto r = solve_lp(lp);
    REQUIRE(r.feasible);
    REQUIRE(r.bounded);
    CHECK(r.residual < 1e-10);
    double dual = 0.0;
    for (std::size_t i = 0; i < lp.ub_rhs.size(); ++i) {
      CHECK(r.ub_duals[i] <= 1e-12);
      dual += r.ub_duals[i] * lp.ub_rhs[i];
    }
    CHECK(dual == doctest::Approx(r.objective).epsilon(1e-9));
    // reduced costs are non-negative at the optimum
    for (int j = 0; j < lp.num_vars; ++j) {
      double rc = lp.objective[static_cast<std::size_t>(j)];
      for (std::size_t i = 0; i < lp.ub_rows.size(); ++i) rc -= r.ub_duals[i] * lp.ub_rows[i][static_cast<std::size_t>(j)];
      CHECK(rc >= -1e-9);
    }
  }
}

TEST_CASE("one user with certain unit-time completion keeps age one") {
  auto cfg = lp_config(1, 1, 1, 1.0, 10);
  cfg.completion_rule = CompletionRule::inclusive;
  const auto sol = fluid_lp(cfg);
  CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-12));
  // all mass offloads from Idle(1)
  CHECK(sol.rho[0][occupancy_slot(sol, 0, 0)] == doctest::Approx(1.0).epsilon(0.02));
  CHECK(sol.nu[0] >= 0.0);
}

TEST_CASE("an empty population is the empty program") {
  ScenarioConfig cfg;
  cfg.num_users = 0;
  cfg.num_servers = 2;
  cfg.horizon = 10;
  const auto sol = fluid_lp(cfg);
  CHECK(sol.objective == 0.0);
  CHECK(sol.nu == std::vector<double>{0.0, 0.0});
}

TEST_CASE("two users on one server: LP and dual ascent agree") {
  const auto cfg = lp_config(2, 1, 2, 0.6, 30);
  const auto sol = fluid_lp(cfg);
  CHECK(sol.residual < 1e-8);
  // the LP duals are the optimal prices of the relaxed problem
  CHECK(relaxed_dual_value(cfg, sol.nu) / cfg.num_users == doctest::Approx(sol.objective).epsilon(1e-9));
  AscentOptions a;
  a.iters = 5000;
  const auto rel = relaxed_lower_bound(cfg, a);
  CHECK(std::abs(rel.bound - sol.objective) <= 1e-3 * std::abs(sol.objective));
  // capacity binds: the price is positive and usage sums to one
  CHECK(sol.nu[0] > 0.0);
  double use = 0.0;
  for (std::size_t i = 0; i < sol.rho[0].size(); ++i)
    if (i % 2 == 1) use += sol.rho[0][i];
  CHECK(use * cfg.num_users == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("tiny truncation is reported") {
  const auto cfg = lp_config(1, 1, 40, 0.1, 2);
  const std::string msg = [&] {
    try {
      fluid_lp(cfg);
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string();
  }();
  CHECK(!msg.empty());
}

TEST_CASE("fixed point comparison") {
  const auto ok = fixed_point_check({1.0, 2.0}, {1.01, 2.0}, {{0.5, 0.5}}, {{0.5, 0.5}}, 0.05);
  CHECK(ok.ok);
  CHECK(ok.dual_gap == doctest::Approx(0.01));
  const auto far = fixed_point_check({1.0}, {3.0}, {}, {}, 0.05);
  CHECK_FALSE(far.ok);
  CHECK(far.dual_rel_gap == doctest::Approx(2.0 / 3.0));
}

// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "aoinest/error.hpp"
#include "aoinest/index.hpp"

using namespace aoinest;

TEST_CASE("closed-form index arithmetic") {
  // slow class {0}, fast class {1}
  const auto model = SubproblemModel::make(20, 0, {0.5, 0.9});
  bool noop = false;
  CHECK(index_closed_form(model, {1, 5, 0, 0}, 1, {2.0, 1.0}, 3.0, &noop) == doctest::Approx(4.0));
  CHECK_FALSE(noop);
  CHECK(index_closed_form(model, {1, 1, 0, 0}, 0, {2.0, 1.0}, 3.0, &noop) == 0.0);
  CHECK(noop);
}

TEST_CASE("bisection index on the certain-completion oracle") {
  // offloading at age k beats waiting one more slot iff nu <= k(k+1)/2,
  // from comparing cycle lengths k and k+1 in (k+1)/2 + nu/k
  const auto model = SubproblemModel::make(40, 0, {1.0});
  BisectionIndex bis(model, {3.0}, 0);
  for (int k = 1; k <= 6; ++k) CHECK(bis.index({1, k, 0, 0}) == doctest::Approx(k * (k + 1) / 2.0).epsilon(1e-6));
}

TEST_CASE("bisection index clamps at zero and sits on a tie") {
  const auto model = SubproblemModel::make(30, 1, {0.4, 0.9});
  const std::vector<double> costs{0.5, 1.0};
  BisectionIndex slow(model, costs, 0);
  // the first slot from idle cannot complete and the server may change later,
  // so there the slow server only competes on cost
  CHECK(slow.index({1, 25, 0, 0}) == doctest::Approx(1.0).epsilon(1e-6));
  // an eligible old task prefers the fast server even when the slow one is free
  CHECK(slow.index({2, 25, 5, 0}) == 0.0);
  BisectionIndex fast(model, costs, 1);
  const MdpState s{1, 6, 0, 0};
  const double idx = fast.index(s);
  CHECK(idx > 0.0);
  CHECK(std::abs(fast.passive_margin(s, idx)) < 1e-4);
  CHECK(fast.passive_margin(s, idx + 1e-3) > 0.0);
}

TEST_CASE("closed-form gamma matches relative value iteration") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> up(0.2, 1.0), uc(0.0, 4.0);
  for (int trial = 0; trial < 8; ++trial) {
    const auto model = SubproblemModel::make(30, 0, {up(gen), up(gen)});
    const std::vector<double> costs{uc(gen), uc(gen)};
    const auto cf = gamma_star_closed_form(model, costs);
    const auto rvi = relative_value_iteration(model, costs);
    CHECK(cf.gamma_star == doctest::Approx(rvi.gamma_star).epsilon(1e-6));
    CHECK(gamma_star_closed_form(model, costs, cf.thresholds) == doctest::Approx(cf.gamma_star));
  }
  const auto certain = SubproblemModel::make(20, 0, {1.0});
  CHECK(gamma_star_closed_form(certain, {3.0}).gamma_star == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(gamma_star_closed_form(certain, {0.0}).gamma_star == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(gamma_star_closed_form(SubproblemModel::make(20, 3, {0.5}), {1.0}), Error);
}

TEST_CASE("precise division on a solved instance") {
  const auto model = SubproblemModel::make(24, 1, {0.5, 0.8});
  std::vector<MdpState> samples;
  for (int a = 1; a <= 12; ++a) samples.push_back({1, a, 0, 0});
  for (int a = 3; a <= 12; a += 3) samples.push_back({2, a, 2, 0});
  const auto rep = precise_division_check(model, {0.6, 1.4}, samples);
  CHECK(rep.ok);
  CHECK(rep.checked == 2 * static_cast<int>(samples.size()));
  const auto single = precise_division_check(SubproblemModel::make(20, 1, {0.7}), {1.0}, samples);
  CHECK(single.ok);
}

// SPDX-License-Identifier: Apache-2.0
#include "aoinest/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "aoinest/error.hpp"

namespace aoinest {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) fail(ErrorCode::invalid_argument, msg);
}

}  // namespace

void ScenarioConfig::validate() const {
  require(num_users > 0, "num_users: must be a positive integer");
  require(num_servers > 0, "num_servers: must be a positive integer");
  require(!groups.empty(), "group: at least one user group is required");
  long total = 0;
  int max_tau = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& grp = groups[g];
    const std::string where = "group " + std::to_string(g + 1) + ": ";
    require(grp.count > 0, where + "count must be positive");
    require(grp.tau_min >= 1, where + "tau_min must be a positive integer");
    require(grp.success_prob.size() == static_cast<std::size_t>(num_servers),
            where + "success_prob needs one value per server");
    for (double p : grp.success_prob)
      require(p > 0.0 && p <= 1.0, where + "success_prob must lie in (0,1]");
    total += grp.count;
    max_tau = std::max(max_tau, grp.tau_min);
  }
  require(total == num_users, "group counts: sum " + std::to_string(total) +
                                  " does not equal num_users " + std::to_string(num_users));
  require(horizon > 0, "horizon: must be a positive integer");
  require(smoothing > 0.0, "smoothing: must be positive");
  require(initial_costs.empty() || initial_costs.size() == static_cast<std::size_t>(num_servers),
          "initial_costs: needs one value per server");
  for (double c : initial_costs) require(c >= 0.0, "initial_costs: must be non-negative");
  require(truncation > max_tau + 1,
          "truncation: must exceed max tau_min + 1 = " + std::to_string(max_tau + 1));
  require(scale >= 1, "scale: must be a positive integer");
}

int ScenarioConfig::group_of(int user) const {
  int acc = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    acc += groups[g].count;
    if (user < acc) return static_cast<int>(g);
  }
  fail(ErrorCode::invalid_argument, "user index " + std::to_string(user) + " out of range");
}

double ScenarioConfig::success_prob(int user, int server) const {
  return groups[static_cast<std::size_t>(group_of(user))].success_prob[static_cast<std::size_t>(server)];
}

int ScenarioConfig::first_eligible_elapsed(int group) const {
  return aoinest::first_eligible_elapsed(completion_rule,
                                         groups[static_cast<std::size_t>(group)].tau_min);
}

std::vector<double> ScenarioConfig::costs_or_zero() const {
  if (initial_costs.empty()) return std::vector<double>(static_cast<std::size_t>(num_servers), 0.0);
  return initial_costs;
}

int first_eligible_elapsed(CompletionRule rule, int tau_min) {
  return rule == CompletionRule::strict ? tau_min + 1 : std::max(0, tau_min - 1);
}

int default_truncation(const ScenarioConfig& cfg, int cap) {
  int max_tau = 1;
  double max_inv_p = 1.0;
  for (const auto& g : cfg.groups) {
    max_tau = std::max(max_tau, g.tau_min);
    for (double p : g.success_prob) max_inv_p = std::max(max_inv_p, 1.0 / p);
  }
  const double suggested = 40.0 * max_tau * max_inv_p;
  const int floor_value = max_tau + 2;
  return std::max(floor_value, static_cast<int>(std::min<double>(cap, std::ceil(suggested))));
}

UserState clamp_state(const UserState& s, int delta_max) {
  if (const auto* idle = std::get_if<Idle>(&s)) return Idle{std::min(idle->age, delta_max)};
  auto c = std::get<Computing>(s);
  if (c.age > delta_max) {
    const int shift = c.age - delta_max;
    c.age = delta_max;
    c.gen_age = std::max(1, c.gen_age - shift);
  }
  return c;
}

namespace {

void check_state(const UserState& state, const ScenarioConfig& cfg) {
  const int dmax = cfg.truncation;
  if (const auto* idle = std::get_if<Idle>(&state)) {
    if (idle->age < 1 || idle->age > dmax)
      fail(ErrorCode::invalid_argument, "idle age " + std::to_string(idle->age) +
                                            " outside 1.." + std::to_string(dmax));
    return;
  }
  const auto& c = std::get<Computing>(state);
  if (c.age < 1 || c.age > dmax)
    fail(ErrorCode::invalid_argument,
         "computing age " + std::to_string(c.age) + " outside 1.." + std::to_string(dmax));
  if (c.gen_age < 1 || c.gen_age > c.age)
    fail(ErrorCode::invalid_argument, "generation age must satisfy 1 <= D <= age");
  if (c.server < 0 || c.server >= cfg.num_servers)
    fail(ErrorCode::invalid_argument, "computing server index out of range");
}

}  // namespace

TransitionDistribution successor_distribution(const UserState& state, Action action,
                                              const ScenarioConfig& cfg, int user) {
  check_state(state, cfg);
  const int dmax = cfg.truncation;
  if (action.is_noop()) return {{Idle{std::min(age_of(state) + 1, dmax)}, 1.0}};

  const int m = action.server();
  if (m < 0 || m >= cfg.num_servers)
    fail(ErrorCode::invalid_argument, "server index " + std::to_string(m) + " out of range");
  const int g = cfg.group_of(user);
  const double p = cfg.groups[static_cast<std::size_t>(g)].success_prob[static_cast<std::size_t>(m)];
  const int eligible = cfg.first_eligible_elapsed(g);

  int age = 0;
  int gen = 0;
  if (const auto* idle = std::get_if<Idle>(&state)) {
    age = idle->age;
    gen = idle->age;  // fresh task, elapsed 0
  } else {
    const auto& c = std::get<Computing>(state);
    if (!cfg.allow_server_switch && c.server != m)
      fail(ErrorCode::invalid_argument, "server switching is disabled for computing users");
    age = c.age;
    gen = c.gen_age;
  }
  const int elapsed = age - gen;
  const UserState cont = clamp_state(Computing{age + 1, gen, m}, dmax);
  if (elapsed < eligible) return {{cont, 1.0}};
  TransitionDistribution out;
  out.push_back({Idle{elapsed + 1}, p});
  if (p < 1.0) out.push_back({cont, 1.0 - p});
  return out;
}

UserState sample_transition(const UserState& state, Action action, const ScenarioConfig& cfg,
                            int user, RngStream& rng) {
  const auto dist = successor_distribution(state, action, cfg, user);
  if (dist.size() == 1) return dist.front().state;
  const double u = rng.uniform();
  double acc = 0.0;
  for (const auto& o : dist) {
    acc += o.prob;
    if (u < acc) return o.state;
  }
  return dist.back().state;
}

UserState advance_user(const UserState& state, int action, double success_prob,
                       int first_eligible, int delta_max, RngStream& rng) {
  const int age = age_of(state);
  if (action < 0) return Idle{std::min(age + 1, delta_max)};
  const auto* c = std::get_if<Computing>(&state);
  const int gen = c ? c->gen_age : age;
  const int elapsed = age - gen;
  const UserState cont = clamp_state(Computing{age + 1, gen, action}, delta_max);
  if (elapsed < first_eligible) return cont;
  if (success_prob >= 1.0) return Idle{elapsed + 1};
  return rng.uniform() < success_prob ? UserState{Idle{elapsed + 1}} : cont;
}

double stage_cost(const UserState& state, Action action, const std::vector<double>& costs) {
  const double age = age_of(state);
  if (action.is_noop()) return age;
  return age + costs[static_cast<std::size_t>(action.server())];
}

}  // namespace aoinest

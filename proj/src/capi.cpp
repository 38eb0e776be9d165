// SPDX-License-Identifier: Apache-2.0
#include "aoinest.h"

#include <algorithm>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "aoinest/baselines.hpp"
#include "aoinest/error.hpp"
#include "aoinest/fluid.hpp"
#include "aoinest/harness.hpp"
#include "aoinest/scenario.hpp"
#include "aoinest/scheduler.hpp"

struct aoinest_scenario {
  aoinest::ScenarioConfig cfg;
};

struct aoinest_episode {
  aoinest::EpisodeMetrics metrics;
  int num_servers = 0;
};

struct aoinest_checks {
  std::vector<aoinest::CheckItem> items;
};

struct aoinest_sweep {
  aoinest::SweepResult result;
};

namespace {

thread_local std::string g_error;

aoinest_status status_of(aoinest::ErrorCode c) {
  switch (c) {
    case aoinest::ErrorCode::ok: return AOINEST_OK;
    case aoinest::ErrorCode::invalid_argument: return AOINEST_INVALID_ARGUMENT;
    case aoinest::ErrorCode::parse_error: return AOINEST_PARSE_ERROR;
    case aoinest::ErrorCode::not_converged: return AOINEST_NOT_CONVERGED;
    case aoinest::ErrorCode::numerical: return AOINEST_NUMERICAL;
    case aoinest::ErrorCode::io: return AOINEST_IO;
    case aoinest::ErrorCode::too_large: return AOINEST_TOO_LARGE;
  }
  return AOINEST_INTERNAL;
}

template <class F>
aoinest_status guarded(F&& f) {
  g_error.clear();
  try {
    f();
    return AOINEST_OK;
  } catch (const aoinest::Error& e) {
    g_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    g_error = "out of memory";
    return AOINEST_INTERNAL;
  } catch (const std::exception& e) {
    g_error = e.what();
    return AOINEST_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (!p) aoinest::fail(aoinest::ErrorCode::invalid_argument, std::string(what) + " is null");
}

std::vector<double> prices(const aoinest_scenario* s, const double* nu) {
  if (!nu) return s->cfg.costs_or_zero();
  return {nu, nu + s->cfg.num_servers};
}

const aoinest::SeedMetrics& seed_at(const aoinest_episode* e, int i) {
  need(e, "episode");
  if (i < 0 || i >= static_cast<int>(e->metrics.seeds.size()))
    aoinest::fail(aoinest::ErrorCode::invalid_argument, "seed index out of range");
  return e->metrics.seeds[static_cast<std::size_t>(i)];
}

}  // namespace

extern "C" {

const char* aoinest_version(void) { return "1.0.0"; }

const char* aoinest_last_error(void) { return g_error.c_str(); }

const char* aoinest_status_name(aoinest_status status) {
  switch (status) {
    case AOINEST_OK: return "ok";
    case AOINEST_INVALID_ARGUMENT: return "invalid argument";
    case AOINEST_PARSE_ERROR: return "parse error";
    case AOINEST_NOT_CONVERGED: return "not converged";
    case AOINEST_NUMERICAL: return "numerical failure";
    case AOINEST_IO: return "i/o error";
    case AOINEST_TOO_LARGE: return "problem too large";
    case AOINEST_INTERNAL: return "internal error";
  }
  return "unknown";
}

aoinest_status aoinest_scenario_load(const char* path, aoinest_scenario** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new aoinest_scenario{aoinest::parse_scenario(path)};
  });
}

aoinest_status aoinest_scenario_parse(const char* text, aoinest_scenario** out) {
  return guarded([&] {
    need(text, "text");
    need(out, "out");
    *out = new aoinest_scenario{aoinest::parse_scenario_text(text, "<text>")};
  });
}

aoinest_status aoinest_scenario_scale(const aoinest_scenario* s, int r, aoinest_scenario** out) {
  return guarded([&] {
    need(s, "scenario");
    need(out, "out");
    *out = new aoinest_scenario{aoinest::scale_scenario(s->cfg, r)};
  });
}

aoinest_status aoinest_scenario_write(const aoinest_scenario* s, const char* path) {
  return guarded([&] {
    need(s, "scenario");
    need(path, "path");
    aoinest::write_scenario(s->cfg, path);
  });
}

aoinest_status aoinest_scenario_set_horizon(aoinest_scenario* s, int horizon) {
  return guarded([&] {
    need(s, "scenario");
    if (horizon < 1) aoinest::fail(aoinest::ErrorCode::invalid_argument, "horizon: must be a positive integer");
    s->cfg.horizon = horizon;
  });
}

void aoinest_scenario_free(aoinest_scenario* s) { delete s; }
int aoinest_scenario_num_users(const aoinest_scenario* s) { return s ? s->cfg.num_users : 0; }
int aoinest_scenario_num_servers(const aoinest_scenario* s) { return s ? s->cfg.num_servers : 0; }
int aoinest_scenario_num_groups(const aoinest_scenario* s) { return s ? static_cast<int>(s->cfg.groups.size()) : 0; }
int aoinest_scenario_truncation(const aoinest_scenario* s) { return s ? s->cfg.truncation : 0; }

aoinest_status aoinest_simulate(const aoinest_scenario* s, const char* policy, int seeds, int record_timeseries,
                                int workers, aoinest_episode** out) {
  return guarded([&] {
    need(s, "scenario");
    need(policy, "policy");
    need(out, "out");
    if (seeds < 1) aoinest::fail(aoinest::ErrorCode::invalid_argument, "seeds must be positive");
    aoinest::SimulationOptions opts;
    opts.record_timeseries = record_timeseries != 0;
    opts.workers = workers;
    auto* e = new aoinest_episode;
    try {
      e->metrics = aoinest::run_simulation(s->cfg, aoinest::parse_policy(policy), aoinest::seed_list(seeds), opts);
    } catch (...) {
      delete e;
      throw;
    }
    e->num_servers = s->cfg.num_servers;
    *out = e;
  });
}

void aoinest_episode_free(aoinest_episode* e) { delete e; }
int aoinest_episode_num_seeds(const aoinest_episode* e) { return e ? static_cast<int>(e->metrics.seeds.size()) : 0; }
double aoinest_episode_mean_aoi(const aoinest_episode* e) { return e ? e->metrics.mean_aoi : 0.0; }
double aoinest_episode_std_error(const aoinest_episode* e) { return e ? e->metrics.std_error : 0.0; }

double aoinest_episode_seed_aoi(const aoinest_episode* e, int seed_index) {
  if (!e || seed_index < 0 || seed_index >= static_cast<int>(e->metrics.seeds.size())) return 0.0;
  return e->metrics.seeds[static_cast<std::size_t>(seed_index)].avg_aoi;
}

aoinest_status aoinest_episode_tail_nu(const aoinest_episode* e, int seed_index, int server, double* mean,
                                       double* sd) {
  return guarded([&] {
    const auto& sm = seed_at(e, seed_index);
    if (server < 0 || server >= e->num_servers) aoinest::fail(aoinest::ErrorCode::invalid_argument, "server out of range");
    if (mean) *mean = sm.tail_nu_mean[static_cast<std::size_t>(server)];
    if (sd) *sd = sm.tail_nu_sd[static_cast<std::size_t>(server)];
  });
}

aoinest_status aoinest_episode_write_summary(const aoinest_episode* e, const char* path) {
  return guarded([&] {
    need(e, "episode");
    need(path, "path");
    aoinest::write_summary_csv(path, {e->metrics});
  });
}

aoinest_status aoinest_episode_write_timeseries(const aoinest_episode* e, int seed_index, const char* path) {
  return guarded([&] {
    need(path, "path");
    aoinest::write_timeseries_csv(path, seed_at(e, seed_index), e->num_servers);
  });
}

aoinest_status aoinest_solve(const aoinest_scenario* s, int group, const double* nu, const char* method,
                             const char* csv_path, double* gamma_star, int* iterations, int* truncation_warning) {
  return guarded([&] {
    need(s, "scenario");
    if (group < 0 || group >= static_cast<int>(s->cfg.groups.size()))
      aoinest::fail(aoinest::ErrorCode::invalid_argument, "group index out of range");
    const std::string m = method ? method : "rvi";
    const auto model = aoinest::SubproblemModel::from_config(s->cfg, group);
    const auto costs = prices(s, nu);
    aoinest::SubproblemSolution sol;
    if (m == "rvi") sol = aoinest::relative_value_iteration(model, costs);
    else if (m == "pi") sol = aoinest::policy_iteration(model, costs);
    else aoinest::fail(aoinest::ErrorCode::invalid_argument, "unknown solver '" + m + "' (expected rvi or pi)");
    if (csv_path) aoinest::write_solution_csv(sol, csv_path);
    if (gamma_star) *gamma_star = sol.gamma_star;
    if (iterations) *iterations = sol.iterations;
    if (truncation_warning) *truncation_warning = sol.truncation_warning ? 1 : 0;
  });
}

aoinest_status aoinest_index_csv(const aoinest_scenario* s, const double* nu, const int* layer, const int* age,
                                 const int* gen_age, const int* server, const char* method, const char* csv_path) {
  return guarded([&] {
    need(s, "scenario");
    need(layer, "layer");
    need(age, "age");
    need(csv_path, "csv_path");
    const std::string m = method ? method : "closed-form";
    aoinest::IndexMethod im;
    if (m == "closed-form") im = aoinest::IndexMethod::closed_form;
    else if (m == "bisection") im = aoinest::IndexMethod::bisection;
    else aoinest::fail(aoinest::ErrorCode::invalid_argument, "unknown index method '" + m + "'");
    const int n = s->cfg.num_users;
    std::vector<aoinest::UserState> states;
    for (int i = 0; i < n; ++i) {
      if (age[i] < 1 || age[i] > s->cfg.truncation)
        aoinest::fail(aoinest::ErrorCode::invalid_argument, "user " + std::to_string(i + 1) + ": age out of range");
      if (layer[i] == 1) {
        states.push_back(aoinest::Idle{age[i]});
      } else if (layer[i] == 2) {
        need(gen_age, "gen_age");
        need(server, "server");
        if (gen_age[i] < 1 || gen_age[i] > age[i] || server[i] < 0 || server[i] >= s->cfg.num_servers)
          aoinest::fail(aoinest::ErrorCode::invalid_argument, "user " + std::to_string(i + 1) + ": bad computing state");
        states.push_back(aoinest::Computing{age[i], gen_age[i], server[i]});
      } else {
        aoinest::fail(aoinest::ErrorCode::invalid_argument, "user " + std::to_string(i + 1) + ": layer must be 1 or 2");
      }
    }
    const auto costs = prices(s, nu);
    aoinest::write_index_csv(csv_path, states, aoinest::index_table(states, s->cfg, costs, im), s->cfg);
  });
}

aoinest_status aoinest_bound(const aoinest_scenario* s, int iters, const char* csv_path, double* bound_value,
                             int* iters_done, int* converged, double* nu_out) {
  return guarded([&] {
    need(s, "scenario");
    aoinest::AscentOptions opts;
    if (iters > 0) opts.iters = iters;
    const auto rel = aoinest::relaxed_lower_bound(s->cfg, opts);
    if (csv_path) aoinest::write_bound_csv(csv_path, rel.nu, rel.bound, rel.iters);
    if (bound_value) *bound_value = rel.bound;
    if (iters_done) *iters_done = rel.iters;
    if (converged) *converged = rel.converged ? 1 : 0;
    if (nu_out)
      for (std::size_t m = 0; m < rel.nu.size(); ++m) nu_out[m] = rel.nu[m];
  });
}

aoinest_status aoinest_fluid(const aoinest_scenario* s, int top_k, const char* csv_path, double* objective,
                             double* residual, double* nu_out) {
  return guarded([&] {
    need(s, "scenario");
    const auto sol = aoinest::fluid_lp(s->cfg);
    if (csv_path) aoinest::write_fluid_csv(csv_path, sol, top_k > 0 ? top_k : 20);
    if (objective) *objective = sol.objective;
    if (residual) *residual = sol.residual;
    if (nu_out)
      for (std::size_t m = 0; m < sol.nu.size(); ++m) nu_out[m] = sol.nu[m];
  });
}

aoinest_status aoinest_sweep_run(const char* scenario_path, const char* policies, const int* scales, int num_scales,
                                 int seeds, const char* out_dir, const char* comparison, int ascent_iters, int workers,
                                 aoinest_sweep** out) {
  return guarded([&] {
    need(scenario_path, "scenario_path");
    need(policies, "policies");
    need(out_dir, "out_dir");
    need(out, "out");
    if (num_scales > 0) need(scales, "scales");
    aoinest::ExperimentPlan plan;
    plan.scenario_path = scenario_path;
    std::stringstream list(policies);
    std::string name;
    while (std::getline(list, name, ','))
      if (!name.empty()) plan.policies.push_back(aoinest::parse_policy(name));
    plan.scales.assign(scales, scales + std::max(0, num_scales));
    plan.seeds = seeds;
    plan.out_dir = out_dir;
    plan.comparison = aoinest::parse_bound_kind(comparison ? comparison : "lower-bound");
    if (ascent_iters > 0) plan.ascent.iters = ascent_iters;
    plan.workers = workers;
    auto* sw = new aoinest_sweep;
    try {
      sw->result = aoinest::sweep_scale(plan);
    } catch (...) {
      delete sw;
      throw;
    }
    *out = sw;
  });
}

void aoinest_sweep_free(aoinest_sweep* s) { delete s; }
int aoinest_sweep_num_rows(const aoinest_sweep* s) { return s ? static_cast<int>(s->result.rows.size()) : 0; }

aoinest_status aoinest_sweep_row(const aoinest_sweep* s, int row, const char** policy, int* scale, double* mean_aoi,
                                 double* std_error, double* bound, double* gap_pct, const char** error) {
  return guarded([&] {
    need(s, "sweep");
    if (row < 0 || row >= static_cast<int>(s->result.rows.size()))
      aoinest::fail(aoinest::ErrorCode::invalid_argument, "row out of range");
    const auto& r = s->result.rows[static_cast<std::size_t>(row)];
    if (policy) *policy = aoinest::to_string(r.policy);
    if (scale) *scale = r.scale;
    if (mean_aoi) *mean_aoi = r.mean_aoi;
    if (std_error) *std_error = r.std_error;
    if (bound) *bound = r.bound;
    if (gap_pct) *gap_pct = r.gap_pct;
    if (error) *error = r.error.c_str();
  });
}

aoinest_status aoinest_check_run(const aoinest_scenario* s, int random_instances, uint64_t seed, int quick,
                                 aoinest_checks** out) {
  return guarded([&] {
    need(s, "scenario");
    need(out, "out");
    aoinest::CheckOptions opts;
    if (random_instances >= 0) opts.random_instances = random_instances;
    opts.seed = seed;
    opts.quick = quick != 0;
    *out = new aoinest_checks{aoinest::run_property_checks(s->cfg, opts)};
  });
}

void aoinest_checks_free(aoinest_checks* c) { delete c; }
int aoinest_checks_count(const aoinest_checks* c) { return c ? static_cast<int>(c->items.size()) : 0; }

aoinest_status aoinest_checks_item(const aoinest_checks* c, int i, const char** name, int* ok, const char** detail,
                                   double* seconds) {
  return guarded([&] {
    need(c, "checks");
    if (i < 0 || i >= static_cast<int>(c->items.size()))
      aoinest::fail(aoinest::ErrorCode::invalid_argument, "check index out of range");
    const auto& it = c->items[static_cast<std::size_t>(i)];
    if (name) *name = it.name.c_str();
    if (ok) *ok = it.ok ? 1 : 0;
    if (detail) *detail = it.detail.c_str();
    if (seconds) *seconds = it.seconds;
  });
}

}  // extern "C"

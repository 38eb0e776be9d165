/* SPDX-License-Identifier: Apache-2.0 */
/*
 * C interface of the aoinest library. Every call returns an aoinest_status;
 * on failure aoinest_last_error() holds a message for the calling thread.
 * Handles are opaque and released with their matching _free function.
 */
#ifndef AOINEST_H
#define AOINEST_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define AOINEST_API __declspec(dllexport)
#else
#define AOINEST_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  AOINEST_OK = 0,
  AOINEST_INVALID_ARGUMENT = 1,
  AOINEST_PARSE_ERROR = 2,
  AOINEST_NOT_CONVERGED = 3,
  AOINEST_NUMERICAL = 4,
  AOINEST_IO = 5,
  AOINEST_TOO_LARGE = 6,
  AOINEST_INTERNAL = 7
} aoinest_status;

typedef struct aoinest_scenario aoinest_scenario;
typedef struct aoinest_episode aoinest_episode;
typedef struct aoinest_checks aoinest_checks;
typedef struct aoinest_sweep aoinest_sweep;

AOINEST_API const char* aoinest_version(void);
/* Message of the last failing call on this thread ("" when none). */
AOINEST_API const char* aoinest_last_error(void);
AOINEST_API const char* aoinest_status_name(aoinest_status status);

/* ---- scenarios ---- */
AOINEST_API aoinest_status aoinest_scenario_load(const char* path, aoinest_scenario** out);
AOINEST_API aoinest_status aoinest_scenario_parse(const char* text, aoinest_scenario** out);
AOINEST_API aoinest_status aoinest_scenario_scale(const aoinest_scenario* s, int r, aoinest_scenario** out);
AOINEST_API aoinest_status aoinest_scenario_write(const aoinest_scenario* s, const char* path);
AOINEST_API aoinest_status aoinest_scenario_set_horizon(aoinest_scenario* s, int horizon);
AOINEST_API void aoinest_scenario_free(aoinest_scenario* s);
AOINEST_API int aoinest_scenario_num_users(const aoinest_scenario* s);
AOINEST_API int aoinest_scenario_num_servers(const aoinest_scenario* s);
AOINEST_API int aoinest_scenario_num_groups(const aoinest_scenario* s);
AOINEST_API int aoinest_scenario_truncation(const aoinest_scenario* s);

/* ---- simulation ----
 * policy: "nested", "mamp", "marp", "rrp" or "lower-bound-replay".
 * Seeds are 0..seeds-1. */
AOINEST_API aoinest_status aoinest_simulate(const aoinest_scenario* s, const char* policy, int seeds,
                                            int record_timeseries, int workers, aoinest_episode** out);
AOINEST_API void aoinest_episode_free(aoinest_episode* e);
AOINEST_API int aoinest_episode_num_seeds(const aoinest_episode* e);
AOINEST_API double aoinest_episode_mean_aoi(const aoinest_episode* e);
AOINEST_API double aoinest_episode_std_error(const aoinest_episode* e);
AOINEST_API double aoinest_episode_seed_aoi(const aoinest_episode* e, int seed_index);
/* Tail-window mean and standard deviation of one server's price. */
AOINEST_API aoinest_status aoinest_episode_tail_nu(const aoinest_episode* e, int seed_index, int server,
                                                   double* mean, double* sd);
/* summary.csv: policy,scale,seed,avg_aoi */
AOINEST_API aoinest_status aoinest_episode_write_summary(const aoinest_episode* e, const char* path);
/* timeseries.csv: t,mean_age,nu_1..nu_M,completions (needs record_timeseries) */
AOINEST_API aoinest_status aoinest_episode_write_timeseries(const aoinest_episode* e, int seed_index,
                                                            const char* path);

/* ---- single-user subproblem ----
 * Solves group `group` (0-based) at prices nu[0..num_servers-1].
 * method: "rvi" or "pi". csv_path may be NULL. */
AOINEST_API aoinest_status aoinest_solve(const aoinest_scenario* s, int group, const double* nu, const char* method,
                                         const char* csv_path, double* gamma_star, int* iterations,
                                         int* truncation_warning);

/* ---- index table ----
 * One state per user: layer (1 idle, 2 computing), age, gen_age (ignored for
 * idle) and server (ignored for idle). method: "closed-form" or "bisection".
 * Writes user,server,layer,delta,gen_age,index,method. */
AOINEST_API aoinest_status aoinest_index_csv(const aoinest_scenario* s, const double* nu, const int* layer,
                                             const int* age, const int* gen_age, const int* server,
                                             const char* method, const char* csv_path);

/* ---- bounds ----
 * Relaxed lower bound by dual ascent; nu_out (may be NULL) receives
 * num_servers prices. bound.csv: nu_1..nu_M,bound_value,iters. */
AOINEST_API aoinest_status aoinest_bound(const aoinest_scenario* s, int iters, const char* csv_path,
                                         double* bound_value, int* iters_done, int* converged, double* nu_out);
/* Occupation-measure LP; fluid.csv holds the objective, duals and the
 * top_k occupancy entries. */
AOINEST_API aoinest_status aoinest_fluid(const aoinest_scenario* s, int top_k, const char* csv_path,
                                         double* objective, double* residual, double* nu_out);

/* ---- sweeps ----
 * policies: comma-separated names; comparison: "lower-bound" or "fluid".
 * Writes sweep.csv, sweep_seeds.csv, sweep_bounds.csv, sweep_timing.csv. */
AOINEST_API aoinest_status aoinest_sweep_run(const char* scenario_path, const char* policies, const int* scales,
                                             int num_scales, int seeds, const char* out_dir, const char* comparison,
                                             int ascent_iters, int workers, aoinest_sweep** out);
AOINEST_API void aoinest_sweep_free(aoinest_sweep* s);
AOINEST_API int aoinest_sweep_num_rows(const aoinest_sweep* s);
/* Row fields; policy and error strings live as long as the handle. */
AOINEST_API aoinest_status aoinest_sweep_row(const aoinest_sweep* s, int row, const char** policy, int* scale,
                                             double* mean_aoi, double* std_error, double* bound, double* gap_pct,
                                             const char** error);

/* ---- property suites ---- */
AOINEST_API aoinest_status aoinest_check_run(const aoinest_scenario* s, int random_instances, uint64_t seed,
                                             int quick, aoinest_checks** out);
AOINEST_API void aoinest_checks_free(aoinest_checks* c);
AOINEST_API int aoinest_checks_count(const aoinest_checks* c);
AOINEST_API aoinest_status aoinest_checks_item(const aoinest_checks* c, int i, const char** name, int* ok,
                                               const char** detail, double* seconds);

#ifdef __cplusplus
}
#endif

#endif /* AOINEST_H */

// SPDX-License-Identifier: Apache-2.0
//
// aoi_nest command-line front end. Talks to the library only through aoinest.h.
#include <CLI11.hpp>

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "aoinest.h"

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

// Input problems are usage errors; everything the solvers raise is numerical.
int exit_code(aoinest_status st) {
  switch (st) {
    case AOINEST_OK: return kExitOk;
    case AOINEST_INVALID_ARGUMENT:
    case AOINEST_PARSE_ERROR:
    case AOINEST_IO: return kExitUsage;
    default: return kExitNumerical;
  }
}

struct Failure {
  aoinest_status status;
};

void check(aoinest_status st) {
  if (st != AOINEST_OK) {
    std::cerr << "aoi_nest: " << aoinest_status_name(st) << ": " << aoinest_last_error() << "\n";
    throw Failure{st};
  }
}

void usage(const std::string& msg) {
  std::cerr << "aoi_nest: " << msg << "\n";
  throw Failure{AOINEST_INVALID_ARGUMENT};
}

struct ScenarioDeleter {
  void operator()(aoinest_scenario* s) const { aoinest_scenario_free(s); }
};
using ScenarioPtr = std::unique_ptr<aoinest_scenario, ScenarioDeleter>;

ScenarioPtr load(const std::string& path, int scale, std::optional<int> horizon) {
  aoinest_scenario* raw = nullptr;
  check(aoinest_scenario_load(path.c_str(), &raw));
  ScenarioPtr s(raw);
  if (scale != 1) {
    aoinest_scenario* scaled = nullptr;
    check(aoinest_scenario_scale(s.get(), scale, &scaled));
    s.reset(scaled);
  }
  if (horizon) check(aoinest_scenario_set_horizon(s.get(), *horizon));
  return s;
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    std::cerr << "aoi_nest: cannot create " << dir << ": " << ec.message() << "\n";
    throw Failure{AOINEST_IO};
  }
}

std::string join(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

std::vector<double> price_vector(const std::vector<double>& given, int num_servers) {
  if (given.empty()) return {};
  if (given.size() == 1) return std::vector<double>(static_cast<std::size_t>(num_servers), given[0]);
  if (static_cast<int>(given.size()) != num_servers)
    usage("--nu needs 1 or " + std::to_string(num_servers) + " values, got " + std::to_string(given.size()));
  return given;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

struct Common {
  std::string scenario;
  int scale = 1;
  std::optional<int> horizon;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--scenario", c.scenario, "scenario file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--scale", c.scale, "system scale r")->check(CLI::PositiveNumber);
  cmd->add_option("--horizon", c.horizon, "override the horizon T")->check(CLI::PositiveNumber);
}

// ---- subcommands ----

struct SimulateArgs {
  Common common;
  std::string policy = "nested";
  int seeds = 1;
  std::string out;
  bool all_timeseries = false;
  int workers = 0;
};

void run_simulate(const SimulateArgs& a) {
  auto s = load(a.common.scenario, a.common.scale, a.common.horizon);
  make_dir(a.out);
  aoinest_episode* e = nullptr;
  check(aoinest_simulate(s.get(), a.policy.c_str(), a.seeds, 1, a.workers, &e));
  std::unique_ptr<aoinest_episode, void (*)(aoinest_episode*)> ep(e, aoinest_episode_free);
  check(aoinest_episode_write_summary(e, join(a.out, "summary.csv").c_str()));
  check(aoinest_episode_write_timeseries(e, 0, join(a.out, "timeseries.csv").c_str()));
  if (a.all_timeseries)
    for (int i = 1; i < aoinest_episode_num_seeds(e); ++i)
      check(aoinest_episode_write_timeseries(e, i, join(a.out, "timeseries_seed" + std::to_string(i) + ".csv").c_str()));
  std::cout << a.policy << " scale " << a.common.scale << ": mean AoI " << fmt(aoinest_episode_mean_aoi(e))
            << " (se " << fmt(aoinest_episode_std_error(e)) << ", " << a.seeds << " seeds)\n";
}

struct SolveArgs {
  Common common;
  int group = 1;
  std::vector<double> nu;
  std::string method = "rvi";
  std::string out;
};

void run_solve(const SolveArgs& a) {
  auto s = load(a.common.scenario, a.common.scale, a.common.horizon);
  const int groups = aoinest_scenario_num_groups(s.get());
  if (a.group < 1 || a.group > groups) usage("--group must be in 1.." + std::to_string(groups));
  const auto nu = price_vector(a.nu, aoinest_scenario_num_servers(s.get()));
  if (!a.out.empty() && fs::path(a.out).has_parent_path()) make_dir(fs::path(a.out).parent_path().string());
  double gamma = 0.0;
  int iters = 0;
  int warn = 0;
  check(aoinest_solve(s.get(), a.group - 1, nu.empty() ? nullptr : nu.data(), a.method.c_str(),
                      a.out.empty() ? nullptr : a.out.c_str(), &gamma, &iters, &warn));
  std::cout << "gamma* " << fmt(gamma) << " after " << iters << " iterations\n";
  if (warn) std::cerr << "aoi_nest: warning: optimal policy reaches the truncation boundary\n";
}

struct IndexArgs {
  Common common;
  std::vector<double> nu;
  std::string method = "closed-form";
  std::string states;
  int idle_age = 1;
  std::string out;
};

// states file: one line per user, `layer,delta,gen_age,server` (server 1-based,
// gen_age and server ignored for idle users). A non-numeric first line is a header.
void read_states(const std::string& path, int users, std::vector<int>& layer, std::vector<int>& age,
                 std::vector<int>& gen, std::vector<int>& server) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "aoi_nest: cannot open " << path << "\n";
    throw Failure{AOINEST_IO};
  }
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    if (lineno == 1 && !std::isdigit(static_cast<unsigned char>(line[0]))) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<int> v;
    while (std::getline(ss, cell, ',')) {
      try {
        v.push_back(std::stoi(cell));
      } catch (const std::exception&) {
        usage(path + ":" + std::to_string(lineno) + ": not an integer: '" + cell + "'");
      }
    }
    if (v.size() < 2) usage(path + ":" + std::to_string(lineno) + ": expected layer,delta[,gen_age,server]");
    layer.push_back(v[0]);
    age.push_back(v[1]);
    gen.push_back(v.size() > 2 ? v[2] : 1);
    server.push_back(v.size() > 3 ? v[3] - 1 : 0);
  }
  if (static_cast<int>(layer.size()) != users)
    usage(path + ": " + std::to_string(layer.size()) + " states for " + std::to_string(users) + " users");
}

void run_index(const IndexArgs& a) {
  auto s = load(a.common.scenario, a.common.scale, a.common.horizon);
  const int n = aoinest_scenario_num_users(s.get());
  std::vector<int> layer, age, gen, server;
  if (a.states.empty()) {
    layer.assign(n, 1);
    age.assign(n, a.idle_age);
    gen.assign(n, 1);
    server.assign(n, 0);
  } else {
    read_states(a.states, n, layer, age, gen, server);
  }
  const auto nu = price_vector(a.nu, aoinest_scenario_num_servers(s.get()));
  if (fs::path(a.out).has_parent_path()) make_dir(fs::path(a.out).parent_path().string());
  check(aoinest_index_csv(s.get(), nu.empty() ? nullptr : nu.data(), layer.data(), age.data(), gen.data(),
                          server.data(), a.method.c_str(), a.out.c_str()));
  std::cout << "wrote " << a.out << "\n";
}

struct BoundArgs {
  Common common;
  int iters = 150;
  std::string out;
};

void run_bound(const BoundArgs& a) {
  auto s = load(a.common.scenario, a.common.scale, a.common.horizon);
  make_dir(a.out);
  std::vector<double> nu(static_cast<std::size_t>(aoinest_scenario_num_servers(s.get())));
  double bound = 0.0;
  int done = 0;
  int converged = 0;
  check(aoinest_bound(s.get(), a.iters, join(a.out, "bound.csv").c_str(), &bound, &done, &converged, nu.data()));
  std::cout << "bound " << fmt(bound) << " after " << done << " iterations" << (converged ? " (converged)" : "")
            << "\n";
}

struct FluidArgs {
  Common common;
  int top_k = 20;
  std::string out;
};

void run_fluid(const FluidArgs& a) {
  auto s = load(a.common.scenario, a.common.scale, a.common.horizon);
  make_dir(a.out);
  std::vector<double> nu(static_cast<std::size_t>(aoinest_scenario_num_servers(s.get())));
  double obj = 0.0;
  double res = 0.0;
  check(aoinest_fluid(s.get(), a.top_k, join(a.out, "fluid.csv").c_str(), &obj, &res, nu.data()));
  std::cout << "fluid objective " << fmt(obj) << " (residual " << fmt(res) << ")\n";
}

struct SweepArgs {
  std::string scenario;
  std::string policies = "nested,mamp,marp,rrp";
  std::vector<int> scales{1, 2, 5, 10, 20};
  int seeds = 5;
  std::string out;
  std::string comparison = "lower-bound";
  int iters = 150;
  int workers = 0;
};

void run_sweep(const SweepArgs& a) {
  make_dir(a.out);
  aoinest_sweep* sw = nullptr;
  check(aoinest_sweep_run(a.scenario.c_str(), a.policies.c_str(), a.scales.data(), static_cast<int>(a.scales.size()),
                          a.seeds, a.out.c_str(), a.comparison.c_str(), a.iters, a.workers, &sw));
  std::unique_ptr<aoinest_sweep, void (*)(aoinest_sweep*)> guard(sw, aoinest_sweep_free);
  int failed = 0;
  for (int i = 0; i < aoinest_sweep_num_rows(sw); ++i) {
    const char* policy = nullptr;
    const char* err = nullptr;
    int scale = 0;
    double mean = 0, se = 0, bound = 0, gap = 0;
    check(aoinest_sweep_row(sw, i, &policy, &scale, &mean, &se, &bound, &gap, &err));
    if (err && *err) {
      ++failed;
      std::cout << policy << " r=" << scale << ": failed: " << err << "\n";
    } else {
      std::cout << policy << " r=" << scale << ": " << fmt(mean) << " (se " << fmt(se) << ", gap " << fmt(gap)
                << "%)\n";
    }
  }
  if (failed) throw Failure{AOINEST_NUMERICAL};
}

struct CheckArgs {
  std::string scenario;
  int random = 20;
  std::uint64_t seed = 7;
  bool quick = false;
};

void run_check(const CheckArgs& a) {
  auto s = load(a.scenario, 1, std::nullopt);
  aoinest_checks* c = nullptr;
  check(aoinest_check_run(s.get(), a.random, a.seed, a.quick ? 1 : 0, &c));
  std::unique_ptr<aoinest_checks, void (*)(aoinest_checks*)> guard(c, aoinest_checks_free);
  int failed = 0;
  for (int i = 0; i < aoinest_checks_count(c); ++i) {
    const char* name = nullptr;
    const char* detail = nullptr;
    int ok = 0;
    double secs = 0;
    check(aoinest_checks_item(c, i, &name, &ok, &detail, &secs));
    if (!ok) ++failed;
    std::cout << (ok ? "OK   " : "FAIL ") << name << " (" << fmt(secs) << " s)";
    if (detail && *detail) std::cout << ": " << detail;
    std::cout << "\n";
  }
  if (failed) {
    std::cout << failed << " suite(s) failed\n";
    throw Failure{AOINEST_NUMERICAL};
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Nested-index scheduling for age-of-information in edge offloading"};
  app.require_subcommand(1);
  app.set_version_flag("--version", aoinest_version());

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "run a policy over seeds");
  add_common(c_sim, sim.common);
  c_sim->add_option("--policy", sim.policy, "nested | mamp | marp | rrp | lower-bound-replay");
  c_sim->add_option("--seeds", sim.seeds, "number of seeds")->check(CLI::PositiveNumber);
  c_sim->add_option("--out", sim.out, "output directory")->required();
  c_sim->add_flag("--all-timeseries", sim.all_timeseries, "also write timeseries_seed<k>.csv for k >= 1");
  c_sim->add_option("--workers", sim.workers, "worker threads (0: AOI_NEST_WORKERS or all cores)");

  SolveArgs solve;
  auto* c_solve = app.add_subcommand("solve", "solve one group's single-user subproblem");
  add_common(c_solve, solve.common);
  c_solve->add_option("--group", solve.group, "group number, 1-based");
  c_solve->add_option("--nu", solve.nu, "server prices (one value or one per server)")->delimiter(',');
  c_solve->add_option("--method", solve.method, "rvi | pi")->check(CLI::IsMember({"rvi", "pi"}));
  c_solve->add_option("--out", solve.out, "solution CSV path");

  IndexArgs index;
  auto* c_index = app.add_subcommand("index", "dump the index table of a population state");
  add_common(c_index, index.common);
  c_index->add_option("--nu", index.nu, "server prices (one value or one per server)")->delimiter(',');
  c_index->add_option("--method", index.method, "closed-form | bisection")
      ->check(CLI::IsMember({"closed-form", "bisection"}));
  auto* o_states = c_index->add_option("--states", index.states, "CSV of layer,delta,gen_age,server per user")
                       ->check(CLI::ExistingFile);
  c_index->add_option("--idle-age", index.idle_age, "age of every user when no states file is given")
      ->check(CLI::PositiveNumber)
      ->excludes(o_states);
  c_index->add_option("--out", index.out, "index CSV path")->required();

  BoundArgs bound;
  auto* c_bound = app.add_subcommand("bound", "relaxed lower bound by dual ascent");
  add_common(c_bound, bound.common);
  c_bound->add_option("--iters", bound.iters, "ascent iterations")->check(CLI::PositiveNumber);
  c_bound->add_option("--out", bound.out, "output directory")->required();

  FluidArgs fluid;
  auto* c_fluid = app.add_subcommand("fluid", "occupation-measure LP");
  add_common(c_fluid, fluid.common);
  c_fluid->add_option("--top-k", fluid.top_k, "occupancy rows to emit")->check(CLI::PositiveNumber);
  c_fluid->add_option("--out", fluid.out, "output directory")->required();

  SweepArgs sweep;
  auto* c_sweep = app.add_subcommand("sweep", "policies x scales x seeds");
  c_sweep->add_option("--scenario", sweep.scenario, "scenario file")->required()->check(CLI::ExistingFile);
  c_sweep->add_option("--policies", sweep.policies, "comma-separated policy list");
  c_sweep->add_option("--scales", sweep.scales, "comma-separated scales")->delimiter(',');
  c_sweep->add_option("--seeds", sweep.seeds, "seeds per cell")->check(CLI::PositiveNumber);
  c_sweep->add_option("--out", sweep.out, "output directory")->required();
  c_sweep->add_option("--comparison", sweep.comparison, "lower-bound | fluid")
      ->check(CLI::IsMember({"lower-bound", "fluid"}));
  c_sweep->add_option("--iters", sweep.iters, "ascent iterations for the bound")->check(CLI::PositiveNumber);
  c_sweep->add_option("--workers", sweep.workers, "worker threads (0: AOI_NEST_WORKERS or all cores)");

  CheckArgs chk;
  auto* c_check = app.add_subcommand("check", "run every property suite");
  c_check->add_option("--scenario", chk.scenario, "scenario file")->required()->check(CLI::ExistingFile);
  c_check->add_option("--random", chk.random, "random instances")->check(CLI::NonNegativeNumber);
  c_check->add_option("--seed", chk.seed, "seed of the random instances");
  c_check->add_flag("--quick", chk.quick, "smaller grids and fewer samples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (c_sim->parsed()) run_simulate(sim);
    else if (c_solve->parsed()) run_solve(solve);
    else if (c_index->parsed()) run_index(index);
    else if (c_bound->parsed()) run_bound(bound);
    else if (c_fluid->parsed()) run_fluid(fluid);
    else if (c_sweep->parsed()) run_sweep(sweep);
    else if (c_check->parsed()) run_check(chk);
  } catch (const Failure& f) {
    return exit_code(f.status);
  }
  return kExitOk;
}

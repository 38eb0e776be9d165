// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "aoinest/error.hpp"
#include "aoinest/harness.hpp"
#include "aoinest/scenario.hpp"

using namespace aoinest;
namespace fs = std::filesystem;

namespace {

ScenarioConfig tiny() {
  ScenarioConfig cfg;
  cfg.num_users = 3;
  cfg.num_servers = 1;
  cfg.groups = {{2, 2, {0.6}}, {1, 3, {0.8}}};
  cfg.horizon = 600;
  cfg.truncation = 30;
  return cfg;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("aoinest_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

ExperimentPlan plan_for(const fs::path& dir) {
  ExperimentPlan plan;
  plan.policies = {PolicyId::nested, PolicyId::mamp};
  plan.scales = {1, 2};
  plan.seeds = 2;
  plan.out_dir = dir.string();
  plan.ascent.iters = 40;
  return plan;
}

}  // namespace

TEST_CASE("summary of a single seed has zero standard error") {
  EpisodeMetrics m;
  m.seeds.resize(1);
  m.seeds[0].avg_aoi = 7.5;
  m.mean_aoi = 7.5;
  const auto row = summarize(m, 4, 5.0);
  CHECK(row.std_error == 0.0);
  CHECK(row.total_aoi == doctest::Approx(30.0));
  CHECK(row.gap_pct == doctest::Approx(50.0));
}

TEST_CASE("plans are validated") {
  const auto dir = scratch("plan");
  auto plan = plan_for(dir);
  CHECK_NOTHROW(plan.validate());
  plan.policies.clear();
  CHECK_THROWS_AS(plan.validate(), Error);
  plan = plan_for(dir);
  plan.scales.clear();
  CHECK_THROWS_AS(plan.validate(), Error);
  CHECK(parse_bound_kind("fluid") == BoundKind::fluid);
  CHECK(std::string(to_string(BoundKind::lower_bound)) == "lower-bound");
  CHECK_THROWS_AS(parse_bound_kind("exact"), Error);
  CHECK(seed_list(3) == std::vector<std::uint64_t>{0, 1, 2});
}

TEST_CASE("sweeps are byte-identical across reruns") {
  const auto a = scratch("sweep_a");
  const auto b = scratch("sweep_b");
  const auto cfg = tiny();
  const auto ra = sweep_scale(cfg, plan_for(a));
  sweep_scale(cfg, plan_for(b));
  REQUIRE(ra.rows.size() == 4);
  for (const char* f : {"sweep.csv", "sweep_seeds.csv", "sweep_bounds.csv"}) {
    CAPTURE(f);
    CHECK(slurp(a / f) == slurp(b / f));
  }
  const auto text = slurp(a / "sweep.csv");
  CHECK(text.find('\r') == std::string::npos);
  CHECK(text.rfind("policy,scale,seeds,mean_aoi,std_error,total_aoi,bound,gap_pct,error\n", 0) == 0);
}

TEST_CASE("sweep rows agree with the per-seed data") {
  const auto dir = scratch("sweep_rows");
  const auto res = sweep_scale(tiny(), plan_for(dir));
  const auto seeds = read_csv(dir / "sweep_seeds.csv");
  const auto rows = read_csv(dir / "sweep.csv");
  REQUIRE(rows.size() == res.rows.size() + 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    std::vector<double> xs;
    for (std::size_t s = 1; s < seeds.size(); ++s)
      if (seeds[s][0] == rows[r][0] && seeds[s][1] == rows[r][1]) xs.push_back(std::stod(seeds[s].back()));
    REQUIRE(xs.size() == 2);
    const auto [mean, se] = mean_and_stderr(xs);
    const double bound = std::stod(rows[r][6]);
    CHECK(std::stod(rows[r][3]) == doctest::Approx(mean).epsilon(1e-8));
    CHECK(std::stod(rows[r][4]) == doctest::Approx(se).epsilon(1e-7));
    CHECK(std::stod(rows[r][7]) == doctest::Approx(100.0 * (mean - bound) / bound).epsilon(1e-6));
    // bound dominance
    CHECK(std::stod(rows[r][7]) >= -300.0 * se / bound - 1e-9);
  }
}

TEST_CASE("summary aggregation matches a recomputation from the time series") {
  auto cfg = tiny();
  SimulationOptions o;
  o.record_timeseries = true;
  const auto m = run_simulation(cfg, PolicyId::nested, {5}, o);
  const auto dir = scratch("timeseries");
  write_timeseries_csv((dir / "timeseries.csv").string(), m.seeds[0], cfg.num_servers);
  write_summary_csv((dir / "summary.csv").string(), {m});
  const auto ts = read_csv(dir / "timeseries.csv");
  REQUIRE(ts.size() == static_cast<std::size_t>(cfg.horizon) + 1);
  CHECK(ts[0] == std::vector<std::string>{"t", "mean_age", "nu_1", "completions"});
  const int burn = static_cast<int>(0.1 * cfg.horizon);
  double sum = 0.0;
  for (int t = burn; t < cfg.horizon; ++t) sum += std::stod(ts[static_cast<std::size_t>(t) + 1][1]);
  const double recomputed = sum / (cfg.horizon - burn);
  const auto summary = read_csv(dir / "summary.csv");
  REQUIRE(summary.size() == 2);
  CHECK(summary[0] == std::vector<std::string>{"policy", "scale", "seed", "avg_aoi"});
  CHECK(std::stod(summary[1][3]) == doctest::Approx(recomputed).epsilon(1e-8));
}

TEST_CASE("bound and index emitters") {
  const auto dir = scratch("emit");
  write_bound_csv((dir / "bound.csv").string(), {1.5, 2.0}, 3.25, 7);
  CHECK(slurp(dir / "bound.csv") == "nu_1,nu_2,bound_value,iters\n1.5,2,3.25,7\n");

  const auto cfg = tiny();
  const std::vector<UserState> states{Idle{5}, Computing{4, 2, 0}, Idle{1}};
  const auto cf = index_table(states, cfg, {2.0}, IndexMethod::closed_form);
  const auto bi = index_table(states, cfg, {2.0}, IndexMethod::bisection);
  CHECK(cf.num_users == 3);
  CHECK(bi.method == IndexMethod::bisection);
  write_index_csv((dir / "index.csv").string(), states, cf, cfg);
  const auto rows = read_csv(dir / "index.csv");
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == std::vector<std::string>{"user", "server", "layer", "delta", "gen_age", "index", "method"});
  CHECK(rows[2][2] == "2");
  CHECK(rows[2][4] == "2");
  CHECK_THROWS_AS(index_table({Idle{1}}, cfg, {2.0}, IndexMethod::closed_form), Error);
  CHECK_THROWS_AS(write_bound_csv("/nonexistent/dir/bound.csv", {1.0}, 1.0, 1), Error);
}

TEST_CASE("kernel check finds no violations") {
  CHECK(check_kernel(tiny(), 25).empty());
}

TEST_CASE("quick property run reports every suite") {
  CheckOptions o;
  o.random_instances = 2;
  o.quick = true;
  const auto items = run_property_checks(tiny(), o);
  std::vector<std::string> names;
  for (const auto& i : items) names.push_back(i.name);
  for (const char* n : {"kernel", "mltt", "value-monotonicity", "stage-cost", "threshold-sandwich",
                        "perturbation-bounds", "indexability", "precise-division", "fluid-residuals"})
    CHECK(std::find(names.begin(), names.end(), n) != names.end());
  for (const auto& i : items)
    if (i.name == "kernel" || i.name == "stage-cost" || i.name == "fluid-residuals") CHECK(i.ok);
}

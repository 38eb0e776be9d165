// SPDX-License-Identifier: Apache-2.0
//
// Scenario files: a header line `aoi-nest-scenario v1` followed by
// `key = value` lines. `#` starts a comment.
//
//   num_users = 50
//   num_servers = 10
//   horizon = 10000
//   group = count:5 tau_min:2 p:0.8          (same p on every server)
//   group = count:5 tau_min:2 p:0.8,0.7,...  (one p per server)
//
// Optional keys: smoothing, truncation, rng_seed, scale, initial_costs,
// completion_rule (strict|inclusive), allow_server_switch (true|false),
// on_unassigned (drop|hold).
#pragma once

#include <string>

#include "aoinest/model.hpp"

namespace aoinest {

/// Throws Error(parse_error) with `source:line:` prefixes, or
/// Error(invalid_argument) for whole-config violations.
ScenarioConfig parse_scenario_text(const std::string& text, const std::string& source = "<string>");
ScenarioConfig parse_scenario(const std::string& path);

std::string serialize_scenario(const ScenarioConfig& cfg);
void write_scenario(const ScenarioConfig& cfg, const std::string& path);

/// N, M and every group count multiplied by r; server r-copies keep the
/// success probabilities of the original servers.
ScenarioConfig scale_scenario(const ScenarioConfig& cfg, int r);

}  // namespace aoinest

// SPDX-License-Identifier: Apache-2.0
#include "aoinest/scenario.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "aoinest/error.hpp"

namespace aoinest {

namespace {

constexpr const char* kHeader = "aoi-nest-scenario v1";

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

class LineError {
 public:
  LineError(const std::string& source, int line) : prefix_(source + ":" + std::to_string(line) + ": ") {}
  [[noreturn]] void operator()(const std::string& msg) const { fail(ErrorCode::parse_error, prefix_ + msg); }

 private:
  std::string prefix_;
};

long parse_long(const std::string& s, const std::string& key, const LineError& err) {
  long v = 0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) err(key + ": expected an integer, got '" + s + "'");
  return v;
}

int parse_int(const std::string& s, const std::string& key, const LineError& err) {
  const long v = parse_long(s, key, err);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) err(key + ": out of range");
  return static_cast<int>(v);
}

double parse_double(const std::string& s, const std::string& key, const LineError& err) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) err(key + ": expected a number, got '" + s + "'");
  return v;
}

std::vector<double> parse_list(const std::string& s, char sep, const std::string& key, const LineError& err) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(s);
  if (sep == ' ') {
    while (in >> item) out.push_back(parse_double(item, key, err));
  } else {
    while (std::getline(in, item, sep)) out.push_back(parse_double(trim(item), key, err));
  }
  if (out.empty()) err(key + ": empty list");
  return out;
}

bool parse_bool(const std::string& s, const std::string& key, const LineError& err) {
  if (s == "true") return true;
  if (s == "false") return false;
  err(key + ": expected true or false, got '" + s + "'");
}

// shortest text that reads back to the same double
std::string exact(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct PendingGroup {
  UserGroup group;
  int line = 0;
};

}  // namespace

ScenarioConfig parse_scenario_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  bool header = false;
  ScenarioConfig cfg;
  std::map<std::string, int> seen;
  std::vector<PendingGroup> groups;
  bool has_truncation = false;

  while (std::getline(in, raw)) {
    ++line_no;
    const LineError err(source, line_no);
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (!header) {
      if (line != kHeader) err("expected header '" + std::string(kHeader) + "'");
      header = true;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) err("expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (value.empty()) err(key + ": missing value");
    if (key != "group") {
      if (seen.count(key)) err(key + ": duplicate key (first on line " + std::to_string(seen[key]) + ")");
      seen[key] = line_no;
    }

    if (key == "num_users") {
      cfg.num_users = parse_int(value, key, err);
    } else if (key == "num_servers") {
      cfg.num_servers = parse_int(value, key, err);
    } else if (key == "horizon") {
      cfg.horizon = parse_int(value, key, err);
    } else if (key == "smoothing") {
      cfg.smoothing = parse_double(value, key, err);
    } else if (key == "truncation") {
      cfg.truncation = parse_int(value, key, err);
      has_truncation = true;
    } else if (key == "rng_seed") {
      const long v = parse_long(value, key, err);
      if (v < 0) err("rng_seed: must be non-negative");
      cfg.rng_seed = static_cast<std::uint64_t>(v);
    } else if (key == "scale") {
      cfg.scale = parse_int(value, key, err);
    } else if (key == "initial_costs") {
      cfg.initial_costs = parse_list(value, ' ', key, err);
    } else if (key == "completion_rule") {
      if (value == "strict") cfg.completion_rule = CompletionRule::strict;
      else if (value == "inclusive") cfg.completion_rule = CompletionRule::inclusive;
      else err("completion_rule: expected strict or inclusive, got '" + value + "'");
    } else if (key == "allow_server_switch") {
      cfg.allow_server_switch = parse_bool(value, key, err);
    } else if (key == "on_unassigned") {
      if (value == "drop") cfg.on_unassigned = UnassignedRule::drop;
      else if (value == "hold") cfg.on_unassigned = UnassignedRule::hold;
      else err("on_unassigned: expected drop or hold, got '" + value + "'");
    } else if (key == "group") {
      PendingGroup pg;
      pg.line = line_no;
      bool has_count = false, has_p = false;
      std::istringstream fields(value);
      std::string field;
      while (fields >> field) {
        const auto colon = field.find(':');
        if (colon == std::string::npos) err("group: expected name:value, got '" + field + "'");
        const std::string name = field.substr(0, colon);
        const std::string v = field.substr(colon + 1);
        if (name == "count") {
          pg.group.count = parse_int(v, "group count", err);
          has_count = true;
        } else if (name == "tau_min") {
          pg.group.tau_min = parse_int(v, "group tau_min", err);
        } else if (name == "p") {
          pg.group.success_prob = parse_list(v, ',', "group p", err);
          for (double p : pg.group.success_prob)
            if (!(p > 0.0 && p <= 1.0)) err("group p: success probability " + v + " outside (0,1]");
          has_p = true;
        } else {
          err("group: unknown field '" + name + "'");
        }
      }
      if (!has_count) err("group: missing count");
      if (!has_p) err("group: missing p");
      groups.push_back(std::move(pg));
    } else {
      err("unknown key '" + key + "'");
    }
  }
  if (!header) fail(ErrorCode::parse_error, source + ": missing header '" + std::string(kHeader) + "'");
  for (const char* k : {"num_users", "num_servers", "horizon"})
    if (!seen.count(k)) fail(ErrorCode::parse_error, source + ": missing field " + k);
  if (groups.empty()) fail(ErrorCode::parse_error, source + ": missing field group");

  for (auto& pg : groups) {
    auto& p = pg.group.success_prob;
    if (p.size() == 1 && cfg.num_servers > 1) p.assign(static_cast<std::size_t>(cfg.num_servers), p[0]);
    if (p.size() != static_cast<std::size_t>(cfg.num_servers))
      LineError(source, pg.line)("group p: " + std::to_string(p.size()) + " values for " +
                                 std::to_string(cfg.num_servers) + " servers");
    cfg.groups.push_back(pg.group);
  }
  if (!has_truncation) cfg.truncation = default_truncation(cfg);
  try {
    cfg.validate();
  } catch (const Error& e) {
    // point at the line of the field named in the message when we have it
    std::string msg = e.what();
    const std::string field = msg.substr(0, msg.find(':'));
    std::string where = source;
    if (auto it = seen.find(field); it != seen.end()) where += ":" + std::to_string(it->second);
    else if (field == "group counts" && seen.count("num_users")) where += ":" + std::to_string(seen["num_users"]);
    fail(ErrorCode::invalid_argument, where + ": " + msg);
  }
  return cfg;
}

ScenarioConfig parse_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open scenario file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario_text(buf.str(), path);
}

std::string serialize_scenario(const ScenarioConfig& cfg) {
  std::ostringstream out;
  out << kHeader << '\n';
  out << "num_users = " << cfg.num_users << '\n';
  out << "num_servers = " << cfg.num_servers << '\n';
  out << "horizon = " << cfg.horizon << '\n';
  out << "smoothing = " << exact(cfg.smoothing) << '\n';
  out << "truncation = " << cfg.truncation << '\n';
  out << "rng_seed = " << cfg.rng_seed << '\n';
  out << "scale = " << cfg.scale << '\n';
  out << "completion_rule = " << (cfg.completion_rule == CompletionRule::strict ? "strict" : "inclusive") << '\n';
  out << "allow_server_switch = " << (cfg.allow_server_switch ? "true" : "false") << '\n';
  out << "on_unassigned = " << (cfg.on_unassigned == UnassignedRule::drop ? "drop" : "hold") << '\n';
  if (!cfg.initial_costs.empty()) {
    out << "initial_costs =";
    for (double c : cfg.initial_costs) out << ' ' << exact(c);
    out << '\n';
  }
  for (const auto& g : cfg.groups) {
    out << "group = count:" << g.count << " tau_min:" << g.tau_min << " p:";
    for (std::size_t m = 0; m < g.success_prob.size(); ++m) out << (m ? "," : "") << exact(g.success_prob[m]);
    out << '\n';
  }
  return out.str();
}

void write_scenario(const ScenarioConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot write scenario file " + path);
  out << serialize_scenario(cfg);
  if (!out) fail(ErrorCode::io, "write failed: " + path);
}

ScenarioConfig scale_scenario(const ScenarioConfig& cfg, int r) {
  if (r < 1) fail(ErrorCode::invalid_argument, "scale: r must be a positive integer");
  constexpr long kMax = std::numeric_limits<int>::max();
  if (static_cast<long>(cfg.num_users) * r > kMax || static_cast<long>(cfg.num_servers) * r > kMax ||
      static_cast<long>(cfg.scale) * r > kMax)
    fail(ErrorCode::invalid_argument, "scale: N * r overflows");
  ScenarioConfig out = cfg;
  out.num_users = cfg.num_users * r;
  out.num_servers = cfg.num_servers * r;
  out.scale = cfg.scale * r;
  for (auto& g : out.groups) {
    g.count *= r;
    std::vector<double> p;
    p.reserve(static_cast<std::size_t>(out.num_servers));
    for (int k = 0; k < r; ++k) p.insert(p.end(), g.success_prob.begin(), g.success_prob.end());
    g.success_prob = std::move(p);
  }
  if (!cfg.initial_costs.empty()) {
    out.initial_costs.clear();
    for (int k = 0; k < r; ++k) out.initial_costs.insert(out.initial_costs.end(), cfg.initial_costs.begin(), cfg.initial_costs.end());
  }
  return out;
}

}  // namespace aoinest

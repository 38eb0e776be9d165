// SPDX-License-Identifier: Apache-2.0
//
// Nested index of a (state, server) pair: the smallest activating cost of the
// server at which some other action becomes strictly cheaper.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "aoinest/mdp.hpp"

namespace aoinest {

enum class IndexMethod { bisection, closed_form };

const char* to_string(IndexMethod m);

/// Indices of every (user, server) pair for the current slot.
struct IndexTable {
  int num_users = 0;
  int num_servers = 0;
  IndexMethod method = IndexMethod::closed_form;
  std::vector<double> values;           // row-major, users x servers
  std::vector<unsigned char> no_pred;   // 1 where NoOp served as the reference action

  IndexTable() = default;
  IndexTable(int users, int servers, IndexMethod m)
      : num_users(users), num_servers(servers), method(m),
        values(static_cast<std::size_t>(users) * servers, 0.0),
        no_pred(static_cast<std::size_t>(users) * servers, 0) {}
  double& at(int user, int server) { return values[static_cast<std::size_t>(user) * num_servers + server]; }
  double at(int user, int server) const {
    return values[static_cast<std::size_t>(user) * num_servers + server];
  }
};

/// Reference action for the closed form: the cheapest server of the next slower
/// class, or NoOp (cost 0) for the slowest class.
struct Predecessor {
  int server = kNoOp;
  double cost = 0.0;
};
Predecessor closed_form_predecessor(const SubproblemModel& model, int server,
                                    const std::vector<double>& costs);

/// max(0, nu_pred + age - gamma*). Servers not allowed in the state get 0.
double index_closed_form(const SubproblemModel& model, const MdpState& s, int server,
                         const std::vector<double>& costs, double gamma_star,
                         bool* used_noop = nullptr);

struct BisectionOptions {
  double tol = 1e-6;
  double bracket_hi = 0.0;  // 0 selects the truncation age
  double cap = 1e7;
  RviOptions rvi;
};

/// Bisection on the activating cost of one server with all other costs fixed.
/// Solves are memoised by cost value and warm-started from the nearest one.
class BisectionIndex {
 public:
  BisectionIndex(SubproblemModel model, std::vector<double> costs, int server,
                 BisectionOptions opts = {});

  /// Throws Error(numerical) when the bracket cap is exceeded.
  double index(const MdpState& s);
  /// mu(server) minus the best competing mu at cost x; positive means strictly passive.
  double passive_margin(const MdpState& s, double x);

  int solves() const { return static_cast<int>(cache_.size()); }

 private:
  const SubproblemSolution& solve_at(double x);

  SubproblemModel model_;
  std::vector<double> costs_;
  int server_;
  BisectionOptions opts_;
  TruncatedStateSpace space_;
  std::map<double, SubproblemSolution> cache_;
};

/// Best mu among NoOp and allowed servers other than `server`.
double best_competitor_mu(const SubproblemSolution& sol, int state_index, int server);

/// Exact average cost of a fixed policy from the linear system
/// V + gamma = c + P V with V(Idle(1)) = 0. Throws Error(numerical) if singular.
struct PolicyEvaluation {
  double gamma = 0.0;
  std::vector<double> value;
};
PolicyEvaluation evaluate_policy(const SubproblemModel& model, const std::vector<double>& costs,
                                 const std::vector<int>& policy);

/// Policy built from threshold chains.
std::vector<int> policy_from_thresholds(const SubproblemModel& model,
                                        const std::vector<ThresholdChain>& chains);

struct ClosedFormGamma {
  double gamma_star = 0.0;
  std::vector<int> policy;
  std::vector<ThresholdChain> thresholds;
  int rounds = 0;
};

/// Unit minimum time only (completion possible in the offload slot). Searches
/// threshold policies by exact evaluation and improvement until stable.
ClosedFormGamma gamma_star_closed_form(const SubproblemModel& model, const std::vector<double>& costs,
                                       int max_rounds = 200);
/// Same, for supplied thresholds.
double gamma_star_closed_form(const SubproblemModel& model, const std::vector<double>& costs,
                              const std::vector<ThresholdChain>& thresholds);

struct PreciseDivisionReport {
  bool ok = true;
  int checked = 0;
  int vacuous = 0;  // states where no clause applies (e.g. single server, no competitor)
  std::vector<std::string> violations;
  double worst_margin = 0.0;
};

/// Checks the three index/cost clauses at sampled states for every server.
PreciseDivisionReport precise_division_check(const SubproblemModel& model,
                                             const std::vector<double>& costs,
                                             const std::vector<MdpState>& samples,
                                             const BisectionOptions& opts = {}, double tol = 1e-6);

}  // namespace aoinest

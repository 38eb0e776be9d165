// SPDX-License-Identifier: Apache-2.0
//
// Occupation-measure linear program of the relaxed multi-user problem and a
// comparison of simulated prices and state frequencies with its solution.
#pragma once

#include <string>
#include <vector>

#include "aoinest/mdp.hpp"
#include "aoinest/model.hpp"

namespace aoinest {

/// min c'x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  x >= 0  (dense, row-major).
struct LinearProgram {
  int num_vars = 0;
  std::vector<double> objective;
  std::vector<std::vector<double>> eq_rows;
  std::vector<double> eq_rhs;
  std::vector<std::vector<double>> ub_rows;
  std::vector<double> ub_rhs;
};

struct LpResult {
  bool feasible = false;
  bool bounded = true;
  double objective = 0.0;
  std::vector<double> x;
  std::vector<double> eq_duals;  // d objective / d b_eq
  std::vector<double> ub_duals;  // d objective / d b_ub (<= 0)
  double residual = 0.0;  // worst violation of the constraints at x
  int pivots = 0;
};

/// Two-phase revised simplex (Dantzig pricing, Bland's rule on degenerate
/// runs). Throws Error(too_large) when the dense working set would exceed `max_cells`.
LpResult solve_lp(const LinearProgram& lp, double max_cells = 4e7);

struct FluidSolution {
  double objective = 0.0;  // per-user average age
  std::vector<double> nu;  // capacity duals, one per server
  std::vector<int> family_of_group;
  std::vector<SubproblemModel> families;
  // rho[f][state * (1 + M) + (action + 1)]: stationary fraction of a user of
  // family f in that state taking that action (action -1 is NoOp)
  std::vector<std::vector<double>> rho;
  std::vector<std::vector<double>> state_mass;  // z[f][state]
  double residual = 0.0;  // balance, normalisation and capacity
  int pivots = 0;
};

/// Throws Error(too_large) for big instances and Error(numerical) when no
/// balanced occupation measure exists in the truncated space.
FluidSolution fluid_lp(const ScenarioConfig& cfg, double max_cells = 4e7);

struct FixedPointReport {
  bool ok = true;
  double dual_gap = 0.0;       // max_m |nu_sim - nu_ref|
  double dual_rel_gap = 0.0;   // dual_gap / max(1, max nu_ref)
  double occupancy_gap = 0.0;  // max over families and states of |z_sim - z_ref|
  std::vector<double> nu_sim;
  std::vector<double> nu_ref;
};

/// Compares tail-mean simulated prices and per-family state frequencies with
/// a reference solution. `tol` applies to dual_rel_gap; pass a negative
/// occupancy_tol to skip the occupancy test.
FixedPointReport fixed_point_check(const std::vector<double>& nu_sim, const std::vector<double>& nu_ref,
                                   const std::vector<std::vector<double>>& z_sim,
                                   const std::vector<std::vector<double>>& z_ref, double tol,
                                   double occupancy_tol = -1.0);

}  // namespace aoinest

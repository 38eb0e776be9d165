// SPDX-License-Identifier: Apache-2.0
#include "aoinest/fluid.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "aoinest/error.hpp"

namespace aoinest {

namespace {

constexpr double kCostTol = 1e-9;   // reduced-cost optimality tolerance
constexpr double kPivotTol = 1e-7;  // smallest usable entry of the entering column, relative
constexpr int kRefactorEvery = 32;

// Revised simplex on min c'x, Ax = b, x >= 0 with b >= 0, keeping an explicit
// basis inverse that is rebuilt from A every kRefactorEvery pivots.
class RevisedSimplex {
 public:
  RevisedSimplex(Eigen::MatrixXd a, Eigen::VectorXd b, std::vector<int> basis)
      : a_(std::move(a)), b_(std::move(b)), basis_(std::move(basis)) {
    refactor();
  }

  // Returns false when the objective is unbounded below. Columns with
  // allowed[j] == 0 never enter.
  bool optimise(const Eigen::VectorXd& c, const std::vector<char>& allowed, int& pivots) {
    const int m = static_cast<int>(a_.rows());
    const int n = static_cast<int>(a_.cols());
    const long limit = 20L * (m + n) + 1000;
    int degenerate = 0;
    for (long iter = 0; iter < limit; ++iter) {
      Eigen::VectorXd cb(m);
      for (int i = 0; i < m; ++i) cb(i) = c(basis_[static_cast<std::size_t>(i)]);
      const Eigen::VectorXd y = binv_.transpose() * cb;
      const Eigen::VectorXd d = c - a_.transpose() * y;
      const bool bland = degenerate > 50;
      int enter = -1;
      double best = -kCostTol * (1.0 + cb.cwiseAbs().maxCoeff());
      for (int j = 0; j < n; ++j) {
        if (!allowed[static_cast<std::size_t>(j)] || in_basis_[static_cast<std::size_t>(j)]) continue;
        if (d(j) < best) {
          enter = j;
          if (bland) break;
          best = d(j);
        }
      }
      if (enter < 0) return true;
      const Eigen::VectorXd u = binv_ * a_.col(enter);
      const Eigen::VectorXd xb = primal();
      const double umax = std::max(1.0, u.cwiseAbs().maxCoeff());
      double ratio = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m; ++i)
        if (u(i) > kPivotTol * umax) ratio = std::min(ratio, std::max(0.0, xb(i)) / u(i));
      // rows attaining the minimum ratio; prefer well-sized pivots, then
      // the lowest basic column (Bland) or the largest pivot
      double tied_max = 0.0;
      const double slack = 1e-12 * (1.0 + ratio);
      for (int i = 0; i < m; ++i)
        if (u(i) > kPivotTol * umax && std::max(0.0, xb(i)) / u(i) <= ratio + slack) tied_max = std::max(tied_max, u(i));
      int leave = -1;
      for (int i = 0; i < m; ++i) {
        if (u(i) < 1e-2 * tied_max || std::max(0.0, xb(i)) / u(i) > ratio + slack) continue;
        if (leave < 0) {
          leave = i;
          continue;
        }
        const bool better = bland ? basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)]
                                  : u(i) > u(leave);
        if (better) leave = i;
      }
      if (leave < 0) return false;
      degenerate = ratio <= 1e-12 ? degenerate + 1 : 0;
      swap(leave, enter, u);
      ++pivots;
    }
    fail(ErrorCode::not_converged, "simplex iteration limit reached");
  }

  Eigen::VectorXd primal() const { return binv_ * b_; }
  Eigen::VectorXd duals(const Eigen::VectorXd& c) const {
    Eigen::VectorXd cb(a_.rows());
    for (int i = 0; i < a_.rows(); ++i) cb(i) = c(basis_[static_cast<std::size_t>(i)]);
    return binv_.transpose() * cb;
  }
  const std::vector<int>& basis() const { return basis_; }

  // Replaces basic position `pos` by a column outside `excluded` with a
  // usable pivot; returns false when that row is a combination of others.
  bool replace_basic(int pos, const std::vector<char>& excluded) {
    const Eigen::RowVectorXd row = binv_.row(pos) * a_;
    const double scale = std::max(1.0, row.cwiseAbs().maxCoeff());
    for (int j = 0; j < a_.cols(); ++j) {
      if (excluded[static_cast<std::size_t>(j)] || in_basis_[static_cast<std::size_t>(j)]) continue;
      if (std::abs(row(j)) > 1e-7 * scale) {
        swap(pos, j, binv_ * a_.col(j));
        return true;
      }
    }
    return false;
  }

  // Drops constraint row `row` and the basic column at `pos`.
  void drop(int row, int pos) {
    const int m = static_cast<int>(a_.rows());
    Eigen::MatrixXd a(m - 1, a_.cols());
    Eigen::VectorXd b(m - 1);
    for (int i = 0, k = 0; i < m; ++i) {
      if (i == row) continue;
      a.row(k) = a_.row(i);
      b(k++) = b_(i);
    }
    a_ = std::move(a);
    b_ = std::move(b);
    basis_.erase(basis_.begin() + pos);
    refactor();
  }

 private:
  void swap(int pos, int enter, const Eigen::VectorXd& u) {
    basis_[static_cast<std::size_t>(pos)] = enter;
    if (++since_refactor_ >= kRefactorEvery) {
      refactor();
      return;
    }
    const double piv = u(pos);
    binv_.row(pos) /= piv;
    for (int i = 0; i < binv_.rows(); ++i)
      if (i != pos && u(i) != 0.0) binv_.row(i) -= u(i) * binv_.row(pos);
    mark();
  }

  void refactor() {
    const int m = static_cast<int>(a_.rows());
    Eigen::MatrixXd bm(m, m);
    for (int i = 0; i < m; ++i) bm.col(i) = a_.col(basis_[static_cast<std::size_t>(i)]);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(bm);
    binv_ = lu.inverse();
    if (!binv_.allFinite()) fail(ErrorCode::numerical, "simplex basis became singular");
    since_refactor_ = 0;
    mark();
  }

  void mark() {
    in_basis_.assign(static_cast<std::size_t>(a_.cols()), 0);
    for (int j : basis_) in_basis_[static_cast<std::size_t>(j)] = 1;
  }

  Eigen::MatrixXd a_;
  Eigen::VectorXd b_;
  std::vector<int> basis_;
  std::vector<char> in_basis_;
  Eigen::MatrixXd binv_;
  int since_refactor_ = 0;
};

}  // namespace

LpResult solve_lp(const LinearProgram& lp, double max_cells) {
  const int nv = lp.num_vars;
  const int ne = static_cast<int>(lp.eq_rows.size());
  const int nu = static_cast<int>(lp.ub_rows.size());
  const int m = ne + nu;
  if (static_cast<int>(lp.objective.size()) != nv) fail(ErrorCode::invalid_argument, "objective length mismatch");
  if (static_cast<int>(lp.eq_rhs.size()) != ne || static_cast<int>(lp.ub_rhs.size()) != nu)
    fail(ErrorCode::invalid_argument, "right-hand side length mismatch");
  // columns: variables, one slack per inequality, one artificial per row
  const int art0 = nv + nu;
  const int cols = art0 + m;
  if (static_cast<double>(m) * (cols + m) > max_cells)
    fail(ErrorCode::too_large, "linear program too large for the dense solver (" + std::to_string(m) + " rows, " +
                                   std::to_string(cols) + " columns)");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, cols);
  Eigen::VectorXd b(m);
  std::vector<double> sign(static_cast<std::size_t>(m), 1.0);
  for (int r = 0; r < m; ++r) {
    const bool eq = r < ne;
    const auto& row = eq ? lp.eq_rows[static_cast<std::size_t>(r)] : lp.ub_rows[static_cast<std::size_t>(r - ne)];
    const double rhs = eq ? lp.eq_rhs[static_cast<std::size_t>(r)] : lp.ub_rhs[static_cast<std::size_t>(r - ne)];
    if (static_cast<int>(row.size()) != nv) fail(ErrorCode::invalid_argument, "constraint row length mismatch");
    const double s = rhs < 0.0 ? -1.0 : 1.0;
    sign[static_cast<std::size_t>(r)] = s;
    for (int c = 0; c < nv; ++c) a(r, c) = s * row[static_cast<std::size_t>(c)];
    if (!eq) a(r, nv + (r - ne)) = s;
    a(r, art0 + r) = 1.0;
    b(r) = s * rhs;
  }
  std::vector<int> basis(static_cast<std::size_t>(m));
  for (int r = 0; r < m; ++r) basis[static_cast<std::size_t>(r)] = art0 + r;

  LpResult out;
  RevisedSimplex simplex(std::move(a), b, basis);
  Eigen::VectorXd c1 = Eigen::VectorXd::Zero(cols);
  c1.tail(m).setOnes();
  std::vector<char> allowed(static_cast<std::size_t>(cols), 1);
  simplex.optimise(c1, allowed, out.pivots);
  {
    const Eigen::VectorXd xb = simplex.primal();
    double infeas = 0.0;
    for (int i = 0; i < static_cast<int>(xb.size()); ++i)
      if (simplex.basis()[static_cast<std::size_t>(i)] >= art0) infeas += std::max(0.0, xb(i));
    if (infeas > 1e-7 * (1.0 + b.cwiseAbs().maxCoeff())) {
      out.feasible = false;
      return out;
    }
  }
  out.feasible = true;

  // drive artificials out of the basis; rows where that fails are redundant
  std::vector<char> is_art(static_cast<std::size_t>(cols), 0);
  for (int j = art0; j < cols; ++j) is_art[static_cast<std::size_t>(j)] = 1;
  std::vector<int> kept(static_cast<std::size_t>(m));
  for (int r = 0; r < m; ++r) kept[static_cast<std::size_t>(r)] = r;  // current row -> original row
  for (int pos = 0; pos < static_cast<int>(simplex.basis().size());) {
    const int j = simplex.basis()[static_cast<std::size_t>(pos)];
    if (j < art0 || simplex.replace_basic(pos, is_art)) {
      ++pos;
      continue;
    }
    // the artificial's own row is the redundant one
    const int orig = j - art0;
    const auto it = std::find(kept.begin(), kept.end(), orig);
    const int row = static_cast<int>(it - kept.begin());
    kept.erase(it);
    simplex.drop(row, pos);
  }
  for (int j = art0; j < cols; ++j) allowed[static_cast<std::size_t>(j)] = 0;

  Eigen::VectorXd c2 = Eigen::VectorXd::Zero(cols);
  for (int j = 0; j < nv; ++j) c2(j) = lp.objective[static_cast<std::size_t>(j)];
  if (!simplex.optimise(c2, allowed, out.pivots)) {
    out.bounded = false;
    return out;
  }
  out.x.assign(static_cast<std::size_t>(nv), 0.0);
  const Eigen::VectorXd xb = simplex.primal();
  for (int i = 0; i < static_cast<int>(xb.size()); ++i) {
    const int j = simplex.basis()[static_cast<std::size_t>(i)];
    if (j < nv) out.x[static_cast<std::size_t>(j)] = std::max(0.0, xb(i));
  }
  out.objective = 0.0;
  for (int j = 0; j < nv; ++j) out.objective += lp.objective[static_cast<std::size_t>(j)] * out.x[static_cast<std::size_t>(j)];
  for (int r = 0; r < ne; ++r) {
    double lhs = 0.0;
    for (int j = 0; j < nv; ++j) lhs += lp.eq_rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)] * out.x[static_cast<std::size_t>(j)];
    out.residual = std::max(out.residual, std::abs(lhs - lp.eq_rhs[static_cast<std::size_t>(r)]));
  }
  for (int r = 0; r < nu; ++r) {
    double lhs = 0.0;
    for (int j = 0; j < nv; ++j) lhs += lp.ub_rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)] * out.x[static_cast<std::size_t>(j)];
    out.residual = std::max(out.residual, lhs - lp.ub_rhs[static_cast<std::size_t>(r)]);
  }
  // duals of the sign-adjusted rows, mapped back; dropped rows get 0
  const Eigen::VectorXd y = simplex.duals(c2);
  out.eq_duals.assign(static_cast<std::size_t>(ne), 0.0);
  out.ub_duals.assign(static_cast<std::size_t>(nu), 0.0);
  for (int k = 0; k < static_cast<int>(kept.size()); ++k) {
    const int r = kept[static_cast<std::size_t>(k)];
    const double v = y(k) * sign[static_cast<std::size_t>(r)];
    if (r < ne) out.eq_duals[static_cast<std::size_t>(r)] = v;
    else out.ub_duals[static_cast<std::size_t>(r - ne)] = v;
  }
  return out;
}

FluidSolution fluid_lp(const ScenarioConfig& cfg, double max_cells) {
  FluidSolution sol;
  // An empty population is the empty program; scenarios otherwise require N > 0.
  if (cfg.num_users == 0 && cfg.groups.empty() && cfg.num_servers > 0) {
    sol.nu.assign(static_cast<std::size_t>(cfg.num_servers), 0.0);
    return sol;
  }
  cfg.validate();
  std::vector<double> users;
  for (int g = 0; g < static_cast<int>(cfg.groups.size()); ++g) {
    auto model = SubproblemModel::from_config(cfg, g);
    int found = -1;
    for (std::size_t f = 0; f < sol.families.size(); ++f) {
      const auto& o = sol.families[f];
      if (o.delta_max == model.delta_max && o.eligible_elapsed == model.eligible_elapsed &&
          o.success_prob == model.success_prob && o.class_blocks == model.class_blocks)
        found = static_cast<int>(f);
    }
    if (found < 0) {
      found = static_cast<int>(sol.families.size());
      sol.families.push_back(std::move(model));
      users.push_back(0.0);
    }
    sol.family_of_group.push_back(found);
    users[static_cast<std::size_t>(found)] += cfg.groups[static_cast<std::size_t>(g)].count;
  }
  const int servers = cfg.num_servers;
  const int stride = servers + 1;

  // variable layout: per family, per state, per allowed action
  struct Var {
    int family, state, action;
  };
  std::vector<Var> vars;
  std::vector<TruncatedStateSpace> spaces;
  for (const auto& model : sol.families) spaces.emplace_back(model.delta_max, model.num_blocks());
  double rows_total = 1.0 * servers;
  for (std::size_t f = 0; f < sol.families.size(); ++f) rows_total += spaces[f].size();
  double vars_estimate = 0.0;
  for (std::size_t f = 0; f < sol.families.size(); ++f) vars_estimate += spaces[f].size() * static_cast<double>(stride);
  if (rows_total * (vars_estimate + 2.0 * rows_total) > max_cells)
    fail(ErrorCode::too_large, "fluid LP too large for the dense solver (about " +
                                   std::to_string(static_cast<long>(rows_total)) + " rows); reduce truncation or users");

  for (std::size_t f = 0; f < sol.families.size(); ++f) {
    const auto& model = sol.families[f];
    for (int i = 0; i < spaces[f].size(); ++i) {
      const MdpState s = spaces[f].state(i);
      for (int a = -1; a < servers; ++a)
        if (action_allowed(model, s, a)) vars.push_back({static_cast<int>(f), i, a});
    }
  }
  LinearProgram lp;
  lp.num_vars = static_cast<int>(vars.size());
  lp.objective.resize(vars.size());
  const double inv_n = 1.0 / cfg.num_users;
  std::vector<int> balance_row(sol.families.size());
  int rows = 0;
  for (std::size_t f = 0; f < sol.families.size(); ++f) {
    balance_row[f] = rows;
    // balance rows sum to zero, so the row of Idle(1) carries normalisation
    rows += spaces[f].size();
  }
  lp.eq_rows.assign(static_cast<std::size_t>(rows), std::vector<double>(vars.size(), 0.0));
  lp.eq_rhs.assign(static_cast<std::size_t>(rows), 0.0);
  lp.ub_rows.assign(static_cast<std::size_t>(servers), std::vector<double>(vars.size(), 0.0));
  lp.ub_rhs.assign(static_cast<std::size_t>(servers), 1.0);
  for (std::size_t v = 0; v < vars.size(); ++v) {
    const auto& var = vars[v];
    const auto f = static_cast<std::size_t>(var.family);
    const auto& model = sol.families[f];
    const MdpState s = spaces[f].state(var.state);
    lp.objective[v] = inv_n * users[f] * s.age;
    const int base = balance_row[f];
    if (var.state != 0) lp.eq_rows[static_cast<std::size_t>(base + var.state)][v] -= 1.0;
    for (const auto& [j, pr] : mdp_successors(model, spaces[f], s, var.action))
      if (j != 0) lp.eq_rows[static_cast<std::size_t>(base + j)][v] += pr;
    lp.eq_rows[static_cast<std::size_t>(base)][v] = 1.0;
    if (var.action >= 0) lp.ub_rows[static_cast<std::size_t>(var.action)][v] = users[f];
  }
  for (std::size_t f = 0; f < sol.families.size(); ++f)
    lp.eq_rhs[static_cast<std::size_t>(balance_row[f])] = 1.0;

  const LpResult res = solve_lp(lp, max_cells);
  if (!res.feasible) {
    int dm = 0;
    for (const auto& m : sol.families) dm = std::max(dm, m.delta_max);
    fail(ErrorCode::numerical, "no balanced occupation measure in the truncated space; try truncation " +
                                   std::to_string(2 * dm));
  }
  if (!res.bounded) fail(ErrorCode::numerical, "fluid LP reported unbounded");
  sol.objective = res.objective;
  sol.residual = res.residual;
  sol.pivots = res.pivots;
  sol.nu.resize(static_cast<std::size_t>(servers));
  for (int m = 0; m < servers; ++m)
    sol.nu[static_cast<std::size_t>(m)] = std::max(0.0, -res.ub_duals[static_cast<std::size_t>(m)] * cfg.num_users);
  sol.rho.resize(sol.families.size());
  sol.state_mass.resize(sol.families.size());
  for (std::size_t f = 0; f < sol.families.size(); ++f) {
    sol.rho[f].assign(static_cast<std::size_t>(spaces[f].size()) * stride, 0.0);
    sol.state_mass[f].assign(static_cast<std::size_t>(spaces[f].size()), 0.0);
  }
  for (std::size_t v = 0; v < vars.size(); ++v) {
    const auto& var = vars[v];
    const auto f = static_cast<std::size_t>(var.family);
    const double x = std::max(0.0, res.x[v]);
    sol.rho[f][static_cast<std::size_t>(var.state) * stride + (var.action + 1)] = x;
    sol.state_mass[f][static_cast<std::size_t>(var.state)] += x;
  }
  return sol;
}

FixedPointReport fixed_point_check(const std::vector<double>& nu_sim, const std::vector<double>& nu_ref,
                                   const std::vector<std::vector<double>>& z_sim,
                                   const std::vector<std::vector<double>>& z_ref, double tol,
                                   double occupancy_tol) {
  if (nu_sim.size() != nu_ref.size()) fail(ErrorCode::invalid_argument, "price vectors differ in length");
  FixedPointReport rep;
  rep.nu_sim = nu_sim;
  rep.nu_ref = nu_ref;
  double ref_max = 1.0;
  for (std::size_t m = 0; m < nu_sim.size(); ++m) {
    rep.dual_gap = std::max(rep.dual_gap, std::abs(nu_sim[m] - nu_ref[m]));
    ref_max = std::max(ref_max, std::abs(nu_ref[m]));
  }
  rep.dual_rel_gap = rep.dual_gap / ref_max;
  rep.ok = rep.dual_rel_gap <= tol;
  if (occupancy_tol >= 0.0) {
    if (z_sim.size() != z_ref.size()) fail(ErrorCode::invalid_argument, "occupancy families differ");
    for (std::size_t f = 0; f < z_sim.size(); ++f) {
      if (z_sim[f].size() != z_ref[f].size()) fail(ErrorCode::invalid_argument, "occupancy sizes differ");
      for (std::size_t s = 0; s < z_sim[f].size(); ++s)
        rep.occupancy_gap = std::max(rep.occupancy_gap, std::abs(z_sim[f][s] - z_ref[f][s]));
    }
    rep.ok = rep.ok && rep.occupancy_gap <= occupancy_tol;
  }
  return rep;
}

}  // namespace aoinest

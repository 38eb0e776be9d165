// SPDX-License-Identifier: Apache-2.0
#include "aoinest/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "aoinest/error.hpp"

namespace aoinest {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Min-cost assignment of every row to a distinct column, rows <= cols.
// Returns the column of each row.
std::vector<int> hungarian(const std::vector<double>& cost, int rows, int cols) {
  const auto at = [&](int i, int j) {
    return cost[static_cast<std::size_t>(i - 1) * cols + static_cast<std::size_t>(j - 1)];
  };
  std::vector<double> u(static_cast<std::size_t>(rows) + 1, 0.0), v(static_cast<std::size_t>(cols) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(cols) + 1, 0), way(static_cast<std::size_t>(cols) + 1, 0);
  for (int i = 1; i <= rows; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(cols) + 1, kInf);
    std::vector<char> used(static_cast<std::size_t>(cols) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= cols; ++j) {
        const auto sj = static_cast<std::size_t>(j);
        if (used[sj]) continue;
        const double cur = at(i0, j) - u[static_cast<std::size_t>(i0)] - v[sj];
        if (cur < minv[sj]) {
          minv[sj] = cur;
          way[sj] = j0;
        }
        if (minv[sj] < delta) {
          delta = minv[sj];
          j1 = j;
        }
      }
      for (int j = 0; j <= cols; ++j) {
        const auto sj = static_cast<std::size_t>(j);
        if (used[sj]) {
          u[static_cast<std::size_t>(p[sj])] += delta;
          v[sj] -= delta;
        } else {
          minv[sj] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> col_of(static_cast<std::size_t>(rows), -1);
  for (int j = 1; j <= cols; ++j)
    if (p[static_cast<std::size_t>(j)] > 0) col_of[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return col_of;
}

void fill_user_duals(Assignment& a, const std::vector<double>& w, int users, int servers) {
  a.user_duals.assign(static_cast<std::size_t>(users), 0.0);
  for (int n = 0; n < users; ++n) {
    double best = 0.0;
    for (int m = 0; m < servers; ++m)
      best = std::max(best, w[static_cast<std::size_t>(n) * servers + m] - a.server_duals[static_cast<std::size_t>(m)]);
    a.user_duals[static_cast<std::size_t>(n)] = best;
  }
}

}  // namespace

std::vector<double> minimal_server_prices(const std::vector<double>& w, int users, int servers,
                                          const std::vector<int>& server_user) {
  const auto W = [&](int n, int m) { return w[static_cast<std::size_t>(n) * servers + m]; };
  std::vector<char> matched_user(static_cast<std::size_t>(users), 0);
  for (int n : server_user)
    if (n >= 0) matched_user[static_cast<std::size_t>(n)] = 1;
  // y_m >= W(n', m) for unmatched users n', y_m >= 0, and
  // y_m >= y_k + W(n_k, m) - W(n_k, k) for matched servers k.
  std::vector<double> y(static_cast<std::size_t>(servers), 0.0);
  for (int m = 0; m < servers; ++m)
    for (int n = 0; n < users; ++n)
      if (!matched_user[static_cast<std::size_t>(n)]) y[static_cast<std::size_t>(m)] = std::max(y[static_cast<std::size_t>(m)], W(n, m));
  for (int round = 0; round <= servers; ++round) {
    bool changed = false;
    for (int k = 0; k < servers; ++k) {
      const int nk = server_user[static_cast<std::size_t>(k)];
      if (nk < 0) continue;
      const double base = y[static_cast<std::size_t>(k)] - W(nk, k);
      for (int m = 0; m < servers; ++m) {
        if (m == k) continue;
        const double cand = base + W(nk, m);
        if (cand > y[static_cast<std::size_t>(m)] + 1e-12) {
          y[static_cast<std::size_t>(m)] = cand;
          changed = true;
        }
      }
    }
    if (!changed) return y;
  }
  fail(ErrorCode::numerical, "price system has a positive cycle; matching is not optimal");
}

Assignment max_weight_assignment(const std::vector<double>& w, int users, int servers) {
  if (users < 0 || servers < 0 || w.size() != static_cast<std::size_t>(users) * servers)
    fail(ErrorCode::invalid_argument, "weight matrix shape mismatch");
  for (double x : w)
    if (!(x >= 0.0) || !std::isfinite(x)) fail(ErrorCode::invalid_argument, "weights must be finite and >= 0");
  Assignment a;
  a.user_server.assign(static_cast<std::size_t>(users), -1);
  a.server_user.assign(static_cast<std::size_t>(servers), -1);
  if (users > 0 && servers > 0) {
    // with non-negative weights a full matching of the smaller side is optimal
    if (users <= servers) {
      std::vector<double> cost(w.size());
      for (std::size_t i = 0; i < w.size(); ++i) cost[i] = -w[i];
      const auto col = hungarian(cost, users, servers);
      for (int n = 0; n < users; ++n) a.user_server[static_cast<std::size_t>(n)] = col[static_cast<std::size_t>(n)];
    } else {
      std::vector<double> cost(w.size());
      for (int n = 0; n < users; ++n)
        for (int m = 0; m < servers; ++m)
          cost[static_cast<std::size_t>(m) * users + n] = -w[static_cast<std::size_t>(n) * servers + m];
      const auto col = hungarian(cost, servers, users);
      for (int m = 0; m < servers; ++m) a.user_server[static_cast<std::size_t>(col[static_cast<std::size_t>(m)])] = m;
    }
    for (int n = 0; n < users; ++n) {
      const int m = a.user_server[static_cast<std::size_t>(n)];
      if (m < 0) continue;
      const double x = w[static_cast<std::size_t>(n) * servers + m];
      if (x <= 0.0) {
        a.user_server[static_cast<std::size_t>(n)] = -1;
        continue;
      }
      a.server_user[static_cast<std::size_t>(m)] = n;
      a.objective += x;
    }
  }
  a.server_duals = minimal_server_prices(w, users, servers, a.server_user);
  fill_user_duals(a, w, users, servers);
  return a;
}

Assignment separable_assignment(const std::vector<double>& ut, const std::vector<double>& st) {
  const int users = static_cast<int>(ut.size());
  const int servers = static_cast<int>(st.size());
  std::vector<int> uo(static_cast<std::size_t>(users)), so(static_cast<std::size_t>(servers));
  std::iota(uo.begin(), uo.end(), 0);
  std::iota(so.begin(), so.end(), 0);
  std::stable_sort(uo.begin(), uo.end(), [&](int x, int y) { return ut[static_cast<std::size_t>(x)] > ut[static_cast<std::size_t>(y)]; });
  std::stable_sort(so.begin(), so.end(), [&](int x, int y) { return st[static_cast<std::size_t>(x)] > st[static_cast<std::size_t>(y)]; });

  Assignment a;
  a.user_server.assign(static_cast<std::size_t>(users), -1);
  a.server_user.assign(static_cast<std::size_t>(servers), -1);
  const int lim = std::min(users, servers);
  int k = 0;
  while (k < lim && ut[static_cast<std::size_t>(uo[static_cast<std::size_t>(k)])] +
                            st[static_cast<std::size_t>(so[static_cast<std::size_t>(k)])] > 0.0) {
    const int n = uo[static_cast<std::size_t>(k)];
    const int m = so[static_cast<std::size_t>(k)];
    a.user_server[static_cast<std::size_t>(n)] = m;
    a.server_user[static_cast<std::size_t>(m)] = n;
    a.objective += ut[static_cast<std::size_t>(n)] + st[static_cast<std::size_t>(m)];
    ++k;
  }
  // prices (b_m + c)^+ and user duals (a_n - c)^+ with the smallest admissible c
  double c = -kInf;
  if (k < users) c = std::max(c, ut[static_cast<std::size_t>(uo[static_cast<std::size_t>(k)])]);
  if (k > 0) c = std::max(c, -st[static_cast<std::size_t>(so[static_cast<std::size_t>(k - 1)])]);
  a.server_duals.assign(static_cast<std::size_t>(servers), 0.0);
  a.user_duals.assign(static_cast<std::size_t>(users), 0.0);
  if (c > -kInf) {
    for (int m = 0; m < servers; ++m) a.server_duals[static_cast<std::size_t>(m)] = std::max(0.0, st[static_cast<std::size_t>(m)] + c);
    for (int n = 0; n < users; ++n) a.user_duals[static_cast<std::size_t>(n)] = std::max(0.0, ut[static_cast<std::size_t>(n)] - c);
  } else {
    for (int n = 0; n < users; ++n) a.user_duals[static_cast<std::size_t>(n)] = std::max(0.0, ut[static_cast<std::size_t>(n)]);
  }
  return a;
}

}  // namespace aoinest

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

namespace aoinest {

/// Partial user/server matching with dual potentials of the matching LP.
struct Assignment {
  std::vector<int> user_server;  // -1 when unmatched
  std::vector<int> server_user;  // -1 when unmatched
  std::vector<double> server_duals;
  std::vector<double> user_duals;
  double objective = 0.0;
};

/// Maximum-weight matching on a row-major users x servers matrix of
/// non-negative weights. Zero-weight pairs are left unmatched. Server duals
/// are the smallest optimal prices, so unmatched servers carry 0.
Assignment max_weight_assignment(const std::vector<double>& weights, int users, int servers);

/// Same problem for weights (a_n + b_m)^+, solved by sorting.
Assignment separable_assignment(const std::vector<double>& user_term, const std::vector<double>& server_term);

/// Smallest server prices supporting an optimal matching (longest paths).
std::vector<double> minimal_server_prices(const std::vector<double>& weights, int users, int servers,
                                          const std::vector<int>& server_user);

}  // namespace aoinest

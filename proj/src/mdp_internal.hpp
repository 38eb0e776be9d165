// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>
#include <vector>

#include "aoinest/mdp.hpp"

namespace aoinest::detail {

/// Cost-independent successor tables of the truncated MDP, one column per
/// server class. cont == -1 marks a class that is not allowed in the state,
/// done == -1 marks a state where completion is not yet possible.
struct Kernel {
  int n = 0;
  int classes = 0;
  std::vector<int> noop;
  std::vector<int> cont;
  std::vector<int> done;
  std::vector<double> age;
  std::vector<double> p;  // per class
};

Kernel build_kernel(const SubproblemModel& model, const TruncatedStateSpace& space);

/// (age, gen_age) after one more slot of computing, with the elapsed-preserving clamp.
inline std::pair<int, int> advance_computing(int age, int gen_age, int delta_max) {
  if (age + 1 <= delta_max) return {age + 1, gen_age};
  return {delta_max, gen_age > 1 ? gen_age - 1 : 1};
}

/// Greedy action per state with NoOp-then-lowest-server tie-breaking.
std::vector<int> greedy_policy(const SubproblemModel& model, const Kernel& k,
                               const std::vector<double>& costs, const std::vector<double>& value,
                               double tie_tol);

std::vector<ThresholdChain> extract_thresholds(const SubproblemModel& model,
                                               const TruncatedStateSpace& space,
                                               const std::vector<int>& policy);

}  // namespace aoinest::detail

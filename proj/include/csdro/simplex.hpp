#pragma once

#include "csdro/common.hpp"

#include <vector>

namespace csdro {

enum class Sense { le, ge, eq };
enum class LpStatus { optimal, infeasible, unbounded };

// maximize c'v  s.t.  A v (sense) rhs.
// Variables are free unless flagged in `nonneg` (empty: all free).
// Constraint senses default to <= when `sense` is empty.
struct LpProblem {
  Vec c;
  Mat A;
  Vec rhs;
  std::vector<Sense> sense;
  std::vector<bool> nonneg;
};

struct LpSolution {
  LpStatus status = LpStatus::infeasible;
  double value = 0.0;
  Vec v;                   // primal optimum in the original variables
  Vec duals;               // one multiplier per constraint row
  std::vector<int> basis;  // terminating basis (standard-form column ids)
};

// Dense two-phase tableau simplex with Bland's rule. Tolerance 1e-9.
// Infeasible and unbounded problems are reported through `status`.
LpSolution simplex_solve(const LpProblem& lp);

}  // namespace csdro

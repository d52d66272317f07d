#include "csdro/simplex.hpp"

#include <cmath>
#include <limits>

namespace csdro {

namespace {

constexpr double kTol = 1e-9;
constexpr long kMaxPivots = 100000;

struct Tableau {
  Mat T;                   // m x (n + 1), last column is the rhs
  std::vector<int> basis;  // basic column per row

  int rows() const { return static_cast<int>(T.rows()); }
  int cols() const { return static_cast<int>(T.cols()) - 1; }

  void pivot(int r, int col) {
    T.row(r) /= T(r, col);
    for (int i = 0; i < rows(); ++i) {
      if (i == r) continue;
      const double f = T(i, col);
      if (f != 0.0) T.row(i) -= f * T.row(r);
    }
    basis[static_cast<std::size_t>(r)] = col;
  }
};

enum class RunResult { optimal, unbounded };

// Maximize cost'x over the current tableau. Columns with allowed[j] == false never enter.
RunResult run(Tableau& tab, const Vec& cost, const std::vector<bool>& allowed) {
  const int m = tab.rows(), n = tab.cols();
  for (long it = 0; it < kMaxPivots; ++it) {
    int enter = -1;
    for (int j = 0; j < n && enter < 0; ++j) {
      if (!allowed[static_cast<std::size_t>(j)]) continue;
      double r = cost(j);
      for (int i = 0; i < m; ++i) r -= cost(tab.basis[static_cast<std::size_t>(i)]) * tab.T(i, j);
      if (r > kTol) enter = j;
    }
    if (enter < 0) return RunResult::optimal;

    int leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      const double a = tab.T(i, enter);
      if (a <= kTol) continue;
      const double ratio = tab.T(i, n) / a;
      const bool better = leave < 0 || ratio < best - kTol;
      const bool tie = !better && ratio <= best + kTol &&
                       tab.basis[static_cast<std::size_t>(i)] < tab.basis[static_cast<std::size_t>(leave)];
      if (better || tie) {
        best = better ? ratio : std::min(best, ratio);
        leave = i;
      }
    }
    if (leave < 0) return RunResult::unbounded;
    tab.pivot(leave, enter);
  }
  throw RuntimeFailure("simplex: pivot limit exceeded");
}

}  // namespace

LpSolution simplex_solve(const LpProblem& lp) {
  const int m = static_cast<int>(lp.A.rows());
  const int nv = static_cast<int>(lp.A.cols());
  if (lp.c.size() != nv || lp.rhs.size() != m) throw ValidationError("simplex: inconsistent LP dimensions");
  if (!lp.sense.empty() && static_cast<int>(lp.sense.size()) != m) throw ValidationError("simplex: sense length mismatch");
  if (!lp.nonneg.empty() && static_cast<int>(lp.nonneg.size()) != nv) throw ValidationError("simplex: nonneg length mismatch");
  if (!lp.A.allFinite() || !lp.c.allFinite() || !lp.rhs.allFinite()) throw ValidationError("simplex: non-finite LP data");

  // Standard form columns: structural (free vars split), slack/surplus, artificial.
  std::vector<int> pos_col(static_cast<std::size_t>(nv)), neg_col(static_cast<std::size_t>(nv), -1);
  int n = 0;
  for (int j = 0; j < nv; ++j) {
    pos_col[static_cast<std::size_t>(j)] = n++;
    const bool free = lp.nonneg.empty() || !lp.nonneg[static_cast<std::size_t>(j)];
    if (free) neg_col[static_cast<std::size_t>(j)] = n++;
  }

  std::vector<Sense> sense(static_cast<std::size_t>(m));
  std::vector<double> flip(static_cast<std::size_t>(m), 1.0);
  for (int i = 0; i < m; ++i) {
    Sense s = lp.sense.empty() ? Sense::le : lp.sense[static_cast<std::size_t>(i)];
    if (lp.rhs(i) < 0.0) {
      flip[static_cast<std::size_t>(i)] = -1.0;
      if (s == Sense::le) s = Sense::ge;
      else if (s == Sense::ge) s = Sense::le;
    }
    sense[static_cast<std::size_t>(i)] = s;
  }
  std::vector<int> slack_col(static_cast<std::size_t>(m), -1), art_col(static_cast<std::size_t>(m), -1);
  for (int i = 0; i < m; ++i)
    if (sense[static_cast<std::size_t>(i)] != Sense::eq) slack_col[static_cast<std::size_t>(i)] = n++;
  const int first_art = n;
  for (int i = 0; i < m; ++i)
    if (sense[static_cast<std::size_t>(i)] != Sense::le) art_col[static_cast<std::size_t>(i)] = n++;

  Tableau tab;
  tab.T = Mat::Zero(m, n + 1);
  tab.basis.resize(static_cast<std::size_t>(m));
  std::vector<int> init_col(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double f = flip[static_cast<std::size_t>(i)];
    for (int j = 0; j < nv; ++j) {
      tab.T(i, pos_col[static_cast<std::size_t>(j)]) = f * lp.A(i, j);
      if (neg_col[static_cast<std::size_t>(j)] >= 0) tab.T(i, neg_col[static_cast<std::size_t>(j)]) = -f * lp.A(i, j);
    }
    tab.T(i, n) = f * lp.rhs(i);
    const Sense s = sense[static_cast<std::size_t>(i)];
    if (s == Sense::le) tab.T(i, slack_col[static_cast<std::size_t>(i)]) = 1.0;
    if (s == Sense::ge) tab.T(i, slack_col[static_cast<std::size_t>(i)]) = -1.0;
    if (s != Sense::le) tab.T(i, art_col[static_cast<std::size_t>(i)]) = 1.0;
    const int b = s == Sense::le ? slack_col[static_cast<std::size_t>(i)] : art_col[static_cast<std::size_t>(i)];
    tab.basis[static_cast<std::size_t>(i)] = b;
    init_col[static_cast<std::size_t>(i)] = b;
  }

  LpSolution sol;
  std::vector<bool> allowed(static_cast<std::size_t>(n), true);

  if (first_art < n) {
    Vec phase1 = Vec::Zero(n);
    for (int j = first_art; j < n; ++j) phase1(j) = -1.0;
    run(tab, phase1, allowed);
    double infeas = 0.0;
    for (int i = 0; i < m; ++i)
      if (tab.basis[static_cast<std::size_t>(i)] >= first_art) infeas += tab.T(i, n);
    const double scale = 1.0 + lp.rhs.cwiseAbs().maxCoeff();
    if (infeas > kTol * scale) {
      sol.status = LpStatus::infeasible;
      return sol;
    }
    // Drive zero-level artificials out of the basis where possible.
    for (int i = 0; i < m; ++i) {
      if (tab.basis[static_cast<std::size_t>(i)] < first_art) continue;
      for (int j = 0; j < first_art; ++j) {
        if (std::abs(tab.T(i, j)) > kTol) {
          tab.pivot(i, j);
          break;
        }
      }
    }
    for (int j = first_art; j < n; ++j) allowed[static_cast<std::size_t>(j)] = false;
  }

  Vec cost = Vec::Zero(n);
  for (int j = 0; j < nv; ++j) {
    cost(pos_col[static_cast<std::size_t>(j)]) = lp.c(j);
    if (neg_col[static_cast<std::size_t>(j)] >= 0) cost(neg_col[static_cast<std::size_t>(j)]) = -lp.c(j);
  }
  if (run(tab, cost, allowed) == RunResult::unbounded) {
    sol.status = LpStatus::unbounded;
    return sol;
  }

  Vec x = Vec::Zero(n);
  for (int i = 0; i < m; ++i) x(tab.basis[static_cast<std::size_t>(i)]) = tab.T(i, n);
  sol.status = LpStatus::optimal;
  sol.v.resize(nv);
  for (int j = 0; j < nv; ++j) {
    double v = x(pos_col[static_cast<std::size_t>(j)]);
    if (neg_col[static_cast<std::size_t>(j)] >= 0) v -= x(neg_col[static_cast<std::size_t>(j)]);
    sol.v(j) = v;
  }
  sol.value = lp.c.dot(sol.v);
  // The initial basis columns hold B^{-1}; duals are c_B' B^{-1}, un-flipped per row.
  sol.duals.resize(m);
  for (int i = 0; i < m; ++i) {
    double y = 0.0;
    for (int r = 0; r < m; ++r) y += cost(tab.basis[static_cast<std::size_t>(r)]) * tab.T(r, init_col[static_cast<std::size_t>(i)]);
    sol.duals(i) = y * flip[static_cast<std::size_t>(i)];
  }
  sol.basis = tab.basis;
  return sol;
}

}  // namespace csdro

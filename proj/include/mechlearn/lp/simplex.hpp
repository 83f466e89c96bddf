#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "mechlearn/errors.hpp"
#include "mechlearn/rational.hpp"

namespace mechlearn::lp {

/// maximize c.x  subject to  A x <= b,  x >= 0, with b >= 0.
/// Rows are sparse (column, coefficient) lists.
struct Problem {
  std::size_t cols = 0;
  std::vector<double> c;
  std::vector<std::vector<std::pair<std::size_t, double>>> rows;
  std::vector<double> b;
  std::vector<std::string> col_names;
  std::vector<std::string> row_names;

  std::size_t add_row(std::vector<std::pair<std::size_t, double>> coeffs, double rhs, std::string name = {}) {
    rows.push_back(std::move(coeffs));
    b.push_back(rhs);
    row_names.push_back(std::move(name));
    return rows.size() - 1;
  }
};

enum class Status { optimal, unbounded };

struct Result {
  Status status = Status::optimal;
  std::vector<double> x;
  /// Row duals, read off the slack reduced costs.
  std::vector<double> y;
  double objective = 0.0;
  double dual_objective = 0.0;
  std::size_t iterations = 0;
};

struct Options {
  double cost_tolerance = 1e-9;
  double pivot_tolerance = 1e-9;
  /// Degenerate Dantzig pivots tolerated before switching to Bland's rule.
  std::size_t degenerate_streak = 50;
  std::size_t max_iterations = 2'000'000;
  std::size_t max_tableau_entries = 40'000'000;
};

/// Dense full-tableau primal simplex started from the slack basis.
///
/// Entering column: most negative reduced cost, lowest index on ties. After
/// a run of degenerate pivots it falls back to Bland's rule until the
/// objective moves again, which rules out cycling. Leaving row: minimum
/// ratio, ties to the lowest basic variable index. Everything is
/// deterministic, so identical inputs give identical bases.
inline Result solve(const Problem& p, const Options& opt = {}) {
  const std::size_t m = p.rows.size();
  const std::size_t n = p.cols;
  if (p.c.size() != n || p.b.size() != m) throw UsageError("LP dimensions are inconsistent");
  for (double bi : p.b) {
    if (!(bi >= 0.0)) throw UsageError("LP right-hand sides must be nonnegative");
  }
  const std::size_t width = n + m + 1;
  if (static_cast<double>(m + 1) * static_cast<double>(width) > static_cast<double>(opt.max_tableau_entries)) {
    throw CapacityError("LP tableau of " + std::to_string(m + 1) + " x " + std::to_string(width) +
                        " exceeds the dense solver budget");
  }
  std::vector<double> t((m + 1) * width, 0.0);
  auto at = [&](std::size_t r, std::size_t col) -> double& { return t[r * width + col]; };
  for (std::size_t r = 0; r < m; ++r) {
    for (const auto& [col, v] : p.rows[r]) at(r, col) += v;
    at(r, n + r) = 1.0;
    at(r, width - 1) = p.b[r];
  }
  for (std::size_t j = 0; j < n; ++j) at(m, j) = -p.c[j];
  std::vector<std::size_t> basis(m);
  for (std::size_t r = 0; r < m; ++r) basis[r] = n + r;

  Result res;
  std::size_t streak = 0;
  bool bland = false;
  std::vector<std::size_t> nz;
  while (true) {
    if (++res.iterations > opt.max_iterations) throw InternalError("simplex iteration limit reached");
    std::size_t enter = width;
    double best = -opt.cost_tolerance;
    for (std::size_t j = 0; j + 1 < width; ++j) {
      double d = at(m, j);
      if (d < best) {
        enter = j;
        if (bland) break;
        best = d;
      }
    }
    if (enter == width) break;
    std::size_t leave = m;
    double ratio = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      double a = at(r, enter);
      if (a <= opt.pivot_tolerance) continue;
      double q = at(r, width - 1) / a;
      if (leave == m || q < ratio || (q == ratio && basis[r] < basis[leave])) {
        leave = r;
        ratio = q;
      }
    }
    if (leave == m) {
      res.status = Status::unbounded;
      return res;
    }
    const bool degenerate = ratio <= 0.0;
    if (degenerate) {
      if (++streak > opt.degenerate_streak) bland = true;
    } else {
      streak = 0;
      bland = false;
    }
    // Pivot on (leave, enter).
    double* prow = &at(leave, 0);
    const double inv = 1.0 / prow[enter];
    nz.clear();
    for (std::size_t j = 0; j < width; ++j) {
      if (prow[j] != 0.0) {
        prow[j] *= inv;
        nz.push_back(j);
      }
    }
    prow[enter] = 1.0;
    for (std::size_t r = 0; r <= m; ++r) {
      if (r == leave) continue;
      double* row = &at(r, 0);
      const double f = row[enter];
      if (f == 0.0) continue;
      for (std::size_t j : nz) row[j] -= f * prow[j];
      row[enter] = 0.0;
    }
    basis[leave] = enter;
  }

  res.x.assign(n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    if (basis[r] < n) res.x[basis[r]] = std::max(0.0, at(r, width - 1));
  }
  res.y.assign(m, 0.0);
  for (std::size_t r = 0; r < m; ++r) res.y[r] = at(m, n + r);
  res.objective = 0.0;
  for (std::size_t j = 0; j < n; ++j) res.objective += p.c[j] * res.x[j];
  res.dual_objective = 0.0;
  for (std::size_t r = 0; r < m; ++r) res.dual_objective += p.b[r] * res.y[r];
  return res;
}

inline constexpr double kPerturb = 1e-9;

/// The same LP solved through its dual, min b.y s.t. A^T y >= c, y >= 0,
/// by the dual simplex method on a tableau with one row per primal column.
/// The slack basis of the dual is dual feasible because b >= 0, so no phase
/// one is needed. Worth it when rows far outnumber columns.
///
/// The BIC rows all have b = 0, which makes the dual massively degenerate;
/// Bland's rule stalls there and picks tiny pivots. Instead the costs are
/// perturbed by at most 2 kPerturb, the dual simplex runs with the Harris
/// ratio test, and a few primal simplex pivots on the unperturbed costs
/// finish the job.
inline Result solve_dual_form(const Problem& p, const Options& opt = {}) {
  const std::size_t m = p.rows.size();
  const std::size_t n = p.cols;
  if (p.c.size() != n || p.b.size() != m) throw UsageError("LP dimensions are inconsistent");
  for (double bi : p.b) {
    if (!(bi >= 0.0)) throw UsageError("LP right-hand sides must be nonnegative");
  }
  // Columns: y_0..y_{m-1}, s_0..s_{n-1}, rhs. Row j: -A_j^T y + s_j = -c_j.
  // Row n holds the reduced costs, row n+1 the perturbation's share of them.
  const std::size_t width = m + n + 1;
  if (static_cast<double>(n + 2) * static_cast<double>(width) > static_cast<double>(opt.max_tableau_entries)) {
    throw CapacityError("LP tableau of " + std::to_string(n + 2) + " x " + std::to_string(width) +
                        " exceeds the dense solver budget");
  }
  std::vector<double> t((n + 2) * width, 0.0);
  auto at = [&](std::size_t r, std::size_t col) -> double& { return t[r * width + col]; };
  for (std::size_t r = 0; r < m; ++r) {
    for (const auto& [col, v] : p.rows[r]) at(col, r) -= v;
    const double delta = kPerturb * (1.0 + static_cast<double>((r * 2654435761u) % 1000) / 1000.0);
    at(n, r) = p.b[r] + delta;
    at(n + 1, r) = delta;
  }
  for (std::size_t j = 0; j < n; ++j) {
    at(j, m + j) = 1.0;
    at(j, width - 1) = -p.c[j];
  }
  std::vector<std::size_t> basis(n);
  for (std::size_t j = 0; j < n; ++j) basis[j] = m + j;

  std::vector<std::size_t> nz;
  auto pivot = [&](std::size_t leave, std::size_t enter) {
    double* prow = &at(leave, 0);
    const double inv = 1.0 / prow[enter];
    nz.clear();
    for (std::size_t k = 0; k < width; ++k) {
      if (prow[k] != 0.0) {
        prow[k] *= inv;
        nz.push_back(k);
      }
    }
    prow[enter] = 1.0;
    for (std::size_t r = 0; r < n + 2; ++r) {
      if (r == leave) continue;
      double* row = &at(r, 0);
      const double f = row[enter];
      if (f == 0.0) continue;
      for (std::size_t k : nz) row[k] -= f * prow[k];
      row[enter] = 0.0;
    }
    basis[leave] = enter;
  };

  Result res;
  while (true) {
    if (++res.iterations > opt.max_iterations) throw InternalError("simplex iteration limit reached");
    std::size_t leave = n;
    double most = -opt.pivot_tolerance;
    for (std::size_t r = 0; r < n; ++r) {
      const double v = at(r, width - 1);
      if (v < most) {
        leave = r;
        most = v;
      }
    }
    if (leave == n) break;
    // Harris: the smallest ratio with each d_k relaxed by the cost
    // tolerance, then the largest pivot among columns within that bound.
    double bound = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < width; ++k) {
      const double a = at(leave, k);
      if (a < -opt.pivot_tolerance) bound = std::min(bound, (std::max(0.0, at(n, k)) + opt.cost_tolerance) / -a);
    }
    std::size_t enter = width;
    double biggest = 0.0;
    for (std::size_t k = 0; k + 1 < width; ++k) {
      const double a = at(leave, k);
      if (a >= -opt.pivot_tolerance || std::max(0.0, at(n, k)) / -a > bound) continue;
      if (-a > biggest) {
        enter = k;
        biggest = -a;
      }
    }
    // Dual of the dual infeasible: the primal is unbounded.
    if (enter == width) {
      Result out;
      out.status = Status::unbounded;
      out.iterations = res.iterations;
      return out;
    }
    pivot(leave, enter);
  }

  // Drop the perturbation. The basis stays primal feasible for the dual, so
  // the primal simplex (Bland) restores the few reduced costs that went
  // negative.
  for (std::size_t k = 0; k < width; ++k) at(n, k) -= at(n + 1, k);
  while (true) {
    if (++res.iterations > opt.max_iterations) throw InternalError("simplex iteration limit reached");
    std::size_t enter = width;
    for (std::size_t k = 0; k + 1 < width; ++k) {
      if (at(n, k) < -opt.cost_tolerance) {
        enter = k;
        break;
      }
    }
    if (enter == width) break;
    std::size_t leave = n;
    double ratio = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double a = at(r, enter);
      if (a <= opt.pivot_tolerance) continue;
      const double q = std::max(0.0, at(r, width - 1)) / a;
      if (leave == n || q < ratio || (q == ratio && basis[r] < basis[leave])) {
        leave = r;
        ratio = q;
      }
    }
    if (leave == n) throw InternalError("dual LP unbounded although x = 0 is primal feasible");
    pivot(leave, enter);
  }

  res.y.assign(m, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    if (basis[r] < m) res.y[basis[r]] = std::max(0.0, at(r, width - 1));
  }
  // Primal values are the reduced costs of the dual slacks.
  res.x.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) res.x[j] = std::max(0.0, at(n, m + j));
  res.objective = 0.0;
  for (std::size_t j = 0; j < n; ++j) res.objective += p.c[j] * res.x[j];
  res.dual_objective = 0.0;
  for (std::size_t r = 0; r < m; ++r) res.dual_objective += p.b[r] * res.y[r];
  return res;
}

/// Picks the smaller of the two tableaus.
inline Result solve_auto(const Problem& p, const Options& opt = {}) {
  return p.rows.size() > 2 * p.cols ? solve_dual_form(p, opt) : solve(p, opt);
}

/// Largest amount by which the primal point violates A x <= b or x >= 0.
inline double primal_violation(const Problem& p, const std::vector<double>& x) {
  double worst = 0.0;
  for (double v : x) worst = std::max(worst, -v);
  for (std::size_t r = 0; r < p.rows.size(); ++r) {
    double lhs = 0.0;
    for (const auto& [col, v] : p.rows[r]) lhs += v * x[col];
    worst = std::max(worst, lhs - p.b[r]);
  }
  return worst;
}

/// Largest amount by which y violates y >= 0 or A^T y >= c.
inline double dual_violation(const Problem& p, const std::vector<double>& y) {
  double worst = 0.0;
  for (double v : y) worst = std::max(worst, -v);
  std::vector<double> aty(p.cols, 0.0);
  for (std::size_t r = 0; r < p.rows.size(); ++r) {
    for (const auto& [col, v] : p.rows[r]) aty[col] += v * y[r];
  }
  for (std::size_t j = 0; j < p.cols; ++j) worst = std::max(worst, p.c[j] - aty[j]);
  return worst;
}

/// CPLEX LP text format.
inline void write_lp(std::ostream& os, const Problem& p) {
  auto col = [&](std::size_t j) { return j < p.col_names.size() && !p.col_names[j].empty() ? p.col_names[j] : "v" + std::to_string(j); };
  auto row = [&](std::size_t r) { return r < p.row_names.size() && !p.row_names[r].empty() ? p.row_names[r] : "r" + std::to_string(r); };
  auto term = [&](double v, std::size_t j, bool first) {
    std::string s;
    if (v < 0) {
      s = first ? "- " : " - ";
      v = -v;
    } else if (!first) {
      s = " + ";
    }
    return s + format_double(v) + " " + col(j);
  };
  os << "Maximize\n obj:";
  bool first = true;
  for (std::size_t j = 0; j < p.cols; ++j) {
    if (p.c[j] == 0.0) continue;
    os << ' ' << term(p.c[j], j, first);
    first = false;
  }
  if (first) os << " 0 " << col(0);
  os << "\nSubject To\n";
  for (std::size_t r = 0; r < p.rows.size(); ++r) {
    os << ' ' << row(r) << ':';
    bool f = true;
    for (const auto& [j, v] : p.rows[r]) {
      os << ' ' << term(v, j, f);
      f = false;
    }
    if (f) os << " 0 " << col(0);
    os << " <= " << format_double(p.b[r]) << '\n';
  }
  os << "End\n";
}

}  // namespace mechlearn::lp

#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "mechlearn/errors.hpp"
#include "mechlearn/rational.hpp"

namespace mechlearn::lp {

/// maximize c.x subject to A x <= b, x >= 0, in exact rational arithmetic.
/// b may have any sign. Dense A.
struct ExactProblem {
  std::vector<std::vector<Rational>> a;
  std::vector<Rational> b;
  std::vector<Rational> c;
};

enum class ExactStatus { optimal, infeasible, unbounded };

struct ExactResult {
  ExactStatus status = ExactStatus::optimal;
  Rational objective = 0;
  std::vector<Rational> x;
};

/// Compact tableau with nonbasic and basic index lists swapped on each
/// pivot. Phase one adds a single artificial column (index -1). Bland's
/// rule for both entering and leaving choices.
class ExactSimplex {
 public:
  explicit ExactSimplex(const ExactProblem& p)
      : m_(p.b.size()), n_(p.c.size()), nonbasic_(n_ + 1), basic_(m_), d_(m_ + 2, std::vector<Rational>(n_ + 2)) {
    for (std::size_t i = 0; i < m_; ++i) {
      if (p.a[i].size() != n_) throw UsageError("exact LP row has the wrong width");
      for (std::size_t j = 0; j < n_; ++j) d_[i][j] = p.a[i][j];
      basic_[i] = static_cast<long>(n_ + i);
      d_[i][n_] = -1;
      d_[i][n_ + 1] = p.b[i];
    }
    for (std::size_t j = 0; j < n_; ++j) {
      nonbasic_[j] = static_cast<long>(j);
      d_[m_][j] = -p.c[j];
    }
    nonbasic_[n_] = -1;
    d_[m_ + 1][n_] = 1;
  }

  ExactResult solve() {
    ExactResult res;
    std::size_t r = 0;
    for (std::size_t i = 1; i < m_; ++i) {
      if (d_[i][n_ + 1] < d_[r][n_ + 1]) r = i;
    }
    if (m_ > 0 && d_[r][n_ + 1] < 0) {
      pivot(r, n_);
      if (!run(2) || d_[m_ + 1][n_ + 1] < 0) {
        res.status = ExactStatus::infeasible;
        return res;
      }
      for (std::size_t i = 0; i < m_; ++i) {
        if (basic_[i] != -1) continue;
        std::optional<std::size_t> s;
        for (std::size_t j = 0; j <= n_; ++j) {
          if (d_[i][j] != 0 && (!s || nonbasic_[j] < nonbasic_[*s])) s = j;
        }
        if (s) pivot(i, *s);
      }
    }
    if (!run(1)) {
      res.status = ExactStatus::unbounded;
      return res;
    }
    res.x.assign(n_, Rational(0));
    for (std::size_t i = 0; i < m_; ++i) {
      if (basic_[i] >= 0 && static_cast<std::size_t>(basic_[i]) < n_) res.x[static_cast<std::size_t>(basic_[i])] = d_[i][n_ + 1];
    }
    res.objective = d_[m_][n_ + 1];
    return res;
  }

 private:
  void pivot(std::size_t r, std::size_t s) {
    const Rational inv = 1 / d_[r][s];
    std::vector<std::size_t> nz;
    for (std::size_t j = 0; j < n_ + 2; ++j) {
      if (j != s && d_[r][j] != 0) nz.push_back(j);
    }
    Rational f;
    for (std::size_t i = 0; i < m_ + 2; ++i) {
      if (i == r || d_[i][s] == 0) continue;
      f = d_[i][s] * inv;
      for (std::size_t j : nz) d_[i][j] -= d_[r][j] * f;
      d_[i][s] = -f;
    }
    for (std::size_t j : nz) d_[r][j] *= inv;
    d_[r][s] = inv;
    std::swap(basic_[r], nonbasic_[s]);
  }

  bool run(int phase) {
    const std::size_t obj = phase == 1 ? m_ : m_ + 1;
    while (true) {
      std::optional<std::size_t> s;
      for (std::size_t j = 0; j <= n_; ++j) {
        if (nonbasic_[j] == -phase) continue;
        if (d_[obj][j] < 0 && (!s || nonbasic_[j] < nonbasic_[*s])) s = j;
      }
      if (!s) return true;
      std::optional<std::size_t> r;
      Rational best;
      for (std::size_t i = 0; i < m_; ++i) {
        if (d_[i][*s] <= 0) continue;
        Rational q = d_[i][n_ + 1] / d_[i][*s];
        if (!r || q < best || (q == best && basic_[i] < basic_[*r])) {
          r = i;
          best = q;
        }
      }
      if (!r) return false;
      pivot(*r, *s);
    }
  }

  std::size_t m_;
  std::size_t n_;
  std::vector<long> nonbasic_;
  std::vector<long> basic_;
  std::vector<std::vector<Rational>> d_;
};

inline ExactResult solve_exact(const ExactProblem& p) { return ExactSimplex(p).solve(); }

}  // namespace mechlearn::lp

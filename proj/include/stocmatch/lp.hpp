#pragma once

// Self-contained linear-program solver. Maximizes a linear objective over
// box-bounded variables and sparse <=/>=/= rows with a two-phase primal
// simplex on a dense tableau. Pricing is Dantzig's rule with an automatic,
// permanent switch to Bland's rule after a long degenerate streak, which
// guarantees termination on the highly degenerate transportation-style LPs
// this library produces.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "stocmatch/errors.hpp"

namespace stocmatch {

enum class Relation { less_equal, greater_equal, equal };

constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct LinearProgram {
  struct Row {
    std::vector<std::pair<int, double>> terms;
    Relation rel = Relation::less_equal;
    double rhs = 0.0;
  };

  int num_vars = 0;
  std::vector<double> objective;  // maximized
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<Row> rows;

  int add_variable(double objective_coeff, double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("variable bounds must satisfy lower <= upper");
    objective.push_back(objective_coeff);
    lower.push_back(lo);
    upper.push_back(hi);
    return num_vars++;
  }

  void add_row(std::vector<std::pair<int, double>> terms, Relation rel, double rhs) {
    for (const auto& [idx, coeff] : terms) {
      (void)coeff;
      if (idx < 0 || idx >= num_vars) {
        throw std::invalid_argument("row references variable " + std::to_string(idx) +
                                    " outside [0, " + std::to_string(num_vars) + ")");
      }
    }
    rows.push_back(Row{std::move(terms), rel, rhs});
  }

  // Convenience for dense test rows; the width must match the variable count.
  void add_dense_row(const std::vector<double>& coeffs, Relation rel, double rhs) {
    if (static_cast<int>(coeffs.size()) != num_vars) {
      throw std::invalid_argument("dense row width " + std::to_string(coeffs.size()) +
                                  " does not match variable count " + std::to_string(num_vars));
    }
    std::vector<std::pair<int, double>> terms;
    for (int j = 0; j < num_vars; ++j) {
      if (coeffs[static_cast<std::size_t>(j)] != 0.0) {
        terms.emplace_back(j, coeffs[static_cast<std::size_t>(j)]);
      }
    }
    rows.push_back(Row{std::move(terms), rel, rhs});
  }
};

enum class LpStatus { optimal, infeasible, unbounded };

struct LpSolution {
  LpStatus status = LpStatus::optimal;
  double objective_value = 0.0;
  std::vector<double> values;  // structural variables, present iff optimal
  std::int64_t iterations = 0;
};

struct SimplexOptions {
  double feas_tol = 1e-9;
  double opt_tol = 1e-9;
  std::int64_t max_iterations = -1;  // -1: scale with problem size
};

namespace detail {

class SimplexSolver {
 public:
  SimplexSolver(const LinearProgram& lp, const SimplexOptions& opt) : lp_(lp), opt_(opt) {}

  LpSolution solve() {
    validate_input();
    build_tableau();
    LpSolution out;
    if (num_artificials_ > 0) {
      const PhaseResult r1 = run_phase(/*phase1=*/true);
      if (r1 == PhaseResult::unbounded) {
        throw SolverError("phase-1 objective cannot be unbounded");
      }
      double infeasibility = 0.0;
      for (int c = first_artificial_; c < ncols_; ++c) infeasibility += value_[c];
      if (infeasibility > infeasibility_tol()) {
        out.status = LpStatus::infeasible;
        out.iterations = iterations_;
        return out;
      }
      // Pin artificials at zero for phase 2; basic ones pivot out on demand.
      for (int c = first_artificial_; c < ncols_; ++c) {
        lower_[c] = 0.0;
        upper_[c] = 0.0;
        if (state_[c] != State::basic) value_[c] = 0.0;
      }
    }
    const PhaseResult r2 = run_phase(/*phase1=*/false);
    if (r2 == PhaseResult::unbounded) {
      out.status = LpStatus::unbounded;
      out.iterations = iterations_;
      return out;
    }
    out.status = LpStatus::optimal;
    out.values.assign(value_.begin(), value_.begin() + lp_.num_vars);
    double obj = 0.0;
    for (int j = 0; j < lp_.num_vars; ++j) {
      obj += lp_.objective[static_cast<std::size_t>(j)] * out.values[static_cast<std::size_t>(j)];
    }
    out.objective_value = obj;
    out.iterations = iterations_;
    verify(out);
    return out;
  }

 private:
  enum class State : unsigned char { basic, at_lower, at_upper, free_zero };
  enum class PhaseResult { optimal, unbounded };

  static constexpr double kDropTol = 1e-12;

  void validate_input() {
    const std::size_t n = static_cast<std::size_t>(lp_.num_vars);
    if (lp_.objective.size() != n || lp_.lower.size() != n || lp_.upper.size() != n) {
      throw std::invalid_argument("objective/bounds width does not match variable count");
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isnan(lp_.lower[j]) || std::isnan(lp_.upper[j]) || lp_.lower[j] > lp_.upper[j]) {
        throw std::invalid_argument("variable " + std::to_string(j) + " has invalid bounds");
      }
      if (!std::isfinite(lp_.objective[j])) {
        throw std::invalid_argument("objective coefficient " + std::to_string(j) + " is not finite");
      }
    }
    for (const auto& row : lp_.rows) {
      if (!std::isfinite(row.rhs)) throw std::invalid_argument("row rhs is not finite");
      for (const auto& [idx, coeff] : row.terms) {
        if (idx < 0 || idx >= lp_.num_vars) {
          throw std::invalid_argument("row references variable outside the declared width");
        }
        if (!std::isfinite(coeff)) throw std::invalid_argument("row coefficient is not finite");
      }
    }
  }

  double infeasibility_tol() const {
    double scale = 1.0;
    for (const auto& row : lp_.rows) scale = std::max(scale, std::fabs(row.rhs));
    return 1e-7 * scale;
  }

  void build_tableau() {
    nrows_ = static_cast<int>(lp_.rows.size());
    const int nvars = lp_.num_vars;

    // Nonbasic structural variables start at their bound nearest zero.
    value_.assign(static_cast<std::size_t>(nvars), 0.0);
    for (int j = 0; j < nvars; ++j) {
      const double lo = lp_.lower[static_cast<std::size_t>(j)];
      const double hi = lp_.upper[static_cast<std::size_t>(j)];
      if (std::isfinite(lo)) {
        value_[static_cast<std::size_t>(j)] = lo;
      } else if (std::isfinite(hi)) {
        value_[static_cast<std::size_t>(j)] = hi;
      } else {
        value_[static_cast<std::size_t>(j)] = 0.0;
      }
    }

    // Slack bounds encode the row relation: terms + slack == rhs.
    std::vector<double> slack_lo(static_cast<std::size_t>(nrows_));
    std::vector<double> slack_hi(static_cast<std::size_t>(nrows_));
    std::vector<double> residual(static_cast<std::size_t>(nrows_));
    std::vector<signed char> art_sign(static_cast<std::size_t>(nrows_), 0);
    num_artificials_ = 0;
    for (int r = 0; r < nrows_; ++r) {
      const auto& row = lp_.rows[static_cast<std::size_t>(r)];
      switch (row.rel) {
        case Relation::less_equal:
          slack_lo[static_cast<std::size_t>(r)] = 0.0;
          slack_hi[static_cast<std::size_t>(r)] = kInfinity;
          break;
        case Relation::greater_equal:
          slack_lo[static_cast<std::size_t>(r)] = -kInfinity;
          slack_hi[static_cast<std::size_t>(r)] = 0.0;
          break;
        case Relation::equal:
          slack_lo[static_cast<std::size_t>(r)] = 0.0;
          slack_hi[static_cast<std::size_t>(r)] = 0.0;
          break;
      }
      double act = 0.0;
      for (const auto& [idx, coeff] : row.terms) {
        act += coeff * value_[static_cast<std::size_t>(idx)];
      }
      residual[static_cast<std::size_t>(r)] = row.rhs - act;
      if (residual[static_cast<std::size_t>(r)] < slack_lo[static_cast<std::size_t>(r)] - opt_.feas_tol) {
        art_sign[static_cast<std::size_t>(r)] = -1;
        ++num_artificials_;
      } else if (residual[static_cast<std::size_t>(r)] > slack_hi[static_cast<std::size_t>(r)] + opt_.feas_tol) {
        art_sign[static_cast<std::size_t>(r)] = 1;
        ++num_artificials_;
      }
    }

    first_slack_ = nvars;
    first_artificial_ = nvars + nrows_;
    ncols_ = nvars + nrows_ + num_artificials_;

    lower_.resize(static_cast<std::size_t>(ncols_));
    upper_.resize(static_cast<std::size_t>(ncols_));
    value_.resize(static_cast<std::size_t>(ncols_), 0.0);
    state_.assign(static_cast<std::size_t>(ncols_), State::at_lower);
    for (int j = 0; j < nvars; ++j) {
      lower_[static_cast<std::size_t>(j)] = lp_.lower[static_cast<std::size_t>(j)];
      upper_[static_cast<std::size_t>(j)] = lp_.upper[static_cast<std::size_t>(j)];
      if (std::isfinite(lower_[static_cast<std::size_t>(j)])) {
        state_[static_cast<std::size_t>(j)] = State::at_lower;
      } else if (std::isfinite(upper_[static_cast<std::size_t>(j)])) {
        state_[static_cast<std::size_t>(j)] = State::at_upper;
      } else {
        state_[static_cast<std::size_t>(j)] = State::free_zero;
      }
    }
    for (int r = 0; r < nrows_; ++r) {
      lower_[static_cast<std::size_t>(first_slack_ + r)] = slack_lo[static_cast<std::size_t>(r)];
      upper_[static_cast<std::size_t>(first_slack_ + r)] = slack_hi[static_cast<std::size_t>(r)];
    }
    for (int a = 0; a < num_artificials_; ++a) {
      lower_[static_cast<std::size_t>(first_artificial_ + a)] = 0.0;
      upper_[static_cast<std::size_t>(first_artificial_ + a)] = kInfinity;
    }

    const std::size_t bytes = static_cast<std::size_t>(nrows_) * static_cast<std::size_t>(ncols_) *
                              sizeof(double);
    if (bytes > kTableauByteBudget) {
      throw EnumerationLimitError("simplex tableau would need " + std::to_string(bytes >> 20) +
                                  " MiB; the problem is too large for the dense solver");
    }

    tableau_.assign(static_cast<std::size_t>(nrows_) * static_cast<std::size_t>(ncols_), 0.0);
    basic_.resize(static_cast<std::size_t>(nrows_));
    int art = 0;
    for (int r = 0; r < nrows_; ++r) {
      double* trow = row_ptr(r);
      const double sign = art_sign[static_cast<std::size_t>(r)] == 0
                              ? 1.0
                              : static_cast<double>(art_sign[static_cast<std::size_t>(r)]);
      for (const auto& [idx, coeff] : lp_.rows[static_cast<std::size_t>(r)].terms) {
        trow[idx] += sign * coeff;
      }
      trow[first_slack_ + r] = sign;
      if (art_sign[static_cast<std::size_t>(r)] == 0) {
        // Slack starts basic at the residual value.
        basic_[static_cast<std::size_t>(r)] = first_slack_ + r;
        state_[static_cast<std::size_t>(first_slack_ + r)] = State::basic;
        value_[static_cast<std::size_t>(first_slack_ + r)] = residual[static_cast<std::size_t>(r)];
      } else {
        // Slack clamps to the violated bound; the artificial absorbs the rest.
        const double clamped = residual[static_cast<std::size_t>(r)] <
                                       slack_lo[static_cast<std::size_t>(r)]
                                   ? slack_lo[static_cast<std::size_t>(r)]
                                   : slack_hi[static_cast<std::size_t>(r)];
        value_[static_cast<std::size_t>(first_slack_ + r)] = clamped;
        state_[static_cast<std::size_t>(first_slack_ + r)] =
            residual[static_cast<std::size_t>(r)] < slack_lo[static_cast<std::size_t>(r)]
                ? State::at_lower
                : State::at_upper;
        const int art_col = first_artificial_ + art++;
        trow[art_col] = 1.0;
        basic_[static_cast<std::size_t>(r)] = art_col;
        state_[static_cast<std::size_t>(art_col)] = State::basic;
        value_[static_cast<std::size_t>(art_col)] =
            std::fabs(residual[static_cast<std::size_t>(r)] - clamped);
      }
    }

    pivot_column_.resize(static_cast<std::size_t>(nrows_));
    if (opt_.max_iterations > 0) {
      iteration_cap_ = opt_.max_iterations;
    } else {
      iteration_cap_ = 10000 + 60ll * (static_cast<std::int64_t>(nrows_) + ncols_);
    }
    bland_trigger_ = 1000 + 2ll * (static_cast<std::int64_t>(nrows_) + ncols_);
  }

  void recompute_reduced_costs(bool phase1) {
    cost_.assign(static_cast<std::size_t>(ncols_), 0.0);
    if (phase1) {
      for (int c = first_artificial_; c < ncols_; ++c) cost_[static_cast<std::size_t>(c)] = -1.0;
    } else {
      for (int j = 0; j < lp_.num_vars; ++j) {
        cost_[static_cast<std::size_t>(j)] = lp_.objective[static_cast<std::size_t>(j)];
      }
    }
    reduced_ = cost_;
    for (int r = 0; r < nrows_; ++r) {
      const double cb = cost_[static_cast<std::size_t>(basic_[static_cast<std::size_t>(r)])];
      if (cb == 0.0) continue;
      const double* trow = row_ptr(r);
      for (int c = 0; c < ncols_; ++c) reduced_[static_cast<std::size_t>(c)] -= cb * trow[c];
    }
    for (int r = 0; r < nrows_; ++r) {
      reduced_[static_cast<std::size_t>(basic_[static_cast<std::size_t>(r)])] = 0.0;
    }
  }

  PhaseResult run_phase(bool phase1) {
    recompute_reduced_costs(phase1);
    bool bland = false;
    std::int64_t degenerate_streak = 0;
    for (;;) {
      int enter = -1;
      int dir = 0;
      if (bland) {
        for (int j = 0; j < ncols_ && enter < 0; ++j) {
          dir = entering_direction(j);
          if (dir != 0) enter = j;
        }
      } else {
        double best = opt_.opt_tol;
        for (int j = 0; j < ncols_; ++j) {
          const int d = entering_direction(j);
          if (d == 0) continue;
          const double score = std::fabs(reduced_[static_cast<std::size_t>(j)]);
          if (score > best) {
            best = score;
            enter = j;
            dir = d;
          }
        }
      }
      if (enter < 0) return PhaseResult::optimal;

      // Ratio test: t is the movement of the entering variable along dir.
      for (int r = 0; r < nrows_; ++r) {
        pivot_column_[static_cast<std::size_t>(r)] = row_ptr(r)[enter];
      }
      const double span = upper_[static_cast<std::size_t>(enter)] -
                          lower_[static_cast<std::size_t>(enter)];
      double t_limit = std::isfinite(span) ? span : kInfinity;
      double t_row = kInfinity;
      for (int r = 0; r < nrows_; ++r) {
        const double rate = dir * pivot_column_[static_cast<std::size_t>(r)];
        if (std::fabs(rate) <= 1e-10) continue;
        const int b = basic_[static_cast<std::size_t>(r)];
        const double xb = value_[static_cast<std::size_t>(b)];
        double limit;
        if (rate > 0.0) {
          const double lo = lower_[static_cast<std::size_t>(b)];
          if (!std::isfinite(lo)) continue;
          limit = (xb - lo) / rate;
        } else {
          const double hi = upper_[static_cast<std::size_t>(b)];
          if (!std::isfinite(hi)) continue;
          limit = (xb - hi) / rate;
        }
        if (limit < t_row) t_row = limit;
      }
      if (t_row < 0.0) t_row = 0.0;

      if (!std::isfinite(t_row) && !std::isfinite(t_limit)) {
        return PhaseResult::unbounded;
      }

      ++iterations_;
      if (iterations_ > iteration_cap_) {
        throw SolverError("simplex iteration cap exceeded (" + std::to_string(iteration_cap_) + ")");
      }

      if (t_limit <= t_row) {
        // Bound flip: the entering variable crosses to its other bound.
        apply_step(enter, dir, t_limit);
        value_[static_cast<std::size_t>(enter)] =
            state_[static_cast<std::size_t>(enter)] == State::at_lower
                ? upper_[static_cast<std::size_t>(enter)]
                : lower_[static_cast<std::size_t>(enter)];
        state_[static_cast<std::size_t>(enter)] =
            state_[static_cast<std::size_t>(enter)] == State::at_lower ? State::at_upper
                                                                       : State::at_lower;
        degenerate_streak = t_limit <= 1e-12 ? degenerate_streak + 1 : 0;
      } else {
        // Leaving row: among ratios within tolerance of the minimum, prefer
        // large pivots (stability); under Bland, the smallest basic index.
        int leave_row = -1;
        double best_mag = 0.0;
        int best_index = ncols_;
        for (int r = 0; r < nrows_; ++r) {
          const double rate = dir * pivot_column_[static_cast<std::size_t>(r)];
          if (std::fabs(rate) <= 1e-10) continue;
          const int b = basic_[static_cast<std::size_t>(r)];
          const double xb = value_[static_cast<std::size_t>(b)];
          double limit;
          if (rate > 0.0) {
            const double lo = lower_[static_cast<std::size_t>(b)];
            if (!std::isfinite(lo)) continue;
            limit = (xb - lo) / rate;
          } else {
            const double hi = upper_[static_cast<std::size_t>(b)];
            if (!std::isfinite(hi)) continue;
            limit = (xb - hi) / rate;
          }
          if (limit < 0.0) limit = 0.0;
          if (limit > t_row + 1e-9) continue;
          if (bland) {
            if (b < best_index) {
              best_index = b;
              leave_row = r;
            }
          } else {
            const double mag = std::fabs(rate);
            if (mag > best_mag) {
              best_mag = mag;
              leave_row = r;
            }
          }
        }
        if (leave_row < 0) throw SolverError("ratio test failed to select a leaving row");

        apply_step(enter, dir, t_row);
        const int leaving = basic_[static_cast<std::size_t>(leave_row)];
        const double rate = dir * pivot_column_[static_cast<std::size_t>(leave_row)];
        value_[static_cast<std::size_t>(leaving)] =
            rate > 0.0 ? lower_[static_cast<std::size_t>(leaving)]
                       : upper_[static_cast<std::size_t>(leaving)];
        state_[static_cast<std::size_t>(leaving)] =
            rate > 0.0 ? State::at_lower : State::at_upper;
        value_[static_cast<std::size_t>(enter)] =
            entering_base_value(enter) + dir * t_row;
        state_[static_cast<std::size_t>(enter)] = State::basic;
        basic_[static_cast<std::size_t>(leave_row)] = enter;
        pivot(leave_row, enter);
        degenerate_streak = t_row <= 1e-12 ? degenerate_streak + 1 : 0;
      }

      if (!bland && degenerate_streak > bland_trigger_) {
        bland = true;  // provably terminating from here on
      }
    }
  }

  // Current resting value of a nonbasic variable before it starts moving.
  double entering_base_value(int j) const { return value_[static_cast<std::size_t>(j)]; }

  int entering_direction(int j) const {
    if (state_[static_cast<std::size_t>(j)] == State::basic) return 0;
    if (lower_[static_cast<std::size_t>(j)] == upper_[static_cast<std::size_t>(j)]) return 0;
    const double d = reduced_[static_cast<std::size_t>(j)];
    switch (state_[static_cast<std::size_t>(j)]) {
      case State::at_lower:
        return d > opt_.opt_tol ? 1 : 0;
      case State::at_upper:
        return d < -opt_.opt_tol ? -1 : 0;
      case State::free_zero:
        if (d > opt_.opt_tol) return 1;
        if (d < -opt_.opt_tol) return -1;
        return 0;
      case State::basic:
        return 0;
    }
    return 0;
  }

  // Moves the entering variable by t along dir, updating all basic values.
  void apply_step(int enter, int dir, double t) {
    (void)enter;
    if (t == 0.0) return;
    for (int r = 0; r < nrows_; ++r) {
      const double rate = dir * pivot_column_[static_cast<std::size_t>(r)];
      if (rate == 0.0) continue;
      value_[static_cast<std::size_t>(basic_[static_cast<std::size_t>(r)])] -= rate * t;
    }
  }

  void pivot(int prow_idx, int pcol) {
    double* prow = row_ptr(prow_idx);
    const double inv = 1.0 / prow[pcol];
    for (int c = 0; c < ncols_; ++c) prow[c] *= inv;
    prow[pcol] = 1.0;
    for (int r = 0; r < nrows_; ++r) {
      if (r == prow_idx) continue;
      double* trow = row_ptr(r);
      const double f = trow[pcol];
      if (std::fabs(f) > kDropTol) {
        for (int c = 0; c < ncols_; ++c) trow[c] -= f * prow[c];
      }
      trow[pcol] = 0.0;
    }
    const double fd = reduced_[static_cast<std::size_t>(pcol)];
    if (std::fabs(fd) > kDropTol) {
      for (int c = 0; c < ncols_; ++c) reduced_[static_cast<std::size_t>(c)] -= fd * prow[c];
    }
    reduced_[static_cast<std::size_t>(pcol)] = 0.0;
  }

  void verify(const LpSolution& out) const {
    for (int j = 0; j < lp_.num_vars; ++j) {
      const double x = out.values[static_cast<std::size_t>(j)];
      const double lo = lp_.lower[static_cast<std::size_t>(j)];
      const double hi = lp_.upper[static_cast<std::size_t>(j)];
      const double slack_scale = 1e-6 * (1.0 + std::fabs(x));
      if (x < lo - slack_scale || x > hi + slack_scale) {
        throw SolverError("variable " + std::to_string(j) + " violates its bounds");
      }
    }
    for (std::size_t r = 0; r < lp_.rows.size(); ++r) {
      const auto& row = lp_.rows[r];
      double act = 0.0;
      double scale = std::fabs(row.rhs);
      for (const auto& [idx, coeff] : row.terms) {
        act += coeff * out.values[static_cast<std::size_t>(idx)];
        scale = std::max(scale, std::fabs(coeff * out.values[static_cast<std::size_t>(idx)]));
      }
      const double tol = 1e-6 * (1.0 + scale);
      const bool ok = row.rel == Relation::less_equal    ? act <= row.rhs + tol
                      : row.rel == Relation::greater_equal ? act >= row.rhs - tol
                                                           : std::fabs(act - row.rhs) <= tol;
      if (!ok) {
        throw SolverError("row " + std::to_string(r) + " violated at the reported optimum");
      }
    }
  }

  double* row_ptr(int r) {
    return tableau_.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(ncols_);
  }
  const double* row_ptr(int r) const {
    return tableau_.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(ncols_);
  }

  static constexpr std::size_t kTableauByteBudget = 3ull << 30;  // 3 GiB

  const LinearProgram& lp_;
  SimplexOptions opt_;

  int nrows_ = 0;
  int ncols_ = 0;
  int first_slack_ = 0;
  int first_artificial_ = 0;
  int num_artificials_ = 0;
  std::int64_t iterations_ = 0;
  std::int64_t iteration_cap_ = 0;
  std::int64_t bland_trigger_ = 0;

  std::vector<double> tableau_;
  std::vector<double> cost_;
  std::vector<double> reduced_;
  std::vector<double> lower_;
  std::vector<double> upper_;
  std::vector<double> value_;
  std::vector<double> pivot_column_;
  std::vector<int> basic_;
  std::vector<State> state_;
};

}  // namespace detail

// Solves the given LP to proven optimality. Infeasible/unbounded outcomes are
// reported through the status, not thrown; malformed programs throw
// std::invalid_argument. Deterministic: identical inputs give identical
// solutions.
inline LpSolution solve_lp(const LinearProgram& lp, const SimplexOptions& opt = {}) {
  detail::SimplexSolver solver(lp, opt);
  return solver.solve();
}

}  // namespace stocmatch

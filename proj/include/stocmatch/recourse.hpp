#pragma once

// Second-stage machinery: the deterministic matching problem Q(n, m, S) that
// recovers sell-contract penalties after failures are observed, exact
// expectation of a fixed allocation over all failure combinations, and the
// exact two-stage solve over the fully expanded scenario set.

#include <chrono>
#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "stocmatch/errors.hpp"
#include "stocmatch/lp.hpp"
#include "stocmatch/model.hpp"
#include "stocmatch/parallel.hpp"

namespace stocmatch {

inline constexpr int kDefaultEvaluationGuard = 20;  // max q for 2^q enumeration
inline constexpr int kDefaultExactSolveGuard = 14;  // max q for the expanded LP
inline constexpr double kIntegralityTol = 1e-7;

// Probability of observing failure combination `config` under independent
// per-type failures.
inline double scenario_probability(const ProblemInstance& instance,
                                   const FailureConfiguration& config) {
  if (config.length() != instance.q()) {
    throw ValidationError("failure configuration length does not match the instance");
  }
  double p = 1.0;
  for (int u = 0; u < instance.q(); ++u) {
    const double pu = instance.buys[static_cast<std::size_t>(u)].fail_prob;
    p *= config.alive(u) ? (1.0 - pu) : pu;
  }
  return p;
}

struct MatchingResult {
  double q_value = 0.0;
  // Flow per admissible edge (buy_index, sell_index); zero on edges whose buy
  // type failed.
  std::map<std::pair<int, int>, double> flows;
};

namespace detail {

// Matching LP over live units only: maximize the penalty mass recovered.
// Supplies may be real-valued (used when a two-stage optimum is fractional).
inline MatchingResult solve_matching_impl(const ProblemInstance& instance,
                                          const std::vector<double>& n,
                                          const std::vector<double>& m,
                                          const FailureConfiguration& config) {
  MatchingResult result;
  for (const auto& edge : instance.edges) result.flows[edge] = 0.0;

  std::vector<int> edge_var(instance.edges.size(), -1);
  LinearProgram lp;
  for (std::size_t e = 0; e < instance.edges.size(); ++e) {
    const auto& [u, i] = instance.edges[e];
    if (!config.alive(u)) continue;
    edge_var[e] = lp.add_variable(instance.sells[static_cast<std::size_t>(i)].penalty, 0.0,
                                  kInfinity);
  }
  if (lp.num_vars == 0) return result;  // nothing alive to match

  std::vector<std::vector<std::pair<int, double>>> sell_terms(instance.sells.size());
  std::vector<std::vector<std::pair<int, double>>> buy_terms(instance.buys.size());
  for (std::size_t e = 0; e < instance.edges.size(); ++e) {
    if (edge_var[e] < 0) continue;
    const auto& [u, i] = instance.edges[e];
    sell_terms[static_cast<std::size_t>(i)].emplace_back(edge_var[e], 1.0);
    buy_terms[static_cast<std::size_t>(u)].emplace_back(edge_var[e], 1.0);
  }
  for (std::size_t i = 0; i < sell_terms.size(); ++i) {
    if (!sell_terms[i].empty()) {
      lp.add_row(std::move(sell_terms[i]), Relation::less_equal, m[i]);
    }
  }
  for (std::size_t u = 0; u < buy_terms.size(); ++u) {
    if (!buy_terms[u].empty()) {
      lp.add_row(std::move(buy_terms[u]), Relation::less_equal, n[u]);
    }
  }

  const LpSolution sol = solve_lp(lp);
  if (sol.status != LpStatus::optimal) {
    throw SolverError("matching LP is feasible and bounded by construction");
  }
  double q_value = 0.0;
  for (std::size_t e = 0; e < instance.edges.size(); ++e) {
    if (edge_var[e] < 0) continue;
    const double flow = std::max(0.0, sol.values[static_cast<std::size_t>(edge_var[e])]);
    result.flows[instance.edges[e]] = flow;
    q_value += flow * instance.sells[static_cast<std::size_t>(instance.edges[e].second)].penalty;
  }
  result.q_value = q_value;
  return result;
}

inline std::vector<double> to_doubles(const std::vector<int>& v) {
  return std::vector<double>(v.begin(), v.end());
}

}  // namespace detail

// Optimal second-stage matching value Q(n, m, S) and the flows achieving it.
// Always feasible (zero flow), so Q >= 0; integral supplies give integral
// flows.
inline MatchingResult solve_matching(const ProblemInstance& instance, const Allocation& alloc,
                                     const FailureConfiguration& config) {
  validate_allocation(instance, alloc);
  if (config.length() != instance.q()) {
    throw ValidationError("failure configuration length does not match the instance");
  }
  return detail::solve_matching_impl(instance, detail::to_doubles(alloc.n),
                                     detail::to_doubles(alloc.m), config);
}

// First-stage cash component of an allocation: buy costs plus sell revenue
// net of the penalty charged upfront (Q recovers the penalty per covered
// unit).
inline double first_stage_value(const ProblemInstance& instance, const std::vector<double>& n,
                                const std::vector<double>& m) {
  double v = 0.0;
  for (int u = 0; u < instance.q(); ++u) {
    v -= n[static_cast<std::size_t>(u)] * instance.buys[static_cast<std::size_t>(u)].price;
  }
  for (int i = 0; i < instance.k(); ++i) {
    const auto& s = instance.sells[static_cast<std::size_t>(i)];
    v += m[static_cast<std::size_t>(i)] * (s.price - s.penalty);
  }
  return v;
}

inline double first_stage_value(const ProblemInstance& instance, const Allocation& alloc) {
  return first_stage_value(instance, detail::to_doubles(alloc.n), detail::to_doubles(alloc.m));
}

// Exact expected value of a fixed allocation: first-stage cash plus the
// probability-weighted Q over all 2^q failure combinations (enumerated in
// lexicographic order). Guarded because the enumeration is exponential.
inline double evaluate_exact(const ProblemInstance& instance, const Allocation& alloc,
                             int enumeration_guard = kDefaultEvaluationGuard) {
  validate_allocation(instance, alloc);
  const int q = instance.q();
  if (q > enumeration_guard) {
    throw EnumerationLimitError("evaluating " + std::to_string(q) +
                                " buy types needs 2^" + std::to_string(q) +
                                " scenarios; guard is " + std::to_string(enumeration_guard));
  }
  const std::uint64_t count = 1ull << q;
  const std::vector<double> n = detail::to_doubles(alloc.n);
  const std::vector<double> m = detail::to_doubles(alloc.m);
  std::vector<double> q_values(count, 0.0);
  parallel_for(
      count,
      [&](std::size_t idx) {
        const FailureConfiguration cfg = FailureConfiguration::from_index(q, idx);
        q_values[idx] = detail::solve_matching_impl(instance, n, m, cfg).q_value;
      },
      count >= 256 ? 0 : 1);
  double expectation = 0.0;
  for (std::uint64_t idx = 0; idx < count; ++idx) {
    expectation += scenario_probability(instance, FailureConfiguration::from_index(q, idx)) *
                   q_values[idx];
  }
  return first_stage_value(instance, n, m) + expectation;
}

enum class BoundKind { exact, lower, upper };

inline const char* to_string(BoundKind kind) {
  switch (kind) {
    case BoundKind::exact: return "exact";
    case BoundKind::lower: return "lower";
    case BoundKind::upper: return "upper";
  }
  return "?";
}

struct SolverStats {
  std::int64_t lp_iterations = 0;
  int lp_rows = 0;
  int lp_cols = 0;
  double millis = 0.0;
};

struct SolveReport {
  double objective_value = 0.0;
  Allocation allocation;
  // Whether the LP's first-stage optimum was integral (within 1e-7). The
  // rounded allocation is reported either way; the raw values are kept for
  // the non-integral case.
  bool allocation_integral = true;
  std::vector<double> raw_n;
  std::vector<double> raw_m;
  // Q at the reported allocation, per scenario in the solve's scenario order
  // (enumeration order for exact solves, seed order for clustered ones).
  std::vector<double> per_scenario_q;
  BoundKind bound_kind = BoundKind::exact;
  SolverStats stats;
};

namespace detail {

// Expanded two-stage LP over an explicit weighted scenario set. Variables are
// the first-stage allocation plus one flow variable per (scenario, edge with
// a live buy); flows of failed buys are omitted.
inline SolveReport solve_two_stage(
    const ProblemInstance& instance,
    const std::vector<std::pair<FailureConfiguration, double>>& scenarios, BoundKind kind) {
  const auto start = std::chrono::steady_clock::now();
  const int q = instance.q();
  const int k = instance.k();

  LinearProgram lp;
  for (int u = 0; u < q; ++u) {
    const auto& b = instance.buys[static_cast<std::size_t>(u)];
    lp.add_variable(-b.price, 0.0, static_cast<double>(b.capacity));
  }
  for (int i = 0; i < k; ++i) {
    const auto& s = instance.sells[static_cast<std::size_t>(i)];
    lp.add_variable(s.price - s.penalty, 0.0, static_cast<double>(s.capacity));
  }

  for (const auto& [cfg, prob] : scenarios) {
    if (cfg.length() != q) {
      throw ValidationError("scenario configuration length does not match the instance");
    }
    std::vector<std::vector<std::pair<int, double>>> sell_terms(static_cast<std::size_t>(k));
    std::vector<std::vector<std::pair<int, double>>> buy_terms(static_cast<std::size_t>(q));
    for (const auto& [u, i] : instance.edges) {
      if (!cfg.alive(u)) continue;
      const double pen = instance.sells[static_cast<std::size_t>(i)].penalty;
      const int var = lp.add_variable(prob * pen, 0.0, kInfinity);
      sell_terms[static_cast<std::size_t>(i)].emplace_back(var, 1.0);
      buy_terms[static_cast<std::size_t>(u)].emplace_back(var, 1.0);
    }
    for (int i = 0; i < k; ++i) {
      auto& terms = sell_terms[static_cast<std::size_t>(i)];
      if (terms.empty()) continue;
      terms.emplace_back(q + i, -1.0);
      lp.add_row(std::move(terms), Relation::less_equal, 0.0);
    }
    for (int u = 0; u < q; ++u) {
      auto& terms = buy_terms[static_cast<std::size_t>(u)];
      if (terms.empty()) continue;
      terms.emplace_back(u, -1.0);
      lp.add_row(std::move(terms), Relation::less_equal, 0.0);
    }
  }

  const LpSolution sol = solve_lp(lp);
  if (sol.status != LpStatus::optimal) {
    throw SolverError("two-stage LP is feasible and bounded by construction");
  }

  SolveReport report;
  report.bound_kind = kind;
  report.objective_value = sol.objective_value;
  report.raw_n.assign(sol.values.begin(), sol.values.begin() + q);
  report.raw_m.assign(sol.values.begin() + q, sol.values.begin() + q + k);
  report.allocation.n.resize(static_cast<std::size_t>(q));
  report.allocation.m.resize(static_cast<std::size_t>(k));
  bool integral = true;
  for (int u = 0; u < q; ++u) {
    const double x = report.raw_n[static_cast<std::size_t>(u)];
    const double r = std::round(x);
    if (std::fabs(x - r) > kIntegralityTol) integral = false;
    const int cap = instance.buys[static_cast<std::size_t>(u)].capacity;
    report.allocation.n[static_cast<std::size_t>(u)] =
        std::min(cap, std::max(0, static_cast<int>(r)));
  }
  for (int i = 0; i < k; ++i) {
    const double x = report.raw_m[static_cast<std::size_t>(i)];
    const double r = std::round(x);
    if (std::fabs(x - r) > kIntegralityTol) integral = false;
    const int cap = instance.sells[static_cast<std::size_t>(i)].capacity;
    report.allocation.m[static_cast<std::size_t>(i)] =
        std::min(cap, std::max(0, static_cast<int>(r)));
  }
  report.allocation_integral = integral;

  // Q per scenario at the reported allocation (raw values when fractional,
  // so the Q values describe exactly what the LP chose).
  const std::vector<double> qn =
      integral ? to_doubles(report.allocation.n) : report.raw_n;
  const std::vector<double> qm =
      integral ? to_doubles(report.allocation.m) : report.raw_m;
  report.per_scenario_q.assign(scenarios.size(), 0.0);
  parallel_for(
      scenarios.size(),
      [&](std::size_t s) {
        report.per_scenario_q[s] =
            solve_matching_impl(instance, qn, qm, scenarios[s].first).q_value;
      },
      scenarios.size() >= 256 ? 0 : 1);

  report.stats.lp_iterations = sol.iterations;
  report.stats.lp_cols = lp.num_vars;
  report.stats.lp_rows = static_cast<int>(lp.rows.size());
  report.stats.millis =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace detail

// Exact two-stage solve: optimal allocation and value over all 2^q failure
// combinations, enumerated in lexicographic order.
inline SolveReport solve_exact(const ProblemInstance& instance,
                               int enumeration_guard = kDefaultExactSolveGuard) {
  const int q = instance.q();
  if (q > enumeration_guard) {
    throw EnumerationLimitError("exact solve over 2^" + std::to_string(q) +
                                " scenarios exceeds the guard of " +
                                std::to_string(enumeration_guard));
  }
  std::vector<std::pair<FailureConfiguration, double>> scenarios;
  const std::uint64_t count = 1ull << q;
  scenarios.reserve(count);
  for (std::uint64_t idx = 0; idx < count; ++idx) {
    FailureConfiguration cfg = FailureConfiguration::from_index(q, idx);
    const double p = scenario_probability(instance, cfg);
    scenarios.emplace_back(std::move(cfg), p);
  }
  return detail::solve_two_stage(instance, scenarios, BoundKind::exact);
}

}  // namespace stocmatch

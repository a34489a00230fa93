#pragma once

// Cluster-based bound approximation. A seed order partitions the failure
// configuration space into clusters keyed by dominance; substituting each
// member by its seed yields a lower bound (seeds have at least the member's
// failures) or an upper bound (at most). Cluster probabilities come from
// exact enumeration, a truncated inclusion-exclusion sum with a conservative
// correction, or Monte Carlo estimation. Seed orders improve by Q-value
// reordering, and seed sets grow by splitting the cluster with the most
// unexplained probability mass.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stocmatch/errors.hpp"
#include "stocmatch/model.hpp"
#include "stocmatch/parallel.hpp"
#include "stocmatch/recourse.hpp"
#include "stocmatch/rng.hpp"

namespace stocmatch {

inline constexpr double kSplitTolerance = 1e-12;

namespace detail {

inline void check_same_length(const FailureConfiguration& a, const FailureConfiguration& b) {
  if (a.length() != b.length()) {
    throw ValidationError("failure configurations have different lengths (" +
                          std::to_string(a.length()) + " vs " + std::to_string(b.length()) + ")");
  }
}

}  // namespace detail

// a failure-dominates b when a's failed set contains b's failed set (a is at
// least as broken as b).
inline bool failure_dominates(const FailureConfiguration& a, const FailureConfiguration& b) {
  detail::check_same_length(a, b);
  for (std::size_t w = 0; w < a.words().size(); ++w) {
    if ((a.words()[w] & ~b.words()[w]) != 0) return false;
  }
  return true;
}

// a non-failure-dominates b when a's alive set contains b's alive set;
// equivalently, b failure-dominates a.
inline bool non_failure_dominates(const FailureConfiguration& a, const FailureConfiguration& b) {
  return failure_dominates(b, a);
}

// Failure overlap: the configuration whose failed set is the intersection of
// the two failed sets (a bit is failed only where both inputs failed).
inline FailureConfiguration failure_overlap(const FailureConfiguration& a,
                                            const FailureConfiguration& b) {
  detail::check_same_length(a, b);
  FailureConfiguration out = a;
  for (int u = 0; u < a.length(); ++u) {
    out.set_alive(u, a.alive(u) || b.alive(u));
  }
  return out;
}

namespace detail {

// Alive overlap, the mirror of failure_overlap: alive only where both are.
inline FailureConfiguration alive_overlap(const FailureConfiguration& a,
                                          const FailureConfiguration& b) {
  check_same_length(a, b);
  FailureConfiguration out = a;
  for (int u = 0; u < a.length(); ++u) {
    out.set_alive(u, a.alive(u) && b.alive(u));
  }
  return out;
}

}  // namespace detail

// Probability mass of the set of configurations failure-dominated by `config`
// (everything alive in `config` must stay alive; the empty product is 1).
inline double failure_dominated_mass(const ProblemInstance& instance,
                                     const FailureConfiguration& config) {
  if (config.length() != instance.q()) {
    throw ValidationError("failure configuration length does not match the instance");
  }
  double p = 1.0;
  for (int u = 0; u < instance.q(); ++u) {
    if (config.alive(u)) p *= 1.0 - instance.buys[static_cast<std::size_t>(u)].fail_prob;
  }
  return p;
}

// Mirror mass: probability that everything failed in `config` does fail, the
// mass of the set of configurations it non-failure-dominates.
inline double non_failure_dominated_mass(const ProblemInstance& instance,
                                         const FailureConfiguration& config) {
  if (config.length() != instance.q()) {
    throw ValidationError("failure configuration length does not match the instance");
  }
  double p = 1.0;
  for (int u = 0; u < instance.q(); ++u) {
    if (!config.alive(u)) p *= instance.buys[static_cast<std::size_t>(u)].fail_prob;
  }
  return p;
}

struct SeedOrderIssue {
  std::string message;
  int first = -1;   // indices of the violating pair, when applicable
  int second = -1;
};

// First violation of the seed-order rules, if any: the order must start with
// the all-alive configuration, end with the all-failed one, contain no
// duplicates, and no earlier seed may failure-dominate a later one.
inline std::optional<SeedOrderIssue> validate_seed_order(
    const std::vector<FailureConfiguration>& seeds) {
  if (seeds.size() < 2) {
    return SeedOrderIssue{"a seed order needs at least the all-alive and all-failed seeds"};
  }
  const int q = seeds.front().length();
  for (std::size_t j = 0; j < seeds.size(); ++j) {
    if (seeds[j].length() != q) {
      return SeedOrderIssue{"seed " + std::to_string(j) + " has a different length",
                            static_cast<int>(j)};
    }
  }
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    for (std::size_t j = i + 1; j < seeds.size(); ++j) {
      if (seeds[i] == seeds[j]) {
        return SeedOrderIssue{"seeds " + std::to_string(i) + " and " + std::to_string(j) +
                                  " are duplicates",
                              static_cast<int>(i), static_cast<int>(j)};
      }
      if (failure_dominates(seeds[i], seeds[j])) {
        return SeedOrderIssue{"seed " + std::to_string(i) + " (" + seeds[i].to_string() +
                                  ") failure-dominates later seed " + std::to_string(j) + " (" +
                                  seeds[j].to_string() + ")",
                              static_cast<int>(i), static_cast<int>(j)};
      }
    }
  }
  if (!seeds.front().is_all_alive()) {
    return SeedOrderIssue{"the first seed must be the all-alive configuration", 0};
  }
  if (!seeds.back().is_all_failed()) {
    return SeedOrderIssue{"the last seed must be the all-failed configuration",
                          static_cast<int>(seeds.size()) - 1};
  }
  return std::nullopt;
}

// An ordered seed set defining both the lower- and the upper-bound
// clustering; validated on construction.
class SeedOrder {
 public:
  static SeedOrder from(std::vector<FailureConfiguration> seeds) {
    if (auto issue = validate_seed_order(seeds)) {
      throw ValidationError("invalid seed order: " + issue->message);
    }
    SeedOrder w;
    w.seeds_ = std::move(seeds);
    return w;
  }

  static SeedOrder base(int q) {
    return from({FailureConfiguration::all_alive(q), FailureConfiguration::all_failed(q)});
  }

  const std::vector<FailureConfiguration>& seeds() const { return seeds_; }
  const FailureConfiguration& seed(int j) const { return seeds_[static_cast<std::size_t>(j)]; }
  int size() const { return static_cast<int>(seeds_.size()); }
  int length() const { return seeds_.front().length(); }

  bool contains(const FailureConfiguration& config) const {
    return std::find(seeds_.begin(), seeds_.end(), config) != seeds_.end();
  }

  // New order with `config` inserted at `position`; revalidates.
  SeedOrder inserted(const FailureConfiguration& config, int position) const {
    std::vector<FailureConfiguration> seeds = seeds_;
    seeds.insert(seeds.begin() + position, config);
    return from(std::move(seeds));
  }

  bool operator==(const SeedOrder&) const = default;

 private:
  SeedOrder() = default;
  std::vector<FailureConfiguration> seeds_;
};

enum class Bound { lower, upper };

inline const char* to_string(Bound b) { return b == Bound::lower ? "lower" : "upper"; }

// Cluster index of `config` in the given order. Lower bound: the first seed
// (forward scan) that failure-dominates the configuration. Upper bound: the
// first seed in the reverse scan that non-failure-dominates it. Total because
// the all-failed seed dominates and the all-alive seed non-failure-dominates
// every configuration.
inline int assign_cluster(const SeedOrder& w, const FailureConfiguration& config, Bound bound) {
  if (bound == Bound::lower) {
    for (int j = 0; j < w.size(); ++j) {
      if (failure_dominates(w.seed(j), config)) return j;
    }
  } else {
    for (int j = w.size() - 1; j >= 0; --j) {
      if (non_failure_dominates(w.seed(j), config)) return j;
    }
  }
  throw SolverError("cluster assignment must be total");
}

enum class WeightKind { exact, ie_lower_corrected, monte_carlo };

inline const char* to_string(WeightKind kind) {
  switch (kind) {
    case WeightKind::exact: return "exact";
    case WeightKind::ie_lower_corrected: return "ie_lower_corrected";
    case WeightKind::monte_carlo: return "monte_carlo";
  }
  return "?";
}

// Per-seed cluster probabilities for one bound direction. Weights are
// nonnegative and sum to one.
struct ClusterDistribution {
  std::vector<double> weights;
  WeightKind kind = WeightKind::exact;
  Bound bound = Bound::lower;
  std::int64_t mc_samples = 0;  // meta, monte_carlo only
  int ie_depth = 0;             // meta, ie_lower_corrected only
};

// Exact cluster probabilities by full enumeration of the 2^q configurations.
inline ClusterDistribution cluster_probs_exact(const ProblemInstance& instance,
                                               const SeedOrder& w, Bound bound,
                                               int enumeration_guard = kDefaultEvaluationGuard) {
  const int q = instance.q();
  if (w.length() != q) throw ValidationError("seed order length does not match the instance");
  if (q > enumeration_guard) {
    throw EnumerationLimitError("exact cluster probabilities need 2^" + std::to_string(q) +
                                " configurations; guard is " + std::to_string(enumeration_guard));
  }
  ClusterDistribution dist;
  dist.kind = WeightKind::exact;
  dist.bound = bound;
  dist.weights.assign(static_cast<std::size_t>(w.size()), 0.0);
  const std::uint64_t count = 1ull << q;
  for (std::uint64_t idx = 0; idx < count; ++idx) {
    const FailureConfiguration cfg = FailureConfiguration::from_index(q, idx);
    dist.weights[static_cast<std::size_t>(assign_cluster(w, cfg, bound))] +=
        scenario_probability(instance, cfg);
  }
  return dist;
}

// Truncated inclusion-exclusion cluster probabilities. `depth` counts the
// included overlap orders: depth 1 keeps only each seed's dominated-set mass,
// depth 2 adds the single-overlap subtraction, and so on. Even depths end on
// a subtraction term, making each per-cluster estimate a certified lower
// bound. Estimates are raised to at least the seed's own probability, capped
// so the total never exceeds one. Unaccounted mass goes to the all-failed
// seed for the lower bound and to the all-alive seed for the upper bound,
// which preserves the respective bound direction.
inline ClusterDistribution cluster_probs_ie(const ProblemInstance& instance, const SeedOrder& w,
                                            int depth, Bound bound = Bound::lower) {
  if (depth < 1) throw ValidationError("inclusion-exclusion depth must be at least 1");
  if (w.length() != instance.q()) {
    throw ValidationError("seed order length does not match the instance");
  }
  const int r = w.size();
  ClusterDistribution dist;
  dist.kind = WeightKind::ie_lower_corrected;
  dist.bound = bound;
  dist.ie_depth = depth;
  dist.weights.assign(static_cast<std::size_t>(r), 0.0);

  const bool lower = bound == Bound::lower;
  auto mass = [&](const FailureConfiguration& c) {
    return lower ? failure_dominated_mass(instance, c) : non_failure_dominated_mass(instance, c);
  };
  auto combine = [&](const FailureConfiguration& a, const FailureConfiguration& b) {
    return lower ? failure_overlap(a, b) : detail::alive_overlap(a, b);
  };

  const int residual_index = lower ? r - 1 : 0;
  double remaining = 1.0;
  // Non-residual seeds are processed in their scan order.
  std::vector<int> order;
  if (lower) {
    for (int j = 0; j < r - 1; ++j) order.push_back(j);
  } else {
    for (int j = r - 1; j >= 1; --j) order.push_back(j);
  }
  for (int j : order) {
    // Seeds examined before j in this bound's scan claim overlap mass first.
    std::vector<const FailureConfiguration*> preds;
    if (lower) {
      for (int i = 0; i < j; ++i) preds.push_back(&w.seed(i));
    } else {
      for (int l = r - 1; l > j; --l) preds.push_back(&w.seed(l));
    }
    double estimate = mass(w.seed(j));
    std::function<void(std::size_t, const FailureConfiguration&, int)> dfs =
        [&](std::size_t start, const FailureConfiguration& overlap, int used) {
          for (std::size_t t = start; t < preds.size(); ++t) {
            const FailureConfiguration next = combine(overlap, *preds[t]);
            estimate += (used % 2 == 1 ? -1.0 : 1.0) * mass(next);
            if (used + 1 <= depth - 1) dfs(t + 1, next, used + 1);
          }
        };
    if (depth >= 2 && !preds.empty()) dfs(0, w.seed(j), 1);

    // Every cluster contains at least its own seed.
    double weight = std::max(estimate, scenario_probability(instance, w.seed(j)));
    weight = std::min(std::max(weight, 0.0), remaining);
    dist.weights[static_cast<std::size_t>(j)] = weight;
    remaining -= weight;
  }
  dist.weights[static_cast<std::size_t>(residual_index)] = remaining;
  return dist;
}

// Monte Carlo cluster probabilities: sample failure configurations from the
// independent model, assign each to its cluster, report frequencies. Batches
// use derived substreams, so the result depends only on the seed, not on
// scheduling.
inline ClusterDistribution cluster_probs_mc(const ProblemInstance& instance, const SeedOrder& w,
                                            std::int64_t samples, Bound bound,
                                            std::uint64_t rng_seed) {
  if (samples < 1) throw ValidationError("sample count must be at least 1");
  if (w.length() != instance.q()) {
    throw ValidationError("seed order length does not match the instance");
  }
  const int q = instance.q();
  const std::int64_t batch_size = 8192;
  const std::int64_t num_batches = (samples + batch_size - 1) / batch_size;
  std::vector<std::vector<std::int64_t>> batch_counts(
      static_cast<std::size_t>(num_batches),
      std::vector<std::int64_t>(static_cast<std::size_t>(w.size()), 0));
  parallel_for(static_cast<std::size_t>(num_batches), [&](std::size_t b) {
    Rng rng(derive_seed(rng_seed, b));
    auto& counts = batch_counts[b];
    const std::int64_t begin = static_cast<std::int64_t>(b) * batch_size;
    const std::int64_t end = std::min(samples, begin + batch_size);
    FailureConfiguration cfg(q);
    for (std::int64_t s = begin; s < end; ++s) {
      for (int u = 0; u < q; ++u) {
        cfg.set_alive(u, !rng.bernoulli(instance.buys[static_cast<std::size_t>(u)].fail_prob));
      }
      ++counts[static_cast<std::size_t>(assign_cluster(w, cfg, bound))];
    }
  });
  ClusterDistribution dist;
  dist.kind = WeightKind::monte_carlo;
  dist.bound = bound;
  dist.mc_samples = samples;
  dist.weights.assign(static_cast<std::size_t>(w.size()), 0.0);
  for (const auto& counts : batch_counts) {
    for (std::size_t j = 0; j < counts.size(); ++j) {
      dist.weights[j] += static_cast<double>(counts[j]);
    }
  }
  for (auto& weight : dist.weights) weight /= static_cast<double>(samples);
  return dist;
}

// Probability-mode selector shared by the clustered solver entry points.
struct ProbabilityModel {
  enum class Mode { exact, ie, mc };
  Mode mode = Mode::exact;
  int ie_depth = 2;
  std::int64_t mc_samples = 100000;
  int enumeration_guard = kDefaultEvaluationGuard;
};

inline ClusterDistribution cluster_probs(const ProblemInstance& instance, const SeedOrder& w,
                                         const ProbabilityModel& model, Bound bound,
                                         std::uint64_t rng_seed) {
  switch (model.mode) {
    case ProbabilityModel::Mode::exact:
      return cluster_probs_exact(instance, w, bound, model.enumeration_guard);
    case ProbabilityModel::Mode::ie:
      return cluster_probs_ie(instance, w, model.ie_depth, bound);
    case ProbabilityModel::Mode::mc:
      return cluster_probs_mc(instance, w, model.mc_samples, bound, rng_seed);
  }
  throw ValidationError("unknown probability mode");
}

namespace detail {

inline void check_dist(const SeedOrder& w, const ClusterDistribution& dist, Bound bound) {
  if (static_cast<int>(dist.weights.size()) != w.size()) {
    throw ValidationError("distribution has " + std::to_string(dist.weights.size()) +
                          " weights for " + std::to_string(w.size()) + " seeds");
  }
  if (dist.bound != bound) {
    throw ValidationError(std::string("distribution was computed for the ") +
                          to_string(dist.bound) + " clustering but the " + to_string(bound) +
                          " bound was requested");
  }
  double sum = 0.0;
  for (double wgt : dist.weights) {
    if (wgt < -1e-9) throw ValidationError("distribution has a negative weight");
    sum += wgt;
  }
  if (std::fabs(sum - 1.0) > 1e-6) {
    throw ValidationError("distribution weights sum to " + std::to_string(sum) + ", not 1");
  }
}

}  // namespace detail

// Reduced two-stage solve whose scenario set is the seeds of `w` weighted by
// `dist`. With exact cluster probabilities the lower (upper) report brackets
// the exact optimum from below (above).
inline SolveReport solve_clustered(const ProblemInstance& instance, const SeedOrder& w,
                                   const ClusterDistribution& dist, Bound bound) {
  if (w.length() != instance.q()) {
    throw ValidationError("seed order length does not match the instance");
  }
  detail::check_dist(w, dist, bound);
  std::vector<std::pair<FailureConfiguration, double>> scenarios;
  scenarios.reserve(static_cast<std::size_t>(w.size()));
  for (int j = 0; j < w.size(); ++j) {
    scenarios.emplace_back(w.seed(j), dist.weights[static_cast<std::size_t>(j)]);
  }
  return detail::solve_two_stage(instance, scenarios,
                                 bound == Bound::lower ? BoundKind::lower : BoundKind::upper);
}

// Q value of the fixed allocation at every seed, in seed order.
inline std::vector<double> seed_q_values(const ProblemInstance& instance, const Allocation& alloc,
                                         const SeedOrder& w) {
  validate_allocation(instance, alloc);
  const std::vector<double> n = detail::to_doubles(alloc.n);
  const std::vector<double> m = detail::to_doubles(alloc.m);
  std::vector<double> out(static_cast<std::size_t>(w.size()), 0.0);
  for (int j = 0; j < w.size(); ++j) {
    out[static_cast<std::size_t>(j)] =
        detail::solve_matching_impl(instance, n, m, w.seed(j)).q_value;
  }
  return out;
}

// Clustered expectation of a fixed allocation: first-stage cash plus the
// weighted Q over the seeds. With exact weights this is a lower (upper) bound
// on the exact expected value of that allocation.
inline double evaluate_clustered(const ProblemInstance& instance, const Allocation& alloc,
                                 const SeedOrder& w, const ClusterDistribution& dist) {
  detail::check_dist(w, dist, dist.bound);
  const std::vector<double> qs = seed_q_values(instance, alloc, w);
  double expectation = 0.0;
  for (std::size_t j = 0; j < qs.size(); ++j) expectation += dist.weights[j] * qs[j];
  return first_stage_value(instance, alloc) + expectation;
}

struct ReorderResult {
  SeedOrder order;
  ClusterDistribution dist;   // for the final order
  SolveReport report;         // solve at the final order
  int iterations = 0;         // reorder passes that changed the order
  std::vector<double> iteration_values;  // solve value before and after each pass
};

namespace detail {

// Sort key: Q descending, then fewer failures first, then lexicographic
// bits. Q values are snapped to a 1e-9 grid so that mathematically equal
// values compare equal; at equal Q a dominated seed never sorts after its
// dominator (it has strictly fewer failures), which keeps the sorted order
// valid.
inline std::vector<FailureConfiguration> q_sorted_seeds(
    const std::vector<FailureConfiguration>& seeds, const std::vector<double>& q_values) {
  struct Entry {
    std::int64_t snapped_q;
    int failed;
    FailureConfiguration cfg;
  };
  std::vector<Entry> entries;
  entries.reserve(seeds.size());
  for (std::size_t j = 0; j < seeds.size(); ++j) {
    entries.push_back(Entry{static_cast<std::int64_t>(std::llround(q_values[j] * 1e9)),
                            seeds[j].failed_count(), seeds[j]});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.snapped_q != b.snapped_q) return a.snapped_q > b.snapped_q;
    if (a.failed != b.failed) return a.failed < b.failed;
    return a.cfg < b.cfg;
  });
  std::vector<FailureConfiguration> out;
  out.reserve(entries.size());
  for (auto& e : entries) out.push_back(std::move(e.cfg));
  return out;
}

}  // namespace detail

// Iteratively improves a seed order: solve, compute per-seed Q at the optimal
// allocation, sort seeds by Q, and repeat until the order stops changing or
// the iteration cap is reached. With exact cluster probabilities the solve
// value never decreases across iterations.
inline ReorderResult reorder_seeds(const ProblemInstance& instance, const SeedOrder& initial,
                                   const ProbabilityModel& model, Bound bound = Bound::lower,
                                   int max_iters = 20, std::uint64_t rng_seed = 0) {
  ReorderResult result{initial, cluster_probs(instance, initial, model, bound,
                                              derive_seed(rng_seed, 0)),
                       SolveReport{}, 0, {}};
  result.report = solve_clustered(instance, result.order, result.dist, bound);
  result.iteration_values.push_back(result.report.objective_value);
  for (int iter = 1; iter <= max_iters; ++iter) {
    const std::vector<double>& qn =
        result.report.allocation_integral ? detail::to_doubles(result.report.allocation.n)
                                          : result.report.raw_n;
    const std::vector<double>& qm =
        result.report.allocation_integral ? detail::to_doubles(result.report.allocation.m)
                                          : result.report.raw_m;
    std::vector<double> qs(static_cast<std::size_t>(result.order.size()), 0.0);
    for (int j = 0; j < result.order.size(); ++j) {
      qs[static_cast<std::size_t>(j)] =
          detail::solve_matching_impl(instance, qn, qm, result.order.seed(j)).q_value;
    }
    std::vector<FailureConfiguration> sorted =
        detail::q_sorted_seeds(result.order.seeds(), qs);
    if (sorted == result.order.seeds()) break;
    SeedOrder next = [&] {
      try {
        return SeedOrder::from(std::move(sorted));
      } catch (const ValidationError& e) {
        throw SolverError(std::string("Q-sorted seed order failed validation: ") + e.what());
      }
    }();
    result.order = std::move(next);
    result.dist = cluster_probs(instance, result.order, model, bound,
                                derive_seed(rng_seed, static_cast<std::uint64_t>(iter)));
    result.report = solve_clustered(instance, result.order, result.dist, bound);
    result.iteration_values.push_back(result.report.objective_value);
    result.iterations = iter;
  }
  return result;
}

// One Q-sort pass against a fixed allocation, for evaluating a given
// portfolio under a clustered bound without re-optimizing.
inline SeedOrder reorder_seeds_for_allocation(const ProblemInstance& instance, const SeedOrder& w,
                                              const Allocation& alloc) {
  const std::vector<double> qs = seed_q_values(instance, alloc, w);
  std::vector<FailureConfiguration> sorted = detail::q_sorted_seeds(w.seeds(), qs);
  try {
    return SeedOrder::from(std::move(sorted));
  } catch (const ValidationError& e) {
    throw SolverError(std::string("Q-sorted seed order failed validation: ") + e.what());
  }
}

struct SeedSelection {
  FailureConfiguration seed;
  int position = 0;  // insertion index into the seed list
};

// Splits the cluster with the largest probability mass not explained by its
// own seed (H = cluster weight - seed probability). The new seed is drawn
// from the cluster under the conditional failure model: the source seed's
// alive coordinates stay alive, its failed coordinates fail independently.
// Draws that land in an earlier cluster or equal an existing seed are
// rejected; after 1000 attempts the highest-probability non-seed draw is
// used, and if every draw was a seed the next cluster by H is tried.
//
// Inserting a non-seed configuration immediately before the seed of the
// cluster it belongs to always keeps the order valid: no earlier seed
// failure-dominates it (it would have been assigned earlier), and it cannot
// failure-dominate any later seed, because its own seed dominates it and
// transitivity would make that seed dominate the later one, contradicting
// the validity of the existing order.
inline SeedSelection select_seed(const ProblemInstance& instance, const SeedOrder& w,
                                 const ClusterDistribution& dist, std::uint64_t rng_seed) {
  if (dist.bound != Bound::lower) {
    throw ValidationError("seed selection operates on the lower-bound clustering");
  }
  detail::check_dist(w, dist, Bound::lower);
  if (w.length() != instance.q()) {
    throw ValidationError("seed order length does not match the instance");
  }

  struct Candidate {
    double h;
    int j;
  };
  std::vector<Candidate> candidates;
  for (int j = 0; j < w.size(); ++j) {
    const double h =
        dist.weights[static_cast<std::size_t>(j)] - scenario_probability(instance, w.seed(j));
    if (h > kSplitTolerance) candidates.push_back({h, j});
  }
  if (candidates.empty()) {
    throw NoSplittableClusterError("every cluster's mass is explained by its own seed");
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.h != b.h) return a.h > b.h;
    return a.j < b.j;
  });

  Rng rng(rng_seed);
  const int q = instance.q();
  for (const Candidate& cand : candidates) {
    const FailureConfiguration& source = w.seed(cand.j);
    std::optional<FailureConfiguration> fallback;
    double fallback_prob = -1.0;
    int fallback_cluster = -1;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      FailureConfiguration draw = source;
      for (int u = 0; u < q; ++u) {
        if (!source.alive(u)) {
          draw.set_alive(u, !rng.bernoulli(instance.buys[static_cast<std::size_t>(u)].fail_prob));
        }
      }
      if (w.contains(draw)) continue;
      const int assigned = assign_cluster(w, draw, Bound::lower);
      if (assigned == cand.j) {
        return SeedSelection{std::move(draw), cand.j};
      }
      const double p = scenario_probability(instance, draw);
      if (p > fallback_prob) {
        fallback_prob = p;
        fallback_cluster = assigned;
        fallback = std::move(draw);
      }
    }
    if (fallback) {
      return SeedSelection{std::move(*fallback), fallback_cluster};
    }
    // Every draw hit an existing seed; try the next-best cluster.
  }
  throw NoSplittableClusterError("no splittable cluster produced a new seed configuration");
}

// Baseline selection: a configuration drawn uniformly at random from the
// configurations that are not yet seeds, inserted before the seed of the
// cluster it belongs to (the always-valid position).
inline SeedSelection select_seed_uniform(const ProblemInstance& instance, const SeedOrder& w,
                                         std::uint64_t rng_seed) {
  const int q = instance.q();
  if (w.length() != q) throw ValidationError("seed order length does not match the instance");
  if (q <= 62 && static_cast<std::uint64_t>(w.size()) == (1ull << q)) {
    throw NoSplittableClusterError("every configuration is already a seed");
  }
  Rng rng(rng_seed);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    FailureConfiguration draw(q);
    for (int u = 0; u < q; ++u) draw.set_alive(u, rng.bernoulli(0.5));
    if (w.contains(draw)) continue;
    return SeedSelection{draw, assign_cluster(w, draw, Bound::lower)};
  }
  if (q <= kDefaultEvaluationGuard) {
    // Nearly saturated seed set: enumerate the leftovers.
    std::vector<FailureConfiguration> leftovers;
    for (std::uint64_t idx = 0; idx < (1ull << q); ++idx) {
      FailureConfiguration cfg = FailureConfiguration::from_index(q, idx);
      if (!w.contains(cfg)) leftovers.push_back(std::move(cfg));
    }
    if (leftovers.empty()) {
      throw NoSplittableClusterError("every configuration is already a seed");
    }
    FailureConfiguration pick = leftovers[rng.uniform_index(leftovers.size())];
    const int cluster = assign_cluster(w, pick, Bound::lower);
    return SeedSelection{std::move(pick), cluster};
  }
  throw NoSplittableClusterError("uniform selection failed to find a non-seed configuration");
}

enum class SeedSelect { heuristic, random };

struct RefineOptions {
  int max_clusters = 30;
  ProbabilityModel prob;
  SeedSelect seed_select = SeedSelect::heuristic;
  bool reorder = true;
  bool compute_upper = false;
  std::uint64_t rng_seed = 0;
  int reorder_max_iters = 20;
};

struct RefinementStep {
  int cluster_count = 0;
  double lower_value = 0.0;
  std::optional<double> upper_value;
  Allocation allocation;  // of the lower-bound solve
  bool allocation_integral = true;
  std::vector<FailureConfiguration> seeds;
  double millis = 0.0;
};

struct RefinementTrace {
  std::vector<RefinementStep> steps;
};

// Incremental refinement: starting from the two-seed base order, repeatedly
// solve the clustered problem, record the bound, add a seed (heuristic H
// split or uniform-random baseline) and optionally re-sort seeds by Q value,
// until the cluster budget is reached or nothing is left to split.
inline RefinementTrace refine(const ProblemInstance& instance, const RefineOptions& options) {
  if (options.max_clusters < 2) {
    throw ValidationError("max_clusters must be at least 2");
  }
  validate_instance(instance);

  RefinementTrace trace;
  SeedOrder w = SeedOrder::base(instance.q());
  std::uint64_t stream = 0;
  auto next_seed = [&]() { return derive_seed(options.rng_seed, stream++); };

  std::optional<ClusterDistribution> cached_dist;
  std::optional<SolveReport> cached_report;
  // Each step's wall time covers everything since the previous record, so
  // seed selection and reordering are charged to the step they produce.
  auto last_mark = std::chrono::steady_clock::now();
  for (;;) {
    ClusterDistribution dist;
    SolveReport report;
    if (cached_dist && cached_report) {
      dist = std::move(*cached_dist);
      report = std::move(*cached_report);
      cached_dist.reset();
      cached_report.reset();
    } else {
      dist = cluster_probs(instance, w, options.prob, Bound::lower, next_seed());
      report = solve_clustered(instance, w, dist, Bound::lower);
    }

    RefinementStep step;
    step.cluster_count = w.size();
    step.lower_value = report.objective_value;
    step.allocation = report.allocation;
    step.allocation_integral = report.allocation_integral;
    step.seeds = w.seeds();
    if (options.compute_upper) {
      const ClusterDistribution up =
          cluster_probs(instance, w, options.prob, Bound::upper, next_seed());
      step.upper_value = solve_clustered(instance, w, up, Bound::upper).objective_value;
    }
    const auto now = std::chrono::steady_clock::now();
    step.millis = std::chrono::duration<double, std::milli>(now - last_mark).count();
    last_mark = now;
    trace.steps.push_back(std::move(step));

    if (w.size() >= options.max_clusters) break;

    SeedSelection selection;
    try {
      selection = options.seed_select == SeedSelect::heuristic
                      ? select_seed(instance, w, dist, next_seed())
                      : select_seed_uniform(instance, w, next_seed());
    } catch (const NoSplittableClusterError&) {
      break;
    }
    w = w.inserted(selection.seed, selection.position);

    if (options.reorder) {
      ReorderResult rr = reorder_seeds(instance, w, options.prob, Bound::lower,
                                       options.reorder_max_iters, next_seed());
      w = rr.order;
      cached_dist = std::move(rr.dist);
      cached_report = std::move(rr.report);
    }
  }
  return trace;
}

}  // namespace stocmatch

#pragma once

// Greedy baseline heuristics: a pairwise method that ranks single buy-sell
// matchings, and a diversified method that covers each sell contract with the
// best subset of incident buys found by exhaustive subset search.

#include <algorithm>
#include <string>
#include <vector>

#include "stocmatch/errors.hpp"
#include "stocmatch/model.hpp"

namespace stocmatch {

inline constexpr int kDefaultSubsetSearchLimit = 20;

// Expected profit of holding the single pair (u, i): pay the buy price, earn
// the sell price when u survives, pay the penalty when it fails.
inline double pair_value(const ProblemInstance& instance, int u, int i) {
  if (u < 0 || u >= instance.q() || i < 0 || i >= instance.k() || !instance.has_edge(u, i)) {
    throw ValidationError("(" + std::to_string(u) + ", " + std::to_string(i) +
                          ") is not an admissible matching");
  }
  const auto& buy = instance.buys[static_cast<std::size_t>(u)];
  const auto& sell = instance.sells[static_cast<std::size_t>(i)];
  return -buy.price + (1.0 - buy.fail_prob) * sell.price + buy.fail_prob * (-sell.penalty);
}

// Expected profit of covering sell i with every buy in `buys` at once; the
// sell is breached only when all of them fail.
inline double subset_value(const ProblemInstance& instance, const std::vector<int>& buys, int i) {
  if (i < 0 || i >= instance.k()) throw ValidationError("sell index out of range");
  if (buys.empty()) throw ValidationError("buy subset must be nonempty");
  double cost = 0.0;
  double fail_all = 1.0;
  for (int u : buys) {
    if (u < 0 || u >= instance.q() || !instance.has_edge(u, i)) {
      throw ValidationError("buy " + std::to_string(u) + " is not incident on sell " +
                            std::to_string(i));
    }
    cost += instance.buys[static_cast<std::size_t>(u)].price;
    fail_all *= instance.buys[static_cast<std::size_t>(u)].fail_prob;
  }
  const auto& sell = instance.sells[static_cast<std::size_t>(i)];
  return -cost + (1.0 - fail_all) * sell.price + fail_all * (-sell.penalty);
}

// Pairwise greedy: sort all admissible pairs by value, then fill capacity in
// that order, skipping non-positive pairs. Ties break toward the lower sell
// index, then the lower buy index, so the result is deterministic.
inline Allocation greedy_pairwise(const ProblemInstance& instance) {
  validate_instance(instance);
  struct Candidate {
    double value;
    int u;
    int i;
  };
  std::vector<Candidate> candidates;
  for (const auto& [u, i] : instance.edges) {
    const double v = pair_value(instance, u, i);
    if (v > 0.0) candidates.push_back({v, u, i});
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.value != b.value) return a.value > b.value;
    if (a.i != b.i) return a.i < b.i;
    return a.u < b.u;
  });
  Allocation alloc = Allocation::zeros(instance);
  std::vector<int> buy_left(instance.buys.size());
  std::vector<int> sell_left(instance.sells.size());
  for (std::size_t u = 0; u < instance.buys.size(); ++u) buy_left[u] = instance.buys[u].capacity;
  for (std::size_t i = 0; i < instance.sells.size(); ++i) sell_left[i] = instance.sells[i].capacity;
  for (const auto& c : candidates) {
    const int t = std::min(buy_left[static_cast<std::size_t>(c.u)],
                           sell_left[static_cast<std::size_t>(c.i)]);
    if (t <= 0) continue;
    alloc.n[static_cast<std::size_t>(c.u)] += t;
    alloc.m[static_cast<std::size_t>(c.i)] += t;
    buy_left[static_cast<std::size_t>(c.u)] -= t;
    sell_left[static_cast<std::size_t>(c.i)] -= t;
  }
  return alloc;
}

// Diversified greedy: each round, find for every unsaturated sell the best
// subset of its unsaturated incident buys (exhaustive over subsets), take the
// overall best if its value is positive, and allocate as many units as the
// sell and every chosen buy can still absorb. One unit of each member buy is
// consumed per allocated sell unit.
inline Allocation greedy_diversified(const ProblemInstance& instance,
                                     int subset_search_limit = kDefaultSubsetSearchLimit) {
  validate_instance(instance);
  const auto incident = instance.buys_by_sell();
  for (std::size_t i = 0; i < incident.size(); ++i) {
    if (static_cast<int>(incident[i].size()) > subset_search_limit) {
      throw EnumerationLimitError("sell " + std::to_string(i) + " has " +
                                  std::to_string(incident[i].size()) +
                                  " incident buys; subset search limit is " +
                                  std::to_string(subset_search_limit));
    }
  }

  Allocation alloc = Allocation::zeros(instance);
  std::vector<int> buy_left(instance.buys.size());
  std::vector<int> sell_left(instance.sells.size());
  for (std::size_t u = 0; u < instance.buys.size(); ++u) buy_left[u] = instance.buys[u].capacity;
  for (std::size_t i = 0; i < instance.sells.size(); ++i) sell_left[i] = instance.sells[i].capacity;

  for (;;) {
    double best_value = 0.0;
    int best_sell = -1;
    std::vector<int> best_subset;
    for (int i = 0; i < instance.k(); ++i) {
      if (sell_left[static_cast<std::size_t>(i)] <= 0) continue;
      std::vector<int> available;
      for (int u : incident[static_cast<std::size_t>(i)]) {
        if (buy_left[static_cast<std::size_t>(u)] > 0) available.push_back(u);
      }
      if (available.empty()) continue;
      const std::size_t masks = 1ull << available.size();
      for (std::size_t mask = 1; mask < masks; ++mask) {
        std::vector<int> subset;
        for (std::size_t b = 0; b < available.size(); ++b) {
          if (mask & (1ull << b)) subset.push_back(available[b]);
        }
        const double v = subset_value(instance, subset, i);
        if (v <= 0.0) continue;
        bool better;
        if (best_sell < 0 || v != best_value) {
          better = v > best_value;
        } else if (i != best_sell) {
          better = i < best_sell;
        } else {
          better = std::lexicographical_compare(subset.begin(), subset.end(),
                                                best_subset.begin(), best_subset.end());
        }
        if (better) {
          best_value = v;
          best_sell = i;
          best_subset = std::move(subset);
        }
      }
    }
    if (best_sell < 0) break;  // no positive-value combination remains

    int t = sell_left[static_cast<std::size_t>(best_sell)];
    for (int u : best_subset) t = std::min(t, buy_left[static_cast<std::size_t>(u)]);
    alloc.m[static_cast<std::size_t>(best_sell)] += t;
    sell_left[static_cast<std::size_t>(best_sell)] -= t;
    for (int u : best_subset) {
      alloc.n[static_cast<std::size_t>(u)] += t;
      buy_left[static_cast<std::size_t>(u)] -= t;
    }
  }
  return alloc;
}

}  // namespace stocmatch

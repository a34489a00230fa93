#include <catch2/catch.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "stocmatch/clustering.hpp"
#include "test_util.hpp"

using namespace stocmatch;
using testutil::cfg;
using testutil::tiny_instance;

using testutil::full_seed_order;

namespace {

ClusterDistribution exact_lower(const ProblemInstance& instance, const SeedOrder& w) {
  return cluster_probs_exact(instance, w, Bound::lower);
}

}  // namespace

TEST_CASE("failure dominance compares failed sets") {
  CHECK(failure_dominates(cfg("00"), cfg("10")));
  CHECK_FALSE(failure_dominates(cfg("10"), cfg("01")));
  CHECK(failure_dominates(cfg("10"), cfg("10")));
  CHECK(failure_dominates(cfg("00"), cfg("11")));
  CHECK_FALSE(failure_dominates(cfg("11"), cfg("00")));
  CHECK_THROWS_AS(failure_dominates(cfg("10"), cfg("100")), ValidationError);

  // Mirror relation.
  for (std::uint64_t a = 0; a < 8; ++a) {
    for (std::uint64_t b = 0; b < 8; ++b) {
      const auto ca = FailureConfiguration::from_index(3, a);
      const auto cb = FailureConfiguration::from_index(3, b);
      CHECK(non_failure_dominates(ca, cb) == failure_dominates(cb, ca));
    }
  }
}

TEST_CASE("failure overlap intersects failed sets") {
  CHECK(failure_overlap(cfg("10"), cfg("11")) == cfg("11"));
  CHECK(failure_overlap(cfg("10"), cfg("01")) == cfg("11"));
  for (std::uint64_t idx = 0; idx < 4; ++idx) {
    const auto s = FailureConfiguration::from_index(2, idx);
    CHECK(failure_overlap(cfg("00"), s) == s);
  }
}

TEST_CASE("dominated-set masses are survival products") {
  const ProblemInstance tiny = tiny_instance();
  CHECK(failure_dominated_mass(tiny, cfg("11")) == Approx(0.45).margin(1e-12));
  CHECK(failure_dominated_mass(tiny, cfg("10")) == Approx(0.9).margin(1e-12));
  CHECK(failure_dominated_mass(tiny, cfg("00")) == 1.0);
  CHECK(non_failure_dominated_mass(tiny, cfg("00")) == Approx(0.05).margin(1e-12));
  CHECK(non_failure_dominated_mass(tiny, cfg("11")) == 1.0);
}

TEST_CASE("seed order validation reports the violation") {
  CHECK_FALSE(validate_seed_order({cfg("11"), cfg("10"), cfg("00")}).has_value());

  const auto bad_pair = validate_seed_order({cfg("11"), cfg("00"), cfg("10")});
  REQUIRE(bad_pair.has_value());
  CHECK(bad_pair->first == 1);
  CHECK(bad_pair->second == 2);

  const auto missing_alive = validate_seed_order({cfg("10"), cfg("00")});
  REQUIRE(missing_alive.has_value());
  CHECK(missing_alive->first == 0);

  const auto missing_fail = validate_seed_order({cfg("11"), cfg("10")});
  REQUIRE(missing_fail.has_value());

  const auto duplicate = validate_seed_order({cfg("11"), cfg("10"), cfg("10"), cfg("00")});
  REQUIRE(duplicate.has_value());

  CHECK_THROWS_AS(SeedOrder::from({cfg("11"), cfg("00"), cfg("10")}), ValidationError);
  CHECK_NOTHROW(SeedOrder::from({cfg("11"), cfg("10"), cfg("00")}));
}

TEST_CASE("cluster assignment scans forward for lower and backward for upper") {
  const SeedOrder w = SeedOrder::from({cfg("11"), cfg("00")});
  CHECK(assign_cluster(w, cfg("10"), Bound::lower) == 1);
  CHECK(assign_cluster(w, cfg("10"), Bound::upper) == 0);
  CHECK(assign_cluster(w, cfg("11"), Bound::lower) == 0);
  CHECK(assign_cluster(w, cfg("00"), Bound::upper) == 1);
}

TEST_CASE("assignment seeds dominate their members") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ProblemInstance instance = testutil::small_random_instance(5, 2, 2, seed);
    const SeedOrder w = testutil::random_seed_order(instance, 6, seed * 3 + 1);
    for (std::uint64_t idx = 0; idx < 32; ++idx) {
      const FailureConfiguration s = FailureConfiguration::from_index(5, idx);
      const int lo = assign_cluster(w, s, Bound::lower);
      const int up = assign_cluster(w, s, Bound::upper);
      CHECK(failure_dominates(w.seed(lo), s));
      CHECK(non_failure_dominates(w.seed(up), s));
    }
  }
}

TEST_CASE("exact cluster probabilities on the tiny fixture") {
  const ProblemInstance tiny = tiny_instance();
  const SeedOrder two = SeedOrder::from({cfg("11"), cfg("00")});
  const ClusterDistribution lower = cluster_probs_exact(tiny, two, Bound::lower);
  CHECK(lower.weights[0] == Approx(0.45).margin(1e-12));
  CHECK(lower.weights[1] == Approx(0.55).margin(1e-12));
  const ClusterDistribution upper = cluster_probs_exact(tiny, two, Bound::upper);
  CHECK(upper.weights[0] == Approx(0.95).margin(1e-12));
  CHECK(upper.weights[1] == Approx(0.05).margin(1e-12));

  const SeedOrder three = SeedOrder::from({cfg("11"), cfg("10"), cfg("00")});
  const ClusterDistribution lower3 = cluster_probs_exact(tiny, three, Bound::lower);
  CHECK(lower3.weights[0] == Approx(0.45).margin(1e-12));
  CHECK(lower3.weights[1] == Approx(0.45).margin(1e-12));
  CHECK(lower3.weights[2] == Approx(0.10).margin(1e-12));
}

TEST_CASE("exact cluster probabilities partition the scenario mass") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const ProblemInstance instance = testutil::small_random_instance(6, 2, 2, seed);
    const SeedOrder w = testutil::random_seed_order(instance, 5 + seed % 4, seed + 11);
    for (const Bound bound : {Bound::lower, Bound::upper}) {
      const ClusterDistribution dist = cluster_probs_exact(instance, w, bound);
      double sum = 0.0;
      std::vector<double> manual(dist.weights.size(), 0.0);
      for (std::uint64_t idx = 0; idx < 64; ++idx) {
        const FailureConfiguration s = FailureConfiguration::from_index(6, idx);
        manual[static_cast<std::size_t>(assign_cluster(w, s, bound))] +=
            scenario_probability(instance, s);
      }
      for (std::size_t j = 0; j < dist.weights.size(); ++j) {
        CHECK(dist.weights[j] >= 0.0);
        CHECK(dist.weights[j] == Approx(manual[j]).margin(1e-12));
        sum += dist.weights[j];
      }
      CHECK(sum == Approx(1.0).margin(1e-9));
    }
  }
}

TEST_CASE("truncated inclusion-exclusion matches the tiny fixture") {
  const ProblemInstance tiny = tiny_instance();
  const SeedOrder three = SeedOrder::from({cfg("11"), cfg("10"), cfg("00")});
  for (int depth : {2, 3, 5}) {
    const ClusterDistribution dist = cluster_probs_ie(tiny, three, depth);
    CHECK(dist.weights[0] == Approx(0.45).margin(1e-12));
    CHECK(dist.weights[1] == Approx(0.45).margin(1e-12));  // 0.9 - 0.45
    CHECK(dist.weights[2] == Approx(0.10).margin(1e-12));
  }
  const SeedOrder two = SeedOrder::from({cfg("11"), cfg("00")});
  const ClusterDistribution depth1 = cluster_probs_ie(tiny, two, 1);
  CHECK(depth1.weights[0] == Approx(0.45).margin(1e-12));
  CHECK(depth1.weights[1] == Approx(0.55).margin(1e-12));

  CHECK_THROWS_AS(cluster_probs_ie(tiny, two, 0), ValidationError);
}

TEST_CASE("untruncated inclusion-exclusion equals exact enumeration") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const ProblemInstance instance = testutil::small_random_instance(5, 2, 2, seed);
    const SeedOrder w = testutil::random_seed_order(instance, 4 + seed % 5, seed * 7 + 3);
    for (const Bound bound : {Bound::lower, Bound::upper}) {
      const ClusterDistribution exact = cluster_probs_exact(instance, w, bound);
      const ClusterDistribution full = cluster_probs_ie(instance, w, w.size(), bound);
      for (std::size_t j = 0; j < exact.weights.size(); ++j) {
        CHECK(full.weights[j] == Approx(exact.weights[j]).margin(1e-9));
      }
    }
  }
}

TEST_CASE("depth-2 inclusion-exclusion underestimates every non-residual cluster") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const ProblemInstance instance = testutil::small_random_instance(6, 2, 2, seed);
    const SeedOrder w = testutil::random_seed_order(instance, 6 + seed % 3, seed + 501);
    const ClusterDistribution exact = cluster_probs_exact(instance, w, Bound::lower);
    const ClusterDistribution ie = cluster_probs_ie(instance, w, 2, Bound::lower);
    const std::size_t last = ie.weights.size() - 1;
    double sum = 0.0;
    for (std::size_t j = 0; j < ie.weights.size(); ++j) {
      CHECK(ie.weights[j] >= -1e-12);
      sum += ie.weights[j];
      if (j != last) CHECK(ie.weights[j] <= exact.weights[j] + 1e-9);
    }
    CHECK(ie.weights[last] >= exact.weights[last] - 1e-9);
    CHECK(sum == Approx(1.0).margin(1e-9));

    // Mirrored upper correction: residual mass flows to the all-alive seed.
    const ClusterDistribution exact_up = cluster_probs_exact(instance, w, Bound::upper);
    const ClusterDistribution ie_up = cluster_probs_ie(instance, w, 2, Bound::upper);
    double sum_up = 0.0;
    for (std::size_t j = 0; j < ie_up.weights.size(); ++j) {
      sum_up += ie_up.weights[j];
      if (j != 0) CHECK(ie_up.weights[j] <= exact_up.weights[j] + 1e-9);
    }
    CHECK(ie_up.weights[0] >= exact_up.weights[0] - 1e-9);
    CHECK(sum_up == Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("Monte Carlo cluster probabilities converge and are reproducible") {
  const ProblemInstance tiny = tiny_instance();
  const SeedOrder two = SeedOrder::from({cfg("11"), cfg("00")});
  const ClusterDistribution mc = cluster_probs_mc(tiny, two, 100000, Bound::lower, 7);
  CHECK(mc.weights[0] == Approx(0.45).margin(0.01));
  CHECK(mc.weights[1] == Approx(0.55).margin(0.01));
  CHECK(mc.weights[0] + mc.weights[1] == Approx(1.0).margin(1e-12));

  const ClusterDistribution again = cluster_probs_mc(tiny, two, 100000, Bound::lower, 7);
  CHECK(mc.weights == again.weights);

  const ClusterDistribution single = cluster_probs_mc(tiny, two, 1, Bound::lower, 3);
  CHECK(std::count(single.weights.begin(), single.weights.end(), 1.0) == 1);
  CHECK(std::count(single.weights.begin(), single.weights.end(), 0.0) == 1);

  ProblemInstance sure = tiny;
  sure.buys[0].fail_prob = 0.0;
  sure.buys[1].fail_prob = 0.0;
  const ClusterDistribution certain = cluster_probs_mc(sure, two, 1000, Bound::lower, 5);
  CHECK(certain.weights[0] == 1.0);
}

TEST_CASE("clustered solves bracket the tiny optimum") {
  const ProblemInstance tiny = tiny_instance();
  const SeedOrder two = SeedOrder::from({cfg("11"), cfg("00")});

  const SolveReport lower =
      solve_clustered(tiny, two, cluster_probs_exact(tiny, two, Bound::lower), Bound::lower);
  CHECK(lower.bound_kind == BoundKind::lower);
  CHECK(lower.objective_value == Approx(0.0).margin(1e-9));
  CHECK(lower.allocation.is_zero());

  const SolveReport upper =
      solve_clustered(tiny, two, cluster_probs_exact(tiny, two, Bound::upper), Bound::upper);
  CHECK(upper.bound_kind == BoundKind::upper);
  CHECK(upper.objective_value == Approx(2.7).margin(1e-9));
  CHECK(upper.allocation.n == std::vector<int>{1, 0});
  CHECK(upper.allocation.m == std::vector<int>{1});

  const SeedOrder three = SeedOrder::from({cfg("11"), cfg("10"), cfg("00")});
  const SolveReport lower3 =
      solve_clustered(tiny, three, cluster_probs_exact(tiny, three, Bound::lower), Bound::lower);
  CHECK(lower3.objective_value == Approx(2.4).margin(1e-9));
  CHECK(lower3.allocation.n == std::vector<int>{1, 0});
  CHECK(lower3.allocation.m == std::vector<int>{1});
}

TEST_CASE("clustered solving rejects mismatched distributions") {
  const ProblemInstance tiny = tiny_instance();
  const SeedOrder two = SeedOrder::from({cfg("11"), cfg("00")});
  const SeedOrder three = SeedOrder::from({cfg("11"), cfg("10"), cfg("00")});
  const ClusterDistribution lower2 = cluster_probs_exact(tiny, two, Bound::lower);
  CHECK_THROWS_AS(solve_clustered(tiny, three, lower2, Bound::lower), ValidationError);
  CHECK_THROWS_AS(solve_clustered(tiny, two, lower2, Bound::upper), ValidationError);
}

TEST_CASE("per-seed Q values track the allocation") {
  const ProblemInstance tiny = tiny_instance();
  const SeedOrder three = SeedOrder::from({cfg("11"), cfg("10"), cfg("00")});
  const std::vector<double> qs = seed_q_values(tiny, Allocation{{1, 0}, {1}}, three);
  REQUIRE(qs.size() == 3);
  CHECK(qs[0] == Approx(6.0).margin(1e-9));
  CHECK(qs[1] == Approx(6.0).margin(1e-9));
  CHECK(qs[2] == Approx(0.0).margin(1e-12));

  const std::vector<double> zeros = seed_q_values(tiny, Allocation::zeros(tiny), three);
  for (double v : zeros) CHECK(v == Approx(0.0).margin(1e-12));
}

TEST_CASE("reordering a Q-sorted order is a fixpoint") {
  const ProblemInstance tiny = tiny_instance();
  const SeedOrder three = SeedOrder::from({cfg("11"), cfg("10"), cfg("00")});
  ProbabilityModel model;
  const ReorderResult result = reorder_seeds(tiny, three, model);
  CHECK(result.order.seeds() == three.seeds());
  CHECK(result.iterations == 0);
  CHECK(result.report.objective_value == Approx(2.4).margin(1e-9));
}

TEST_CASE("reordering with a zero iteration cap returns the input order") {
  const ProblemInstance tiny = tiny_instance();
  const SeedOrder three = SeedOrder::from({cfg("11"), cfg("01"), cfg("00")});
  ProbabilityModel model;
  const ReorderResult result = reorder_seeds(tiny, three, model, Bound::lower, 0);
  CHECK(result.order.seeds() == three.seeds());
  CHECK(result.iterations == 0);
}

TEST_CASE("reordering never lowers the bound with exact probabilities") {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const ProblemInstance instance = testutil::small_random_instance(5, 2, 2, seed);
    const SeedOrder w = testutil::random_seed_order(instance, 5 + seed % 4, seed + 900);
    ProbabilityModel model;
    const SolveReport initial = solve_clustered(instance, w, exact_lower(instance, w), Bound::lower);
    const ReorderResult result = reorder_seeds(instance, w, model);
    CHECK(result.report.objective_value >= initial.objective_value - 1e-9);
    CHECK_FALSE(validate_seed_order(result.order.seeds()).has_value());
  }
}

TEST_CASE("seed selection splits the heaviest unexplained cluster on the tiny fixture") {
  const ProblemInstance tiny = tiny_instance();
  const SeedOrder two = SeedOrder::from({cfg("11"), cfg("00")});
  const ClusterDistribution dist = exact_lower(tiny, two);
  // H(cl(11)) = 0, H(cl(00)) = 0.55 - 0.05 = 0.5: split the all-fail cluster.
  const SeedSelection sel = select_seed(tiny, two, dist, 42);
  CHECK((sel.seed == cfg("10") || sel.seed == cfg("01")));
  CHECK(sel.position == 1);

  const SeedSelection again = select_seed(tiny, two, dist, 42);
  CHECK(sel.seed == again.seed);
  CHECK(sel.position == again.position);
}

TEST_CASE("seed selection requires an unexplained cluster") {
  const ProblemInstance tiny = tiny_instance();
  const SeedOrder full = full_seed_order(2, 1);
  CHECK_THROWS_AS(select_seed(tiny, full, exact_lower(tiny, full), 3), NoSplittableClusterError);

  const SeedOrder two = SeedOrder::from({cfg("11"), cfg("00")});
  const ClusterDistribution upper = cluster_probs_exact(tiny, two, Bound::upper);
  CHECK_THROWS_AS(select_seed(tiny, two, upper, 3), ValidationError);
}

TEST_CASE("seed selection always yields a valid insertion") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const ProblemInstance instance = testutil::small_random_instance(6, 2, 2, seed);
    SeedOrder w = SeedOrder::base(6);
    for (int step = 0; step < 8; ++step) {
      const ClusterDistribution dist = exact_lower(instance, w);
      SeedSelection sel;
      try {
        sel = select_seed(instance, w, dist, derive_seed(seed, step));
      } catch (const NoSplittableClusterError&) {
        break;
      }
      CHECK_FALSE(w.contains(sel.seed));
      CHECK_NOTHROW(w = w.inserted(sel.seed, sel.position));
    }
  }
}

TEST_CASE("uniform seed selection yields valid insertions until saturation") {
  const ProblemInstance tiny = tiny_instance();
  SeedOrder w = SeedOrder::base(2);
  for (int step = 0; step < 2; ++step) {
    const SeedSelection sel = select_seed_uniform(tiny, w, derive_seed(5, step));
    CHECK_FALSE(w.contains(sel.seed));
    w = w.inserted(sel.seed, sel.position);
  }
  CHECK(w.size() == 4);
  CHECK_THROWS_AS(select_seed_uniform(tiny, w, 9), NoSplittableClusterError);
}

TEST_CASE("refinement reaches the tiny optimum within four clusters") {
  const ProblemInstance tiny = tiny_instance();
  RefineOptions options;
  options.max_clusters = 4;
  options.rng_seed = 11;
  const RefinementTrace trace = refine(tiny, options);
  REQUIRE(!trace.steps.empty());
  CHECK(trace.steps.front().cluster_count == 2);
  for (std::size_t s = 1; s < trace.steps.size(); ++s) {
    CHECK(trace.steps[s].cluster_count > trace.steps[s - 1].cluster_count);
  }
  CHECK(trace.steps.back().lower_value == Approx(2.4).margin(1e-9));
  CHECK(trace.steps.back().cluster_count <= 4);
}

TEST_CASE("refinement with a two-cluster budget records exactly one step") {
  const ProblemInstance tiny = tiny_instance();
  RefineOptions options;
  options.max_clusters = 2;
  const RefinementTrace trace = refine(tiny, options);
  REQUIRE(trace.steps.size() == 1);
  CHECK(trace.steps[0].cluster_count == 2);
  CHECK(trace.steps[0].lower_value == Approx(0.0).margin(1e-9));
}

TEST_CASE("refinement bounds are monotone with exact probabilities and reordering") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const ProblemInstance instance = testutil::small_random_instance(6, 3, 2, seed);
    RefineOptions options;
    options.max_clusters = 10;
    options.rng_seed = seed;
    options.compute_upper = true;
    const RefinementTrace trace = refine(instance, options);
    for (std::size_t s = 1; s < trace.steps.size(); ++s) {
      CHECK(trace.steps[s].lower_value >= trace.steps[s - 1].lower_value - 1e-9);
    }
    for (const auto& step : trace.steps) {
      REQUIRE(step.upper_value.has_value());
      CHECK(step.lower_value <= *step.upper_value + 1e-9);
    }
  }
}

TEST_CASE("even the random no-reorder baseline is monotone under exact probabilities") {
  // Every new seed lands immediately before the seed of the cluster it came
  // from, so with exact weights each insertion moves mass to a seed with at
  // least the old Q value.
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const ProblemInstance instance = testutil::small_random_instance(5, 2, 2, seed);
    RefineOptions options;
    options.max_clusters = 12;
    options.seed_select = SeedSelect::random;
    options.reorder = false;
    options.rng_seed = seed + 60;
    const RefinementTrace trace = refine(instance, options);
    for (std::size_t s = 1; s < trace.steps.size(); ++s) {
      CHECK(trace.steps[s].lower_value >= trace.steps[s - 1].lower_value - 1e-9);
    }
  }
}

TEST_CASE("clustering scales past the enumeration guard with Monte Carlo weights") {
  // q = 30: no 2^q enumeration anywhere on this path.
  const ProblemInstance instance = generate_instance(30, 3, 0.15, 404);
  RefineOptions options;
  options.max_clusters = 6;
  options.prob.mode = ProbabilityModel::Mode::mc;
  options.prob.mc_samples = 4000;
  options.compute_upper = true;
  options.rng_seed = 7;
  const RefinementTrace a = refine(instance, options);
  REQUIRE(a.steps.size() >= 2);
  CHECK(a.steps.back().cluster_count == 6);
  for (const auto& step : a.steps) {
    REQUIRE(step.upper_value.has_value());
    CHECK(step.seeds.front().is_all_alive());
    CHECK(step.seeds.back().is_all_failed());
  }
  const RefinementTrace b = refine(instance, options);
  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t s = 0; s < a.steps.size(); ++s) {
    CHECK(a.steps[s].lower_value == b.steps[s].lower_value);
    CHECK(a.steps[s].upper_value == b.steps[s].upper_value);
  }
  CHECK_THROWS_AS(cluster_probs_exact(instance, SeedOrder::base(30), Bound::lower),
                  EnumerationLimitError);
}

TEST_CASE("clustered bounds sandwich the exact optimum") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ProblemInstance instance = testutil::small_random_instance(5, 2, 2, seed);
    const double exact = solve_exact(instance).objective_value;
    for (int order = 0; order < 3; ++order) {
      const SeedOrder w =
          testutil::random_seed_order(instance, 4 + order * 2, derive_seed(seed, order));
      const double lower =
          solve_clustered(instance, w, cluster_probs_exact(instance, w, Bound::lower), Bound::lower)
              .objective_value;
      const double upper =
          solve_clustered(instance, w, cluster_probs_exact(instance, w, Bound::upper), Bound::upper)
              .objective_value;
      CHECK(lower <= exact + 1e-6);
      CHECK(upper >= exact - 1e-6);

      const double ie_lower =
          solve_clustered(instance, w, cluster_probs_ie(instance, w, 2, Bound::lower), Bound::lower)
              .objective_value;
      const double ie_upper =
          solve_clustered(instance, w, cluster_probs_ie(instance, w, 2, Bound::upper), Bound::upper)
              .objective_value;
      CHECK(ie_lower <= exact + 1e-6);
      CHECK(ie_upper >= exact - 1e-6);
      CHECK(ie_lower <= lower + 1e-6);
      CHECK(ie_upper >= upper - 1e-6);
    }
  }
}

TEST_CASE("clustered evaluation of a fixed allocation brackets its exact value") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ProblemInstance instance = testutil::small_random_instance(5, 2, 2, seed);
    Rng rng(seed * 13 + 1);
    Allocation alloc = Allocation::zeros(instance);
    for (std::size_t u = 0; u < alloc.n.size(); ++u) {
      alloc.n[u] = rng.uniform_int(0, instance.buys[u].capacity);
    }
    for (std::size_t i = 0; i < alloc.m.size(); ++i) {
      alloc.m[i] = rng.uniform_int(0, instance.sells[i].capacity);
    }
    const double exact = evaluate_exact(instance, alloc);
    const SeedOrder w = testutil::random_seed_order(instance, 5, seed + 333);
    const double lower =
        evaluate_clustered(instance, alloc, w, cluster_probs_exact(instance, w, Bound::lower));
    const double upper =
        evaluate_clustered(instance, alloc, w, cluster_probs_exact(instance, w, Bound::upper));
    CHECK(lower <= exact + 1e-9);
    CHECK(upper >= exact - 1e-9);

    const SeedOrder sorted = reorder_seeds_for_allocation(instance, w, alloc);
    const double sorted_lower = evaluate_clustered(instance, alloc, sorted,
                                                   cluster_probs_exact(instance, sorted, Bound::lower));
    CHECK(sorted_lower >= lower - 1e-9);
    CHECK(sorted_lower <= exact + 1e-9);
  }
}

TEST_CASE("a full seed set reproduces the exact solve") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const ProblemInstance instance =
        testutil::small_random_instance(4, 2, 2, seed);
    const double exact = solve_exact(instance).objective_value;
    const SeedOrder full = full_seed_order(4, seed + 21);
    const double clustered =
        solve_clustered(instance, full, cluster_probs_exact(instance, full, Bound::lower),
                        Bound::lower)
            .objective_value;
    CHECK(clustered == Approx(exact).margin(1e-6));
  }
}

TEST_CASE("Monte Carlo probabilities drive the solver deterministically") {
  const ProblemInstance instance = testutil::small_random_instance(5, 2, 2, 3);
  RefineOptions options;
  options.max_clusters = 6;
  options.prob.mode = ProbabilityModel::Mode::mc;
  options.prob.mc_samples = 20000;
  options.rng_seed = 17;
  const RefinementTrace a = refine(instance, options);
  const RefinementTrace b = refine(instance, options);
  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t s = 0; s < a.steps.size(); ++s) {
    CHECK(a.steps[s].lower_value == b.steps[s].lower_value);
    CHECK(a.steps[s].seeds == b.steps[s].seeds);
  }
}

#pragma once

// Experiment runner: compares exact solving, the greedy baselines and
// clustered refinement variants on one instance over seeded trials, and emits
// the results as CSV. Fully deterministic given the config, except for the
// wall-time column.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stocmatch/clustering.hpp"
#include "stocmatch/errors.hpp"
#include "stocmatch/greedy.hpp"
#include "stocmatch/model.hpp"
#include "stocmatch/parallel.hpp"
#include "stocmatch/recourse.hpp"

namespace stocmatch {

struct GeneratorParams {
  int q = 6;
  int k = 4;
  double density = 0.5;
  std::uint64_t seed = 0;
  GenerationRanges ranges;
};

struct ClusterVariant {
  std::string name;  // as written in the config, used verbatim in the CSV
  SeedSelect select = SeedSelect::heuristic;
  bool reorder = true;
};

struct ExperimentConfig {
  std::optional<std::string> instance_file;
  std::optional<GeneratorParams> generator;
  bool run_exact = true;
  bool run_pairwise = true;
  bool run_diversified = true;
  std::vector<ClusterVariant> variants;
  int trials = 1;
  int max_clusters = 30;
  ProbabilityModel prob;
  std::uint64_t rng_seed = 0;
  int exact_guard = kDefaultExactSolveGuard;
  std::optional<std::string> output;  // default CSV destination
};

// Cluster variant names have the form "cluster:<heuristic|random>:<reorder|noreorder>".
inline ClusterVariant parse_cluster_variant(const std::string& name) {
  ClusterVariant v;
  v.name = name;
  std::string rest = name.substr(std::string("cluster:").size());
  const auto colon = rest.find(':');
  if (colon == std::string::npos) {
    throw ValidationError("methods: cluster variant '" + name +
                          "' must look like cluster:heuristic:reorder");
  }
  const std::string select = rest.substr(0, colon);
  const std::string reorder = rest.substr(colon + 1);
  if (select == "heuristic") {
    v.select = SeedSelect::heuristic;
  } else if (select == "random") {
    v.select = SeedSelect::random;
  } else {
    throw ValidationError("methods: unknown seed selection '" + select + "' in '" + name + "'");
  }
  if (reorder == "reorder") {
    v.reorder = true;
  } else if (reorder == "noreorder") {
    v.reorder = false;
  } else {
    throw ValidationError("methods: unknown reorder flag '" + reorder + "' in '" + name + "'");
  }
  return v;
}

inline ExperimentConfig parse_experiment_config(std::string_view text) {
  using detail::require;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("syntax error: ") + e.what());
  }
  require(j.is_object(), "experiment config must be a JSON object");
  ExperimentConfig config;
  config.run_exact = config.run_pairwise = config.run_diversified = false;

  const auto& instance = detail::json_field(j, "instance", "config");
  require(instance.is_object(), "instance: must be an object");
  if (instance.contains("file")) {
    config.instance_file = detail::json_string(instance["file"], "instance.file");
  } else if (instance.contains("generator")) {
    const auto& g = instance["generator"];
    require(g.is_object(), "instance.generator: must be an object");
    GeneratorParams params;
    params.q = detail::json_int(detail::json_field(g, "q", "instance.generator"), "instance.generator.q");
    params.k = detail::json_int(detail::json_field(g, "k", "instance.generator"), "instance.generator.k");
    params.density = detail::json_number(detail::json_field(g, "density", "instance.generator"),
                                         "instance.generator.density");
    params.seed = static_cast<std::uint64_t>(detail::json_int(
        detail::json_field(g, "seed", "instance.generator"), "instance.generator.seed"));
    config.generator = params;
  } else {
    throw ValidationError("instance: needs either 'file' or 'generator'");
  }

  if (j.contains("methods")) {
    const auto& methods = j["methods"];
    require(methods.is_array(), "methods: must be an array");
    for (const auto& mj : methods) {
      const std::string m = detail::json_string(mj, "methods[]");
      if (m == "exact") {
        config.run_exact = true;
      } else if (m == "pairwise") {
        config.run_pairwise = true;
      } else if (m == "diversified") {
        config.run_diversified = true;
      } else if (m.rfind("cluster:", 0) == 0) {
        config.variants.push_back(parse_cluster_variant(m));
      } else {
        throw ValidationError("methods: unknown method '" + m + "'");
      }
    }
  } else {
    config.run_exact = config.run_pairwise = config.run_diversified = true;
    config.variants.push_back(parse_cluster_variant("cluster:heuristic:reorder"));
    config.variants.push_back(parse_cluster_variant("cluster:random:noreorder"));
  }

  if (j.contains("trials")) config.trials = detail::json_int(j["trials"], "trials");
  if (j.contains("max_clusters")) {
    config.max_clusters = detail::json_int(j["max_clusters"], "max_clusters");
  }
  if (j.contains("rng_seed")) {
    config.rng_seed = static_cast<std::uint64_t>(detail::json_int(j["rng_seed"], "rng_seed"));
  }
  if (j.contains("exact_guard")) {
    config.exact_guard = detail::json_int(j["exact_guard"], "exact_guard");
  }
  if (j.contains("output")) {
    config.output = detail::json_string(j["output"], "output");
  }
  if (j.contains("prob")) {
    const auto& p = j["prob"];
    require(p.is_object(), "prob: must be an object");
    const std::string mode = detail::json_string(detail::json_field(p, "mode", "prob"), "prob.mode");
    if (mode == "exact") {
      config.prob.mode = ProbabilityModel::Mode::exact;
    } else if (mode == "ie") {
      config.prob.mode = ProbabilityModel::Mode::ie;
    } else if (mode == "mc") {
      config.prob.mode = ProbabilityModel::Mode::mc;
    } else {
      throw ValidationError("prob.mode: must be exact, ie or mc");
    }
    if (p.contains("depth")) config.prob.ie_depth = detail::json_int(p["depth"], "prob.depth");
    if (p.contains("samples")) {
      config.prob.mc_samples = detail::json_int(p["samples"], "prob.samples");
    }
  }
  require(config.trials >= 1, "trials: must be at least 1");
  require(config.max_clusters >= 2, "max_clusters: must be at least 2");
  return config;
}

inline ProblemInstance resolve_instance(const ExperimentConfig& config) {
  if (config.instance_file) {
    std::ifstream in(*config.instance_file);
    if (!in) throw ValidationError("cannot open instance file '" + *config.instance_file + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_instance(buffer.str());
  }
  if (config.generator) {
    const auto& g = *config.generator;
    return generate_instance(g.q, g.k, g.density, g.ranges, g.seed);
  }
  throw ValidationError("experiment config has no instance source");
}

struct ExperimentRow {
  int trial = 0;          // -1 for mean-over-trials rows
  std::string variant;
  int clusters = 0;       // -1 for reference methods
  double value = 0.0;
  std::string bound_kind;
  double millis = 0.0;
};

struct ExperimentReport {
  std::vector<ExperimentRow> rows;   // per-trial rows, sorted
  std::vector<ExperimentRow> means;  // mean-over-trials rows
  std::vector<std::string> failures;
};

inline std::string format_value(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9f", v);
  return buf;
}

inline std::string to_csv(const ExperimentReport& report) {
  std::string out = "trial,variant,clusters,value,bound_kind,millis\n";
  auto emit = [&out](const ExperimentRow& row) {
    char millis[32];
    std::snprintf(millis, sizeof(millis), "%.3f", row.millis);
    out += std::to_string(row.trial) + "," + row.variant + "," + std::to_string(row.clusters) +
           "," + format_value(row.value) + "," + row.bound_kind + "," + millis + "\n";
  };
  for (const auto& row : report.rows) emit(row);
  for (const auto& row : report.means) emit(row);
  for (const auto& failure : report.failures) out += "# failure: " + failure + "\n";
  return out;
}

// Runs the configured methods. Trial t derives its seed from the config seed,
// and variant v of a trial derives again from the trial seed, so every row is
// reproducible by re-running the underlying operation with the same derived
// seed. Reference methods are deterministic and evaluated once, then emitted
// per trial with clusters = -1. A failing variant records a failure row and
// does not abort the remaining work.
inline ExperimentReport run_experiment(const ProblemInstance& instance,
                                       const ExperimentConfig& config) {
  if (config.trials < 1) throw ValidationError("trials: must be at least 1");
  if (config.max_clusters < 2) throw ValidationError("max_clusters: must be at least 2");
  validate_instance(instance);
  if (config.run_exact && instance.q() > config.exact_guard) {
    throw EnumerationLimitError("exact reference requested but q=" +
                                std::to_string(instance.q()) + " exceeds the guard of " +
                                std::to_string(config.exact_guard));
  }

  ExperimentReport report;
  std::vector<ExperimentRow> reference_rows;
  if (config.run_exact) {
    const SolveReport exact = solve_exact(instance, config.exact_guard);
    reference_rows.push_back(
        {0, "exact", -1, exact.objective_value, "exact", exact.stats.millis});
  }
  if (config.run_pairwise) {
    const auto start = std::chrono::steady_clock::now();
    const Allocation alloc = greedy_pairwise(instance);
    const double value = evaluate_exact(instance, alloc);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    reference_rows.push_back({0, "pairwise", -1, value, "exact", ms});
  }
  if (config.run_diversified) {
    const auto start = std::chrono::steady_clock::now();
    const Allocation alloc = greedy_diversified(instance);
    const double value = evaluate_exact(instance, alloc);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    reference_rows.push_back({0, "diversified", -1, value, "exact", ms});
  }

  std::vector<std::vector<ExperimentRow>> trial_rows(static_cast<std::size_t>(config.trials));
  std::vector<std::vector<std::string>> trial_failures(static_cast<std::size_t>(config.trials));
  parallel_for(static_cast<std::size_t>(config.trials), [&](std::size_t t) {
    auto& rows = trial_rows[t];
    const int trial = static_cast<int>(t);
    const std::uint64_t trial_seed = derive_seed(config.rng_seed, t);
    for (const auto& ref : reference_rows) {
      ExperimentRow row = ref;
      row.trial = trial;
      rows.push_back(std::move(row));
    }
    for (std::size_t v = 0; v < config.variants.size(); ++v) {
      const auto& variant = config.variants[v];
      RefineOptions options;
      options.max_clusters = config.max_clusters;
      options.prob = config.prob;
      options.seed_select = variant.select;
      options.reorder = variant.reorder;
      options.rng_seed = derive_seed(trial_seed, v);
      try {
        const RefinementTrace trace = refine(instance, options);
        for (const auto& step : trace.steps) {
          rows.push_back(
              {trial, variant.name, step.cluster_count, step.lower_value, "lower", step.millis});
        }
      } catch (const std::exception& e) {
        rows.push_back({trial, variant.name, -1,
                        std::numeric_limits<double>::quiet_NaN(), "error", 0.0});
        trial_failures[t].push_back("trial=" + std::to_string(trial) + " variant=" +
                                    variant.name + ": " + e.what());
      }
    }
  });
  for (auto& rows : trial_rows) {
    report.rows.insert(report.rows.end(), rows.begin(), rows.end());
  }
  for (auto& failures : trial_failures) {
    report.failures.insert(report.failures.end(), failures.begin(), failures.end());
  }
  std::sort(report.rows.begin(), report.rows.end(),
            [](const ExperimentRow& a, const ExperimentRow& b) {
              if (a.trial != b.trial) return a.trial < b.trial;
              if (a.variant != b.variant) return a.variant < b.variant;
              return a.clusters < b.clusters;
            });

  // Mean over trials per (variant, cluster count), skipping failed rows.
  struct Key {
    std::string variant;
    int clusters;
    bool operator<(const Key& other) const {
      if (variant != other.variant) return variant < other.variant;
      return clusters < other.clusters;
    }
  };
  std::map<Key, std::vector<const ExperimentRow*>> groups;
  for (const auto& row : report.rows) {
    if (row.bound_kind == "error") continue;
    groups[{row.variant, row.clusters}].push_back(&row);
  }
  for (const auto& [key, rows] : groups) {
    double value = 0.0;
    double millis = 0.0;
    for (const auto* row : rows) {
      value += row->value;
      millis += row->millis;
    }
    const double count = static_cast<double>(rows.size());
    report.means.push_back(
        {-1, key.variant, key.clusters, value / count, rows.front()->bound_kind, millis / count});
  }
  return report;
}

inline ExperimentReport run_experiment(const ExperimentConfig& config) {
  return run_experiment(resolve_instance(config), config);
}

}  // namespace stocmatch

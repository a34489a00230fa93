// Command-line front end for the stochastic contract-matching solver.
//
// Subcommands:
//   generate    write a random instance document
//   solve       optimize a portfolio (exact, greedy, or clustered bounds)
//   evaluate    expected value of a fixed allocation (exact or clustered)
//   experiment  run a configured method comparison and emit CSV
//
// Exit codes: 0 success, 2 validation error, 3 enumeration-limit error,
// 4 internal solver error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "stocmatch/stocmatch.hpp"

namespace {

using namespace stocmatch;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_output(const std::optional<std::string>& path, const std::string& content) {
  if (path) {
    std::ofstream out(*path);
    if (!out) throw ValidationError("cannot write file '" + *path + "'");
    out << content;
  } else {
    std::cout << content;
  }
}

std::string format9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9f", v);
  return buf;
}

struct ClusterCliOptions {
  int max_clusters = 30;
  std::string prob = "exact";
  int ie_depth = 2;
  std::int64_t mc_samples = 100000;
  std::string reorder = "on";
  std::string seed_select = "heuristic";
  std::uint64_t seed = 0;
};

void add_cluster_options(CLI::App* cmd, ClusterCliOptions& opts) {
  cmd->add_option("--max-clusters", opts.max_clusters, "cluster budget for refinement");
  cmd->add_option("--prob", opts.prob, "cluster probability mode: exact, ie or mc")
      ->check(CLI::IsMember({"exact", "ie", "mc"}));
  cmd->add_option("--ie-depth", opts.ie_depth, "inclusion-exclusion truncation depth");
  cmd->add_option("--mc-samples", opts.mc_samples, "Monte Carlo sample count");
  cmd->add_option("--reorder", opts.reorder, "Q-value seed reordering: on or off")
      ->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--seed-select", opts.seed_select, "seed selection: heuristic or random")
      ->check(CLI::IsMember({"heuristic", "random"}));
  cmd->add_option("--seed", opts.seed, "rng seed");
}

ProbabilityModel to_probability_model(const ClusterCliOptions& opts) {
  ProbabilityModel model;
  if (opts.prob == "exact") {
    model.mode = ProbabilityModel::Mode::exact;
  } else if (opts.prob == "ie") {
    model.mode = ProbabilityModel::Mode::ie;
  } else {
    model.mode = ProbabilityModel::Mode::mc;
  }
  model.ie_depth = opts.ie_depth;
  model.mc_samples = opts.mc_samples;
  return model;
}

nlohmann::json report_to_json(const SolveReport& report) {
  nlohmann::json j;
  j["value"] = report.objective_value;
  j["bound_kind"] = to_string(report.bound_kind);
  j["allocation"] = {{"n", report.allocation.n}, {"m", report.allocation.m}};
  j["integral"] = report.allocation_integral;
  if (!report.allocation_integral) {
    j["raw_allocation"] = {{"n", report.raw_n}, {"m", report.raw_m}};
  }
  j["per_scenario_q"] = report.per_scenario_q;
  j["stats"] = {{"lp_iterations", report.stats.lp_iterations},
                {"lp_rows", report.stats.lp_rows},
                {"lp_cols", report.stats.lp_cols},
                {"millis", report.stats.millis}};
  return j;
}

void print_allocation(const Allocation& alloc) {
  std::cout << "n:";
  for (int v : alloc.n) std::cout << " " << v;
  std::cout << "\nm:";
  for (int v : alloc.m) std::cout << " " << v;
  std::cout << "\n";
}

int run_generate(const std::string& out, int q, int k, double density, std::uint64_t seed) {
  const ProblemInstance instance = generate_instance(q, k, density, seed);
  write_output(out.empty() ? std::nullopt : std::optional<std::string>(out),
               serialize_instance(instance) + "\n");
  return 0;
}

int run_solve(const std::string& instance_path, const std::string& method,
              const ClusterCliOptions& cluster, const std::optional<std::string>& out_path) {
  const ProblemInstance instance = parse_instance(read_file(instance_path));
  nlohmann::json out_json;
  out_json["method"] = method;

  if (method == "exact") {
    const SolveReport report = solve_exact(instance);
    std::cout << "method: exact\nvalue: " << format9(report.objective_value)
              << "\nbound: exact\n";
    print_allocation(report.allocation);
    std::cout << "integral: " << (report.allocation_integral ? "true" : "false") << "\n";
    out_json.update(report_to_json(report));
  } else if (method == "pairwise" || method == "diversified") {
    const Allocation alloc =
        method == "pairwise" ? greedy_pairwise(instance) : greedy_diversified(instance);
    const double value = evaluate_exact(instance, alloc);
    std::cout << "method: " << method << "\nvalue: " << format9(value) << "\nbound: exact\n";
    print_allocation(alloc);
    out_json["value"] = value;
    out_json["bound_kind"] = "exact";
    out_json["allocation"] = {{"n", alloc.n}, {"m", alloc.m}};
  } else if (method == "cluster-lower" || method == "cluster-upper") {
    const bool upper = method == "cluster-upper";
    RefineOptions options;
    options.max_clusters = cluster.max_clusters;
    options.prob = to_probability_model(cluster);
    options.seed_select =
        cluster.seed_select == "heuristic" ? SeedSelect::heuristic : SeedSelect::random;
    options.reorder = cluster.reorder == "on";
    options.rng_seed = cluster.seed;
    options.compute_upper = upper;
    const RefinementTrace trace = refine(instance, options);
    const RefinementStep& last = trace.steps.back();

    SolveReport report;
    if (upper) {
      const SeedOrder w = SeedOrder::from(last.seeds);
      const ClusterDistribution dist = cluster_probs(instance, w, options.prob, Bound::upper,
                                                     derive_seed(cluster.seed, 0xFFFFull));
      report = solve_clustered(instance, w, dist, Bound::upper);
    } else {
      const SeedOrder w = SeedOrder::from(last.seeds);
      const ClusterDistribution dist = cluster_probs(instance, w, options.prob, Bound::lower,
                                                     derive_seed(cluster.seed, 0xFFFFull));
      report = solve_clustered(instance, w, dist, Bound::lower);
    }
    std::cout << "method: " << method << "\nvalue: " << format9(report.objective_value)
              << "\nbound: " << to_string(report.bound_kind) << "\nclusters: " << last.cluster_count
              << "\n";
    print_allocation(report.allocation);
    std::cout << "integral: " << (report.allocation_integral ? "true" : "false") << "\n";
    out_json.update(report_to_json(report));
    nlohmann::json trace_json = nlohmann::json::array();
    for (const auto& step : trace.steps) {
      nlohmann::json s;
      s["clusters"] = step.cluster_count;
      s["lower_value"] = step.lower_value;
      if (step.upper_value) s["upper_value"] = *step.upper_value;
      s["millis"] = step.millis;
      trace_json.push_back(std::move(s));
    }
    out_json["trace"] = std::move(trace_json);
  } else {
    throw ValidationError("unknown method '" + method + "'");
  }

  if (out_path) write_output(out_path, out_json.dump(2) + "\n");
  return 0;
}

int run_evaluate(const std::string& instance_path, const std::string& allocation_path,
                 const std::string& method, const ClusterCliOptions& cluster,
                 const std::optional<std::string>& out_path) {
  const ProblemInstance instance = parse_instance(read_file(instance_path));
  const Allocation alloc = parse_allocation(read_file(allocation_path), instance);
  nlohmann::json out_json;
  out_json["method"] = method;
  double value = 0.0;

  if (method == "exact") {
    value = evaluate_exact(instance, alloc);
    out_json["bound_kind"] = "exact";
  } else if (method == "cluster-lower" || method == "cluster-upper") {
    const Bound bound = method == "cluster-upper" ? Bound::upper : Bound::lower;
    const ProbabilityModel model = to_probability_model(cluster);
    const bool reorder = cluster.reorder == "on";
    SeedOrder w = SeedOrder::base(instance.q());
    std::uint64_t stream = 0;
    while (w.size() < cluster.max_clusters) {
      const ClusterDistribution dist = cluster_probs(instance, w, model, Bound::lower,
                                                     derive_seed(cluster.seed, stream++));
      SeedSelection selection;
      try {
        selection = cluster.seed_select == "heuristic"
                        ? select_seed(instance, w, dist, derive_seed(cluster.seed, stream++))
                        : select_seed_uniform(instance, w, derive_seed(cluster.seed, stream++));
      } catch (const NoSplittableClusterError&) {
        break;
      }
      w = w.inserted(selection.seed, selection.position);
      if (reorder) w = reorder_seeds_for_allocation(instance, w, alloc);
    }
    const ClusterDistribution dist =
        cluster_probs(instance, w, model, bound, derive_seed(cluster.seed, stream++));
    value = evaluate_clustered(instance, alloc, w, dist);
    out_json["bound_kind"] = to_string(bound);
    out_json["clusters"] = w.size();
    std::cout << "clusters: " << w.size() << "\n";
  } else {
    throw ValidationError("unknown method '" + method + "'");
  }

  std::cout << "method: " << method << "\nvalue: " << format9(value) << "\n";
  out_json["value"] = value;
  if (out_path) write_output(out_path, out_json.dump(2) + "\n");
  return 0;
}

int run_experiment_cmd(const std::string& config_path, std::optional<std::string> out_path) {
  const ExperimentConfig config = parse_experiment_config(read_file(config_path));
  if (!out_path && config.output) out_path = config.output;
  const ExperimentReport report = run_experiment(config);
  write_output(out_path, to_csv(report));
  if (out_path) {
    std::cout << "rows: " << report.rows.size() << "\nfailures: " << report.failures.size()
              << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stochastic contract-matching solver"};
  app.require_subcommand(1);

  // generate
  auto* generate = app.add_subcommand("generate", "write a random instance document");
  int gen_q = 6, gen_k = 4;
  double gen_density = 0.5;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  generate->add_option("--q", gen_q, "number of buy contract types")->required();
  generate->add_option("--k", gen_k, "number of sell contract types")->required();
  generate->add_option("--density", gen_density, "edge density in (0, 1]")->required();
  generate->add_option("--seed", gen_seed, "rng seed")->required();
  generate->add_option("--out", gen_out, "output file (stdout when omitted)");

  // solve
  auto* solve = app.add_subcommand("solve", "optimize a contract portfolio");
  std::string solve_instance, solve_method, solve_out;
  ClusterCliOptions solve_cluster;
  solve->add_option("--instance", solve_instance, "instance document")->required();
  solve->add_option("--method", solve_method, "exact, pairwise, diversified, cluster-lower or cluster-upper")
      ->required()
      ->check(CLI::IsMember({"exact", "pairwise", "diversified", "cluster-lower", "cluster-upper"}));
  add_cluster_options(solve, solve_cluster);
  solve->add_option("--out", solve_out, "write a JSON report here");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "expected value of a fixed allocation");
  std::string eval_instance, eval_allocation, eval_method = "exact", eval_out;
  ClusterCliOptions eval_cluster;
  evaluate->add_option("--instance", eval_instance, "instance document")->required();
  evaluate->add_option("--allocation", eval_allocation, "allocation document")->required();
  evaluate->add_option("--method", eval_method, "exact, cluster-lower or cluster-upper")
      ->check(CLI::IsMember({"exact", "cluster-lower", "cluster-upper"}));
  add_cluster_options(evaluate, eval_cluster);
  evaluate->add_option("--out", eval_out, "write a JSON report here");

  // experiment
  auto* experiment = app.add_subcommand("experiment", "run a configured comparison");
  std::string exp_config, exp_out;
  experiment->add_option("--config", exp_config, "experiment config (JSON)")->required();
  experiment->add_option("--out", exp_out, "output CSV file (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (generate->parsed()) {
      return run_generate(gen_out, gen_q, gen_k, gen_density, gen_seed);
    }
    if (solve->parsed()) {
      return run_solve(solve_instance, solve_method, solve_cluster,
                       solve_out.empty() ? std::nullopt : std::optional<std::string>(solve_out));
    }
    if (evaluate->parsed()) {
      return run_evaluate(eval_instance, eval_allocation, eval_method, eval_cluster,
                          eval_out.empty() ? std::nullopt : std::optional<std::string>(eval_out));
    }
    if (experiment->parsed()) {
      return run_experiment_cmd(exp_config,
                                exp_out.empty() ? std::nullopt : std::optional<std::string>(exp_out));
    }
  } catch (const EnumerationLimitError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const SolverError& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}

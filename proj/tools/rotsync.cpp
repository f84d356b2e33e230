#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "cli_settings.hpp"
#include "rotsync/rotsync.hpp"

namespace {

using namespace rotsync;
using rotsync::cli::Log;
using rotsync::cli::Settings;
using rotsync::cli::Source;

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kNotConverged = 2;

/// Options shared by every subcommand. Each given flag becomes a
/// flag-ranked assignment, applied after the config file.
struct Common {
  std::string config;
  std::string out;
  std::vector<std::pair<std::string, std::string>> flags;
  std::vector<std::string> sets;

  void attach(CLI::App* sub) {
    sub->add_option("--config", config, "Flat key = value settings file")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", out, "Output path");
    sub->add_option("--set", sets, "Override any setting as key=value (repeatable)");
    mapped(sub, "--seed", "seed", "Root random seed");
    mapped(sub, "--threads", "threads", "Worker cap (0 = hardware concurrency)");
    mapped(sub, "--cost", "cost", "exp, l1, l2, lhalf or huber");
    mapped(sub, "--tau0", "tau0", "Initial tau of the exponential cost");
    mapped(sub, "--alpha", "alpha", "Convergence threshold on the residual");
    mapped(sub, "--epsilon", "epsilon", "Target cycle residual (radians)");
    mapped(sub, "--init", "init_mode", "identity or tree");
    sub->add_flag_callback("--no-denoise", [this] { flags.emplace_back("denoise", "false"); },
                           "Skip cycle-consistency reweighting");
  }

  void mapped(CLI::App* sub, const std::string& flag, const std::string& key,
              const std::string& help) {
    sub->add_option_function<std::string>(
        flag, [this, key](const std::string& v) { flags.emplace_back(key, v); }, help);
  }

  Settings resolve(const Log& log, const std::string& command) const {
    Settings s;
    if (!config.empty()) s.load_file(config);
    for (const auto& kv : sets) s.assign(kv, Source::flag);
    for (const auto& [k, v] : flags) s.set(k, v, Source::flag);
    log.info(command + " settings:");
    s.echo(log);
    return s;
  }
};

void write_json(const std::string& path, const nlohmann::json& doc) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << doc.dump(2) << '\n';
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string truth_path_for(const std::string& graph_path) {
  std::filesystem::path p(graph_path);
  p.replace_extension();
  return p.string() + ".truth.json";
}

/// Largest component of the input, with the drop reported.
ComponentResult load_component(const std::string& path, const Log& log) {
  G2oData data = read_graph_file(path);
  for (const auto& w : data.warnings) log.warn(w);
  ComponentResult comp = largest_component(data.graph);
  if (comp.dropped_nodes > 0)
    log.warn("graph is disconnected; keeping the largest component and dropping " +
             std::to_string(comp.dropped_nodes) + " node(s)");
  return comp;
}

int cmd_solve(const std::string& input, const std::string& vertices, const Common& common,
              const Log& log) {
  const Settings s = common.resolve(log, "solve");
  const MethodSpec method = cli::method_of(s);
  ComponentResult comp = load_component(input, log);
  log.info("pipeline " + method.name + " on " + std::to_string(comp.graph.node_count()) +
           " nodes, " + std::to_string(comp.graph.edge_count()) + " edges");

  ViewGraph graph = std::move(comp.graph);
  nlohmann::json denoise_json;
  if (method.denoise) {
    DenoiseResult dr = denoise(graph, method.denoiser);
    denoise_json = to_json(dr.report);
    log.info("denoise: " + std::to_string(dr.report.cycles) + " cycles, " +
             std::to_string(dr.report.samples) + " sampled triangles");
    graph = std::move(dr.graph);
  }
  const SolveReport rep = solve(graph, method.solver, method.cost);
  for (const auto& w : rep.warnings) log.warn(w);

  if (!common.out.empty()) {
    nlohmann::json doc = to_json(rep);
    doc["node_ids"] = comp.new_to_old;
    doc["dropped_nodes"] = comp.dropped_nodes;
    doc["method"] = method.name;
    doc["settings"] = s.to_json();
    if (method.denoise) doc["denoise"] = denoise_json;
    write_json(common.out, doc);
  }
  if (!vertices.empty()) {
    std::ofstream out(vertices);
    if (!out) throw Error("cannot write " + vertices);
    std::map<NodeId, Rotation> by_id;
    for (NodeId u = 0; u < rep.rotations.size(); ++u) by_id[comp.new_to_old[u]] = rep.rotations[u];
    for (const auto& [id, r] : by_id)
      out << "VERTEX_SO3:QUAT " << id << ' ' << format_double(r.x()) << ' '
          << format_double(r.y()) << ' ' << format_double(r.z()) << ' '
          << format_double(r.w()) << '\n';
  }

  const char* status = rep.converged ? "converged" : rep.stationary ? "stationary" : "not converged";
  std::cout << status << " after " << rep.iterations << " iterations, residual "
            << fmt(rep.residual_trace.empty() ? 0.0 : rep.residual_trace.back()) << ", "
            << rep.cyclic_edges << "/" << rep.edge_count << " cyclic edges, "
            << fmt(rep.wall_time) << " s\n";
  return rep.converged ? kOk : kNotConverged;
}

int cmd_denoise(const std::string& input, const std::string& report_path, const Common& common,
                const Log& log) {
  const Settings s = common.resolve(log, "denoise");
  const DenoiseConfig cfg = cli::denoise_config_of(s);
  const ComponentResult comp = load_component(input, log);
  const DenoiseResult dr = denoise(comp.graph, cfg);
  if (!common.out.empty()) {
    if (!has_json_extension(common.out))
      log.warn("g2o output carries no edge weights; use a .json path to keep them");
    write_graph_file(common.out, dr.graph);
  }
  if (!report_path.empty()) {
    nlohmann::json doc = to_json(dr.report);
    doc["weights"] = dr.weights;
    doc["node_ids"] = comp.new_to_old;
    write_json(report_path, doc);
  }
  std::cout << dr.report.cycles << " cycles, " << dr.report.samples
            << " sampled triangles, worst triangle residual " << fmt(dr.report.pre_residual_max)
            << " -> " << fmt(dr.report.post_residual_max) << " rad\n";
  return kOk;
}

int cmd_synth(const std::string& truth_out, const Common& common, const Log& log) {
  if (common.out.empty()) throw ConfigError("synth: --out is required");
  const Settings s = common.resolve(log, "synth");
  const SyntheticInstance inst = generate(cli::synthetic_spec_of(s));
  write_graph_file(common.out, inst.graph);
  const std::string truth = truth_out.empty() ? truth_path_for(common.out) : truth_out;
  write_json(truth, {{"rotations", rotations_to_json(inst.truth)}});
  std::size_t corrupted = 0;
  for (bool b : inst.outlier) corrupted += b;
  std::cout << inst.graph.node_count() << " nodes, " << inst.graph.edge_count() << " edges, "
            << corrupted << " corrupted; truth in " << truth << '\n';
  return kOk;
}

/// Rotations of `path` plus, for solve reports, the original node ids.
std::pair<std::vector<Rotation>, std::optional<std::vector<NodeId>>> read_estimate(
    const std::string& path) {
  auto rotations = read_rotations_file(path);
  std::optional<std::vector<NodeId>> ids;
  if (has_json_extension(path)) {
    std::ifstream in(path);
    const auto doc = parse_json_stream(in, path);
    if (doc.contains("node_ids")) ids = doc.at("node_ids").get<std::vector<NodeId>>();
  }
  return {std::move(rotations), std::move(ids)};
}

int cmd_eval(const std::string& estimate_path, const std::string& truth_path,
             const Common& common, const Log& log) {
  common.resolve(log, "eval");
  auto [estimate, ids] = read_estimate(estimate_path);
  const auto all_truth = read_rotations_file(truth_path);
  std::vector<Rotation> truth;
  if (ids && ids->size() != all_truth.size()) {
    if (ids->size() != estimate.size())
      throw ParseError(estimate_path, "node_ids and rotations differ in length");
    for (NodeId id : *ids) {
      if (id >= all_truth.size())
        throw ParseError(estimate_path, "node id " + std::to_string(id) + " has no truth");
      truth.push_back(all_truth[id]);
    }
    log.info("evaluating " + std::to_string(ids->size()) + " of " +
             std::to_string(all_truth.size()) + " nodes");
  } else {
    truth = all_truth;
  }
  if (truth.size() != estimate.size())
    throw ConfigError("estimate has " + std::to_string(estimate.size()) + " rotations, truth " +
                      std::to_string(truth.size()));
  const EvalResult ev = align(estimate, truth);
  if (!common.out.empty()) write_json(common.out, to_json(ev));
  std::cout << "mean_deg " << fmt(ev.mean_deg) << "\nmedian_deg " << fmt(ev.median_deg) << '\n';
  return kOk;
}

int cmd_bench(const Common& common, const Log& log) {
  const Settings s = common.resolve(log, "bench");
  const SyntheticSpec base = cli::synthetic_spec_of(s);
  const auto levels = cli::levels_of(s);
  const auto methods = cli::methods_of(s);
  const auto repeats = s.count("repeats");
  const auto rows = run_ablation(levels, base, methods, repeats, cli::threads_of(s));
  for (const auto& r : rows)
    for (const auto& e : r.errors)
      log.warn(r.method + " at level " + fmt(r.level) + " failed: " + e);
  if (common.out.empty()) {
    write_ablation_csv(std::cout, rows);
  } else {
    std::ofstream out(common.out);
    if (!out) throw Error("cannot write " + common.out);
    write_ablation_csv(out, rows);
    std::cout << rows.size() << " rows written to " << common.out << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust rotation averaging over view graphs"};
  app.require_subcommand(1);
  const Log log;

  Common solve_opts, denoise_opts, synth_opts, eval_opts, bench_opts;
  std::string solve_input, solve_vertices, denoise_input, denoise_report, truth_out;
  std::string eval_estimate, eval_truth;

  auto* solve = app.add_subcommand("solve", "Denoise and solve a view graph (g2o or JSON)");
  solve->add_option("input", solve_input, "Graph file")->required()->check(CLI::ExistingFile);
  solve->add_option("--vertices", solve_vertices, "Also write the rotations as g2o vertices");
  solve_opts.attach(solve);

  auto* den = app.add_subcommand("denoise", "Reweight edges by cycle consistency");
  den->add_option("input", denoise_input, "Graph file")->required()->check(CLI::ExistingFile);
  den->add_option("--report", denoise_report, "Write weights and statistics as JSON");
  denoise_opts.attach(den);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic graph and its ground truth");
  synth->add_option("--truth", truth_out, "Ground-truth path (default <out>.truth.json)");
  synth_opts.attach(synth);
  synth_opts.mapped(synth, "--n", "n", "Node count");
  synth_opts.mapped(synth, "--density", "edge_density", "Edge probability per pair");
  synth_opts.mapped(synth, "--fraction", "outlier_fraction", "Fraction of corrupted edges");

  auto* eval = app.add_subcommand("eval", "Align an estimate to ground truth and report errors");
  eval->add_option("estimate", eval_estimate, "Rotations (solve report JSON or g2o vertices)")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("truth", eval_truth, "Ground-truth rotations")
      ->required()
      ->check(CLI::ExistingFile);
  eval_opts.attach(eval);

  auto* bench = app.add_subcommand("bench", "Run the corruption-level ablation and write CSV");
  bench_opts.attach(bench);
  bench_opts.mapped(bench, "--n", "n", "Node count");
  bench_opts.mapped(bench, "--density", "edge_density", "Edge probability per pair");
  bench_opts.mapped(bench, "--levels", "levels", "Comma-separated corruption fractions");
  bench_opts.mapped(bench, "--methods", "methods", "Comma-separated <denoise|none>+<cost>");
  bench_opts.mapped(bench, "--repeats", "repeats", "Instances per level");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInputError;
  }

  try {
    if (*solve) return cmd_solve(solve_input, solve_vertices, solve_opts, log);
    if (*den) return cmd_denoise(denoise_input, denoise_report, denoise_opts, log);
    if (*synth) return cmd_synth(truth_out, synth_opts, log);
    if (*eval) return cmd_eval(eval_estimate, eval_truth, eval_opts, log);
    if (*bench) return cmd_bench(bench_opts, log);
  } catch (const std::exception& e) {
    log.error(e.what());
    return kInputError;
  }
  return kInputError;
}

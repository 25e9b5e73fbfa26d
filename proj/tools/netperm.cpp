#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "netperm/io.hpp"
#include "netperm/netperm.hpp"

namespace {

using nlohmann::json;

struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

// "a:b:step" inclusive arithmetic grid, or a single value
std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> parts;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t next = text.find(':', pos);
    const std::string piece = text.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(piece, &used));
      if (used != piece.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw usage_error("bad grid '" + text + "': cannot parse '" + piece + "'");
    }
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  if (parts.size() == 1) return {parts[0]};
  if (parts.size() != 3) throw usage_error("bad grid '" + text + "': expected value or lo:hi:step");
  const double lo = parts[0], hi = parts[1], step = parts[2];
  if (!(step > 0) || hi < lo) throw usage_error("bad grid '" + text + "': need lo <= hi and step > 0");
  std::vector<double> values;
  for (int i = 0;; ++i) {
    const double v = lo + i * step;
    if (v > hi + step * 1e-9) break;
    values.push_back(v);
  }
  return values;
}

netperm::InterferenceMatrix load_network(const std::string& path, std::size_t n, bool symmetric) {
  const auto edges = netperm::read_edge_list(path);
  return netperm::build_from_edges(edges, n, symmetric);
}

void write_json_file(const std::string& path, const json& j) {
  netperm::write_text(path, j.dump(2) + "\n");
}

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

struct TestArgs {
  std::string data_path, edges_path, out_path, manifest_path;
  std::string model = "add-G", stat = "logr", method = "ipz";
  double delta0 = 0.0, tau0 = 0.0;
  std::uint64_t draws = 1000, seed = 1;
  bool exact = false, symmetric = false;
  int threads = 0;
};

int cmd_test(const TestArgs& a, const std::string& command_line) {
  Timer timer;
  const netperm::ObservedData data = netperm::read_data_csv(a.data_path);
  data.validate();
  const netperm::InterferenceMatrix net = load_network(a.edges_path, data.n(), a.symmetric);
  const netperm::CausalModelSpec model = netperm::parse_model(a.model);
  const netperm::StatKind stat = netperm::parse_stat(a.stat);
  const netperm::Method method = netperm::parse_method(a.method);
  const netperm::Theta theta0{a.delta0, a.tau0};

  const netperm::TestResult result = netperm::run_test(method, data, net, model, theta0, stat, a.draws,
                                                       a.seed, a.exact, a.threads);
  json out = netperm::test_result_json(result);
  out["model"] = netperm::model_string(model);
  out["delta0"] = a.delta0;
  out["tau0"] = a.tau0;
  write_json_file(a.out_path, out);

  netperm::RunManifest manifest;
  manifest.command_line = command_line;
  manifest.config_digest = netperm::digest_hex(out.dump());
  manifest.master_seed = a.seed;
  manifest.wall_seconds = timer.seconds();
  if (result.failed_draws > 0)
    manifest.warnings.push_back(std::to_string(result.failed_draws) + " draws failed and were counted as extreme");
  if (result.nonconverged_fits * 100 > result.draws_used)
    manifest.warnings.push_back("aft fits failed to converge on more than 1% of draws (" +
                                std::to_string(result.nonconverged_fits) + ")");
  if (result.observed_zero_variance)
    manifest.warnings.push_back("observed log-rank statistic had zero variance");
  write_json_file(a.manifest_path.empty() ? a.out_path + ".manifest.json" : a.manifest_path,
                  netperm::manifest_json(manifest));
  std::cout << "pvalue " << netperm::format_g17(result.pvalue) << "\n";
  return 0;
}

struct InvertArgs {
  std::string data_path, edges_path, out_path, summary_path, manifest_path;
  std::string model = "add-G", stat = "logr";
  std::string delta_grid = "0:1.4:0.1", tau_grid = "0:5:0.25";
  double alpha = 0.05;
  std::uint64_t draws = 1000, seed = 1;
  bool symmetric = false;
  int threads = 0;
};

int cmd_invert(const InvertArgs& a, const std::string& command_line) {
  Timer timer;
  const netperm::ObservedData data = netperm::read_data_csv(a.data_path);
  data.validate();
  const netperm::InterferenceMatrix net = load_network(a.edges_path, data.n(), a.symmetric);
  const netperm::CausalModelSpec model = netperm::parse_model(a.model);
  const netperm::StatKind stat = netperm::parse_stat(a.stat);
  const std::vector<double> deltas = parse_grid(a.delta_grid);
  const std::vector<double> taus = parse_grid(a.tau_grid);

  const netperm::PvalueGrid grid =
      netperm::invert(data, net, model, stat, deltas, taus, a.draws, a.alpha, a.seed, a.threads);
  netperm::write_grid_csv(a.out_path, grid);

  const netperm::PointEstimate est = netperm::point_estimate(grid);
  const netperm::MarginalSet mdelta = netperm::marginal_interval(grid, netperm::Axis::Delta, a.alpha);
  const netperm::MarginalSet mtau = netperm::marginal_interval(grid, netperm::Axis::Tau, a.alpha);

  json summary;
  summary["alpha"] = a.alpha;
  summary["stat"] = netperm::stat_string(stat);
  summary["model"] = netperm::model_string(model);
  summary["draws"] = a.draws;
  summary["seed"] = a.seed;
  summary["confidence_set_empty"] = grid.set_empty();
  summary["failed_points"] = grid.failed_points();
  if (est.valid) {
    summary["point_estimate"] = {{"delta", est.theta.delta}, {"tau", est.theta.tau}};
    summary["max_pvalue"] = est.max_pvalue;
    summary["point_estimate_tied"] = est.tied;
    if (model.kind == netperm::ModelKind::Add) {
      const netperm::AddInterpretation interp = netperm::interpret_add(est.theta);
      summary["interpretation"] = {{"individual_ratio", interp.individual_ratio},
                                   {"spillover_ratio", interp.spillover_ratio},
                                   {"blanket_ratio", interp.blanket_ratio}};
    }
  }
  auto marginal_json = [](const netperm::MarginalSet& m) {
    json j;
    j["empty"] = m.empty;
    j["values"] = m.values;
    if (!m.empty) j["hull"] = {m.lo, m.hi};
    return j;
  };
  summary["marginal_delta"] = marginal_json(mdelta);
  summary["marginal_tau"] = marginal_json(mtau);
  write_json_file(a.summary_path, summary);

  netperm::RunManifest manifest;
  manifest.command_line = command_line;
  manifest.config_digest = netperm::digest_hex(summary.dump());
  manifest.master_seed = a.seed;
  manifest.wall_seconds = timer.seconds();
  if (grid.set_empty())
    manifest.warnings.push_back("empty confidence set: the assumed causal model provides a poor fit");
  if (grid.failed_points() > 0)
    manifest.warnings.push_back(std::to_string(grid.failed_points()) + " grid points failed");
  write_json_file(a.manifest_path.empty() ? a.summary_path + ".manifest.json" : a.manifest_path,
                  netperm::manifest_json(manifest));
  return 0;
}

netperm::SimConfig parse_sim_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw netperm::data_error("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw netperm::data_error(std::string("config parse failure: ") + e.what());
  }
  static const std::vector<std::string> known = {
      "n",          "m",       "network",    "symmetrize", "network_per_replicate",
      "mu",         "sigma",   "omega",      "delta_true", "tau_true",
      "k",          "correlated", "replicates", "draws",   "stats",
      "model",      "theta0_points", "theta0_grid", "alpha", "seed"};
  std::vector<std::string> unknown;
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) unknown.push_back(it.key());
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const auto& k : unknown) msg += " " + k;
    throw netperm::data_error(msg);
  }

  netperm::SimConfig cfg;
  if (j.contains("n")) cfg.n = j["n"].get<std::size_t>();
  if (j.contains("m")) cfg.m = j["m"].get<std::size_t>();
  if (j.contains("network")) {
    const json& net = j["network"];
    const std::string kind = net.value("kind", "poisson");
    if (kind == "poisson") {
      cfg.net_kind = netperm::NetKind::Poisson;
      cfg.net_mean = net.value("mean", cfg.net_mean);
    } else if (kind == "pa") {
      cfg.net_kind = netperm::NetKind::Pa;
      cfg.net_edges = net.value("m_edges", cfg.net_edges);
    } else if (kind == "file") {
      cfg.net_kind = netperm::NetKind::File;
      if (!net.contains("path")) throw netperm::data_error("network kind 'file' requires a path");
    } else {
      throw netperm::data_error("unknown network kind '" + kind + "'");
    }
  }
  if (j.contains("symmetrize")) cfg.net_symmetrize = j["symmetrize"].get<bool>();
  if (j.contains("network_per_replicate")) cfg.network_per_replicate = j["network_per_replicate"].get<bool>();
  if (j.contains("mu")) cfg.mu = j["mu"].get<double>();
  if (j.contains("sigma")) cfg.sigma = j["sigma"].get<double>();
  if (j.contains("omega")) cfg.omega = j["omega"].get<double>();
  if (j.contains("delta_true")) cfg.delta_true = j["delta_true"].get<double>();
  if (j.contains("tau_true")) cfg.tau_true = j["tau_true"].get<double>();
  if (j.contains("k")) cfg.k = j["k"].get<double>();
  if (j.contains("correlated")) cfg.correlated = j["correlated"].get<bool>();
  if (j.contains("replicates")) cfg.replicates = j["replicates"].get<std::uint64_t>();
  if (j.contains("draws")) cfg.draws = j["draws"].get<std::uint64_t>();
  if (j.contains("stats")) {
    cfg.stats.clear();
    for (const auto& s : j["stats"]) cfg.stats.push_back(netperm::parse_stat(s.get<std::string>()));
  }
  if (j.contains("model")) cfg.model = netperm::parse_model(j["model"].get<std::string>());
  if (j.contains("theta0_points")) {
    for (const auto& p : j["theta0_points"]) {
      if (!p.is_array() || p.size() != 2)
        throw netperm::data_error("theta0_points entries must be [delta0, tau0] pairs");
      cfg.theta0_points.push_back({p[0].get<double>(), p[1].get<double>()});
    }
  }
  if (j.contains("theta0_grid")) {
    const json& g = j["theta0_grid"];
    if (!g.contains("delta") || !g.contains("tau"))
      throw netperm::data_error("theta0_grid requires delta and tau arrays");
    for (const auto& d : g["delta"])
      for (const auto& t : g["tau"]) cfg.theta0_points.push_back({d.get<double>(), t.get<double>()});
  }
  if (j.contains("alpha")) cfg.alpha = j["alpha"].get<double>();
  if (j.contains("seed")) cfg.master_seed = j["seed"].get<std::uint64_t>();
  return cfg;
}

struct SimulateArgs {
  std::string study = "type1";
  std::string config_path;
  std::string out_prefix = "study";
  std::string edges_path;  // required for network kind "file"
  bool full_scale = false;
  bool symmetric = false;
  int threads = 0;
};

int cmd_simulate(const SimulateArgs& a, const std::string& command_line) {
  Timer timer;
  netperm::SimConfig cfg = parse_sim_config(a.config_path);
  if (a.full_scale) {
    if (a.study == "type1") {
      cfg.replicates = 2000;
      cfg.draws = 10000;
    } else {
      cfg.draws = 2500;
    }
  }

  netperm::InterferenceMatrix file_net;
  const netperm::InterferenceMatrix* net = nullptr;
  if (cfg.net_kind == netperm::NetKind::File) {
    if (a.edges_path.empty()) throw usage_error("network kind 'file' requires --edges");
    file_net = load_network(a.edges_path, cfg.n, a.symmetric);
    net = &file_net;
  }

  netperm::StudyResult res;
  if (a.study == "type1") res = netperm::run_type1(cfg, net, a.threads);
  else if (a.study == "power") res = netperm::run_power(cfg, net, a.threads);
  else if (a.study == "coverage") res = netperm::run_coverage(cfg, net, a.threads);
  else throw usage_error("unknown study '" + a.study + "' (expected type1, power, or coverage)");

  netperm::write_study_csv(a.out_prefix + "_pvalues.csv", res);
  netperm::write_ecdf_csv(a.out_prefix + "_ecdf.csv", res);
  if (a.study == "coverage")
    netperm::write_rate_csv(a.out_prefix + "_rates.csv", netperm::inclusion_table(res, cfg.alpha), "inclusion");
  else
    netperm::write_rate_csv(a.out_prefix + "_rates.csv", netperm::rejection_table(res, cfg.alpha), "rejection");

  netperm::RunManifest manifest;
  manifest.command_line = command_line;
  manifest.master_seed = cfg.master_seed;
  manifest.wall_seconds = timer.seconds();
  json detail;
  detail["study"] = a.study;
  detail["replicates"] = cfg.replicates;
  detail["draws"] = cfg.draws;
  detail["replicate_failures"] = res.replicate_failures;
  detail["row_failures"] = res.row_failures;
  detail["nonconverged_fits"] = res.total_nonconverged;
  detail["failed_draws"] = res.total_draw_failures;
  detail["p1"] = netperm::summary_stats_json(res.p1);
  detail["p0"] = netperm::summary_stats_json(res.p0);
  if (res.ridge_added > 0) detail["correlation_ridge"] = res.ridge_added;
  manifest.config_digest = netperm::digest_hex(detail.dump() + std::to_string(cfg.master_seed));
  manifest.extra = detail;
  if (res.replicate_failures)
    manifest.warnings.push_back(std::to_string(res.replicate_failures) + " replicates failed to generate");
  if (res.row_failures)
    manifest.warnings.push_back(std::to_string(res.row_failures) + " tests failed");
  const std::uint64_t total_rows = cfg.replicates * res.tasks.size();
  if (res.total_nonconverged * 100 > total_rows * cfg.draws)
    manifest.warnings.push_back("aft fits failed to converge on more than 1% of draws overall");
  if (res.ridge_added > 0)
    manifest.warnings.push_back("correlation matrix needed a diagonal ridge of " +
                                netperm::format_g17(res.ridge_added));
  write_json_file(a.out_prefix + "_manifest.json", netperm::manifest_json(manifest));
  return 0;
}

struct GenNetworkArgs {
  std::string kind = "poisson";
  std::size_t n = 128;
  double mean = 16.0;
  std::size_t m_edges = 8;
  bool symmetrize = false;
  std::uint64_t seed = 1;
  std::string out_path;
  std::string summary_path;
};

int cmd_gen_network(const GenNetworkArgs& a) {
  netperm::Rng rng(a.seed);
  netperm::InterferenceMatrix net;
  if (a.kind == "poisson") net = netperm::gen_poisson_neighbors(a.n, a.mean, rng);
  else if (a.kind == "pa") net = netperm::gen_preferential_attachment(a.n, a.m_edges, rng);
  else throw usage_error("unknown network kind '" + a.kind + "' (expected poisson or pa)");
  if (a.symmetrize) net = netperm::symmetrized(net);
  net.validate();
  netperm::write_edge_list(a.out_path, net);

  const netperm::DegreeSummary deg = netperm::degree_summary(net);
  json summary;
  summary["kind"] = a.kind;
  summary["n"] = a.n;
  summary["seed"] = a.seed;
  summary["degree"] = {{"min", deg.min}, {"mean", deg.mean}, {"q25", deg.q25},
                       {"q75", deg.q75}, {"max", deg.max}};
  write_json_file(a.summary_path.empty() ? a.out_path + ".summary.json" : a.summary_path, summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"randomization inference for censored outcomes under interference"};
  app.require_subcommand(1);
  const std::string command_line = join_args(argc, argv);

  TestArgs ta;
  CLI::App* test = app.add_subcommand("test", "run one permutation test");
  test->add_option("--data", ta.data_path, "data csv (id,y,d,z[,b])")->required();
  test->add_option("--edges", ta.edges_path, "edge list file")->required();
  test->add_flag("--symmetric", ta.symmetric, "treat edge list as undirected");
  test->add_option("--model", ta.model, "causal model (add-G, add-Gstar, add-T, bfp-T, bfp-G)");
  test->add_option("--delta0", ta.delta0, "null direct effect")->required();
  test->add_option("--tau0", ta.tau0, "null spillover effect")->required();
  test->add_option("--stat", ta.stat, "statistic (logr, lraft, ks)");
  test->add_option("--method", ta.method, "method (ipz, fixed-d)");
  test->add_option("--draws", ta.draws, "monte carlo draws")->check(CLI::PositiveNumber);
  test->add_flag("--exact", ta.exact, "enumerate the full assignment space");
  test->add_option("--seed", ta.seed, "rng seed");
  test->add_option("--threads", ta.threads, "worker threads (0 = auto)");
  test->add_option("--out", ta.out_path, "result json path")->required();
  test->add_option("--manifest", ta.manifest_path, "manifest json path");

  InvertArgs ia;
  CLI::App* invert = app.add_subcommand("invert", "confidence set by test inversion");
  invert->add_option("--data", ia.data_path, "data csv")->required();
  invert->add_option("--edges", ia.edges_path, "edge list file")->required();
  invert->add_flag("--symmetric", ia.symmetric, "treat edge list as undirected");
  invert->add_option("--model", ia.model, "causal model");
  invert->add_option("--stat", ia.stat, "statistic");
  invert->add_option("--delta-grid", ia.delta_grid, "delta0 grid lo:hi:step or a single value");
  invert->add_option("--tau-grid", ia.tau_grid, "tau0 grid lo:hi:step or a single value");
  invert->add_option("--alpha", ia.alpha, "significance level");
  invert->add_option("--draws", ia.draws, "draws per grid point")->check(CLI::PositiveNumber);
  invert->add_option("--seed", ia.seed, "master seed");
  invert->add_option("--threads", ia.threads, "worker threads (0 = auto)");
  invert->add_option("--out", ia.out_path, "grid csv path")->required();
  invert->add_option("--summary", ia.summary_path, "summary json path")->required();
  invert->add_option("--manifest", ia.manifest_path, "manifest json path");

  SimulateArgs sa;
  CLI::App* simulate = app.add_subcommand("simulate", "run a simulation study");
  simulate->add_option("--study", sa.study, "study kind (type1, power, coverage)");
  simulate->add_option("--config", sa.config_path, "study config json")->required();
  simulate->add_option("--edges", sa.edges_path, "edge list (for network kind 'file')");
  simulate->add_flag("--symmetric", sa.symmetric, "treat edge list as undirected");
  simulate->add_flag("--full-scale", sa.full_scale, "full replication budgets");
  simulate->add_option("--out-prefix", sa.out_prefix, "output file prefix");
  simulate->add_option("--threads", sa.threads, "worker threads (0 = auto)");

  GenNetworkArgs ga;
  CLI::App* gen = app.add_subcommand("gen-network", "generate an interference network");
  gen->add_option("--kind", ga.kind, "generator (poisson, pa)");
  gen->add_option("--n", ga.n, "individuals")->required();
  gen->add_option("--mean", ga.mean, "poisson mean interference-set size");
  gen->add_option("--m-edges", ga.m_edges, "edges per new node (pa)");
  gen->add_flag("--symmetrize", ga.symmetrize, "symmetrize the result");
  gen->add_option("--seed", ga.seed, "rng seed");
  gen->add_option("--out", ga.out_path, "edge list output path")->required();
  gen->add_option("--summary", ga.summary_path, "degree summary json path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*test) return cmd_test(ta, command_line);
    if (*invert) return cmd_invert(ia, command_line);
    if (*simulate) return cmd_simulate(sa, command_line);
    if (*gen) return cmd_gen_network(ga);
    return 1;
  } catch (const usage_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const netperm::data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const netperm::numeric_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

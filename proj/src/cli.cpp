#include "brwre/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "brwre/analytic.hpp"
#include "brwre/config.hpp"
#include "brwre/errors.hpp"
#include "brwre/estimators.hpp"
#include "brwre/io.hpp"
#include "brwre/normal.hpp"
#include "brwre/parallel.hpp"
#include "brwre/simulate.hpp"
#include "brwre/verify.hpp"

namespace brwre {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kSidecarSchemaVersion = 1;

struct RatesArgs {
  std::string config, out;
  double t_min = -3.0, t_max = 3.0, t_step = 0.01;
};

struct SimulateArgs {
  std::string config, out, positions = "final";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n, replicas;
  bool fresh_environment = false;
  unsigned threads = 0;
};

struct EstimateArgs {
  std::string input, out;
  unsigned threads = 0;
};

struct VerifyArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
};

struct ReportArgs {
  std::string input;
};

fs::path output_dir(const std::string& flag, const std::string& fallback) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("BRWRE_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return fallback;
}

std::uint64_t require_seed(const std::optional<std::uint64_t>& flag, const RunConfig& cfg) {
  if (flag) return *flag;
  if (cfg.seed) return *cfg.seed;
  throw ConfigError("a seed is required (config key or --seed)", "seed");
}

std::string csv_text(const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream os;
  for (const auto& row : rows) write_csv_row(os, row);
  return os.str();
}

ordered_json json_array(const std::vector<double>& values) {
  ordered_json a = ordered_json::array();
  for (double v : values) a.push_back(json_number(v));
  return a;
}

std::string replica_dir(std::size_t r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "replica_%04zu", r);
  return buf;
}

// ---------------------------------------------------------------------------

int cmd_rates(const RatesArgs& a, std::ostream& out) {
  const RunConfig cfg = load_config(a.config);
  if (!std::isfinite(a.t_min) || !std::isfinite(a.t_max) || !(a.t_step > 0.0) || a.t_max < a.t_min)
    throw UsageError("need finite --t-min <= --t-max and --t-step > 0");
  const auto steps = std::llround((a.t_max - a.t_min) / a.t_step);
  std::vector<double> grid;
  for (long long i = 0; i <= steps; ++i) grid.push_back(a.t_min + a.t_step * static_cast<double>(i));

  const RateFunctionTable table(cfg.model, grid);
  const auto tilde = table.tilde_lambda_values();

  std::vector<std::vector<std::string>> rows{{"t", "Lambda", "Lambda_prime", "rho", "tilde_Lambda"}};
  for (std::size_t i = 0; i < grid.size(); ++i)
    rows.push_back({format_double(grid[i]), format_double(table.lambda()[i]), format_double(table.lambda_prime()[i]),
                    format_double(table.rho()[i]), format_double(tilde[i])});

  ordered_json j;
  j["schema_version"] = kSidecarSchemaVersion;
  j["kind"] = "rates";
  j["config"] = cfg.name;
  j["rows"] = grid.size();
  j["t_min"] = a.t_min;
  j["t_max"] = a.t_max;
  j["t_step"] = a.t_step;
  j["columns"] = {"t", "Lambda", "Lambda_prime", "rho", "tilde_Lambda"};
  j["t_minus"] = json_number(table.t_minus());
  j["t_plus"] = json_number(table.t_plus());
  j["speed_left"] = json_number(table.speed_left());
  j["speed_right"] = json_number(table.speed_right());
  j["closed_form"] = table.closed_form();
  if (cfg.model.kind() == EnvironmentKind::markov) {
    j["annealed"] = nullptr;
  } else {
    const AnnealedParams ap(cfg.model);
    j["annealed"] = {{"mu_bar", json_number(ap.mu_bar())},
                     {"sigma2_bar", json_number(ap.sigma2_bar())},
                     {"mu_bar_prime", json_number(ap.mu_bar_prime())},
                     {"sigma2_bar_prime", json_number(ap.sigma2_bar_prime())}};
  }

  const fs::path dir = output_dir(a.out, cfg.output_dir);
  write_text_file(dir / "rates.csv", csv_text(rows));
  write_text_file(dir / "rates.json", j.dump(2) + "\n");
  out << "rates: " << grid.size() << " rows, t_- = " << format_double(table.t_minus())
      << ", t_+ = " << format_double(table.t_plus()) << ", speeds [" << format_double(table.speed_left()) << ", "
      << format_double(table.speed_right()) << "] -> " << (dir / "rates.csv").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load_config(a.config);
  const std::uint64_t seed = require_seed(a.seed, cfg);
  if (a.positions != "none" && a.positions != "final" && a.positions != "all")
    throw UsageError("--positions must be none, final or all");

  SimConfig sim;
  sim.horizon = a.n.value_or(cfg.simulation.horizon);
  sim.replicas = a.replicas.value_or(cfg.simulation.replicas);
  sim.particle_cap = cfg.simulation.particle_cap;
  sim.t_grid = cfg.simulation.t_grid;
  sim.seed = seed;
  sim.retention = a.positions == "all" ? PositionRetention::all : PositionRetention::final_only;
  if (sim.horizon < 1 || sim.replicas < 1) throw UsageError("--n and --replicas must be >= 1");
  sim.validate();
  const unsigned threads = a.threads > 0 ? a.threads : cfg.threads;
  const fs::path dir = output_dir(a.out, cfg.output_dir);

  std::vector<ordered_json> entries(sim.replicas);
  std::vector<std::optional<std::string>> overflow(sim.replicas);
  parallel_for(sim.replicas, threads, [&](std::size_t r) {
    const auto stream = a.fresh_environment ? static_cast<std::uint32_t>(r + 1) : kQuenchedEnvironmentStream;
    const EnvRealization env = sample_environment(cfg.model, sim.horizon, seed, stream);
    std::vector<GenerationSnapshot> snaps;
    try {
      snaps = run_tree(env, sim, static_cast<std::uint32_t>(r));
    } catch (const PopulationOverflow& e) {
      overflow[r] = e.what();
      return;
    }
    const std::string sub = replica_dir(r);
    std::ostringstream csv;
    write_snapshot_csv(csv, snaps, sim.t_grid);
    write_text_file(dir / sub / "snapshots.csv", csv.str());

    ordered_json e;
    e["replica"] = r;
    e["environment_stream"] = stream;
    ordered_json labels = ordered_json::array();
    for (std::size_t i = 0; i < env.size(); ++i) labels.push_back(env.state(i).label());
    e["environment"] = labels;
    e["snapshots"] = sub + "/snapshots.csv";
    if (a.positions != "none") {
      std::ostringstream bin(std::ios::binary);
      ordered_json gens = ordered_json::array();
      for (const auto& s : snaps) {
        if (!s.has_positions) continue;
        write_positions_binary(bin, s.positions);
        gens.push_back(s.n);
      }
      const fs::path file = dir / sub / "positions.bin";
      fs::create_directories(file.parent_path());
      std::ofstream f(file, std::ios::binary);
      if (!f) throw UsageError("cannot write " + file.string());
      f << bin.str();
      e["positions"] = sub + "/positions.bin";
      e["position_generations"] = gens;
    }
    e["final_count"] = snaps.back().count;
    entries[r] = std::move(e);
  });

  for (std::size_t r = 0; r < sim.replicas; ++r)
    if (overflow[r]) {
      err << "error: replica " << r << ": " << *overflow[r] << "\n";
      return kExitOverflow;
    }

  ordered_json j;
  j["schema_version"] = kSidecarSchemaVersion;
  j["kind"] = "simulate";
  j["config_name"] = cfg.name;
  j["seed"] = seed;
  j["horizon"] = sim.horizon;
  j["replicas"] = sim.replicas;
  j["environment"] = a.fresh_environment ? "fresh" : "shared";
  j["positions"] = a.positions;
  j["t_grid"] = json_array(sim.t_grid);
  j["streams"] = {{"tree", "(seed, tree, replica, generation, ordinal)"},
                  {"environment", a.fresh_environment ? "(seed, environment, replica + 1)" : "(seed, environment, 0)"}};
  j["replica_files"] = entries;
  j["config"] = serialize_config(cfg);
  write_text_file(dir / "simulate.json", j.dump(2) + "\n");
  out << "simulate: " << sim.replicas << " replica(s), n = " << sim.horizon << ", seed " << seed << " -> "
      << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_estimate(const EstimateArgs& a, std::ostream& out) {
  const fs::path in_dir = a.input;
  ordered_json side;
  try {
    side = ordered_json::parse(read_text_file(in_dir / "simulate.json"));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed simulate.json: ") + e.what());
  }
  if (side.value("kind", "") != "simulate") throw UsageError("input is not a simulate output directory");
  if (side.at("schema_version").get<int>() != kSidecarSchemaVersion) throw UsageError("unsupported sidecar schema");
  if (side.at("positions").get<std::string>() == "none")
    throw UsageError("simulation stored no positions; rerun simulate with --positions final");

  const RunConfig cfg = parse_config(side.at("config").get<std::string>());
  const auto seed = side.at("seed").get<std::uint64_t>();
  const auto n = side.at("horizon").get<std::size_t>();
  const auto replicas = side.at("replicas").get<std::size_t>();
  const bool fresh = side.at("environment").get<std::string>() == "fresh";
  const auto& t_grid = cfg.simulation.t_grid;
  const auto& ldp_x = cfg.estimators.ldp_x;
  const auto& x_grid = cfg.estimators.x_grid;
  const unsigned threads = a.threads > 0 ? a.threads : cfg.threads;

  const RateFunctionTable table(cfg.model, t_grid);
  std::optional<AnnealedParams> ap;
  if (fresh && cfg.model.kind() != EnvironmentKind::markov) ap.emplace(cfg.model);
  const double nn = static_cast<double>(n);

  struct Row {
    ReplicaSummary summary;
    double r_n = 0.0, l_n = 0.0, w_n = 0.0, ks = NAN, llt = NAN;
    std::vector<double> ldp_left;
    bool has_cdf = false;
  };
  std::vector<Row> rows(replicas);
  const auto& files = side.at("replica_files");
  parallel_for(replicas, threads, [&](std::size_t r) {
    const auto& entry = files.at(r);
    const auto stream = entry.at("environment_stream").get<std::uint32_t>();
    const EnvRealization env = sample_environment(cfg.model, n, seed, stream);
    const QuenchedMoments moments = quenched_moments(env, t_grid, n);

    std::ifstream f(in_dir / entry.at("positions").get<std::string>(), std::ios::binary);
    if (!f) throw UsageError("missing positions file for replica " + std::to_string(r));
    auto blocks = read_positions_binary(f);
    const auto gens = entry.at("position_generations").get<std::vector<std::size_t>>();
    if (blocks.empty() || gens.size() != blocks.size() || gens.back() != n)
      throw UsageError("positions file of replica " + std::to_string(r) + " does not hold generation " +
                       std::to_string(n));

    GenerationSnapshot snap;
    snap.n = n;
    snap.positions = std::move(blocks.back());
    snap.count = snap.positions.size();
    snap.has_positions = true;

    SummaryRequest req;
    req.t_grid = t_grid;
    req.ldp_x = ldp_x;
    Row& row = rows[r];
    if (ap && ap->sigma2_bar() > 0.0) {
      req.cdf_normalizers = {ap->mu_bar() * nn, std::sqrt(ap->sigma2_bar() * nn)};
      req.cdf_x = x_grid;
      row.has_cdf = true;
    } else if (!fresh && !moments.degenerate(n)) {
      req.cdf_normalizers = moments.normalizers(n);
      req.cdf_x = x_grid;
      row.has_cdf = true;
    }
    row.summary = summarize_replica(static_cast<std::uint32_t>(r), stream, snap, moments, req);

    const EmpiricalMeasure m(n, snap.positions);
    row.r_n = m.sorted().back();
    row.l_n = m.sorted().front();
    row.w_n = static_cast<double>(std::exp(std::log(static_cast<long double>(snap.count)) - moments.log_p[n]));
    row.ldp_left = ldp_interval_rates(m, ldp_x).left;
    if (!moments.degenerate(n)) {
      row.ks = ks_distance_to_normal(m, moments.normalizers(n));
      if (!moments.lattice) row.llt = llt_gap(m, moments, cfg.estimators.window).sup_gap;
    }
  });

  // per-replica table
  std::vector<std::string> header{"replica", "environment_stream", "n", "count", "R_n", "L_n", "W_n", "ks_normal",
                                  "llt_sup_gap"};
  for (double t : t_grid) header.push_back("free_energy_t=" + format_double(t));
  for (double x : ldp_x) header.push_back("ldp_right_x=" + format_double(x));
  for (double x : ldp_x) header.push_back("ldp_left_x=" + format_double(x));
  std::vector<std::vector<std::string>> table_rows{header};
  for (const auto& row : rows) {
    const auto& s = row.summary;
    std::vector<std::string> cells{std::to_string(s.replica), std::to_string(s.environment_id), std::to_string(s.n),
                                   std::to_string(s.count), format_double(row.r_n), format_double(row.l_n),
                                   format_double(row.w_n), format_double(row.ks), format_double(row.llt)};
    for (double v : s.free_energy) cells.push_back(format_double(v));
    for (double v : s.ldp_right) cells.push_back(format_double(v));
    for (double v : row.ldp_left) cells.push_back(format_double(v));
    table_rows.push_back(std::move(cells));
  }

  // cross-replica summaries
  auto column = [&](auto get) {
    std::vector<double> v;
    for (const auto& row : rows) v.push_back(get(row));
    return v;
  };
  auto estimate_json = [](const std::vector<double>& v) {
    ordered_json e;
    if (v.size() >= 2) {
      const Estimate est = mean_and_se(v);
      e["mean"] = json_number(est.mean);
      e["standard_error"] = json_number(est.standard_error);
    } else {
      e["mean"] = json_number(v.front());
      e["standard_error"] = nullptr;
    }
    e["median"] = json_number(median(v));
    return e;
  };

  ordered_json agg;
  agg["mode"] = fresh ? "annealed" : "quenched";
  ordered_json fe = ordered_json::array();
  for (std::size_t k = 0; k < t_grid.size(); ++k) {
    auto e = estimate_json(column([&](const Row& row) { return row.summary.free_energy[k]; }));
    fe.push_back({{"t", json_number(t_grid[k])}, {"estimate", e}, {"limit", json_number(table.tilde_lambda(t_grid[k]))}});
  }
  agg["free_energy"] = fe;
  ordered_json ldp = ordered_json::array();
  const double mean_slope = table.lambda_prime_at(0.0);
  for (std::size_t k = 0; k < ldp_x.size(); ++k) {
    auto e = estimate_json(column([&](const Row& row) { return row.summary.ldp_right[k]; }));
    ldp.push_back({{"x", json_number(ldp_x[k])},
                   {"estimate", e},
                   {"limit", json_number(-table.tilde_rate(std::max(ldp_x[k], mean_slope)))}});
  }
  agg["ldp_right"] = ldp;
  agg["R_n_over_n"] = estimate_json(column([&](const Row& row) { return row.r_n / nn; }));
  agg["R_n_over_n"]["limit"] = json_number(table.speed_right());
  agg["L_n_over_n"] = estimate_json(column([&](const Row& row) { return row.l_n / nn; }));
  agg["L_n_over_n"]["limit"] = json_number(table.speed_left());
  agg["W_n"] = estimate_json(column([](const Row& row) { return row.w_n; }));
  agg["ks_normal"] = estimate_json(column([](const Row& row) { return row.ks; }));
  agg["llt_sup_gap"] = estimate_json(column([](const Row& row) { return row.llt; }));

  std::vector<std::vector<std::string>> cdf_rows;
  if (replicas >= 2 && rows.front().has_cdf) {
    std::vector<ReplicaSummary> summaries;
    for (const auto& row : rows) summaries.push_back(row.summary);
    std::vector<double> phi;
    for (double x : x_grid) phi.push_back(normal_cdf(x));
    const auto report = aggregate(fresh ? AggregateMode::annealed_mean : AggregateMode::quenched_mean, summaries,
                                  AggregateQuantity::cdf, phi);
    cdf_rows.push_back({"x", "mean", "standard_error", "Phi"});
    for (std::size_t i = 0; i < x_grid.size(); ++i)
      cdf_rows.push_back({format_double(x_grid[i]), format_double(report.mean[i]),
                          format_double(report.standard_error[i]), format_double(phi[i])});
    agg["cdf_ks"] = json_number(*report.ks);
  } else {
    agg["cdf_ks"] = nullptr;
  }

  ordered_json j;
  j["schema_version"] = kSidecarSchemaVersion;
  j["kind"] = "estimate";
  j["config_name"] = cfg.name;
  j["seed"] = seed;
  j["n"] = n;
  j["replicas"] = replicas;
  j["t_grid"] = json_array(t_grid);
  j["ldp_x"] = json_array(ldp_x);
  j["llt_window"] = json_number(cfg.estimators.window);
  j["files"] = {{"replicas", "estimate_replicas.csv"}, {"cdf", cdf_rows.empty() ? "" : "estimate_cdf.csv"}};
  j["aggregate"] = agg;

  const fs::path dir = output_dir(a.out, in_dir.string());
  write_text_file(dir / "estimate_replicas.csv", csv_text(table_rows));
  if (!cdf_rows.empty()) write_text_file(dir / "estimate_cdf.csv", csv_text(cdf_rows));
  write_text_file(dir / "estimate.json", j.dump(2) + "\n");
  out << "estimate: " << replicas << " replica(s) at n = " << n << " -> " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
  const RunConfig cfg = load_config(a.config);
  const std::uint64_t seed = require_seed(a.seed, cfg);
  const unsigned threads = a.threads > 0 ? a.threads : cfg.threads;
  const SuiteReport report = run_suite(cfg.model, cfg.suite, seed, cfg.name, threads);
  const std::string text = render_text(report);
  const fs::path dir = output_dir(a.out, cfg.output_dir);
  write_text_file(dir / "report.json", to_json(report).dump(2) + "\n");
  write_text_file(dir / "report.txt", text);
  out << text;
  return exit_code(report);
}

int cmd_report(const ReportArgs& a, std::ostream& out) {
  fs::path path = a.input;
  if (fs::is_directory(path)) path /= "report.json";
  ordered_json j;
  try {
    j = ordered_json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed report: ") + e.what());
  }
  SuiteReport report;
  try {
    report = report_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed report: ") + e.what());
  }
  out << render_text(report);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Branching random walk in a time-random environment: rates, simulation, estimators, verification"};
  app.name("brwre");
  app.require_subcommand(1);

  RatesArgs ra;
  auto* rates = app.add_subcommand("rates", "Tabulate Lambda, Lambda', rho and the free-energy limit on a t-grid");
  rates->add_option("--config", ra.config, "Model config (YAML)")->required();
  rates->add_option("--t-min", ra.t_min, "Grid start")->capture_default_str();
  rates->add_option("--t-max", ra.t_max, "Grid end")->capture_default_str();
  rates->add_option("--t-step", ra.t_step, "Grid step")->capture_default_str();
  rates->add_option("--out", ra.out, "Output directory (overrides BRWRE_OUT_DIR and the config)");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Grow trees and write per-generation snapshots");
  simulate->add_option("--config", sa.config, "Model config (YAML)")->required();
  simulate->add_option("--n", sa.n, "Number of generations");
  simulate->add_option("--replicas", sa.replicas, "Number of trees");
  simulate->add_option("--seed", sa.seed, "Master seed (overrides the config)");
  simulate->add_option("--positions", sa.positions, "Stored positions: none, final or all")->capture_default_str();
  simulate->add_flag("--fresh-environment", sa.fresh_environment, "Sample a new environment per replica");
  simulate->add_option("--threads", sa.threads, "Worker threads (0 = config value)");
  simulate->add_option("--out", sa.out, "Output directory (overrides BRWRE_OUT_DIR and the config)");

  EstimateArgs ea;
  auto* estimate = app.add_subcommand("estimate", "Run the estimators over a simulate output directory");
  estimate->add_option("--input", ea.input, "Directory written by simulate")->required();
  estimate->add_option("--threads", ea.threads, "Worker threads (0 = config value)");
  estimate->add_option("--out", ea.out, "Output directory (default: the input directory)");

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "Run the verification suite and write report.json / report.txt");
  verify->add_option("--config", va.config, "Model config (YAML)")->required();
  verify->add_option("--seed", va.seed, "Master seed (overrides the config)");
  verify->add_option("--threads", va.threads, "Worker threads (0 = config value)");
  verify->add_option("--out", va.out, "Output directory (overrides BRWRE_OUT_DIR and the config)");

  ReportArgs pa;
  auto* report = app.add_subcommand("report", "Render a stored report.json as text");
  report->add_option("--input", pa.input, "report.json or a directory holding it")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (rates->parsed()) return cmd_rates(ra, out);
    if (simulate->parsed()) return cmd_simulate(sa, out, err);
    if (estimate->parsed()) return cmd_estimate(ea, out);
    if (verify->parsed()) return cmd_verify(va, out);
    if (report->parsed()) return cmd_report(pa, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const PopulationOverflow& e) {
    err << "error: " << e.what() << "\n";
    return kExitOverflow;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitConfig;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace brwre

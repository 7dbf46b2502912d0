#include <CLI11.hpp>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "cbfmpc/config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cbfmpc;

namespace {

constexpr const char* kVersion = "0.1.0";

// Exit codes, one per outcome class.
constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kInfeasible = 3;
constexpr int kSafetyViolation = 4;
constexpr int kFalsified = 5;
constexpr int kInconclusive = 6;

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_manifest(const fs::path& out_dir, const std::string& command, const AppConfig& cfg,
                    const std::vector<std::string>& outputs) {
  json m;
  m["command"] = command;
  m["tool_version"] = kVersion;
  m["wall_clock_utc"] = utc_now();
  m["config"] = config_to_json(cfg);
  m["outputs"] = outputs;
  std::ofstream out(out_dir / "manifest.json");
  out << m.dump(2) << '\n';
}

std::vector<double> parse_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 const std::string& mode_override) {
  AppConfig cfg;
  try {
    cfg = load_config(config_path);
    if (mode_override == "baseline")
      cfg.scenario.ocp.mode = OcpMode::baseline;
    else if (mode_override == "certified")
      cfg.scenario.ocp.mode = OcpMode::certified;
    else if (!mode_override.empty())
      throw std::runtime_error("--mode must be 'baseline' or 'certified'");
    cfg.scenario.validate();
    fs::create_directories(out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }

  const TrajectoryLog log = run_scenario(cfg.scenario);
  const SafetyAudit audit = audit_safety(log, cfg.scenario.ocp.safety);

  const fs::path dir(out_dir);
  write_trajectory_csv((dir / "trajectory.csv").string(), log);
  {
    std::ofstream out(dir / "summary.json");
    out << summary_to_json(log, audit, cfg.scenario).dump(2) << '\n';
  }
  write_manifest(dir, "simulate", cfg, {"trajectory.csv", "summary.json"});

  if (log.aborted) {
    std::cerr << "infeasible: " << log.abort_reason << '\n';
    return kInfeasible;
  }
  if (!audit.clean()) {
    std::cerr << "safety audit failed (min margin " << audit.min_margin << ")\n";
    return kSafetyViolation;
  }
  std::cout << "simulate: " << log.steps.size() << " feasible steps, min margin "
            << audit.min_margin << " m\n";
  return kOk;
}

int cmd_verify(const std::string& config_path, const std::string& out_dir,
               const std::string& cert_flag, double tol_flag, long budget_flag, int jobs) {
  AppConfig cfg;
  try {
    cfg = load_config(config_path);
    if (cert_flag == "dtcbf")
      cfg.verifier.cert_mode = CertMode::dtcbf;
    else if (cert_flag == "qdtcbf")
      cfg.verifier.cert_mode = CertMode::qdtcbf;
    else if (!cert_flag.empty())
      throw std::runtime_error("--cert must be 'dtcbf' or 'qdtcbf'");
    fs::create_directories(out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }

  VerifyOptions opts;
  opts.tol = tol_flag > 0.0 ? tol_flag : cfg.verifier.tol;
  opts.budget = budget_flag > 0 ? budget_flag : cfg.verifier.budget;
  opts.jobs = jobs;

  const VerifierParams vp = make_verifier_params(cfg);
  const Box domain = verifier_domain(cfg);
  const VerificationReport rep = (cfg.verifier.cert_mode == CertMode::dtcbf)
                                     ? verify_dtcbf(vp, domain, opts)
                                     : verify_qdtcbf(vp, domain, opts);

  const fs::path dir(out_dir);
  {
    std::ofstream out(dir / "report.json");
    out << report_to_json(rep).dump(2) << '\n';
  }
  write_manifest(dir, "verify", cfg, {"report.json"});

  switch (rep.verdict) {
    case Verdict::certified:
      std::cout << "certified (nodes " << rep.nodes_explored << ", " << rep.wall_time_s << " s)\n";
      return kOk;
    case Verdict::falsified: {
      const StateD& x = *rep.counterexample;
      std::cout << "falsified: x = (" << x.agent1.s << ", " << x.agent1.v << ", " << x.agent2.s
                << ", " << x.agent2.v << "), gap " << rep.counterexample_gap << '\n';
      return kFalsified;
    }
    default:
      std::cout << "inconclusive after " << rep.nodes_explored << " nodes\n";
      return kInconclusive;
  }
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir,
              const std::string& gammas_csv, const std::string& horizons_csv, bool bisect,
              const std::string& cert_flag, int jobs) {
  AppConfig cfg;
  std::vector<double> gammas;
  std::vector<double> horizons;
  try {
    cfg = load_config(config_path);
    gammas = parse_list(gammas_csv);
    horizons = parse_list(horizons_csv);
    if (gammas.empty()) throw std::runtime_error("sweep: empty gamma grid");
    if (!bisect && horizons.empty()) throw std::runtime_error("sweep: empty horizon grid");
    fs::create_directories(out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  const fs::path dir(out_dir);
  const int workers = effective_jobs(jobs);

  if (bisect) {
    std::vector<CertMode> modes;
    if (cert_flag == "dtcbf")
      modes = {CertMode::dtcbf};
    else if (cert_flag == "qdtcbf")
      modes = {CertMode::qdtcbf};
    else
      modes = {CertMode::qdtcbf, CertMode::dtcbf};

    struct Row {
      CertMode mode;
      double gamma;
      double bound;
    };
    std::vector<Row> rows;
    for (const CertMode m : modes)
      for (const double g : gammas) rows.push_back({m, g, 0.0});

    VerifyOptions vopts;
    vopts.tol = cfg.verifier.tol;
    vopts.budget = cfg.verifier.budget;
    vopts.jobs = jobs;
    const VerifierParams base = make_verifier_params(cfg);
    const Box domain = verifier_domain(cfg);
    // The verifier parallelizes internally; grid points run sequentially so
    // wall time stays predictable.
    for (Row& row : rows) {
      row.bound = least_input_bound(row.mode, row.gamma, base, domain, cfg.verifier.bisect_lo,
                                    cfg.verifier.bisect_hi, cfg.verifier.bisect_tol, vopts);
      std::cout << (row.mode == CertMode::dtcbf ? "dtcbf" : "qdtcbf") << " gamma_d=" << row.gamma
                << " least bound " << row.bound << '\n';
    }
    std::ofstream out(dir / "least_bounds.csv");
    out << "cert,gamma_d,least_input_bound\n";
    for (const Row& row : rows)
      out << (row.mode == CertMode::dtcbf ? "dtcbf" : "qdtcbf") << ',' << format_g12(row.gamma)
          << ',' << format_g12(row.bound) << '\n';
    write_manifest(dir, "sweep --bisect", cfg, {"least_bounds.csv"});
    return kOk;
  }

  struct Cell {
    double gamma;
    int N;
    CumulativeCosts costs;
    std::size_t steps{0};
    bool aborted{false};
  };
  std::vector<Cell> cells;
  for (const double h : horizons)
    for (const double g : gammas) cells.push_back({g, static_cast<int>(h), {}, 0, false});

  std::atomic<std::size_t> next{0};
  auto run_cell = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      Cell& cell = cells[i];
      ScenarioConfig sc = cfg.scenario;
      sc.ocp.cert.gamma_d = cell.gamma;
      sc.ocp.N = cell.N;
      const TrajectoryLog log = run_scenario(sc);
      cell.costs = cumulative_costs(log);
      cell.steps = log.steps.size();
      cell.aborted = log.aborted;
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < std::min<int>(workers, static_cast<int>(cells.size())); ++t)
    pool.emplace_back(run_cell);
  for (auto& t : pool) t.join();

  std::ofstream out(dir / "sweep_costs.csv");
  out << "gamma_d,N,tracking_cost,actuation_cost,stage_cost,steps,aborted\n";
  for (const Cell& c : cells)
    out << format_g12(c.gamma) << ',' << c.N << ',' << format_g12(c.costs.tracking) << ','
        << format_g12(c.costs.actuation) << ',' << format_g12(c.costs.stage) << ',' << c.steps
        << ',' << (c.aborted ? 1 : 0) << '\n';
  write_manifest(dir, "sweep", cfg, {"sweep_costs.csv"});
  for (const Cell& c : cells)
    std::cout << "gamma_d=" << c.gamma << " N=" << c.N << " stage=" << c.costs.stage
              << (c.aborted ? " (aborted)" : "") << '\n';
  return kOk;
}

int cmd_costs(const std::string& log_path, const std::string& out_path) {
  std::ifstream in(log_path);
  if (!in) {
    std::cerr << "error: cannot open '" << log_path << "'\n";
    return kConfigError;
  }
  std::string header;
  if (!std::getline(in, header)) {
    std::cerr << "error: empty log file\n";
    return kConfigError;
  }
  std::vector<std::string> cols;
  {
    std::stringstream ss(header);
    std::string tok;
    while (std::getline(ss, tok, ',')) cols.push_back(tok);
  }
  int track_col = -1, act_col = -1;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] == "tracking_cost") track_col = static_cast<int>(i);
    if (cols[i] == "actuation_cost") act_col = static_cast<int>(i);
  }
  if (track_col < 0 || act_col < 0) {
    std::cerr << "error: log lacks tracking_cost/actuation_cost columns\n";
    return kConfigError;
  }
  double tracking = 0.0, actuation = 0.0;
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    int c = 0;
    while (std::getline(ss, tok, ',')) {
      if (c == track_col) tracking += std::stod(tok);
      if (c == act_col) actuation += std::stod(tok);
      ++c;
    }
    ++rows;
  }
  json j = {{"rows", rows},
            {"tracking", tracking},
            {"actuation", actuation},
            {"stage", tracking + actuation}};
  std::cout << j.dump(2) << '\n';
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    out << j.dump(2) << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"(q)DTCBF-certified lane-merging NMPC: simulation, verification and sweeps"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", mode, cert, gammas, horizons, log_path, out_path;
  double tol = -1.0;
  long budget = -1;
  int jobs = 0;
  bool bisect = false;

  CLI::App* sim = app.add_subcommand("simulate", "run a closed-loop scenario");
  sim->add_option("--config", config_path, "config JSON")->required();
  sim->add_option("--out", out_dir, "output directory");
  sim->add_option("--mode", mode, "baseline|certified (overrides config)");

  CLI::App* ver = app.add_subcommand("verify", "globally verify a certificate");
  ver->add_option("--config", config_path, "config JSON")->required();
  ver->add_option("--out", out_dir, "output directory");
  ver->add_option("--cert", cert, "dtcbf|qdtcbf (overrides config)");
  ver->add_option("--tol", tol, "verification tolerance");
  ver->add_option("--budget", budget, "node budget");
  ver->add_option("--jobs", jobs, "worker threads (CBF_MPC_THREADS overrides)");

  CLI::App* swp = app.add_subcommand("sweep", "parameter sweeps (costs or least input bounds)");
  swp->add_option("--config", config_path, "config JSON")->required();
  swp->add_option("--out", out_dir, "output directory");
  swp->add_option("--gammas", gammas, "comma-separated gamma_d grid");
  swp->add_option("--horizons", horizons, "comma-separated horizon grid (cost sweep)");
  swp->add_flag("--bisect", bisect, "bisect least input bounds instead of cost sweep");
  swp->add_option("--cert", cert, "dtcbf|qdtcbf|both (bisect mode)");
  swp->add_option("--jobs", jobs, "worker threads (CBF_MPC_THREADS overrides)");

  CLI::App* cst = app.add_subcommand("costs", "cumulative costs of a trajectory CSV");
  cst->add_option("--log", log_path, "trajectory CSV")->required();
  cst->add_option("--out", out_path, "optional JSON output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(config_path, out_dir, mode);
    if (ver->parsed()) return cmd_verify(config_path, out_dir, cert, tol, budget, jobs);
    if (swp->parsed()) return cmd_sweep(config_path, out_dir, gammas, horizons, bisect, cert, jobs);
    if (cst->parsed()) return cmd_costs(log_path, out_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  return kConfigError;
}

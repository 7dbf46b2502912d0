#include "cbfmpc/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace cbfmpc {

using nlohmann::json;

namespace {

double num_or(const json& j, const char* key, double def) {
  return (j.contains(key) && j[key].is_number()) ? j[key].get<double>() : def;
}

Eigen::Vector2d pair_or(const json& j, const char* key, const Eigen::Vector2d& def) {
  if (!j.contains(key)) return def;
  const json& v = j[key];
  if (v.is_number()) return Eigen::Vector2d::Constant(v.get<double>());
  if (v.is_array() && v.size() == 2) return {v[0].get<double>(), v[1].get<double>()};
  throw std::runtime_error(std::string("config: expected scalar or 2-array for '") + key + "'");
}

Eigen::Vector4d quad_or(const json& j, const char* key, const Eigen::Vector4d& def) {
  if (!j.contains(key)) return def;
  const json& v = j[key];
  if (!v.is_array() || v.size() != 4)
    throw std::runtime_error(std::string("config: expected 4-array for '") + key + "'");
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
}

ActivationParams activation_or(const json& j, const char* key, const ActivationParams& def) {
  if (!j.contains(key)) return def;
  const json& v = j[key];
  return {num_or(v, "m_d", def.m_d), num_or(v, "c_d", def.c_d)};
}

}  // namespace

AppConfig config_from_json(const json& j) {
  AppConfig c;
  ScenarioConfig& sc = c.scenario;
  OcpConfig& ocp = sc.ocp;

  const json dyn = j.value("dynamics", json::object());
  ocp.Ts = num_or(dyn, "Ts", 0.1);

  const json saf = j.value("safety", json::object());
  SafetyParams& sp = ocp.safety;
  sp.d0 = num_or(saf, "d0", 5.0);
  sp.t_h = num_or(saf, "t_h", 1.0);
  sp.m_lf = num_or(saf, "m_lf", 10.0);
  sp.p0 = activation_or(saf, "p0", ActivationParams{0.4, -45.0});
  sp.eps_d = num_or(saf, "eps_d", 0.0025);
  sp.v_max = num_or(saf, "v_max", 15.0);

  const json cert = j.value("certificate", json::object());
  ocp.cert.gamma_v = num_or(cert, "gamma_v", 0.8);
  ocp.cert.gamma_d = num_or(cert, "gamma_d", 0.15);
  ocp.cert.pN = activation_or(cert, "pN", ActivationParams{0.06, -75.0});
  ocp.cert.dv_min = num_or(cert, "dv_min", 0.01);
  sp.pN = ocp.cert.pN;  // single source: the certificate activation

  const json jocp = j.value("ocp", json::object());
  ocp.N = static_cast<int>(num_or(jocp, "N", 15));
  const std::string mode = jocp.value("mode", std::string("certified"));
  if (mode == "baseline")
    ocp.mode = OcpMode::baseline;
  else if (mode == "certified")
    ocp.mode = OcpMode::certified;
  else
    throw std::runtime_error("config: ocp.mode must be 'baseline' or 'certified'");
  ocp.q_diag = quad_or(jocp, "q_diag", Eigen::Vector4d{0.0, 10.0, 0.0, 10.0});
  ocp.qN_diag = quad_or(jocp, "qN_diag", ocp.q_diag);
  ocp.r_diag = pair_or(jocp, "r_diag", Eigen::Vector2d{1.0, 1.0}).cwiseAbs();
  ocp.u_lo = pair_or(jocp, "u_min", Eigen::Vector2d{-3.0, -3.0});
  ocp.u_hi = pair_or(jocp, "u_max", Eigen::Vector2d{3.0, 3.0});
  ocp.v_max = sp.v_max;

  const json jsc = j.value("scenario", json::object());
  if (jsc.contains("x0")) {
    const json& x0 = jsc["x0"];
    if (x0.is_array() && x0.size() == 4) {
      sc.x0 = {{x0[0].get<double>(), x0[1].get<double>()},
               {x0[2].get<double>(), x0[3].get<double>()}};
    } else if (x0.is_object()) {
      sc.x0 = {{num_or(x0, "s1", -165.0), num_or(x0, "v1", 13.0)},
               {num_or(x0, "s2", -160.0), num_or(x0, "v2", 12.5)}};
    } else {
      throw std::runtime_error("config: scenario.x0 must be an object or 4-array");
    }
  }
  const Eigen::Vector2d refs = pair_or(jsc, "v_ref", Eigen::Vector2d{13.0, 12.5});
  ocp.v1_ref = refs(0);
  ocp.v2_ref = refs(1);
  sc.duration = num_or(jsc, "duration", 12.0);
  sc.seed = static_cast<std::uint64_t>(num_or(jsc, "seed", 1));
  sc.s_lc = num_or(jsc, "s_lc", -39.5);
  sc.agent_length = num_or(jsc, "agent_length", 4.2);
  sc.agent_width = num_or(jsc, "agent_width", 2.0);

  const json jv = j.value("verifier", json::object());
  VerifierConfig& vc = c.verifier;
  if (jv.contains("domain")) {
    const json& d = jv["domain"];
    if (d.contains("s") && d["s"].is_array() && d["s"].size() == 2) {
      vc.s_lo = d["s"][0].get<double>();
      vc.s_hi = d["s"][1].get<double>();
    }
    if (d.contains("v") && d["v"].is_array() && d["v"].size() == 2) {
      vc.v_lo = d["v"][0].get<double>();
      vc.v_hi = d["v"][1].get<double>();
    }
  }
  vc.tol = num_or(jv, "tol", 1e-6);
  vc.budget = static_cast<long>(num_or(jv, "budget", 5e6));
  const std::string cm = jv.value("cert", std::string("qdtcbf"));
  if (cm == "dtcbf")
    vc.cert_mode = CertMode::dtcbf;
  else if (cm == "qdtcbf")
    vc.cert_mode = CertMode::qdtcbf;
  else
    throw std::runtime_error("config: verifier.cert must be 'dtcbf' or 'qdtcbf'");
  const json bis = jv.value("bisect", json::object());
  vc.bisect_lo = num_or(bis, "lo", 0.5);
  vc.bisect_hi = num_or(bis, "hi", 10.0);
  vc.bisect_tol = num_or(bis, "tol", 0.025);

  sc.validate();
  return c;
}

json config_to_json(const AppConfig& c) {
  const ScenarioConfig& sc = c.scenario;
  const OcpConfig& ocp = sc.ocp;
  const SafetyParams& sp = ocp.safety;
  json j;
  j["dynamics"] = {{"Ts", ocp.Ts}};
  j["safety"] = {{"d0", sp.d0},
                 {"t_h", sp.t_h},
                 {"m_lf", sp.m_lf},
                 {"p0", {{"m_d", sp.p0.m_d}, {"c_d", sp.p0.c_d}}},
                 {"eps_d", sp.eps_d},
                 {"v_max", sp.v_max}};
  j["certificate"] = {{"gamma_v", ocp.cert.gamma_v},
                      {"gamma_d", ocp.cert.gamma_d},
                      {"pN", {{"m_d", ocp.cert.pN.m_d}, {"c_d", ocp.cert.pN.c_d}}},
                      {"dv_min", ocp.cert.dv_min}};
  j["ocp"] = {{"N", ocp.N},
              {"mode", ocp.mode == OcpMode::baseline ? "baseline" : "certified"},
              {"q_diag", {ocp.q_diag(0), ocp.q_diag(1), ocp.q_diag(2), ocp.q_diag(3)}},
              {"qN_diag", {ocp.qN_diag(0), ocp.qN_diag(1), ocp.qN_diag(2), ocp.qN_diag(3)}},
              {"r_diag", {ocp.r_diag(0), ocp.r_diag(1)}},
              {"u_min", {ocp.u_lo(0), ocp.u_lo(1)}},
              {"u_max", {ocp.u_hi(0), ocp.u_hi(1)}}};
  j["scenario"] = {{"x0",
                    {{"s1", sc.x0.agent1.s},
                     {"v1", sc.x0.agent1.v},
                     {"s2", sc.x0.agent2.s},
                     {"v2", sc.x0.agent2.v}}},
                   {"v_ref", {ocp.v1_ref, ocp.v2_ref}},
                   {"duration", sc.duration},
                   {"seed", sc.seed},
                   {"s_lc", sc.s_lc},
                   {"agent_length", sc.agent_length},
                   {"agent_width", sc.agent_width}};
  const VerifierConfig& vc = c.verifier;
  j["verifier"] = {{"domain", {{"s", {vc.s_lo, vc.s_hi}}, {"v", {vc.v_lo, vc.v_hi}}}},
                   {"tol", vc.tol},
                   {"budget", vc.budget},
                   {"cert", vc.cert_mode == CertMode::dtcbf ? "dtcbf" : "qdtcbf"},
                   {"bisect", {{"lo", vc.bisect_lo}, {"hi", vc.bisect_hi}, {"tol", vc.bisect_tol}}}};
  return j;
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config: parse error in '" + path + "': " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("config: invalid values in '" + path + "': " + e.what());
  }
}

VerifierParams make_verifier_params(const AppConfig& c) {
  VerifierParams vp;
  vp.safety = c.scenario.ocp.safety;
  vp.cert = c.scenario.ocp.cert;
  vp.Ts = c.scenario.ocp.Ts;
  vp.u_min = c.scenario.ocp.u_lo.maxCoeff();
  vp.u_max = c.scenario.ocp.u_hi.minCoeff();
  return vp;
}

Box verifier_domain(const AppConfig& c) {
  const VerifierConfig& vc = c.verifier;
  Box b;
  const double v_hi = vc.v_hi > 0.0 ? vc.v_hi : c.scenario.ocp.safety.v_max;
  b[0] = Interval(vc.s_lo, vc.s_hi);
  b[1] = Interval(vc.v_lo, v_hi);
  b[2] = Interval(vc.s_lo, vc.s_hi);
  b[3] = Interval(vc.v_lo, v_hi);
  return b;
}

json report_to_json(const VerificationReport& rep) {
  json j;
  j["verdict"] = rep.verdict == Verdict::certified    ? "certified"
                 : rep.verdict == Verdict::falsified ? "falsified"
                                                     : "inconclusive";
  j["mode"] = rep.mode == CertMode::dtcbf ? "dtcbf" : "qdtcbf";
  if (rep.counterexample) {
    const StateD& x = *rep.counterexample;
    j["counterexample"] = {{"s1", x.agent1.s}, {"v1", x.agent1.v}, {"s2", x.agent2.s}, {"v2", x.agent2.v}};
    j["counterexample_gap"] = rep.counterexample_gap;
  } else {
    j["counterexample"] = nullptr;
  }
  j["certified_lower_bound"] =
      std::isfinite(rep.certified_lower_bound) ? json(rep.certified_lower_bound) : json();
  j["nodes_explored"] = rep.nodes_explored;
  j["wall_time_s"] = rep.wall_time_s;
  j["domain"] = {{"s1", {rep.domain[0].lo, rep.domain[0].hi}},
                 {"v1", {rep.domain[1].lo, rep.domain[1].hi}},
                 {"s2", {rep.domain[2].lo, rep.domain[2].hi}},
                 {"v2", {rep.domain[3].lo, rep.domain[3].hi}}};
  j["vacuous"] = rep.vacuous;
  j["notes"] = rep.notes;
  return j;
}

json summary_to_json(const TrajectoryLog& log, const SafetyAudit& audit,
                     const ScenarioConfig& sc) {
  const CumulativeCosts costs = cumulative_costs(log);
  int total_iters = 0;
  int max_iters = 0;
  double total_time = 0.0;
  for (const StepRecord& r : log.steps) {
    total_iters += r.solve_iterations;
    max_iters = std::max(max_iters, r.solve_iterations);
    total_time += r.solve_time_s;
  }
  const int ot = overtake_step(log);
  json j;
  j["steps"] = log.steps.size();
  j["feasible"] = !log.aborted;
  if (log.aborted) {
    j["abort_step"] = log.abort_step;
    j["abort_reason"] = log.abort_reason;
  }
  j["costs"] = {{"tracking", costs.tracking}, {"actuation", costs.actuation}, {"stage", costs.stage}};
  j["audit"] = {{"clean", audit.clean()},
                {"min_margin", audit.min_margin},
                {"first_violation", audit.first_violation},
                {"velocity_violations", audit.velocity_violations},
                {"input_violations", audit.input_violations}};
  j["overtake"] = (ot >= 0);
  if (ot >= 0) {
    j["overtake_step"] = ot;
    j["overtake_time"] = log.steps[static_cast<std::size_t>(ot)].t;
    j["overtake_s1"] = log.steps[static_cast<std::size_t>(ot)].x.agent1.s;
    j["overtake_before_lc"] = log.steps[static_cast<std::size_t>(ot)].x.agent1.s < sc.s_lc;
  }
  j["solver"] = {{"total_iterations", total_iters},
                 {"max_iterations", max_iters},
                 {"mean_solve_time_s", log.steps.empty() ? 0.0 : total_time / log.steps.size()},
                 {"total_solve_time_s", total_time}};
  return j;
}

std::string format_g12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void write_trajectory_csv(const std::string& path, const TrajectoryLog& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file '" + path + "'");
  out << "t,s1,v1,s2,v2,a1,a2,dist,min_dist,tracking_cost,actuation_cost,solve_iters,solve_time\n";
  for (const StepRecord& r : log.steps) {
    out << format_g12(r.t) << ',' << format_g12(r.x.agent1.s) << ',' << format_g12(r.x.agent1.v)
        << ',' << format_g12(r.x.agent2.s) << ',' << format_g12(r.x.agent2.v) << ','
        << format_g12(r.u.a1) << ',' << format_g12(r.u.a2) << ',' << format_g12(r.dist) << ','
        << format_g12(r.min_dist) << ',' << format_g12(r.tracking_cost) << ','
        << format_g12(r.actuation_cost) << ',' << r.solve_iterations << ','
        << format_g12(r.solve_time_s) << '\n';
  }
}

}  // namespace cbfmpc

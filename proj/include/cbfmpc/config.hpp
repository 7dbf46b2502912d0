#pragma once

#include <string>

#include "cbfmpc/certify.hpp"
#include "cbfmpc/simloop.hpp"

// vendored single-header nlohmann/json
#include "json.hpp"

namespace cbfmpc {

struct VerifierConfig {
  double s_lo{-250.0};
  double s_hi{60.0};
  double v_lo{0.0};
  double v_hi{-1.0};  ///< negative: use safety.v_max
  double tol{1e-6};
  long budget{5'000'000};
  CertMode cert_mode{CertMode::qdtcbf};
  double bisect_lo{0.5};
  double bisect_hi{10.0};
  double bisect_tol{0.025};
};

/// One self-contained experiment description; every field has a default so a
/// config file only states what it changes.
struct AppConfig {
  ScenarioConfig scenario;
  VerifierConfig verifier;
};

AppConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const AppConfig& c);

/// Loads and validates a config file; throws std::runtime_error with a
/// parse/validation diagnostic on malformed input.
AppConfig load_config(const std::string& path);

VerifierParams make_verifier_params(const AppConfig& c);
Box verifier_domain(const AppConfig& c);

nlohmann::json report_to_json(const VerificationReport& rep);
nlohmann::json summary_to_json(const TrajectoryLog& log, const SafetyAudit& audit,
                               const ScenarioConfig& sc);

/// Fixed 12-significant-digit numeric encoding used for all CSV output.
std::string format_g12(double v);

void write_trajectory_csv(const std::string& path, const TrajectoryLog& log);

}  // namespace cbfmpc

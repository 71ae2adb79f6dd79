#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "brwre/env_model.hpp"
#include "json.hpp"

namespace brwre {

enum class Verdict { pass, fail, skip, error };

const char* to_string(Verdict verdict);
Verdict verdict_from_string(const std::string& text);

struct TrendPoint {
  std::size_t n = 0;
  double error = 0.0;
};

struct TheoremCheck {
  std::string theorem;    // check id; MART for the martingale normalization
  std::string config_id;
  std::string quantity;
  double predicted = 0.0;
  double measured = 0.0;
  double error = 0.0;  // statistic compared against the tolerance
  double tolerance = 0.0;
  Verdict verdict = Verdict::skip;
  std::string note;
  std::vector<TrendPoint> trend;  // median error per trend horizon, when used
};

/// Tolerances and sample sizes for the verification battery.
struct SuiteConfig {
  std::size_t replicas = 16;
  std::size_t horizon = 20;
  std::vector<std::size_t> trend_horizons{10, 15, 20};
  double trend_slack = 0.2;

  std::vector<double> free_energy_t{0.0, 0.5, 1.0, 3.0};
  double free_energy_tol = 0.05;
  double free_energy_tol_linear = 0.15;  // t outside (t_-, t_+)
  double speed_tol = 0.25;

  double ldp_x = 0.8;
  double ldp_tol = 0.08;
  std::size_t exact_n = 400;
  double exact_tol = 0.01;
  std::size_t annealed_exact_n = 2000;
  double annealed_exact_tol = 0.01;

  double clt_tol = 0.05;
  double llt_h = 0.5;
  double llt_sup_tol = 0.05;
  double llt_center_tol = 0.03;

  std::size_t annealed_replicas = 500;
  std::size_t annealed_n = 15;
  double annealed_clt_tol = 0.05;

  std::size_t martingale_replicas = 200;
  std::size_t martingale_n = 10;
  double martingale_t = 0.5;
  double martingale_se_factor = 4.0;

  std::size_t normalized_ldp_n_min = 10;
  std::size_t normalized_ldp_n_max = 18;
  double normalized_ldp_tol = 0.1;

  std::uint64_t particle_cap = std::uint64_t{1} << 24;

  bool operator==(const SuiteConfig&) const = default;
};

/// Replica-id offsets that keep the suite's tree batches on disjoint streams.
inline constexpr std::uint32_t kMainBatchOffset = 0;
inline constexpr std::uint32_t kAnnealedBatchOffset = 1'000'000;
inline constexpr std::uint32_t kMartingaleBatchOffset = 2'000'000;
/// Environment stream 0 is the shared quenched path; annealed replica r uses r + 1.
inline constexpr std::uint32_t kQuenchedEnvironmentStream = 0;

struct SuiteReport {
  std::string config_id;
  std::uint64_t seed = 0;
  SuiteConfig suite;
  std::vector<TheoremCheck> checks;

  std::size_t count(Verdict verdict) const;
};

/// Runs the battery against `model`. Population overflow in a batch marks the
/// checks depending on it as ERROR and the suite continues.
SuiteReport run_suite(const EnvironmentModel& model, const SuiteConfig& suite, std::uint64_t seed,
                      const std::string& config_id, unsigned threads = 1);

nlohmann::ordered_json to_json(const SuiteReport& report);
SuiteReport report_from_json(const nlohmann::ordered_json& json);
std::string render_text(const SuiteReport& report);

/// 1 when any check failed or errored, else 0.
int exit_code(const SuiteReport& report);

/// Verdict rule: infinities must agree exactly, finite values within tolerance.
bool within_tolerance(double measured, double predicted, double tolerance);

/// Error sequence passes when no step grows by more than `slack` relative.
bool trend_ok(const std::vector<TrendPoint>& trend, double slack);

}  // namespace brwre

#include "brwre/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "brwre/analytic.hpp"
#include "brwre/errors.hpp"
#include "brwre/estimators.hpp"
#include "brwre/io.hpp"
#include "brwre/mean_measure.hpp"
#include "brwre/normal.hpp"
#include "brwre/parallel.hpp"
#include "brwre/simulate.hpp"

namespace brwre {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// |measured - predicted| with matching infinities counted as exact.
double abs_error(double measured, double predicted) {
  if (std::isinf(measured) || std::isinf(predicted)) return measured == predicted ? 0.0 : kInf;
  return std::abs(measured - predicted);
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(6);
  out << v;
  return out.str();
}

class CheckBuilder {
 public:
  explicit CheckBuilder(std::string config_id) : config_id_(std::move(config_id)) {}

  TheoremCheck compare(std::string theorem, std::string quantity, double predicted, double measured,
                       double error, double tolerance, std::string note = {}) const {
    TheoremCheck c = base(std::move(theorem), std::move(quantity));
    c.predicted = predicted;
    c.measured = measured;
    c.error = error;
    c.tolerance = tolerance;
    c.verdict = error <= tolerance ? Verdict::pass : Verdict::fail;
    c.note = std::move(note);
    return c;
  }

  TheoremCheck direct(std::string theorem, std::string quantity, double predicted, double measured,
                      double tolerance, std::string note = {}) const {
    return compare(std::move(theorem), std::move(quantity), predicted, measured, abs_error(measured, predicted),
                   tolerance, std::move(note));
  }

  TheoremCheck skip(std::string theorem, std::string quantity, std::string reason) const {
    TheoremCheck c = base(std::move(theorem), std::move(quantity));
    c.predicted = c.measured = c.error = kNaN;
    c.verdict = Verdict::skip;
    c.note = std::move(reason);
    return c;
  }

  TheoremCheck error(std::string theorem, std::string quantity, std::string message) const {
    TheoremCheck c = skip(std::move(theorem), std::move(quantity), std::move(message));
    c.verdict = Verdict::error;
    return c;
  }

 private:
  TheoremCheck base(std::string theorem, std::string quantity) const {
    TheoremCheck c;
    c.theorem = std::move(theorem);
    c.config_id = config_id_;
    c.quantity = std::move(quantity);
    return c;
  }

  std::string config_id_;
};

std::vector<double> grid(double lo, double hi, double step) {
  std::vector<double> out;
  const auto count = static_cast<std::size_t>(std::llround((hi - lo) / step));
  for (std::size_t i = 0; i <= count; ++i) out.push_back(lo + step * static_cast<double>(i));
  return out;
}

std::vector<double> normal_cdf_on(const std::vector<double>& xs) {
  std::vector<double> out;
  for (double x : xs) out.push_back(normal_cdf(x));
  return out;
}

bool all_offspring_at_least_two(const EnvironmentModel& model) {
  for (const auto& s : model.states()) {
    const auto* d = std::get_if<Deterministic>(&s.offspring());
    if (d == nullptr || d->k < 2) return false;
  }
  return true;
}

// Per-replica observations from the shared-environment batch.
struct MainObservation {
  std::map<std::size_t, std::vector<double>> free_energy;  // n -> per t
  std::map<std::size_t, double> right_speed;               // R_n / n
  std::map<std::size_t, double> left_speed;                // L_n / n
  std::map<std::size_t, double> ldp_rate;                  // (1/n) log Z_n(n[x, inf))
  std::map<std::size_t, double> tail_fraction;             // Z_n(n[x, inf)) / Z_n(R)
  double ks = kNaN;
  double llt_sup = kNaN;
  double llt_center = kNaN;
};

struct AnnealedObservation {
  ReplicaSummary mean;        // cdf at (mu_bar n, sqrt(sigma2_bar n))
  ReplicaSummary normalized;  // cdf at (mu_bar' n, sqrt(sigma2_bar' n))
};

std::vector<TrendPoint> trend_of(const std::vector<std::size_t>& horizons,
                                 const std::function<double(std::size_t)>& median_error_at) {
  std::vector<TrendPoint> out;
  for (std::size_t n : horizons) out.push_back({n, median_error_at(n)});
  return out;
}

std::string trend_note(const std::vector<TrendPoint>& trend, double slack) {
  if (trend.empty()) return {};
  std::string out = "trend median errors:";
  for (const auto& p : trend) out += " n=" + std::to_string(p.n) + ":" + fmt(p.error);
  out += trend_ok(trend, slack) ? " (ok)" : " (violated)";
  return out;
}

void apply_trend(TheoremCheck& check, std::vector<TrendPoint> trend, double slack) {
  if (trend.empty()) return;
  const bool ok = trend_ok(trend, slack);
  check.note += (check.note.empty() ? "" : "; ") + trend_note(trend, slack);
  check.trend = std::move(trend);
  if (!ok && check.verdict == Verdict::pass) check.verdict = Verdict::fail;
}

nlohmann::ordered_json suite_to_json(const SuiteConfig& s) {
  nlohmann::ordered_json j;
  j["replicas"] = s.replicas;
  j["horizon"] = s.horizon;
  j["trend_horizons"] = s.trend_horizons;
  j["trend_slack"] = s.trend_slack;
  j["free_energy_t"] = s.free_energy_t;
  j["free_energy_tol"] = s.free_energy_tol;
  j["free_energy_tol_linear"] = s.free_energy_tol_linear;
  j["speed_tol"] = s.speed_tol;
  j["ldp_x"] = s.ldp_x;
  j["ldp_tol"] = s.ldp_tol;
  j["exact_n"] = s.exact_n;
  j["exact_tol"] = s.exact_tol;
  j["annealed_exact_n"] = s.annealed_exact_n;
  j["annealed_exact_tol"] = s.annealed_exact_tol;
  j["clt_tol"] = s.clt_tol;
  j["llt_h"] = s.llt_h;
  j["llt_sup_tol"] = s.llt_sup_tol;
  j["llt_center_tol"] = s.llt_center_tol;
  j["annealed_replicas"] = s.annealed_replicas;
  j["annealed_n"] = s.annealed_n;
  j["annealed_clt_tol"] = s.annealed_clt_tol;
  j["martingale_replicas"] = s.martingale_replicas;
  j["martingale_n"] = s.martingale_n;
  j["martingale_t"] = s.martingale_t;
  j["martingale_se_factor"] = s.martingale_se_factor;
  j["normalized_ldp_n_min"] = s.normalized_ldp_n_min;
  j["normalized_ldp_n_max"] = s.normalized_ldp_n_max;
  j["normalized_ldp_tol"] = s.normalized_ldp_tol;
  j["particle_cap"] = s.particle_cap;
  return j;
}

SuiteConfig suite_from_json(const nlohmann::ordered_json& j) {
  SuiteConfig s;
  s.replicas = j.at("replicas").get<std::size_t>();
  s.horizon = j.at("horizon").get<std::size_t>();
  s.trend_horizons = j.at("trend_horizons").get<std::vector<std::size_t>>();
  s.trend_slack = j.at("trend_slack").get<double>();
  s.free_energy_t = j.at("free_energy_t").get<std::vector<double>>();
  s.free_energy_tol = j.at("free_energy_tol").get<double>();
  s.free_energy_tol_linear = j.at("free_energy_tol_linear").get<double>();
  s.speed_tol = j.at("speed_tol").get<double>();
  s.ldp_x = j.at("ldp_x").get<double>();
  s.ldp_tol = j.at("ldp_tol").get<double>();
  s.exact_n = j.at("exact_n").get<std::size_t>();
  s.exact_tol = j.at("exact_tol").get<double>();
  s.annealed_exact_n = j.at("annealed_exact_n").get<std::size_t>();
  s.annealed_exact_tol = j.at("annealed_exact_tol").get<double>();
  s.clt_tol = j.at("clt_tol").get<double>();
  s.llt_h = j.at("llt_h").get<double>();
  s.llt_sup_tol = j.at("llt_sup_tol").get<double>();
  s.llt_center_tol = j.at("llt_center_tol").get<double>();
  s.annealed_replicas = j.at("annealed_replicas").get<std::size_t>();
  s.annealed_n = j.at("annealed_n").get<std::size_t>();
  s.annealed_clt_tol = j.at("annealed_clt_tol").get<double>();
  s.martingale_replicas = j.at("martingale_replicas").get<std::size_t>();
  s.martingale_n = j.at("martingale_n").get<std::size_t>();
  s.martingale_t = j.at("martingale_t").get<double>();
  s.martingale_se_factor = j.at("martingale_se_factor").get<double>();
  s.normalized_ldp_n_min = j.at("normalized_ldp_n_min").get<std::size_t>();
  s.normalized_ldp_n_max = j.at("normalized_ldp_n_max").get<std::size_t>();
  s.normalized_ldp_tol = j.at("normalized_ldp_tol").get<double>();
  s.particle_cap = j.at("particle_cap").get<std::uint64_t>();
  return s;
}

}  // namespace

const char* to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::pass: return "PASS";
    case Verdict::fail: return "FAIL";
    case Verdict::skip: return "SKIP";
    case Verdict::error: return "ERROR";
  }
  return "?";
}

Verdict verdict_from_string(const std::string& text) {
  if (text == "PASS") return Verdict::pass;
  if (text == "FAIL") return Verdict::fail;
  if (text == "SKIP") return Verdict::skip;
  if (text == "ERROR") return Verdict::error;
  throw UsageError("unknown verdict '" + text + "'");
}

bool within_tolerance(double measured, double predicted, double tolerance) {
  return abs_error(measured, predicted) <= tolerance;
}

bool trend_ok(const std::vector<TrendPoint>& trend, double slack) {
  for (std::size_t i = 1; i < trend.size(); ++i)
    if (!(trend[i].error <= (1.0 + slack) * trend[i - 1].error)) return false;
  return true;
}

std::size_t SuiteReport::count(Verdict verdict) const {
  return static_cast<std::size_t>(
      std::count_if(checks.begin(), checks.end(), [&](const TheoremCheck& c) { return c.verdict == verdict; }));
}

int exit_code(const SuiteReport& report) {
  return report.count(Verdict::fail) + report.count(Verdict::error) > 0 ? 1 : 0;
}

SuiteReport run_suite(const EnvironmentModel& model, const SuiteConfig& suite, std::uint64_t seed,
                      const std::string& config_id, unsigned threads) {
  if (suite.replicas < 2) throw UsageError("suite needs at least 2 replicas");
  if (suite.horizon < 1) throw UsageError("suite horizon must be >= 1");
  for (std::size_t n : suite.trend_horizons)
    if (n < 1 || n > suite.horizon) throw ConfigError("trend horizons must lie in [1, horizon]", "suite.trend_horizons");

  SuiteReport report;
  report.config_id = config_id;
  report.seed = seed;
  report.suite = suite;
  auto& checks = report.checks;
  const CheckBuilder make(config_id);

  const std::size_t trend_max =
      suite.trend_horizons.empty() ? 0 : *std::max_element(suite.trend_horizons.begin(), suite.trend_horizons.end());
  const std::size_t env_length =
      std::max({suite.horizon, suite.exact_n, suite.normalized_ldp_n_max, suite.martingale_n, trend_max, std::size_t{1}});
  const EnvRealization xi = sample_environment(model, env_length, seed, kQuenchedEnvironmentStream);
  const RateFunctionTable table(model, suite.free_energy_t);
  const double x = suite.ldp_x;
  const bool iid = model.kind() != EnvironmentKind::markov;

  // ---- analytic mean-measure checks -------------------------------------
  try {
    if (!model.all_gaussian_family() && suite.exact_n > 30) {
      checks.push_back(make.skip("T2.1", "quenched_mean_ldp(x=" + fmt(x) + ")",
                                 "exact quenched mean measure needs gaussian or point-mass displacements for n > 30"));
    } else {
      const double predicted = -table.rate(x);
      const double measured = quenched_mean_ldp_exact(xi, x, suite.exact_n);
      checks.push_back(make.direct("T2.1", "quenched_mean_ldp(x=" + fmt(x) + ")", predicted, measured,
                                   suite.exact_tol, "n=" + std::to_string(suite.exact_n) + ", no simulation"));
    }
  } catch (const Error& e) {
    checks.push_back(make.error("T2.1", "quenched_mean_ldp(x=" + fmt(x) + ")", e.what()));
  }

  for (const auto& [id, measure] : {std::pair{"T2.2", AnnealedMeasure::mean}, std::pair{"T2.3", AnnealedMeasure::normalized}}) {
    const std::string quantity = std::string(measure == AnnealedMeasure::mean ? "annealed_mean_ldp" : "annealed_normalized_ldp") +
                                 "(x=" + fmt(x) + ")";
    if (!iid) {
      checks.push_back(make.skip(id, quantity, "requires an i.i.d. environment"));
      continue;
    }
    if (!model.all_gaussian_family()) {
      checks.push_back(make.skip(id, quantity, "exact annealed mean measure needs gaussian or point-mass displacements"));
      continue;
    }
    try {
      const AnnealedParams ap(model);
      const ConvexFunction f = measure == AnnealedMeasure::mean ? ap.lambda_a_function() : ap.bar_lambda_a_function();
      const double predicted = -legendre(f, x, {-kMaxTemperature, kMaxTemperature});
      const double measured = annealed_mean_ldp_exact(model, x, suite.annealed_exact_n, measure);
      checks.push_back(make.direct(id, quantity, predicted, measured, suite.annealed_exact_tol,
                                   "n=" + std::to_string(suite.annealed_exact_n) + ", exact composition sum"));
    } catch (const Error& e) {
      checks.push_back(make.error(id, quantity, e.what()));
    }
  }

  // ---- shared-environment tree batch -------------------------------------
  const QuenchedMoments moments = quenched_moments(xi, suite.free_energy_t, suite.horizon);
  const bool degenerate = moments.degenerate(suite.horizon);
  std::set<std::size_t> observed(suite.trend_horizons.begin(), suite.trend_horizons.end());
  observed.insert(suite.horizon);
  const std::size_t ldp_lo = suite.normalized_ldp_n_min;
  const std::size_t ldp_hi = std::min(suite.normalized_ldp_n_max, suite.horizon);

  std::vector<MainObservation> main(suite.replicas);
  std::optional<std::string> main_error;
  try {
    SimConfig sim;
    sim.horizon = suite.horizon;
    sim.particle_cap = suite.particle_cap;
    sim.seed = seed;
    parallel_for(suite.replicas, threads, [&](std::size_t r) {
      MainObservation& obs = main[r];
      run_tree(xi, sim, kMainBatchOffset + static_cast<std::uint32_t>(r), [&](const GenerationSnapshot& snap) {
        const std::size_t n = snap.n;
        if (n == 0) return;
        const bool want_tail = n >= ldp_lo && n <= ldp_hi;
        if (!observed.count(n) && !want_tail) return;
        const double threshold = static_cast<double>(n) * x;
        const auto above = static_cast<std::uint64_t>(
            std::count_if(snap.positions.begin(), snap.positions.end(), [&](double s) { return s >= threshold; }));
        if (want_tail) obs.tail_fraction[n] = static_cast<double>(above) / static_cast<double>(snap.count);
        if (!observed.count(n)) return;
        std::vector<double> fe;
        for (double t : suite.free_energy_t)
          fe.push_back(static_cast<double>(log_partition_extended(snap.positions, t) / n));
        obs.free_energy[n] = std::move(fe);
        obs.right_speed[n] = snap.r_n / static_cast<double>(n);
        obs.left_speed[n] = snap.l_n / static_cast<double>(n);
        obs.ldp_rate[n] = above == 0 ? -kInf : static_cast<double>(std::log(static_cast<long double>(above)) / n);
        if (n == suite.horizon && !degenerate) {
          const EmpiricalMeasure em = EmpiricalMeasure::from_snapshot(snap);
          const Normalizers norm = moments.normalizers(n);
          obs.ks = ks_distance_to_normal(em, norm);
          if (!moments.lattice) {
            obs.llt_sup = llt_gap(em, moments, suite.llt_h).sup_gap;
            obs.llt_center = norm.scale * static_cast<double>(em.count_open(norm.center, norm.center + suite.llt_h)) /
                             static_cast<double>(em.count());
          }
        }
      });
    });
  } catch (const PopulationOverflow& e) {
    main_error = e.what();
  } catch (const Error& e) {
    main_error = e.what();
  }

  const std::string batch_note = std::to_string(suite.replicas) + " replicas, n=" + std::to_string(suite.horizon);
  auto median_over = [&](const std::function<double(const MainObservation&)>& f) {
    std::vector<double> v;
    for (const auto& obs : main) v.push_back(f(obs));
    return median(v);
  };

  // free energy
  for (std::size_t k = 0; k < suite.free_energy_t.size(); ++k) {
    const double t = suite.free_energy_t[k];
    const std::string quantity = "free_energy(t=" + fmt(t) + ")";
    if (main_error) {
      checks.push_back(make.error("T3.1", quantity, *main_error));
      continue;
    }
    const double predicted = table.tilde_lambda(t);
    const bool interior = t > table.t_minus() && t < table.t_plus();
    const double tol = interior ? suite.free_energy_tol : suite.free_energy_tol_linear;
    auto err_at = [&](std::size_t n) {
      return median_over([&](const MainObservation& o) { return abs_error(o.free_energy.at(n)[k], predicted); });
    };
    TheoremCheck c = make.compare("T3.1", quantity, predicted,
                                  median_over([&](const MainObservation& o) { return o.free_energy.at(suite.horizon)[k]; }),
                                  err_at(suite.horizon), tol,
                                  batch_note + (interior ? ", interior branch" : ", linear branch"));
    apply_trend(c, trend_of(suite.trend_horizons, err_at), suite.trend_slack);
    checks.push_back(std::move(c));
  }

  // interval counts
  {
    const std::string quantity = "ldp_count_rate(x=" + fmt(x) + ")";
    if (main_error) {
      checks.push_back(make.error("T3.2/C3.3", quantity, *main_error));
    } else {
      const double predicted = -table.tilde_rate(x);
      auto err_at = [&](std::size_t n) {
        return median_over([&](const MainObservation& o) { return abs_error(o.ldp_rate.at(n), predicted); });
      };
      TheoremCheck c = make.compare("T3.2/C3.3", quantity, predicted,
                                    median_over([&](const MainObservation& o) { return o.ldp_rate.at(suite.horizon); }),
                                    err_at(suite.horizon), suite.ldp_tol, batch_note);
      apply_trend(c, trend_of(suite.trend_horizons, err_at), suite.trend_slack);
      checks.push_back(std::move(c));
    }
  }

  // speeds
  for (int side : {+1, -1}) {
    const std::string quantity = side > 0 ? "R_n/n" : "L_n/n";
    if (main_error) {
      checks.push_back(make.error("T3.4", quantity, *main_error));
      continue;
    }
    const double predicted = side > 0 ? table.speed_right() : table.speed_left();
    auto value = [&](const MainObservation& o, std::size_t n) {
      return side > 0 ? o.right_speed.at(n) : o.left_speed.at(n);
    };
    auto err_at = [&](std::size_t n) {
      return median_over([&](const MainObservation& o) { return abs_error(value(o, n), predicted); });
    };
    TheoremCheck c = make.compare("T3.4", quantity, predicted,
                                  median_over([&](const MainObservation& o) { return value(o, suite.horizon); }),
                                  err_at(suite.horizon), suite.speed_tol, batch_note);
    apply_trend(c, trend_of(suite.trend_horizons, err_at), suite.trend_slack);
    checks.push_back(std::move(c));
  }

  // normalized quenched LDP
  {
    const std::string quantity = "normalized_ldp_slope(A=[" + fmt(x) + ",inf))";
    if (!all_offspring_at_least_two(model)) {
      checks.push_back(make.skip("T5.1", quantity, "requires P_xi(N <= 1) = 0 almost surely"));
    } else if (main_error) {
      checks.push_back(make.error("T5.1", quantity, *main_error));
    } else if (ldp_hi < ldp_lo + 1) {
      checks.push_back(make.skip("T5.1", quantity, "suite horizon leaves fewer than 2 generations for the slope"));
    } else {
      std::vector<double> ns, logs;
      bool empty = false;
      for (std::size_t n = ldp_lo; n <= ldp_hi; ++n) {
        long double sum = 0.0L;
        for (const auto& o : main) sum += o.tail_fraction.at(n);
        if (sum == 0.0L) empty = true;
        ns.push_back(static_cast<double>(n));
        logs.push_back(empty ? -kInf : static_cast<double>(std::log(sum / main.size())));
      }
      const double e_log_m = model.mean_log_offspring();
      const double upper = -table.rate(x) - e_log_m;
      const double lower = -table.tilde_rate(x) - e_log_m;
      const double measured = empty ? -kInf : regression_slope(ns, logs);
      double error;
      if (std::isinf(measured) || std::isinf(upper)) {
        error = measured == upper || measured == lower ? 0.0 : kInf;
      } else {
        error = measured > upper ? measured - upper : (measured < lower ? lower - measured : 0.0);
      }
      checks.push_back(make.compare("T5.1", quantity, upper, measured, error, suite.normalized_ldp_tol,
                                    "band [" + fmt(lower) + ", " + fmt(upper) + "]; least-squares slope of log mean "
                                    "ratio over n=" + std::to_string(ldp_lo) + ".." + std::to_string(ldp_hi) + ", " +
                                    std::to_string(suite.replicas) + " replicas"));
    }
  }

  // quenched-mean CLT (exact)
  {
    const std::string quantity = "quenched_mean_cdf_sup_gap";
    if (degenerate) {
      checks.push_back(make.skip("T9.1", quantity, "degenerate normalizer b_n = 0"));
    } else {
      try {
        const Normalizers norm = moments.normalizers(suite.horizon);
        const auto law = DisplacementSumLaw::quenched(xi, suite.horizon);
        double sup = 0.0;
        for (double z : grid(-4.0, 4.0, 0.05))
          sup = std::max(sup, std::abs(law.cdf(norm.scale * z + norm.center) - normal_cdf(z)));
        checks.push_back(make.direct("T9.1", quantity, 0.0, sup, suite.clt_tol,
                                     "closed-form convolution vs Phi on [-4,4], n=" + std::to_string(suite.horizon)));
      } catch (const Error& e) {
        checks.push_back(make.error("T9.1", quantity, e.what()));
      }
    }
  }

  // annealed CLTs
  {
    const std::string q2 = "annealed_cdf_ks";
    const std::string q3 = "annealed_normalized_cdf_ks";
    std::optional<std::string> gate;
    std::optional<AnnealedParams> ap;
    if (!iid) {
      gate = "requires an i.i.d. environment";
    } else {
      ap.emplace(model);
      if (!(ap->sigma2_bar() > 0.0) || !(ap->sigma2_bar_prime() > 0.0)) gate = "degenerate annealed variance";
    }
    if (gate) {
      checks.push_back(make.skip("T9.2", q2, *gate));
      checks.push_back(make.skip("T9.3", q3, *gate));
    } else {
      const std::size_t n = suite.annealed_n;
      const double nn = static_cast<double>(n);
      SummaryRequest req_mean, req_norm;
      req_mean.cdf_x = req_norm.cdf_x = grid(-4.0, 4.0, 0.01);
      req_mean.cdf_normalizers = {ap->mu_bar() * nn, std::sqrt(ap->sigma2_bar() * nn)};
      req_norm.cdf_normalizers = {ap->mu_bar_prime() * nn, std::sqrt(ap->sigma2_bar_prime() * nn)};
      std::vector<AnnealedObservation> obs(suite.annealed_replicas);
      try {
        SimConfig sim;
        sim.horizon = n;
        sim.particle_cap = suite.particle_cap;
        sim.seed = seed;
        parallel_for(suite.annealed_replicas, threads, [&](std::size_t r) {
          const auto stream = static_cast<std::uint32_t>(r + 1);
          const EnvRealization env = sample_environment(model, n, seed, stream);
          const QuenchedMoments m = quenched_moments(env, {}, n);
          run_tree(env, sim, kAnnealedBatchOffset + static_cast<std::uint32_t>(r), [&](const GenerationSnapshot& snap) {
            if (snap.n != n) return;
            obs[r].mean = summarize_replica(static_cast<std::uint32_t>(r), stream, snap, m, req_mean);
            obs[r].normalized = summarize_replica(static_cast<std::uint32_t>(r), stream, snap, m, req_norm);
          });
        });
        std::vector<ReplicaSummary> s_mean, s_norm;
        for (auto& o : obs) {
          s_mean.push_back(std::move(o.mean));
          s_norm.push_back(std::move(o.normalized));
        }
        const auto phi = normal_cdf_on(req_mean.cdf_x);
        const auto a2 = aggregate(AggregateMode::annealed_mean, s_mean, AggregateQuantity::cdf, phi);
        const auto a3 = aggregate(AggregateMode::annealed_normalized, s_norm, AggregateQuantity::cdf, phi);
        const std::string note = std::to_string(suite.annealed_replicas) + " fresh-environment replicas, n=" +
                                 std::to_string(n) + ", grid [-4,4] step 0.01";
        checks.push_back(make.direct("T9.2", q2, 0.0, *a2.ks, suite.annealed_clt_tol,
                                     note + ", weights Z_n(R), mu_bar=" + fmt(ap->mu_bar()) +
                                         ", sigma2_bar=" + fmt(ap->sigma2_bar())));
        checks.push_back(make.direct("T9.3", q3, 0.0, *a3.ks, suite.annealed_clt_tol,
                                     note + ", weights Z_n(R)/P_n, mu_bar'=" + fmt(ap->mu_bar_prime()) +
                                         ", sigma2_bar'=" + fmt(ap->sigma2_bar_prime())));
      } catch (const Error& e) {
        checks.push_back(make.error("T9.2", q2, e.what()));
        checks.push_back(make.error("T9.3", q3, e.what()));
      }
    }
  }

  // single-tree CLT, LLT, conditioned CLT
  {
    const std::string quantity = "ks_to_normal";
    std::optional<TheoremCheck> clt;
    if (degenerate) {
      clt = make.skip("T10.2", quantity, "degenerate normalizer b_n = 0");
    } else if (main_error) {
      clt = make.error("T10.2", quantity, *main_error);
    } else {
      clt = make.direct("T10.2", quantity, 0.0, main.front().ks, suite.clt_tol,
                        "single tree (replica 0), n=" + std::to_string(suite.horizon) +
                            ", exact sup over jumps; median over replicas " +
                            fmt(median_over([](const MainObservation& o) { return o.ks; })));
    }
    checks.push_back(*clt);

    const std::string id = "T10.4/C10.5";
    const std::string hq = "(h=" + fmt(suite.llt_h) + ")";
    if (moments.lattice) {
      checks.push_back(make.skip(id, "llt_sup_gap" + hq, "requires a non-lattice displacement law"));
      checks.push_back(make.skip(id, "llt_center_window" + hq, "requires a non-lattice displacement law"));
    } else if (degenerate) {
      checks.push_back(make.skip(id, "llt_sup_gap" + hq, "degenerate normalizer b_n = 0"));
      checks.push_back(make.skip(id, "llt_center_window" + hq, "degenerate normalizer b_n = 0"));
    } else if (main_error) {
      checks.push_back(make.error(id, "llt_sup_gap" + hq, *main_error));
      checks.push_back(make.error(id, "llt_center_window" + hq, *main_error));
    } else {
      const std::string note = "single tree (replica 0), n=" + std::to_string(suite.horizon);
      checks.push_back(make.direct(id, "llt_sup_gap" + hq, 0.0, main.front().llt_sup, suite.llt_sup_tol,
                                   note + ", grid a_n +- 4 b_n step 0.1 b_n"));
      checks.push_back(make.direct(id, "llt_center_window" + hq, suite.llt_h * normal_pdf(0.0), main.front().llt_center,
                                   suite.llt_center_tol, note + ", window (a_n, a_n + h)"));
    }

    TheoremCheck conditioned = *clt;
    conditioned.theorem = "T12.1";
    const std::string identity =
        "identical to T10.2: every supported offspring law has N >= 1, so survival is certain and conditioning is vacuous";
    conditioned.note = conditioned.note.empty() ? identity : identity + "; " + conditioned.note;
    checks.push_back(std::move(conditioned));
  }

  // martingale normalization
  {
    const std::string q0 = "mean W_n";
    const std::string qt = "mean W_n(t=" + fmt(suite.martingale_t) + ")";
    try {
      SimConfig sim;
      sim.horizon = suite.martingale_n;
      sim.particle_cap = suite.particle_cap;
      sim.seed = seed;
      sim.t_grid = {suite.martingale_t};
      std::vector<double> w(suite.martingale_replicas), wt(suite.martingale_replicas);
      parallel_for(suite.martingale_replicas, threads, [&](std::size_t r) {
        run_tree(xi, sim, kMartingaleBatchOffset + static_cast<std::uint32_t>(r), [&](const GenerationSnapshot& snap) {
          if (snap.n != suite.martingale_n) return;
          w[r] = snap.w_n;
          wt[r] = snap.w_n_t[0];
        });
      });
      const std::string note = std::to_string(suite.martingale_replicas) + " replicas, n=" +
                               std::to_string(suite.martingale_n) + ", tolerance " + fmt(suite.martingale_se_factor) +
                               " standard errors";
      for (const auto& [quantity, values] : {std::pair{q0, &w}, std::pair{qt, &wt}}) {
        const Estimate e = mean_and_se(*values);
        checks.push_back(make.compare("MART", quantity, 1.0, e.mean, std::abs(e.mean - 1.0),
                                      suite.martingale_se_factor * e.standard_error,
                                      note + ", SE=" + fmt(e.standard_error)));
      }
    } catch (const Error& e) {
      checks.push_back(make.error("MART", q0, e.what()));
      checks.push_back(make.error("MART", qt, e.what()));
    }
  }

  return report;
}

nlohmann::ordered_json to_json(const SuiteReport& report) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["kind"] = "verify_report";
  j["config_id"] = report.config_id;
  j["seed"] = report.seed;
  j["streams"] = {
      {"quenched_environment_stream", kQuenchedEnvironmentStream},
      {"annealed_environment_streams", "replica + 1"},
      {"main_batch_replica_offset", kMainBatchOffset},
      {"annealed_batch_replica_offset", kAnnealedBatchOffset},
      {"martingale_batch_replica_offset", kMartingaleBatchOffset},
  };
  j["suite"] = suite_to_json(report.suite);
  j["summary"] = {
      {"total", report.checks.size()},
      {"pass", report.count(Verdict::pass)},
      {"fail", report.count(Verdict::fail)},
      {"skip", report.count(Verdict::skip)},
      {"error", report.count(Verdict::error)},
  };
  auto& checks = j["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : report.checks) {
    nlohmann::ordered_json cj;
    cj["theorem"] = c.theorem;
    cj["config_id"] = c.config_id;
    cj["quantity"] = c.quantity;
    cj["predicted"] = json_number(c.predicted);
    cj["measured"] = json_number(c.measured);
    cj["error"] = json_number(c.error);
    cj["tolerance"] = json_number(c.tolerance);
    cj["verdict"] = to_string(c.verdict);
    cj["note"] = c.note;
    auto& trend = cj["trend"] = nlohmann::ordered_json::array();
    for (const auto& p : c.trend) trend.push_back({{"n", p.n}, {"error", json_number(p.error)}});
    checks.push_back(std::move(cj));
  }
  return j;
}

SuiteReport report_from_json(const nlohmann::ordered_json& j) {
  try {
    SuiteReport report;
    report.config_id = j.at("config_id").get<std::string>();
    report.seed = j.at("seed").get<std::uint64_t>();
    report.suite = suite_from_json(j.at("suite"));
    for (const auto& cj : j.at("checks")) {
      TheoremCheck c;
      c.theorem = cj.at("theorem").get<std::string>();
      c.config_id = cj.at("config_id").get<std::string>();
      c.quantity = cj.at("quantity").get<std::string>();
      c.predicted = json_to_double(cj.at("predicted"));
      c.measured = json_to_double(cj.at("measured"));
      c.error = json_to_double(cj.at("error"));
      c.tolerance = json_to_double(cj.at("tolerance"));
      c.verdict = verdict_from_string(cj.at("verdict").get<std::string>());
      c.note = cj.at("note").get<std::string>();
      for (const auto& p : cj.at("trend")) c.trend.push_back({p.at("n").get<std::size_t>(), json_to_double(p.at("error"))});
      report.checks.push_back(std::move(c));
    }
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed report JSON: ") + e.what());
  }
}

std::string render_text(const SuiteReport& report) {
  std::ostringstream out;
  out << "verification report: " << report.config_id << " (seed " << report.seed << ")\n";
  for (const auto& c : report.checks) {
    out << to_string(c.verdict) << "  " << c.theorem << "  " << c.quantity;
    if (c.verdict == Verdict::pass || c.verdict == Verdict::fail) {
      out << "  predicted=" << fmt(c.predicted) << " measured=" << fmt(c.measured) << " error=" << fmt(c.error)
          << " tol=" << fmt(c.tolerance);
    }
    if (!c.note.empty()) out << "  [" << c.note << "]";
    out << '\n';
  }
  out << report.checks.size() << " checks: " << report.count(Verdict::pass) << " pass, "
      << report.count(Verdict::fail) << " fail, " << report.count(Verdict::skip) << " skip, "
      << report.count(Verdict::error) << " error\n";
  return out.str();
}

}  // namespace brwre

#include "brwre/analytic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

#include "brwre/errors.hpp"

namespace brwre {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kProbePoints = 257;
constexpr double kRhoTolerance = 1e-8;

/// Bisection for an increasing function g on [lo, hi] with g(lo) <= 0 <= g(hi),
/// run until the bracket stops shrinking. Returns the endpoint with smaller |g|.
template <class G>
double bisect_increasing(G&& g, double lo, double hi) {
  double g_lo = g(lo), g_hi = g(hi);
  for (int iter = 0; iter < 400; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double g_mid = g(mid);
    if (g_mid == 0.0) return mid;
    if (g_mid < 0.0) {
      lo = mid;
      g_lo = g_mid;
    } else {
      hi = mid;
      g_hi = g_mid;
    }
  }
  return std::abs(g_lo) <= std::abs(g_hi) ? lo : hi;
}

double log_sum_exp(const std::vector<double>& logs) {
  const double top = *std::max_element(logs.begin(), logs.end());
  if (!std::isfinite(top)) return top;
  long double sum = 0.0L;
  for (double v : logs) sum += std::exp(v - top);
  return top + static_cast<double>(std::log(sum));
}

/// Softmax-weighted average of `values` with log-weights `logs`.
double weighted_by_logs(const std::vector<double>& logs, const std::vector<double>& values) {
  const double top = *std::max_element(logs.begin(), logs.end());
  long double num = 0.0L, den = 0.0L;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const long double w = std::exp(logs[i] - top);
    num += w * values[i];
    den += w;
  }
  return static_cast<double>(num / den);
}

std::vector<std::pair<double, EnvState>> weighted_states(const EnvironmentModel& model) {
  std::vector<std::pair<double, EnvState>> terms;
  for (std::size_t i = 0; i < model.states().size(); ++i)
    if (model.stationary()[i] > 0.0) terms.emplace_back(model.stationary()[i], model.states()[i]);
  return terms;
}

}  // namespace

double legendre(const ConvexFunction& f, double x, Bracket bracket) {
  if (!(bracket.lo < bracket.hi)) throw UsageError("legendre bracket must satisfy lo < hi");

  double previous = f.derivative(bracket.lo);
  for (int i = 1; i < kProbePoints; ++i) {
    const double t = bracket.lo + (bracket.hi - bracket.lo) * i / (kProbePoints - 1);
    const double slope = f.derivative(t);
    if (slope < previous - 1e-9 * std::max(1.0, std::abs(previous))) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "legendre: derivative decreases between probe points t=" << t - (bracket.hi - bracket.lo) / (kProbePoints - 1)
          << " (f'=" << previous << ") and t=" << t << " (f'=" << slope << "); input is not convex";
      throw NumericError(msg.str());
    }
    previous = slope;
  }

  const double tol = 1e-10 * std::max(1.0, std::abs(x));
  const double slope_lo = f.derivative(bracket.lo);
  const double slope_hi = f.derivative(bracket.hi);
  if (x < slope_lo - tol || x > slope_hi + tol) return kInf;

  double t_star;
  if (x <= slope_lo) {
    t_star = bracket.lo;
  } else if (x >= slope_hi) {
    t_star = bracket.hi;
  } else {
    t_star = bisect_increasing([&](double t) { return f.derivative(t) - x; }, bracket.lo, bracket.hi);
  }
  if (std::abs(f.derivative(t_star) - x) > tol) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "legendre: could not refine slope " << x << " (f'(t*)=" << f.derivative(t_star) << " at t*=" << t_star << ")";
    throw NumericError(msg.str());
  }
  return x * t_star - f.value(t_star);
}

// ---------------------------------------------------------------------------

LogMomentFunction::LogMomentFunction(const EnvironmentModel& model) : terms_(weighted_states(model)) {
  for (const auto& [w, s] : terms_) quadratic_ = quadratic_ && is_gaussian_family(s.displacement());
}

double LogMomentFunction::value(double t) const {
  long double total = 0.0L;
  for (const auto& [w, s] : terms_) total += static_cast<long double>(w) * log_laplace_m(s, t);
  return static_cast<double>(total);
}

double LogMomentFunction::derivative(double t) const {
  long double total = 0.0L;
  for (const auto& [w, s] : terms_) total += static_cast<long double>(w) * log_laplace_m_prime(s, t);
  return static_cast<double>(total);
}

double LogMomentFunction::rho(double t) const {
  long double total = 0.0L;
  for (const auto& [w, s] : terms_)
    total += static_cast<long double>(w) *
             (displacement_tilted_gap(s.displacement(), t) - s.log_mean_offspring());
  return static_cast<double>(total);
}

double LogMomentFunction::slope_limit(int sign) const {
  long double total = 0.0L;
  for (const auto& [w, s] : terms_) {
    const double limit = displacement_slope_limit(s.displacement(), sign);
    if (std::isinf(limit)) return limit;
    total += static_cast<long double>(w) * limit;
  }
  return static_cast<double>(total);
}

ConvexFunction LogMomentFunction::as_convex() const {
  auto self = std::make_shared<const LogMomentFunction>(*this);
  return {[self](double t) { return self->value(t); }, [self](double t) { return self->derivative(t); }};
}

double lambda_of_t(const EnvironmentModel& model, double t) { return LogMomentFunction(model).value(t); }

double lambda_prime_of_t(const EnvironmentModel& model, double t) {
  return LogMomentFunction(model).derivative(t);
}

CriticalTemperatures critical_temperatures(const LogMomentFunction& lambda) {
  const double rho0 = lambda.rho(0.0);
  if (!(rho0 < 0.0))
    throw ConfigError("rho(0) = -E log m0 = " + std::to_string(rho0) + " >= 0; model is not supercritical",
                      "environment");

  auto search = [&](int sign) {
    // rho(sign * s) is increasing in s >= 0
    auto g = [&](double s) { return lambda.rho(sign * s); };
    double lo = 0.0, hi = 1.0;
    while (g(hi) < 0.0 && hi < kMaxTemperature) {
      lo = hi;
      hi *= 2.0;
    }
    if (g(hi) < 0.0) return sign * kInf;
    const double root = sign * bisect_increasing(g, lo, hi);
    if (std::abs(lambda.rho(root)) > kRhoTolerance)
      throw NumericError("critical temperature search did not converge: rho(" + std::to_string(root) +
                         ") = " + std::to_string(lambda.rho(root)));
    return root;
  };
  return {search(-1), search(+1)};
}

// ---------------------------------------------------------------------------

RateFunctionTable::RateFunctionTable(const EnvironmentModel& model, std::vector<double> t_grid)
    : t_grid_(std::move(t_grid)), log_moment_(model), critical_(critical_temperatures(log_moment_)) {
  lambda_.reserve(t_grid_.size());
  lambda_prime_.reserve(t_grid_.size());
  rho_.reserve(t_grid_.size());
  for (double t : t_grid_) {
    lambda_.push_back(log_moment_.value(t));
    lambda_prime_.push_back(log_moment_.derivative(t));
    rho_.push_back(log_moment_.rho(t));
  }
  speed_left_ = std::isinf(critical_.t_minus) ? log_moment_.slope_limit(-1)
                                              : log_moment_.derivative(critical_.t_minus);
  speed_right_ = std::isinf(critical_.t_plus) ? log_moment_.slope_limit(+1)
                                              : log_moment_.derivative(critical_.t_plus);
}

std::vector<double> RateFunctionTable::tilde_lambda_values() const {
  std::vector<double> out;
  out.reserve(t_grid_.size());
  for (double t : t_grid_) out.push_back(tilde_lambda(t));
  return out;
}

double RateFunctionTable::rate(double x) const {
  return legendre(log_moment_.as_convex(), x, {-kMaxTemperature, kMaxTemperature});
}

double RateFunctionTable::tilde_lambda(double t) const {
  if (t >= critical_.t_plus) return t * speed_right_;
  if (t <= critical_.t_minus) return t * speed_left_;
  return log_moment_.value(t);
}

double RateFunctionTable::tilde_lambda_prime(double t) const {
  if (t >= critical_.t_plus) return speed_right_;
  if (t <= critical_.t_minus) return speed_left_;
  return log_moment_.derivative(t);
}

double RateFunctionTable::tilde_rate(double x) const {
  if (x < speed_left_ || x > speed_right_) return kInf;
  return rate(x);
}

double free_energy_limit(const RateFunctionTable& table, double t) { return table.tilde_lambda(t); }

std::pair<double, double> speeds(const RateFunctionTable& table) {
  return {table.speed_left(), table.speed_right()};
}

// ---------------------------------------------------------------------------

AnnealedParams::AnnealedParams(const EnvironmentModel& model) {
  if (model.kind() == EnvironmentKind::markov)
    throw UnsupportedError("annealed parameters need an i.i.d. environment (got a markov chain)");
  terms_ = weighted_states(model);

  long double mass = 0.0L, first = 0.0L, mu_prime = 0.0L;
  for (const auto& [w, s] : terms_) {
    mass += w * s.mean_offspring();
    first += w * s.mean_offspring() * s.mu();
    mu_prime += w * s.mu();
  }
  mu_bar_ = static_cast<double>(first / mass);
  mu_bar_prime_ = static_cast<double>(mu_prime);

  long double second = 0.0L, second_prime = 0.0L;
  for (const auto& [w, s] : terms_) {
    const double shift = s.mu() - mu_bar_;
    const double shift_prime = s.mu() - mu_bar_prime_;
    second += w * s.mean_offspring() * (s.sigma2() + shift * shift);
    second_prime += w * (s.sigma2() + shift_prime * shift_prime);
  }
  sigma2_bar_ = static_cast<double>(second / mass);
  sigma2_bar_prime_ = static_cast<double>(second_prime);
}

double AnnealedParams::lambda_a(double t) const {
  std::vector<double> logs;
  for (const auto& [w, s] : terms_) logs.push_back(std::log(w) + log_laplace_m(s, t));
  return log_sum_exp(logs);
}

double AnnealedParams::lambda_a_prime(double t) const {
  std::vector<double> logs, slopes;
  for (const auto& [w, s] : terms_) {
    logs.push_back(std::log(w) + log_laplace_m(s, t));
    slopes.push_back(log_laplace_m_prime(s, t));
  }
  return weighted_by_logs(logs, slopes);
}

double AnnealedParams::bar_lambda_a(double t) const {
  std::vector<double> logs;
  for (const auto& [w, s] : terms_) logs.push_back(std::log(w) + displacement_log_mgf(s.displacement(), t));
  return log_sum_exp(logs);
}

double AnnealedParams::bar_lambda_a_prime(double t) const {
  std::vector<double> logs, slopes;
  for (const auto& [w, s] : terms_) {
    logs.push_back(std::log(w) + displacement_log_mgf(s.displacement(), t));
    slopes.push_back(displacement_tilted_mean(s.displacement(), t));
  }
  return weighted_by_logs(logs, slopes);
}

ConvexFunction AnnealedParams::lambda_a_function() const {
  auto self = std::make_shared<const AnnealedParams>(*this);
  return {[self](double t) { return self->lambda_a(t); }, [self](double t) { return self->lambda_a_prime(t); }};
}

ConvexFunction AnnealedParams::bar_lambda_a_function() const {
  auto self = std::make_shared<const AnnealedParams>(*this);
  return {[self](double t) { return self->bar_lambda_a(t); },
          [self](double t) { return self->bar_lambda_a_prime(t); }};
}

}  // namespace brwre

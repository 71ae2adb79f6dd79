#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "brwre/env_model.hpp"

namespace brwre {

/// A differentiable convex function given by value and derivative evaluators.
struct ConvexFunction {
  std::function<double(double)> value;
  std::function<double(double)> derivative;
};

struct Bracket {
  double lo = -64.0;
  double hi = 64.0;
};

/// Largest |t| searched for critical temperatures and conjugate maximizers.
/// Beyond it t_+- are reported as infinite.
inline constexpr double kMaxTemperature = 64.0;

/// Convex conjugate sup_t { x t - f(t) } restricted to `bracket`.
///
/// The maximizer is located by bisection on f'(t) = x and refined until
/// |f'(t*) - x| <= 1e-10 max(1, |x|). Slopes outside [f'(lo), f'(hi)] give
/// +infinity. A decreasing f' on the 257-point probe grid raises NumericError.
double legendre(const ConvexFunction& f, double x, Bracket bracket = {});

/// Lambda(t) = E log m0(t), an exact weighted sum over environment states.
class LogMomentFunction {
 public:
  explicit LogMomentFunction(const EnvironmentModel& model);

  double value(double t) const;
  double derivative(double t) const;
  /// rho(t) = t Lambda'(t) - Lambda(t), summed per state without cancellation.
  double rho(double t) const;
  /// Lambda'(+inf) for sign > 0, Lambda'(-inf) for sign < 0.
  double slope_limit(int sign) const;
  /// True when every state is Gaussian or a point mass, so Lambda is quadratic.
  bool quadratic() const noexcept { return quadratic_; }

  /// Evaluators holding their own copy; safe to outlive this object.
  ConvexFunction as_convex() const;

 private:
  std::vector<std::pair<double, EnvState>> terms_;
  bool quadratic_ = true;
};

double lambda_of_t(const EnvironmentModel& model, double t);
double lambda_prime_of_t(const EnvironmentModel& model, double t);

struct CriticalTemperatures {
  double t_minus;  // -inf when rho < 0 on [-64, 0]
  double t_plus;   // +inf when rho < 0 on [0, 64]
};

/// Roots of rho by bisection over doubling brackets up to |t| = 64.
/// Throws ConfigError when rho(0) >= 0 (not supercritical).
CriticalTemperatures critical_temperatures(const LogMomentFunction& lambda);

/// Lambda, Lambda', rho on a t-grid, the critical temperatures and speeds, and
/// evaluators for Lambda*, the free-energy limit and its conjugate.
class RateFunctionTable {
 public:
  RateFunctionTable(const EnvironmentModel& model, std::vector<double> t_grid);

  const std::vector<double>& t_grid() const noexcept { return t_grid_; }
  const std::vector<double>& lambda() const noexcept { return lambda_; }
  const std::vector<double>& lambda_prime() const noexcept { return lambda_prime_; }
  const std::vector<double>& rho() const noexcept { return rho_; }
  std::vector<double> tilde_lambda_values() const;

  double t_minus() const noexcept { return critical_.t_minus; }
  double t_plus() const noexcept { return critical_.t_plus; }
  double speed_left() const noexcept { return speed_left_; }
  double speed_right() const noexcept { return speed_right_; }
  bool closed_form() const noexcept { return log_moment_.quadratic(); }

  const LogMomentFunction& log_moment() const noexcept { return log_moment_; }

  double lambda_at(double t) const { return log_moment_.value(t); }
  double lambda_prime_at(double t) const { return log_moment_.derivative(t); }
  /// Lambda*(x).
  double rate(double x) const;
  /// The three-branch free-energy limit.
  double tilde_lambda(double t) const;
  double tilde_lambda_prime(double t) const;
  /// Conjugate of tilde_lambda: Lambda* on [speed_left, speed_right], +inf outside.
  double tilde_rate(double x) const;

 private:
  std::vector<double> t_grid_;
  LogMomentFunction log_moment_;
  std::vector<double> lambda_;
  std::vector<double> lambda_prime_;
  std::vector<double> rho_;
  CriticalTemperatures critical_;
  double speed_left_;
  double speed_right_;
};

double free_energy_limit(const RateFunctionTable& table, double t);

/// (lim L_n / n, lim R_n / n) = (Lambda'(t_-), Lambda'(t_+)).
std::pair<double, double> speeds(const RateFunctionTable& table);

/// Annealed log-moment functions and CLT parameters of an i.i.d. environment.
class AnnealedParams {
 public:
  /// Throws UnsupportedError for Markov environments.
  explicit AnnealedParams(const EnvironmentModel& model);

  /// Lambda_a(t) = log E m0(t).
  double lambda_a(double t) const;
  double lambda_a_prime(double t) const;
  /// bar Lambda_a(t) = log E[m0(t) / m0].
  double bar_lambda_a(double t) const;
  double bar_lambda_a_prime(double t) const;

  ConvexFunction lambda_a_function() const;
  ConvexFunction bar_lambda_a_function() const;

  double mu_bar() const noexcept { return mu_bar_; }
  double sigma2_bar() const noexcept { return sigma2_bar_; }
  double mu_bar_prime() const noexcept { return mu_bar_prime_; }
  double sigma2_bar_prime() const noexcept { return sigma2_bar_prime_; }

 private:
  std::vector<std::pair<double, EnvState>> terms_;
  double mu_bar_ = 0.0;
  double sigma2_bar_ = 0.0;
  double mu_bar_prime_ = 0.0;
  double sigma2_bar_prime_ = 0.0;
};

inline AnnealedParams annealed_params(const EnvironmentModel& model) { return AnnealedParams(model); }

}  // namespace brwre

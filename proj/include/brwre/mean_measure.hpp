#pragma once

#include <cstddef>
#include <vector>

#include "brwre/env_model.hpp"

namespace brwre {

/// Exact law of L^(0) + ... + L^(n-1) for independent single-step displacements:
/// one Gaussian component convolved with finitely many atoms.
class DisplacementSumLaw {
 public:
  /// Steps drawn from the displacement laws of xi_0 .. xi_{n-1}. Two-point
  /// steps are enumerated exactly; refused (UnsupportedError) beyond n = 30
  /// or 10^6 atoms.
  static DisplacementSumLaw quenched(const EnvRealization& realization, std::size_t n);
  /// Same, with per-state step counts given directly.
  static DisplacementSumLaw from_counts(const std::vector<EnvState>& states,
                                        const std::vector<std::size_t>& counts);

  double log_upper_tail(double y) const;  // log P(S >= y)
  double log_lower_tail(double y) const;  // log P(S <= y)
  double cdf(double y) const;

  double gaussian_mean() const noexcept { return mean_; }
  double gaussian_variance() const noexcept { return variance_; }
  std::size_t atom_count() const noexcept { return atom_value_.size(); }

 private:
  double mean_ = 0.0;
  double variance_ = 0.0;
  std::vector<double> atom_value_{0.0};
  std::vector<double> atom_log_prob_{0.0};
};

/// (1/n) log E_xi Z_n(n[x, inf)); -inf when the interval carries no mass.
double quenched_mean_ldp_exact(const EnvRealization& realization, double x, std::size_t n);

/// E_xi Z_n((-inf, y]) / P_n, the quenched-mean distribution function.
double quenched_mean_cdf_exact(const EnvRealization& realization, std::size_t n, double y);

enum class AnnealedMeasure {
  mean,        // E Z_n(.)
  normalized,  // E[Z_n(.) / P_n]
};

/// (1/n) log of the annealed measure of n[x, inf), by exact enumeration of
/// state compositions. i.i.d. or constant environments with Gaussian-family
/// displacements only.
double annealed_mean_ldp_exact(const EnvironmentModel& model, double x, std::size_t n,
                               AnnealedMeasure measure);

}  // namespace brwre

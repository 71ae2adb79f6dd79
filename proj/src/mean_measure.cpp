#include "brwre/mean_measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "brwre/errors.hpp"
#include "brwre/normal.hpp"

namespace brwre {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::size_t kMaxTwoPointSteps = 30;
constexpr std::size_t kMaxAtoms = 1'000'000;
constexpr std::size_t kMaxCompositions = 5'000'000;

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double top = std::max(a, b);
  return top + std::log1p(std::exp(-std::abs(a - b)));
}

double log_binomial(std::size_t n, std::size_t k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

/// log p^k, with 0^0 = 1.
double log_power(double p, std::size_t k) { return k == 0 ? 0.0 : k * std::log(p); }

double log_sum(const std::vector<double>& logs) {
  double top = kNegInf;
  for (double v : logs) top = std::max(top, v);
  if (top == kNegInf) return kNegInf;
  long double sum = 0.0L;
  for (double v : logs) sum += std::exp(v - top);
  return top + static_cast<double>(std::log(sum));
}

}  // namespace

DisplacementSumLaw DisplacementSumLaw::from_counts(const std::vector<EnvState>& states,
                                                   const std::vector<std::size_t>& counts) {
  DisplacementSumLaw law;
  long double mean = 0.0L, variance = 0.0L;
  std::size_t two_point_steps = 0;
  for (std::size_t s = 0; s < states.size(); ++s) {
    const std::size_t c = counts.at(s);
    if (c == 0) continue;
    const auto& disp = states[s].displacement();
    if (const auto* g = std::get_if<Gaussian>(&disp)) {
      mean += static_cast<long double>(c) * g->mean;
      variance += static_cast<long double>(c) * g->variance;
    } else if (const auto* m = std::get_if<PointMass>(&disp)) {
      mean += static_cast<long double>(c) * m->c;
    } else {
      const auto& tp = std::get<TwoPoint>(disp);
      two_point_steps += c;
      if (two_point_steps > kMaxTwoPointSteps)
        throw UnsupportedError("exact mean measure with two-point steps is limited to n <= 30");
      std::vector<double> values, log_probs;
      for (std::size_t k = 0; k <= c; ++k) {
        if ((tp.p == 0.0 && k > 0) || (tp.p == 1.0 && k < c)) continue;
        const double step_value = tp.d * (2.0 * static_cast<double>(k) - static_cast<double>(c));
        const double step_log = log_binomial(c, k) + log_power(tp.p, k) + log_power(1.0 - tp.p, c - k);
        for (std::size_t a = 0; a < law.atom_value_.size(); ++a) {
          values.push_back(law.atom_value_[a] + step_value);
          log_probs.push_back(law.atom_log_prob_[a] + step_log);
        }
      }
      if (values.size() > kMaxAtoms)
        throw UnsupportedError("exact mean measure exceeds 10^6 atoms");
      law.atom_value_ = std::move(values);
      law.atom_log_prob_ = std::move(log_probs);
    }
  }
  law.mean_ = static_cast<double>(mean);
  law.variance_ = static_cast<double>(variance);
  return law;
}

DisplacementSumLaw DisplacementSumLaw::quenched(const EnvRealization& realization, std::size_t n) {
  if (n > realization.size()) throw UsageError("generation exceeds the environment horizon");
  std::vector<std::size_t> counts(realization.table().size(), 0);
  for (std::size_t i = 0; i < n; ++i) ++counts[realization.index(i)];
  return from_counts(realization.table(), counts);
}

double DisplacementSumLaw::log_upper_tail(double y) const {
  std::vector<double> logs;
  logs.reserve(atom_value_.size());
  const double sd = std::sqrt(variance_);
  for (std::size_t a = 0; a < atom_value_.size(); ++a) {
    const double center = atom_value_[a] + mean_;
    if (sd > 0.0)
      logs.push_back(atom_log_prob_[a] + log_normal_sf((y - center) / sd));
    else if (center >= y)
      logs.push_back(atom_log_prob_[a]);
  }
  return log_sum(logs);
}

double DisplacementSumLaw::log_lower_tail(double y) const {
  std::vector<double> logs;
  logs.reserve(atom_value_.size());
  const double sd = std::sqrt(variance_);
  for (std::size_t a = 0; a < atom_value_.size(); ++a) {
    const double center = atom_value_[a] + mean_;
    if (sd > 0.0)
      logs.push_back(atom_log_prob_[a] + log_normal_cdf((y - center) / sd));
    else if (center <= y)
      logs.push_back(atom_log_prob_[a]);
  }
  return log_sum(logs);
}

double DisplacementSumLaw::cdf(double y) const { return std::exp(log_lower_tail(y)); }

double quenched_mean_ldp_exact(const EnvRealization& realization, double x, std::size_t n) {
  if (n < 1) throw UsageError("quenched_mean_ldp_exact needs n >= 1");
  const auto law = DisplacementSumLaw::quenched(realization, n);
  const double tail = law.log_upper_tail(static_cast<double>(n) * x);
  if (tail == kNegInf) return kNegInf;
  long double log_p = 0.0L;
  for (std::size_t i = 0; i < n; ++i) log_p += realization.state(i).log_mean_offspring();
  return static_cast<double>((log_p + tail) / n);
}

double quenched_mean_cdf_exact(const EnvRealization& realization, std::size_t n, double y) {
  return DisplacementSumLaw::quenched(realization, n).cdf(y);
}

double annealed_mean_ldp_exact(const EnvironmentModel& model, double x, std::size_t n,
                               AnnealedMeasure measure) {
  if (n < 1) throw UsageError("annealed_mean_ldp_exact needs n >= 1");
  if (model.kind() == EnvironmentKind::markov)
    throw UnsupportedError("annealed exact mean measure needs an i.i.d. environment");
  if (!model.all_gaussian_family())
    throw UnsupportedError("annealed exact mean measure needs gaussian or point-mass displacements");

  const auto& states = model.states();
  const auto& weights = model.stationary();
  const std::size_t s_count = states.size();

  // number of compositions of n into s_count parts
  double compositions = 1.0;
  for (std::size_t j = 1; j < s_count; ++j) compositions *= static_cast<double>(n + j) / j;
  if (compositions > kMaxCompositions)
    throw UnsupportedError("annealed exact mean measure: too many state compositions");

  const double y = static_cast<double>(n) * x;
  std::vector<std::size_t> counts(s_count, 0);
  double total = kNegInf;

  auto visit = [&]() {
    double log_weight = std::lgamma(n + 1.0);
    for (std::size_t s = 0; s < s_count; ++s) {
      if (counts[s] > 0 && weights[s] == 0.0) return;
      log_weight += log_power(weights[s], counts[s]) - std::lgamma(counts[s] + 1.0);
      if (measure == AnnealedMeasure::mean) log_weight += counts[s] * states[s].log_mean_offspring();
    }
    const double tail = DisplacementSumLaw::from_counts(states, counts).log_upper_tail(y);
    total = log_add(total, log_weight + tail);
  };

  // enumerate compositions with the last part taking the remainder
  auto recurse = [&](auto&& self, std::size_t s, std::size_t remaining) -> void {
    if (s + 1 == s_count) {
      counts[s] = remaining;
      visit();
      return;
    }
    for (std::size_t c = 0; c <= remaining; ++c) {
      counts[s] = c;
      self(self, s + 1, remaining - c);
    }
  };
  recurse(recurse, 0, n);

  if (total == kNegInf) return kNegInf;
  return total / static_cast<double>(n);
}

}  // namespace brwre

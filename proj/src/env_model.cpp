#include "brwre/env_model.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include "brwre/errors.hpp"

namespace brwre {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double kProbabilityTolerance = 1e-12;
constexpr double kMaxPoissonLambda = 200.0;

void validate(const OffspringLaw& law, const std::string& label) {
  std::visit(overloaded{
                 [&](const Deterministic& d) {
                   if (d.k < 1) throw ConfigError("deterministic offspring needs k >= 1", label);
                 },
                 [&](const ShiftedGeometric& g) {
                   if (!(g.p > 0.0 && g.p <= 1.0))
                     throw ConfigError("shifted geometric needs p in (0, 1]", label);
                 },
                 [&](const PoissonPositive& p) {
                   if (!(p.lambda > 0.0 && p.lambda <= kMaxPoissonLambda))
                     throw ConfigError("positive Poisson needs lambda in (0, 200]", label);
                 },
             },
             law);
}

void validate(const DisplacementLaw& law, const std::string& label) {
  std::visit(overloaded{
                 [&](const PointMass& m) {
                   if (!std::isfinite(m.c)) throw ConfigError("point mass must be finite", label);
                 },
                 [&](const Gaussian& g) {
                   if (!std::isfinite(g.mean) || !(g.variance > 0.0) || !std::isfinite(g.variance))
                     throw ConfigError("gaussian needs finite mean and variance > 0", label);
                 },
                 [&](const TwoPoint& t) {
                   if (!(t.d >= 0.0) || !std::isfinite(t.d))
                     throw ConfigError("two-point needs finite d >= 0", label);
                   if (!(t.p >= 0.0 && t.p <= 1.0))
                     throw ConfigError("two-point needs p in [0, 1]", label);
                 },
             },
             law);
}

void validate_distribution(const std::vector<double>& probs, const std::string& field) {
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError("probabilities must be >= 0", field);
    total += p;
  }
  if (std::abs(total - 1.0) > kProbabilityTolerance)
    throw ConfigError("probabilities must sum to 1 (got " + std::to_string(total) + ")", field);
}

bool irreducible(const std::vector<std::vector<double>>& transition) {
  const std::size_t n = transition.size();
  for (std::size_t start = 0; start < n; ++start) {
    std::vector<bool> seen(n, false);
    std::queue<std::size_t> frontier;
    frontier.push(start);
    seen[start] = true;
    std::size_t reached = 1;
    while (!frontier.empty()) {
      const std::size_t i = frontier.front();
      frontier.pop();
      for (std::size_t j = 0; j < n; ++j) {
        if (transition[i][j] > 0.0 && !seen[j]) {
          seen[j] = true;
          ++reached;
          frontier.push(j);
        }
      }
    }
    if (reached != n) return false;
  }
  return true;
}

std::vector<double> stationary_vector(const std::vector<std::vector<double>>& transition) {
  const auto n = static_cast<Eigen::Index>(transition.size());
  Eigen::MatrixXd system(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      system(i, j) = transition[j][i] - (i == j ? 1.0 : 0.0);
  system.row(n - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(n - 1) = 1.0;
  const Eigen::VectorXd pi = system.fullPivLu().solve(rhs);
  std::vector<double> out(pi.data(), pi.data() + n);
  for (double& v : out) v = std::max(v, 0.0);
  const double total = std::accumulate(out.begin(), out.end(), 0.0);
  for (double& v : out) v /= total;
  return out;
}

std::uint32_t sample_categorical(const std::vector<double>& probs, double u) {
  double cumulative = 0.0;
  for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
    cumulative += probs[i];
    if (u < cumulative) return static_cast<std::uint32_t>(i);
  }
  return static_cast<std::uint32_t>(probs.size() - 1);
}

std::uint32_t sample_offspring(const OffspringLaw& law, RandomStream& stream) {
  return std::visit(
      overloaded{
          [](const Deterministic& d) { return d.k; },
          [&](const ShiftedGeometric& g) -> std::uint32_t {
            if (g.p >= 1.0) return 1;
            const double draws = std::floor(std::log(stream.uniform_pos()) / std::log1p(-g.p));
            constexpr double kMax = std::numeric_limits<std::uint32_t>::max() - 1.0;
            return 1 + static_cast<std::uint32_t>(std::min(draws, kMax));
          },
          [&](const PoissonPositive& p) -> std::uint32_t {
            // inversion over k = 1, 2, ... of the zero-truncated pmf
            const double u = stream.uniform();
            double pmf = p.lambda / std::expm1(p.lambda);
            double cdf = pmf;
            std::uint32_t k = 1;
            const double stop = p.lambda + 60.0 * std::sqrt(p.lambda) + 100.0;
            while (u >= cdf && k < stop) {
              ++k;
              pmf *= p.lambda / k;
              cdf += pmf;
            }
            return k;
          },
      },
      law);
}

double sample_displacement(const DisplacementLaw& law, RandomStream& stream) {
  return std::visit(overloaded{
                        [](const PointMass& m) { return m.c; },
                        [&](const Gaussian& g) { return g.mean + std::sqrt(g.variance) * stream.normal(); },
                        [&](const TwoPoint& t) { return stream.uniform() < t.p ? t.d : -t.d; },
                    },
                    law);
}

}  // namespace

// ---------------------------------------------------------------------------

double offspring_mean(const OffspringLaw& law) {
  return std::visit(overloaded{
                        [](const Deterministic& d) { return static_cast<double>(d.k); },
                        [](const ShiftedGeometric& g) { return 1.0 / g.p; },
                        [](const PoissonPositive& p) { return p.lambda / -std::expm1(-p.lambda); },
                    },
                    law);
}

double displacement_mean(const DisplacementLaw& law) {
  return std::visit(overloaded{
                        [](const PointMass& m) { return m.c; },
                        [](const Gaussian& g) { return g.mean; },
                        [](const TwoPoint& t) { return t.d * (2.0 * t.p - 1.0); },
                    },
                    law);
}

double displacement_variance(const DisplacementLaw& law) {
  return std::visit(overloaded{
                        [](const PointMass&) { return 0.0; },
                        [](const Gaussian& g) { return g.variance; },
                        [](const TwoPoint& t) { return 4.0 * t.d * t.d * t.p * (1.0 - t.p); },
                    },
                    law);
}

// For the two-point law, write the MGF around its dominant atom:
//   t d >= 0:  M = p e^{dt} (1 + q),      q = (1-p)/p e^{-2dt}
//   t d <  0:  M = (1-p) e^{-dt} (1 + r), r = p/(1-p) e^{2dt}
// so every expression below stays finite and cancellation-free.

double displacement_log_mgf(const DisplacementLaw& law, double t) {
  return std::visit(
      overloaded{
          [&](const PointMass& m) { return m.c * t; },
          [&](const Gaussian& g) { return g.mean * t + 0.5 * g.variance * t * t; },
          [&](const TwoPoint& tp) {
            const double x = tp.d * t;
            if (tp.p >= 1.0) return x;
            if (tp.p <= 0.0) return -x;
            if (x >= 0.0) return x + std::log(tp.p) + std::log1p((1.0 - tp.p) / tp.p * std::exp(-2.0 * x));
            return -x + std::log1p(-tp.p) + std::log1p(tp.p / (1.0 - tp.p) * std::exp(2.0 * x));
          },
      },
      law);
}

double displacement_tilted_mean(const DisplacementLaw& law, double t) {
  return std::visit(overloaded{
                        [&](const PointMass& m) { return m.c; },
                        [&](const Gaussian& g) { return g.mean + g.variance * t; },
                        [&](const TwoPoint& tp) {
                          if (tp.p >= 1.0) return tp.d;
                          if (tp.p <= 0.0) return -tp.d;
                          const double x = tp.d * t;
                          if (x >= 0.0) {
                            const double q = (1.0 - tp.p) / tp.p * std::exp(-2.0 * x);
                            return tp.d * (1.0 - q) / (1.0 + q);
                          }
                          const double r = tp.p / (1.0 - tp.p) * std::exp(2.0 * x);
                          return tp.d * (r - 1.0) / (r + 1.0);
                        },
                    },
                    law);
}

double displacement_tilted_gap(const DisplacementLaw& law, double t) {
  return std::visit(overloaded{
                        [&](const PointMass&) { return 0.0; },
                        [&](const Gaussian& g) { return 0.5 * g.variance * t * t; },
                        [&](const TwoPoint& tp) {
                          if (tp.p >= 1.0 || tp.p <= 0.0) return 0.0;
                          const double x = tp.d * t;
                          if (x >= 0.0) {
                            const double q = (1.0 - tp.p) / tp.p * std::exp(-2.0 * x);
                            return -2.0 * x * q / (1.0 + q) - std::log(tp.p) - std::log1p(q);
                          }
                          const double r = tp.p / (1.0 - tp.p) * std::exp(2.0 * x);
                          return 2.0 * x * r / (1.0 + r) - std::log1p(-tp.p) - std::log1p(r);
                        },
                    },
                    law);
}

double displacement_slope_limit(const DisplacementLaw& law, int sign) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return std::visit(overloaded{
                        [&](const PointMass& m) { return m.c; },
                        [&](const Gaussian&) { return sign > 0 ? inf : -inf; },
                        [&](const TwoPoint& tp) {
                          if (sign > 0) return tp.p > 0.0 ? tp.d : -tp.d;
                          return tp.p < 1.0 ? -tp.d : tp.d;
                        },
                    },
                    law);
}

bool is_lattice(const DisplacementLaw& law) { return !std::holds_alternative<Gaussian>(law); }

bool is_gaussian_family(const DisplacementLaw& law) { return !std::holds_alternative<TwoPoint>(law); }

EnvState::EnvState(std::string label, OffspringLaw offspring, DisplacementLaw displacement)
    : label_(std::move(label)), offspring_(offspring), displacement_(displacement) {
  validate(offspring_, label_);
  validate(displacement_, label_);
  mean_offspring_ = offspring_mean(offspring_);
  log_mean_offspring_ = std::log(mean_offspring_);
}

double laplace_m(const EnvState& state, double t) { return std::exp(log_laplace_m(state, t)); }

double laplace_m_prime(const EnvState& state, double t) {
  return laplace_m(state, t) * log_laplace_m_prime(state, t);
}

double log_laplace_m(const EnvState& state, double t) {
  return state.log_mean_offspring() + displacement_log_mgf(state.displacement(), t);
}

double log_laplace_m_prime(const EnvState& state, double t) {
  return displacement_tilted_mean(state.displacement(), t);
}

// ---------------------------------------------------------------------------

EnvironmentModel EnvironmentModel::constant(EnvState state, ModelOptions options) {
  EnvironmentModel model;
  model.kind_ = EnvironmentKind::constant;
  model.states_ = std::make_shared<const std::vector<EnvState>>(std::vector<EnvState>{std::move(state)});
  model.stationary_ = {1.0};
  model.finish(options);
  return model;
}

EnvironmentModel EnvironmentModel::iid(std::vector<EnvState> states, std::vector<double> probabilities,
                                       ModelOptions options) {
  if (states.empty()) throw ConfigError("iid environment needs at least one state", "states");
  if (probabilities.size() != states.size())
    throw ConfigError("need one probability per state", "probabilities");
  validate_distribution(probabilities, "probabilities");
  EnvironmentModel model;
  model.kind_ = EnvironmentKind::iid;
  model.states_ = std::make_shared<const std::vector<EnvState>>(std::move(states));
  model.probabilities_ = probabilities;
  model.stationary_ = std::move(probabilities);
  model.finish(options);
  return model;
}

EnvironmentModel EnvironmentModel::markov(std::vector<EnvState> states,
                                          std::vector<std::vector<double>> transition,
                                          ModelOptions options) {
  if (states.empty()) throw ConfigError("markov environment needs at least one state", "states");
  if (transition.size() != states.size())
    throw ConfigError("transition matrix must be square with one row per state", "transition");
  for (std::size_t i = 0; i < transition.size(); ++i) {
    if (transition[i].size() != states.size())
      throw ConfigError("transition matrix must be square with one row per state", "transition");
    validate_distribution(transition[i], "transition[" + std::to_string(i) + "]");
  }
  if (!irreducible(transition)) throw ConfigError("markov chain is not irreducible", "transition");
  EnvironmentModel model;
  model.kind_ = EnvironmentKind::markov;
  model.states_ = std::make_shared<const std::vector<EnvState>>(std::move(states));
  model.stationary_ = stationary_vector(transition);
  model.transition_ = std::move(transition);
  model.finish(options);
  return model;
}

void EnvironmentModel::finish(const ModelOptions& options) {
  if (options.require_supercritical && !(mean_log_offspring() > 0.0))
    throw ConfigError("environment is not supercritical: E log m0 = " +
                          std::to_string(mean_log_offspring()) + " <= 0",
                      "environment");
}

double EnvironmentModel::mean_log_offspring() const {
  long double total = 0.0L;
  for (std::size_t i = 0; i < states_->size(); ++i)
    total += static_cast<long double>(stationary_[i]) * (*states_)[i].log_mean_offspring();
  return static_cast<double>(total);
}

bool EnvironmentModel::all_gaussian_family() const {
  for (const auto& s : *states_)
    if (!is_gaussian_family(s.displacement())) return false;
  return true;
}

bool EnvironmentModel::any_lattice() const {
  for (const auto& s : *states_)
    if (is_lattice(s.displacement())) return true;
  return false;
}

bool EnvironmentModel::operator==(const EnvironmentModel& other) const {
  return kind_ == other.kind_ && *states_ == *other.states_ && probabilities_ == other.probabilities_ &&
         transition_ == other.transition_;
}

const char* to_string(EnvironmentKind kind) {
  switch (kind) {
    case EnvironmentKind::constant: return "constant";
    case EnvironmentKind::iid: return "iid";
    case EnvironmentKind::markov: return "markov";
  }
  return "?";
}

EnvRealization::EnvRealization(std::shared_ptr<const std::vector<EnvState>> table,
                               std::vector<std::uint32_t> indices, std::uint64_t seed,
                               std::uint32_t stream_id)
    : table_(std::move(table)), indices_(std::move(indices)), seed_(seed), stream_id_(stream_id) {}

EnvRealization sample_environment(const EnvironmentModel& model, std::size_t n, std::uint64_t seed,
                                  std::uint32_t stream_id) {
  if (n < 1) throw UsageError("environment horizon must be >= 1");
  std::vector<std::uint32_t> indices(n, 0);
  RandomStream stream(seed, StreamDomain::environment, stream_id);
  switch (model.kind()) {
    case EnvironmentKind::constant:
      break;
    case EnvironmentKind::iid:
      for (auto& idx : indices) idx = sample_categorical(model.probabilities(), stream.uniform());
      break;
    case EnvironmentKind::markov: {
      indices[0] = sample_categorical(model.stationary(), stream.uniform());
      for (std::size_t k = 1; k < n; ++k)
        indices[k] = sample_categorical(model.transition()[indices[k - 1]], stream.uniform());
      break;
    }
  }
  return EnvRealization(model.shared_states(), std::move(indices), seed, stream_id);
}

// ---------------------------------------------------------------------------

Normalizers QuenchedMoments::normalizers(std::size_t n) const {
  if (degenerate(n))
    throw DegenerateNormalizerError("b_" + std::to_string(n) +
                                    " = 0: displacement variance vanishes on every generation");
  return {a.at(n), b.at(n)};
}

QuenchedMoments quenched_moments(const EnvRealization& realization, std::span<const double> t_grid,
                                 std::size_t n) {
  if (realization.size() == 0) throw UsageError("empty environment realization");
  if (n == 0) n = realization.size();
  if (n > realization.size()) throw UsageError("moments requested beyond realization horizon");

  QuenchedMoments out;
  out.t_grid.assign(t_grid.begin(), t_grid.end());
  const std::size_t grid = t_grid.size();
  out.mean_offspring.reserve(n);
  out.mu.reserve(n);
  out.sigma2.reserve(n);
  out.log_m_t.reserve(n);
  out.log_p.assign(1, 0.0L);
  out.a.assign(1, 0.0);
  out.b.assign(1, 0.0);
  out.log_mean_partition.assign(1, std::vector<long double>(grid, 0.0L));

  long double log_p = 0.0L, a = 0.0L, b2 = 0.0L;
  std::vector<long double> partition(grid, 0.0L);
  for (std::size_t i = 0; i < n; ++i) {
    const EnvState& s = realization.state(i);
    out.mean_offspring.push_back(s.mean_offspring());
    out.mu.push_back(s.mu());
    out.sigma2.push_back(s.sigma2());
    out.lattice = out.lattice || is_lattice(s.displacement());
    // extended-precision log m_i keeps deterministic trees at W_n == 1 exactly
    const long double log_m = std::log(static_cast<long double>(s.mean_offspring()));
    std::vector<double> row(grid);
    for (std::size_t k = 0; k < grid; ++k) {
      row[k] = log_laplace_m(s, t_grid[k]);
      partition[k] += log_m + displacement_log_mgf(s.displacement(), t_grid[k]);
    }
    out.log_m_t.push_back(std::move(row));

    log_p += log_m;
    a += s.mu();
    b2 += s.sigma2();
    out.log_p.push_back(log_p);
    out.a.push_back(static_cast<double>(a));
    out.b.push_back(static_cast<double>(std::sqrt(b2)));
    out.log_mean_partition.push_back(partition);
  }
  return out;
}

// ---------------------------------------------------------------------------

PointProcessSample sample_point_process(const EnvState& state, RandomStream& stream) {
  PointProcessSample sample;
  sample.count = append_point_process(state, stream, 0.0, sample.offsets);
  return sample;
}

std::uint32_t append_point_process(const EnvState& state, RandomStream& stream, double origin,
                                   std::vector<double>& out) {
  const std::uint32_t count = sample_offspring(state.offspring(), stream);
  for (std::uint32_t i = 0; i < count; ++i)
    out.push_back(origin + sample_displacement(state.displacement(), stream));
  return count;
}

}  // namespace brwre

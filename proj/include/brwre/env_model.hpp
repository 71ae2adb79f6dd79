#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "brwre/rng.hpp"

namespace brwre {

// ---------------------------------------------------------------------------
// Reproduction laws
// ---------------------------------------------------------------------------

struct Deterministic {
  std::uint32_t k = 1;
  bool operator==(const Deterministic&) const = default;
};

/// P(N = k) = p (1 - p)^(k - 1), k >= 1.
struct ShiftedGeometric {
  double p = 1.0;
  bool operator==(const ShiftedGeometric&) const = default;
};

/// Poisson(lambda) conditioned on N >= 1.
struct PoissonPositive {
  double lambda = 1.0;
  bool operator==(const PoissonPositive&) const = default;
};

using OffspringLaw = std::variant<Deterministic, ShiftedGeometric, PoissonPositive>;

struct PointMass {
  double c = 0.0;
  bool operator==(const PointMass&) const = default;
};

struct Gaussian {
  double mean = 0.0;
  double variance = 1.0;
  bool operator==(const Gaussian&) const = default;
};

/// +d with probability p, -d with probability 1 - p.
struct TwoPoint {
  double d = 1.0;
  double p = 0.5;
  bool operator==(const TwoPoint&) const = default;
};

using DisplacementLaw = std::variant<PointMass, Gaussian, TwoPoint>;

double offspring_mean(const OffspringLaw& law);

double displacement_mean(const DisplacementLaw& law);
double displacement_variance(const DisplacementLaw& law);
/// log E exp(t L).
double displacement_log_mgf(const DisplacementLaw& law, double t);
/// d/dt log E exp(t L), i.e. the mean of the t-tilted law.
double displacement_tilted_mean(const DisplacementLaw& law, double t);
/// t * tilted_mean(t) - log_mgf(t), evaluated without cancellation.
double displacement_tilted_gap(const DisplacementLaw& law, double t);
/// lim of the tilted mean as t -> +inf (sign > 0) or -inf (sign < 0).
double displacement_slope_limit(const DisplacementLaw& law, int sign);
bool is_lattice(const DisplacementLaw& law);
bool is_gaussian_family(const DisplacementLaw& law);  // Gaussian or PointMass

/// One environment letter: offspring law times i.i.d. displacements.
class EnvState {
 public:
  EnvState(std::string label, OffspringLaw offspring, DisplacementLaw displacement);

  const std::string& label() const noexcept { return label_; }
  const OffspringLaw& offspring() const noexcept { return offspring_; }
  const DisplacementLaw& displacement() const noexcept { return displacement_; }

  double mean_offspring() const noexcept { return mean_offspring_; }
  double log_mean_offspring() const noexcept { return log_mean_offspring_; }
  double mu() const { return displacement_mean(displacement_); }
  double sigma2() const { return displacement_variance(displacement_); }

  bool operator==(const EnvState&) const = default;

 private:
  std::string label_;
  OffspringLaw offspring_;
  DisplacementLaw displacement_;
  double mean_offspring_;
  double log_mean_offspring_;
};

/// m(t) = E sum_i exp(t L_i) = E[N] * E exp(t L).
double laplace_m(const EnvState& state, double t);
double laplace_m_prime(const EnvState& state, double t);
double log_laplace_m(const EnvState& state, double t);
/// m'(t) / m(t).
double log_laplace_m_prime(const EnvState& state, double t);

// ---------------------------------------------------------------------------
// Environment law and realizations
// ---------------------------------------------------------------------------

enum class EnvironmentKind { constant, iid, markov };

struct ModelOptions {
  /// Reject models with E log m0 <= 0. Only tests switch this off.
  bool require_supercritical = true;
};

class EnvironmentModel {
 public:
  static EnvironmentModel constant(EnvState state, ModelOptions options = {});
  static EnvironmentModel iid(std::vector<EnvState> states, std::vector<double> probabilities,
                              ModelOptions options = {});
  static EnvironmentModel markov(std::vector<EnvState> states,
                                 std::vector<std::vector<double>> transition,
                                 ModelOptions options = {});

  EnvironmentKind kind() const noexcept { return kind_; }
  const std::vector<EnvState>& states() const noexcept { return *states_; }
  std::shared_ptr<const std::vector<EnvState>> shared_states() const noexcept { return states_; }
  /// IID weights; empty for the other kinds.
  const std::vector<double>& probabilities() const noexcept { return probabilities_; }
  /// Markov transition matrix; empty for the other kinds.
  const std::vector<std::vector<double>>& transition() const noexcept { return transition_; }
  /// Marginal law of xi_k (constant: {1}; iid: probabilities; markov: stationary vector).
  const std::vector<double>& stationary() const noexcept { return stationary_; }

  /// E log m0 under the stationary marginal.
  double mean_log_offspring() const;
  bool all_gaussian_family() const;
  bool any_lattice() const;

  bool operator==(const EnvironmentModel& other) const;

 private:
  EnvironmentModel() = default;
  void finish(const ModelOptions& options);

  EnvironmentKind kind_ = EnvironmentKind::constant;
  std::shared_ptr<const std::vector<EnvState>> states_;
  std::vector<double> probabilities_;
  std::vector<std::vector<double>> transition_;
  std::vector<double> stationary_;
};

const char* to_string(EnvironmentKind kind);

/// One sampled path xi_0 ... xi_{n-1}, stored as indices into the model's state table.
class EnvRealization {
 public:
  EnvRealization(std::shared_ptr<const std::vector<EnvState>> table,
                 std::vector<std::uint32_t> indices, std::uint64_t seed,
                 std::uint32_t stream_id);

  std::size_t size() const noexcept { return indices_.size(); }
  const EnvState& state(std::size_t generation) const { return (*table_)[indices_.at(generation)]; }
  std::uint32_t index(std::size_t generation) const { return indices_.at(generation); }
  const std::vector<std::uint32_t>& indices() const noexcept { return indices_; }
  const std::vector<EnvState>& table() const noexcept { return *table_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint32_t stream_id() const noexcept { return stream_id_; }

 private:
  std::shared_ptr<const std::vector<EnvState>> table_;
  std::vector<std::uint32_t> indices_;
  std::uint64_t seed_;
  std::uint32_t stream_id_;
};

/// Samples xi_0..xi_{n-1}; Markov chains start from their stationary law.
/// Bit-exact given (model, n, seed, stream_id).
EnvRealization sample_environment(const EnvironmentModel& model, std::size_t n,
                                  std::uint64_t seed, std::uint32_t stream_id = 0);

// ---------------------------------------------------------------------------
// Quenched moments
// ---------------------------------------------------------------------------

struct Normalizers {
  double center = 0.0;  // a_n
  double scale = 1.0;   // b_n
};

/// Per-generation intensity-measure moments for a fixed environment, plus the
/// cumulative quantities indexed by n = 0..horizon.
struct QuenchedMoments {
  std::vector<double> t_grid;

  // per generation i < horizon
  std::vector<double> mean_offspring;          // m_i
  std::vector<std::vector<double>> log_m_t;    // log m_i(t_k)
  std::vector<double> mu;                      // mu_i
  std::vector<double> sigma2;                  // sigma_i^2

  // cumulative, index n in [0, horizon]
  // Cumulative logs stay in extended precision so that W_n of a
  // deterministic tree is exactly 1 after rounding to double.
  std::vector<long double> log_p;                          // log P_n
  std::vector<double> a;                                   // a_n
  std::vector<double> b;                                   // b_n
  std::vector<std::vector<long double>> log_mean_partition;  // sum_{i<n} log m_i(t_k)

  /// Some generation has a lattice (non-Gaussian) displacement law.
  bool lattice = false;

  std::size_t horizon() const noexcept { return mu.size(); }
  bool degenerate(std::size_t n) const { return b.at(n) == 0.0; }
  /// (a_n, b_n); throws DegenerateNormalizerError when b_n == 0.
  Normalizers normalizers(std::size_t n) const;
};

/// Moments over the first `n` generations of `realization` (all when n == 0).
QuenchedMoments quenched_moments(const EnvRealization& realization, std::span<const double> t_grid,
                                 std::size_t n = 0);

// ---------------------------------------------------------------------------
// Point process sampling
// ---------------------------------------------------------------------------

struct PointProcessSample {
  std::uint32_t count = 0;
  std::vector<double> offsets;
};

/// Draws N, then N i.i.d. displacements, from `stream`.
PointProcessSample sample_point_process(const EnvState& state, RandomStream& stream);

/// Same draws as sample_point_process, appending origin + L_i to `out`.
/// Returns N.
std::uint32_t append_point_process(const EnvState& state, RandomStream& stream, double origin,
                                   std::vector<double>& out);

}  // namespace brwre

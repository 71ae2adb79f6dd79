#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "brwre/env_model.hpp"
#include "brwre/simulate.hpp"

namespace brwre {

/// Sorted particle positions of one generation with interval counting.
class EmpiricalMeasure {
 public:
  EmpiricalMeasure(std::size_t n, std::vector<double> positions);
  /// Throws UnsupportedError when the snapshot carries no positions.
  static EmpiricalMeasure from_snapshot(const GenerationSnapshot& snapshot);

  std::size_t generation() const noexcept { return n_; }
  std::uint64_t count() const noexcept { return sorted_.size(); }
  std::span<const double> sorted() const noexcept { return sorted_; }

  std::uint64_t count_le(double y) const;  // #{S <= y}
  std::uint64_t count_lt(double y) const;  // #{S < y}
  std::uint64_t count_ge(double y) const;  // #{S >= y}
  std::uint64_t count_gt(double y) const;  // #{S > y}
  std::uint64_t count_open(double lo, double hi) const;  // #{lo < S < hi}

 private:
  std::size_t n_;
  std::vector<double> sorted_;
};

/// Rows for each snapshot with n >= 1, columns over t: (1/n) log tilde Z_n(t).
/// Recomputed from positions; UnsupportedError when positions are missing.
std::vector<std::vector<double>> free_energy_curve(std::span<const GenerationSnapshot> snapshots,
                                                   std::span<const double> t_grid);

struct LdpRates {
  std::vector<double> right;  // (1/n) log Z_n(n[x, inf))
  std::vector<double> left;   // (1/n) log Z_n((-inf, nx])
};

/// Empty intervals give -inf.
LdpRates ldp_interval_rates(const EmpiricalMeasure& measure, std::span<const double> x_grid);

/// Z_n((-inf, b x + a]) / Z_n(R) per grid point; +-inf map to 1 and 0.
std::vector<double> clt_empirical_cdf(const EmpiricalMeasure& measure, const Normalizers& norm,
                                      std::span<const double> x_grid);
/// Uses (a_n, b_n) from `moments`; throws DegenerateNormalizerError when b_n = 0.
std::vector<double> clt_empirical_cdf(const EmpiricalMeasure& measure, const QuenchedMoments& moments,
                                      std::span<const double> x_grid);

/// Max absolute difference of two CDFs sampled on one grid.
double ks_distance(std::span<const double> empirical, std::span<const double> reference);

/// Exact sup_x |F_n(b x + a) - Phi(x)| over all jumps of the empirical CDF.
double ks_distance_to_normal(const EmpiricalMeasure& measure, const Normalizers& norm);

/// a_n + b_n k / 10 for k = -40 .. 40.
std::vector<double> llt_default_grid(const Normalizers& norm);

struct LltResult {
  std::vector<double> x;
  std::vector<double> scaled_mass;  // b_n Z_n((x, x + h)) / Z_n(R)
  std::vector<double> gap;          // scaled_mass - h p((x - a_n) / b_n)
  double sup_gap = 0.0;
};

/// Refuses lattice displacement laws and h <= 0. An empty `x_grid` selects
/// llt_default_grid.
LltResult llt_gap(const EmpiricalMeasure& measure, const QuenchedMoments& moments, double h,
                  std::span<const double> x_grid = {});

/// K(x) = (1/2pi) (sin(x/2) / (x/2))^2.
double fejer_kernel(double x);
/// K_a(x) = K(x / a) / a.
double fejer_kernel(double x, double a);

/// (1/P_n) sum_u K_a(x - S_u) per grid point.
std::vector<double> fejer_smooth(const EmpiricalMeasure& measure, long double log_p_n, double a,
                                 std::span<const double> x_grid);
std::vector<double> fejer_smooth(const EmpiricalMeasure& measure, const QuenchedMoments& moments, double a,
                                 std::span<const double> x_grid);

double median(std::vector<double> values);

/// Least-squares slope of ys against xs.
double regression_slope(std::span<const double> xs, std::span<const double> ys);

// ---------------------------------------------------------------------------
// Replica aggregation
// ---------------------------------------------------------------------------

/// Per-replica values at one generation n. Grid quantities share one x-grid
/// across the replicas being aggregated.
struct ReplicaSummary {
  std::uint32_t replica = 0;
  std::uint64_t environment_id = 0;
  bool survived = true;
  std::size_t n = 0;
  std::uint64_t count = 0;
  long double log_p = 0.0L;              // log P_n(xi)
  std::vector<double> free_energy;       // per t
  std::vector<double> ldp_right;         // per x
  std::vector<double> tail_fraction;     // Z_n(n[x, inf)) / Z_n(R) per x
  std::vector<double> cdf;               // per x, at the caller's normalizers
  std::vector<double> llt_gap;           // per x
  std::vector<double> w_trace;           // W_k for k = 0..n
};

struct SummaryRequest {
  std::vector<double> t_grid;
  std::vector<double> ldp_x;
  Normalizers cdf_normalizers;
  std::vector<double> cdf_x;
  double llt_h = 0.0;  // 0 skips the LLT gap
};

/// Builds the summary of the snapshot at generation n. `trace` holds W_k for k <= n.
ReplicaSummary summarize_replica(std::uint32_t replica, std::uint64_t environment_id,
                                 const GenerationSnapshot& snapshot, const QuenchedMoments& moments,
                                 const SummaryRequest& request, std::vector<double> trace = {});

enum class AggregateMode {
  quenched_mean,        // equal weights, one shared environment
  annealed_mean,        // weights Z_n(R), fresh environment per replica
  annealed_normalized,  // weights Z_n(R) / P_n(xi), fresh environment per replica
  conditioned,          // equal weights over surviving replicas
};

enum class AggregateQuantity { cdf, tail_fraction, free_energy, ldp_right };

struct AggregateReport {
  AggregateMode mode;
  std::size_t replicas = 0;
  std::vector<double> mean;
  std::vector<double> standard_error;
  std::optional<double> ks;  // vs `reference`, when given
};

/// Weighted cross-replica mean and delta-method standard error per grid point.
/// Throws UsageError on fewer than 2 replicas or an environment layout that
/// does not match the mode.
AggregateReport aggregate(AggregateMode mode, std::span<const ReplicaSummary> summaries,
                          AggregateQuantity quantity = AggregateQuantity::cdf,
                          std::span<const double> reference = {});

struct Estimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

/// Sample mean and its standard error (sample sd / sqrt(k)).
Estimate mean_and_se(std::span<const double> values);

}  // namespace brwre

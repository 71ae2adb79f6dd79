#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "brwre/env_model.hpp"

namespace brwre {

enum class PositionRetention {
  all,         // every snapshot keeps its positions
  final_only,  // only the last generation keeps positions
};

struct SimConfig {
  std::size_t horizon = 1;
  std::uint64_t particle_cap = std::uint64_t{1} << 24;
  std::vector<double> t_grid;
  std::size_t replicas = 1;
  std::uint64_t seed = 0;
  PositionRetention retention = PositionRetention::all;

  /// Throws UsageError on horizon < 1 or cap < 1.
  void validate() const;
};

struct GenerationSnapshot {
  std::size_t n = 0;
  std::uint64_t count = 0;  // Z_n(R)
  std::vector<double> positions;
  bool has_positions = false;
  double r_n = 0.0;
  double l_n = 0.0;
  std::vector<double> log_partition;  // log tilde Z_n(t) per t-grid point
  double w_n = 1.0;                   // Z_n(R) / P_n
  std::vector<double> w_n_t;          // W_n(t) per t-grid point
  /// Sum of the sampled N(u) over this generation; 0 for the last generation.
  std::uint64_t offspring_sum = 0;
};

using SnapshotVisitor = std::function<void(const GenerationSnapshot&)>;

/// Grows one tree for generations 0..config.horizon under `realization`.
/// Particle u of generation n draws from stream (seed, tree, replica, n, ordinal).
/// Each snapshot is handed to `visit` with positions attached; the visitor must
/// copy what it keeps. Throws PopulationOverflow when a generation would exceed
/// config.particle_cap.
void run_tree(const EnvRealization& realization, const SimConfig& config, std::uint32_t replica_id,
              const SnapshotVisitor& visit);

/// Collects every snapshot; positions are kept per config.retention.
std::vector<GenerationSnapshot> run_tree(const EnvRealization& realization, const SimConfig& config,
                                         std::uint32_t replica_id);

/// log sum_u exp(t S_u) by max-subtracted log-sum-exp with extended accumulation.
/// Throws DomainError on empty input.
double partition_function(std::span<const double> positions, double t);
/// Same sum before rounding to double.
long double log_partition_extended(std::span<const double> positions, double t);

/// W_n(t) = exp(log tilde Z_n(t) - sum_{i<n} log m_i(t)); `t` must be on the moments grid.
double additive_martingale(const GenerationSnapshot& snapshot, double t, const QuenchedMoments& moments);

/// Columnar CSV: n, count, R_n, L_n, W_n, one log tilde Z_n(t) column per t.
void write_snapshot_csv(std::ostream& out, std::span<const GenerationSnapshot> snapshots,
                        std::span<const double> t_grid);

/// Raw positions: per generation a little-endian u64 length, then that many
/// little-endian IEEE-754 doubles.
void write_positions_binary(std::ostream& out, std::span<const double> positions);
/// Reads every length-prefixed block until end of stream.
std::vector<std::vector<double>> read_positions_binary(std::istream& in);

}  // namespace brwre

#include "brwre/simulate.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>

#include "brwre/errors.hpp"
#include "brwre/io.hpp"

namespace brwre {

namespace {

// log-sum-exp of t * S over positions whose extremes are known
long double log_partition_ld(std::span<const double> positions, double t, double lo, double hi) {
  if (t == 0.0) return std::log(static_cast<long double>(positions.size()));
  const double shift = t > 0.0 ? t * hi : t * lo;
  long double sum = 0.0L;
  for (double s : positions) sum += std::exp(t * s - shift);
  return shift + std::log(sum);
}

void fill_snapshot(GenerationSnapshot& snap, const QuenchedMoments& moments) {
  const auto [lo, hi] = std::minmax_element(snap.positions.begin(), snap.positions.end());
  snap.l_n = *lo;
  snap.r_n = *hi;
  snap.count = snap.positions.size();
  snap.has_positions = true;
  const long double log_count = std::log(static_cast<long double>(snap.count));
  snap.w_n = static_cast<double>(std::exp(log_count - moments.log_p[snap.n]));

  const std::size_t grid = moments.t_grid.size();
  snap.log_partition.resize(grid);
  snap.w_n_t.resize(grid);
  for (std::size_t k = 0; k < grid; ++k) {
    const long double lz = log_partition_ld(snap.positions, moments.t_grid[k], snap.l_n, snap.r_n);
    snap.log_partition[k] = static_cast<double>(lz);
    snap.w_n_t[k] = static_cast<double>(std::exp(lz - moments.log_mean_partition[snap.n][k]));
  }
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

bool get_u64(std::istream& in, std::uint64_t& v) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) return false;
  v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return true;
}

}  // namespace

void SimConfig::validate() const {
  if (horizon < 1) throw UsageError("horizon must be >= 1");
  if (particle_cap < 1) throw UsageError("particle cap must be >= 1");
  if (particle_cap > std::numeric_limits<std::uint32_t>::max())
    throw UsageError("particle cap must fit a 32-bit particle ordinal");
  if (replicas < 1) throw UsageError("replica count must be >= 1");
}

void run_tree(const EnvRealization& realization, const SimConfig& config, std::uint32_t replica_id,
              const SnapshotVisitor& visit) {
  config.validate();
  if (realization.size() < config.horizon)
    throw UsageError("environment realization is shorter than the simulation horizon");

  const QuenchedMoments moments = quenched_moments(realization, config.t_grid, config.horizon);
  const PhiloxKey key = derive_key(config.seed, StreamDomain::tree);

  std::vector<double> current{0.0};
  std::vector<double> next;
  for (std::size_t n = 0; n <= config.horizon; ++n) {
    std::uint64_t offspring_sum = 0;
    next.clear();
    if (n < config.horizon) {
      const EnvState& state = realization.state(n);
      const double expected = std::ceil(static_cast<double>(current.size()) * state.mean_offspring() * 1.05);
      next.reserve(static_cast<std::size_t>(std::min<double>(expected, static_cast<double>(config.particle_cap) + 1.0)));
      for (std::size_t j = 0; j < current.size(); ++j) {
        RandomStream stream(key, replica_id, static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(j));
        offspring_sum += append_point_process(state, stream, current[j], next);
        if (next.size() > config.particle_cap) throw PopulationOverflow(n, next.size(), config.particle_cap);
      }
    }

    GenerationSnapshot snap;
    snap.n = n;
    snap.positions = std::move(current);
    snap.offspring_sum = offspring_sum;
    fill_snapshot(snap, moments);
    visit(snap);
    current = std::move(next);
    next = std::move(snap.positions);
  }
}

std::vector<GenerationSnapshot> run_tree(const EnvRealization& realization, const SimConfig& config,
                                         std::uint32_t replica_id) {
  std::vector<GenerationSnapshot> out;
  run_tree(realization, config, replica_id, [&](const GenerationSnapshot& snap) {
    if (config.retention == PositionRetention::all || snap.n == config.horizon) {
      out.push_back(snap);
    } else {
      GenerationSnapshot light = snap;
      light.positions.clear();
      light.positions.shrink_to_fit();
      light.has_positions = false;
      out.push_back(std::move(light));
    }
  });
  return out;
}

long double log_partition_extended(std::span<const double> positions, double t) {
  if (positions.empty()) throw DomainError("partition function of an empty generation");
  const auto [lo, hi] = std::minmax_element(positions.begin(), positions.end());
  return log_partition_ld(positions, t, *lo, *hi);
}

double partition_function(std::span<const double> positions, double t) {
  return static_cast<double>(log_partition_extended(positions, t));
}

double additive_martingale(const GenerationSnapshot& snapshot, double t, const QuenchedMoments& moments) {
  const auto it = std::find(moments.t_grid.begin(), moments.t_grid.end(), t);
  if (it == moments.t_grid.end()) throw UsageError("t is not on the moments grid");
  const auto k = static_cast<std::size_t>(it - moments.t_grid.begin());
  if (snapshot.has_positions)
    return static_cast<double>(
        std::exp(log_partition_extended(snapshot.positions, t) - moments.log_mean_partition.at(snapshot.n)[k]));
  if (k >= snapshot.log_partition.size()) throw UsageError("snapshot was computed on a different t-grid");
  return static_cast<double>(
      std::exp(static_cast<long double>(snapshot.log_partition[k]) - moments.log_mean_partition.at(snapshot.n)[k]));
}

void write_snapshot_csv(std::ostream& out, std::span<const GenerationSnapshot> snapshots,
                        std::span<const double> t_grid) {
  std::vector<std::string> header{"n", "count", "R_n", "L_n", "W_n"};
  for (double t : t_grid) header.push_back("logZ_t=" + format_double(t));
  write_csv_row(out, header);
  for (const auto& snap : snapshots) {
    std::vector<std::string> row{std::to_string(snap.n), std::to_string(snap.count), format_double(snap.r_n),
                                 format_double(snap.l_n), format_double(snap.w_n)};
    for (std::size_t k = 0; k < t_grid.size(); ++k) row.push_back(format_double(snap.log_partition.at(k)));
    write_csv_row(out, row);
  }
}

void write_positions_binary(std::ostream& out, std::span<const double> positions) {
  static_assert(std::numeric_limits<double>::is_iec559);
  put_u64(out, positions.size());
  for (double v : positions) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

std::vector<std::vector<double>> read_positions_binary(std::istream& in) {
  std::vector<std::vector<double>> blocks;
  std::uint64_t length;
  while (get_u64(in, length)) {
    std::vector<double> block;
    block.reserve(length);
    for (std::uint64_t i = 0; i < length; ++i) {
      std::uint64_t bits;
      if (!get_u64(in, bits)) throw UsageError("truncated positions file");
      block.push_back(std::bit_cast<double>(bits));
    }
    blocks.push_back(std::move(block));
  }
  return blocks;
}

}  // namespace brwre

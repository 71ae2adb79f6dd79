#include "brwre/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "brwre/errors.hpp"
#include "brwre/normal.hpp"

namespace brwre {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_count_rate(std::uint64_t count, std::size_t n) {
  if (count == 0) return -kInf;
  return static_cast<double>(std::log(static_cast<long double>(count)) / n);
}

}  // namespace

EmpiricalMeasure::EmpiricalMeasure(std::size_t n, std::vector<double> positions)
    : n_(n), sorted_(std::move(positions)) {
  std::sort(sorted_.begin(), sorted_.end());
}

EmpiricalMeasure EmpiricalMeasure::from_snapshot(const GenerationSnapshot& snapshot) {
  if (!snapshot.has_positions)
    throw UnsupportedError("generation " + std::to_string(snapshot.n) + " has no raw positions");
  return EmpiricalMeasure(snapshot.n, snapshot.positions);
}

std::uint64_t EmpiricalMeasure::count_le(double y) const {
  return static_cast<std::uint64_t>(std::upper_bound(sorted_.begin(), sorted_.end(), y) - sorted_.begin());
}

std::uint64_t EmpiricalMeasure::count_lt(double y) const {
  return static_cast<std::uint64_t>(std::lower_bound(sorted_.begin(), sorted_.end(), y) - sorted_.begin());
}

std::uint64_t EmpiricalMeasure::count_ge(double y) const { return count() - count_lt(y); }

std::uint64_t EmpiricalMeasure::count_gt(double y) const { return count() - count_le(y); }

std::uint64_t EmpiricalMeasure::count_open(double lo, double hi) const {
  if (!(lo < hi)) return 0;
  return count_lt(hi) - count_le(lo);
}

std::vector<std::vector<double>> free_energy_curve(std::span<const GenerationSnapshot> snapshots,
                                                   std::span<const double> t_grid) {
  std::vector<std::vector<double>> rows;
  for (const auto& snap : snapshots) {
    if (snap.n == 0) continue;
    if (!snap.has_positions)
      throw UnsupportedError("free energy needs raw positions at generation " + std::to_string(snap.n));
    std::vector<double> row;
    row.reserve(t_grid.size());
    for (double t : t_grid)
      row.push_back(static_cast<double>(log_partition_extended(snap.positions, t) / snap.n));
    rows.push_back(std::move(row));
  }
  return rows;
}

LdpRates ldp_interval_rates(const EmpiricalMeasure& measure, std::span<const double> x_grid) {
  const std::size_t n = measure.generation();
  if (n == 0) throw UsageError("interval rates need n >= 1");
  LdpRates out;
  for (double x : x_grid) {
    const double y = static_cast<double>(n) * x;
    out.right.push_back(log_count_rate(measure.count_ge(y), n));
    out.left.push_back(log_count_rate(measure.count_le(y), n));
  }
  return out;
}

std::vector<double> clt_empirical_cdf(const EmpiricalMeasure& measure, const Normalizers& norm,
                                      std::span<const double> x_grid) {
  if (!(norm.scale > 0.0)) throw DegenerateNormalizerError("CLT normalizer b_n must be > 0");
  const double total = static_cast<double>(measure.count());
  std::vector<double> out;
  out.reserve(x_grid.size());
  for (double x : x_grid) {
    if (x == kInf) {
      out.push_back(1.0);
    } else if (x == -kInf) {
      out.push_back(0.0);
    } else {
      out.push_back(static_cast<double>(measure.count_le(norm.scale * x + norm.center)) / total);
    }
  }
  return out;
}

std::vector<double> clt_empirical_cdf(const EmpiricalMeasure& measure, const QuenchedMoments& moments,
                                      std::span<const double> x_grid) {
  return clt_empirical_cdf(measure, moments.normalizers(measure.generation()), x_grid);
}

double ks_distance(std::span<const double> empirical, std::span<const double> reference) {
  if (empirical.size() != reference.size())
    throw UsageError("ks_distance: grids differ in size (" + std::to_string(empirical.size()) + " vs " +
                     std::to_string(reference.size()) + ")");
  for (std::size_t i = 1; i < empirical.size(); ++i)
    if (empirical[i] < empirical[i - 1] || reference[i] < reference[i - 1])
      throw UsageError("ks_distance: CDF values must be nondecreasing");
  double sup = 0.0;
  for (std::size_t i = 0; i < empirical.size(); ++i) sup = std::max(sup, std::abs(empirical[i] - reference[i]));
  return sup;
}

double ks_distance_to_normal(const EmpiricalMeasure& measure, const Normalizers& norm) {
  if (!(norm.scale > 0.0)) throw DegenerateNormalizerError("CLT normalizer b_n must be > 0");
  const auto sorted = measure.sorted();
  const double total = static_cast<double>(sorted.size());
  double sup = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double phi = normal_cdf((sorted[i] - norm.center) / norm.scale);
    sup = std::max({sup, std::abs(static_cast<double>(i + 1) / total - phi),
                    std::abs(phi - static_cast<double>(i) / total)});
  }
  return sup;
}

std::vector<double> llt_default_grid(const Normalizers& norm) {
  std::vector<double> grid;
  for (int k = -40; k <= 40; ++k) grid.push_back(norm.center + norm.scale * (k / 10.0));
  return grid;
}

LltResult llt_gap(const EmpiricalMeasure& measure, const QuenchedMoments& moments, double h,
                  std::span<const double> x_grid) {
  if (moments.lattice)
    throw UnsupportedError("local limit theorem needs non-lattice displacements; a two-point or point-mass law "
                           "is present in this environment");
  if (!(h > 0.0)) throw UsageError("LLT window h must be > 0");
  const Normalizers norm = moments.normalizers(measure.generation());

  LltResult out;
  out.x = x_grid.empty() ? llt_default_grid(norm) : std::vector<double>(x_grid.begin(), x_grid.end());
  const double total = static_cast<double>(measure.count());
  for (double x : out.x) {
    const double mass = norm.scale * static_cast<double>(measure.count_open(x, x + h)) / total;
    const double gap = mass - h * normal_pdf((x - norm.center) / norm.scale);
    out.scaled_mass.push_back(mass);
    out.gap.push_back(gap);
    out.sup_gap = std::max(out.sup_gap, std::abs(gap));
  }
  return out;
}

double fejer_kernel(double x) {
  const double u = 0.5 * x;
  double sinc;
  if (std::abs(u) < 1e-4) {
    const double u2 = u * u;
    sinc = 1.0 - u2 / 6.0 + u2 * u2 / 120.0;
  } else {
    sinc = std::sin(u) / u;
  }
  return sinc * sinc / (2.0 * std::numbers::pi);
}

double fejer_kernel(double x, double a) { return fejer_kernel(x / a) / a; }

std::vector<double> fejer_smooth(const EmpiricalMeasure& measure, long double log_p_n, double a,
                                 std::span<const double> x_grid) {
  if (!(a > 0.0)) throw UsageError("Fejer bandwidth a must be > 0");
  const long double inv_p = std::exp(-log_p_n);
  std::vector<double> out;
  out.reserve(x_grid.size());
  for (double x : x_grid) {
    long double sum = 0.0L;
    for (double s : measure.sorted()) sum += fejer_kernel(x - s, a);
    out.push_back(static_cast<double>(sum * inv_p));
  }
  return out;
}

std::vector<double> fejer_smooth(const EmpiricalMeasure& measure, const QuenchedMoments& moments, double a,
                                 std::span<const double> x_grid) {
  return fejer_smooth(measure, moments.log_p.at(measure.generation()), a, x_grid);
}

double median(std::vector<double> values) {
  if (values.empty()) throw UsageError("median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  if (values.size() % 2 == 1) return values[mid];
  return 0.5 * (values[mid - 1] + values[mid]);
}

double regression_slope(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw UsageError("regression needs >= 2 paired points");
  long double mx = 0.0L, my = 0.0L;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= xs.size();
  my /= ys.size();
  long double sxy = 0.0L, sxx = 0.0L;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (sxx == 0.0L) throw UsageError("regression abscissae are all equal");
  return static_cast<double>(sxy / sxx);
}

// ---------------------------------------------------------------------------

ReplicaSummary summarize_replica(std::uint32_t replica, std::uint64_t environment_id,
                                 const GenerationSnapshot& snapshot, const QuenchedMoments& moments,
                                 const SummaryRequest& request, std::vector<double> trace) {
  const EmpiricalMeasure measure = EmpiricalMeasure::from_snapshot(snapshot);
  const std::size_t n = snapshot.n;

  ReplicaSummary s;
  s.replica = replica;
  s.environment_id = environment_id;
  s.survived = snapshot.count > 0;
  s.n = n;
  s.count = snapshot.count;
  s.log_p = moments.log_p.at(n);
  s.w_trace = std::move(trace);

  if (n > 0) {
    for (double t : request.t_grid)
      s.free_energy.push_back(static_cast<double>(log_partition_extended(snapshot.positions, t) / n));
    const LdpRates rates = ldp_interval_rates(measure, request.ldp_x);
    s.ldp_right = rates.right;
  }
  for (double x : request.ldp_x) {
    const double y = static_cast<double>(n) * x;
    s.tail_fraction.push_back(static_cast<double>(measure.count_ge(y)) / static_cast<double>(measure.count()));
  }
  if (!request.cdf_x.empty()) s.cdf = clt_empirical_cdf(measure, request.cdf_normalizers, request.cdf_x);
  if (request.llt_h > 0.0) s.llt_gap = llt_gap(measure, moments, request.llt_h).gap;
  return s;
}

AggregateReport aggregate(AggregateMode mode, std::span<const ReplicaSummary> summaries,
                          AggregateQuantity quantity, std::span<const double> reference) {
  std::vector<const ReplicaSummary*> used;
  for (const auto& s : summaries)
    if (mode != AggregateMode::conditioned || s.survived) used.push_back(&s);
  if (used.size() < 2) throw UsageError("aggregation needs at least 2 replicas");

  std::set<std::uint64_t> environments;
  for (const auto* s : used) environments.insert(s->environment_id);
  switch (mode) {
    case AggregateMode::quenched_mean:
      if (environments.size() != 1)
        throw UsageError("quenched aggregation needs every replica to share one environment");
      break;
    case AggregateMode::annealed_mean:
    case AggregateMode::annealed_normalized:
      if (environments.size() != used.size())
        throw UsageError("annealed aggregation needs a fresh environment per replica");
      break;
    case AggregateMode::conditioned:
      break;
  }

  auto values_of = [&](const ReplicaSummary& s) -> const std::vector<double>& {
    switch (quantity) {
      case AggregateQuantity::cdf: return s.cdf;
      case AggregateQuantity::tail_fraction: return s.tail_fraction;
      case AggregateQuantity::free_energy: return s.free_energy;
      case AggregateQuantity::ldp_right: return s.ldp_right;
    }
    return s.cdf;
  };
  const std::size_t grid = values_of(*used.front()).size();
  for (const auto* s : used)
    if (values_of(*s).size() != grid) throw UsageError("replica summaries use different grids");

  // weights relative to the largest, in log space
  std::vector<long double> log_w;
  for (const auto* s : used) {
    switch (mode) {
      case AggregateMode::annealed_mean:
        log_w.push_back(std::log(static_cast<long double>(s->count)));
        break;
      case AggregateMode::annealed_normalized:
        log_w.push_back(std::log(static_cast<long double>(s->count)) - s->log_p);
        break;
      default:
        log_w.push_back(0.0L);
    }
  }
  const long double top = *std::max_element(log_w.begin(), log_w.end());
  std::vector<long double> w;
  long double w_total = 0.0L;
  for (long double lw : log_w) {
    w.push_back(std::exp(lw - top));
    w_total += w.back();
  }

  AggregateReport report;
  report.mode = mode;
  report.replicas = used.size();
  const long double k = static_cast<long double>(used.size());
  for (std::size_t i = 0; i < grid; ++i) {
    long double num = 0.0L;
    for (std::size_t r = 0; r < used.size(); ++r) num += w[r] * values_of(*used[r])[i];
    const long double ratio = num / w_total;
    long double spread = 0.0L;
    for (std::size_t r = 0; r < used.size(); ++r) {
      const long double dev = w[r] * (values_of(*used[r])[i] - ratio);
      spread += dev * dev;
    }
    report.mean.push_back(static_cast<double>(ratio));
    report.standard_error.push_back(static_cast<double>(std::sqrt(spread * k / (k - 1.0L)) / w_total));
  }
  if (!reference.empty()) report.ks = ks_distance(report.mean, reference);
  return report;
}

Estimate mean_and_se(std::span<const double> values) {
  if (values.size() < 2) throw UsageError("standard error needs at least 2 values");
  long double sum = 0.0L;
  for (double v : values) sum += v;
  const long double mean = sum / values.size();
  long double ss = 0.0L;
  for (double v : values) ss += (v - mean) * (v - mean);
  const long double var = ss / (values.size() - 1);
  return {static_cast<double>(mean), static_cast<double>(std::sqrt(var / values.size()))};
}

}  // namespace brwre

// Acceptance battery. Predictions come from closed forms worked out by hand for
// the three fixtures; measurements are recomputed here from raw positions.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "brwre/analytic.hpp"
#include "brwre/cli.hpp"
#include "brwre/config.hpp"
#include "brwre/errors.hpp"
#include "brwre/estimators.hpp"
#include "brwre/mean_measure.hpp"
#include "brwre/simulate.hpp"
#include "brwre/verify.hpp"

using namespace brwre;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 42;
const double kLog2 = std::log(2.0);
const double kInf = std::numeric_limits<double>::infinity();

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

RunConfig fixture(const std::string& file) { return load_config(fs::path(BRWRE_CONFIG_DIR) / file); }

double phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

long double hand_log_sum_exp(const std::vector<double>& xs, double t) {
  long double top = -INFINITY;
  for (double x : xs) top = std::max(top, static_cast<long double>(t) * x);
  long double sum = 0.0L;
  for (double x : xs) sum += std::exp(static_cast<long double>(t) * x - top);
  return top + std::log(sum);
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Final-generation positions of tree `replica` under `env`.
std::vector<double> final_positions(const EnvRealization& env, std::size_t n, std::uint32_t replica,
                                    std::uint64_t cap = std::uint64_t{1} << 24) {
  SimConfig c;
  c.horizon = n;
  c.seed = kSeed;
  c.particle_cap = cap;
  c.retention = PositionRetention::final_only;
  auto snaps = run_tree(env, c, replica);
  return std::move(snaps.back().positions);
}

// sup over jumps of |F(b x + a) - Phi(x)| for sorted positions.
double hand_ks(std::vector<double> xs, double a, double b) {
  std::sort(xs.begin(), xs.end());
  const double total = static_cast<double>(xs.size());
  double sup = 0.0;
  std::size_t i = 0;
  while (i < xs.size()) {
    std::size_t j = i;
    while (j < xs.size() && xs[j] == xs[i]) ++j;
    const double p = phi((xs[i] - a) / b);
    sup = std::max({sup, std::abs(static_cast<double>(i) / total - p), std::abs(static_cast<double>(j) / total - p)});
    i = j;
  }
  return sup;
}

// CFG-G closed forms: Lambda(t) = log 2 + t^2 / 2.
double lambda_g(double t) { return kLog2 + t * t / 2; }
const double kTPlusG = std::sqrt(2 * kLog2);
double tilde_lambda_g(double t) { return std::abs(t) < kTPlusG ? lambda_g(t) : std::abs(t) * kTPlusG; }

// CFG-2S closed form: Lambda(t) = (log 6) / 2 + 3 t^2 / 4.
double lambda_2s(double t) { return 0.5 * std::log(6.0) + 0.75 * t * t; }

// ---------------------------------------------------------------------------

Outcome ac1() {
  const auto start = Clock::now();
  double worst = 0.0;
  for (const auto& [file, f, fp] :
       {std::tuple{"cfg_g.yaml", &lambda_g, std::function<double(double)>([](double t) { return t; })},
        std::tuple{"cfg_2s.yaml", &lambda_2s, std::function<double(double)>([](double t) { return 1.5 * t; })}}) {
    const auto conv = LogMomentFunction(fixture(file).model).as_convex();
    for (int i = 0; i < 50; ++i) {
      const double x = fp(-8.0) + (fp(8.0) - fp(-8.0)) * i / 49.0;
      double brute = -kInf;
      for (long k = -80000; k <= 80000; ++k) {
        const double t = k * 1e-4;
        brute = std::max(brute, x * t - f(t));
      }
      worst = std::max(worst, std::abs(legendre(conv, x) - brute));
    }
  }
  const double secs = seconds_since(start);
  return {worst <= 1e-6 && secs < 5.0, "max |legendre - brute force| = " + fmt(worst) + " (tol 1e-6), " + fmt(secs, 3) + " s"};
}

Outcome ac2() {
  const RateFunctionTable g(fixture("cfg_g.yaml").model, {});
  const RateFunctionTable s(fixture("cfg_2s.yaml").model, {});
  const double tg = std::sqrt(2 * kLog2), ts = std::sqrt(2.0 / 3.0 * std::log(6.0));
  const double errs[] = {std::abs(g.t_plus() - tg),           std::abs(g.t_minus() + tg),
                         std::abs(s.t_plus() - ts),           std::abs(s.t_minus() + ts),
                         std::abs(g.speed_right() - tg),      std::abs(g.speed_left() + tg),
                         std::abs(s.speed_right() - 1.5 * ts), std::abs(s.speed_left() + 1.5 * ts)};
  const double worst = *std::max_element(std::begin(errs), std::end(errs));
  return {worst <= 1e-8, "t_+ = " + fmt(g.t_plus(), 10) + ", " + fmt(s.t_plus(), 10) + "; speeds " +
                             fmt(g.speed_right(), 10) + ", " + fmt(s.speed_right(), 10) + "; max error " + fmt(worst) +
                             " (tol 1e-8)"};
}

// CFG-G main batch: replicas 0..15 on the shared environment.
struct GaussBatch {
  std::vector<std::vector<double>> final;           // n = 20
  std::vector<std::vector<double>> rightmost;        // per replica, R_n for n = 0..20
};

GaussBatch gauss_batch(std::size_t replicas, bool keep_final) {
  const auto model = fixture("cfg_g.yaml").model;
  const auto env = sample_environment(model, 20, kSeed, 0);
  GaussBatch b;
  for (std::uint32_t r = 0; r < replicas; ++r) {
    SimConfig c;
    c.horizon = 20;
    c.seed = kSeed;
    std::vector<double> rmax;
    std::vector<double> last;
    run_tree(env, c, r, [&](const GenerationSnapshot& s) {
      rmax.push_back(*std::max_element(s.positions.begin(), s.positions.end()));
      if (s.n == 20 && keep_final) last = s.positions;
    });
    b.rightmost.push_back(std::move(rmax));
    if (keep_final) b.final.push_back(std::move(last));
  }
  return b;
}

Outcome ac3() {
  const auto start = Clock::now();
  const auto batch = gauss_batch(16, true);
  bool ok = true;
  std::string detail;
  for (double t : {0.0, 0.5, 1.0, 3.0}) {
    std::vector<double> errs;
    for (const auto& xs : batch.final) errs.push_back(std::abs(static_cast<double>(hand_log_sum_exp(xs, t) / 20) - tilde_lambda_g(t)));
    const double med = median_of(errs);
    const double tol = t == 3.0 ? 0.15 : 0.05;
    ok = ok && med <= tol;
    detail += "t=" + fmt(t) + ": " + fmt(med, 4) + " (tol " + fmt(tol) + ") ";
  }
  const double secs = seconds_since(start);
  ok = ok && secs < 120.0;
  return {ok, detail + fmt(secs, 3) + " s"};
}

Outcome ac4() {
  const auto batch = gauss_batch(16, false);
  std::vector<double> gaps;
  for (std::size_t n : {10, 15, 20}) {
    std::vector<double> e;
    for (const auto& r : batch.rightmost) e.push_back(std::abs(r[n] / n - 1.177410));
    gaps.push_back(median_of(e));
  }
  const bool ok = gaps[2] <= 0.25 && gaps[1] <= gaps[0] && gaps[2] <= gaps[1];
  return {ok, "median |R_n/n - 1.177410| at n=10,15,20: " + fmt(gaps[0], 4) + ", " + fmt(gaps[1], 4) + ", " +
                  fmt(gaps[2], 4) + " (tol 0.25 at n=20, nonincreasing)"};
}

Outcome ac5() {
  const auto batch = gauss_batch(16, true);
  std::vector<double> errs;
  for (const auto& xs : batch.final) {
    const auto k = std::count_if(xs.begin(), xs.end(), [](double s) { return s >= 20 * 0.8; });
    const double rate = k == 0 ? -kInf : std::log(static_cast<double>(k)) / 20;
    errs.push_back(std::abs(rate - 0.373147));
  }
  const double med = median_of(errs);
  return {med <= 0.08, "median |(1/n) log Z_n(n[0.8, inf)) - 0.373147| = " + fmt(med, 4) + " (tol 0.08)"};
}

Outcome ac6() {
  const auto start = Clock::now();
  const auto env = sample_environment(fixture("cfg_g.yaml").model, 400, kSeed, 0);
  const double v = quenched_mean_ldp_exact(env, 0.8, 400);
  const double secs = seconds_since(start);
  const double err = std::abs(v - (kLog2 - 0.32));
  return {err <= 0.01 && secs < 1.0, "value " + fmt(v, 8) + ", error " + fmt(err, 4) + " (tol 0.01), " + fmt(secs, 3) + " s"};
}

Outcome ac7() {
  auto start = Clock::now();
  const auto g_env = sample_environment(fixture("cfg_g.yaml").model, 20, kSeed, 0);
  const auto g = final_positions(g_env, 20, 0);
  const double ks_g = hand_ks(g, 0.0, std::sqrt(20.0));
  const double secs_g = seconds_since(start);

  start = Clock::now();
  const auto two = fixture("cfg_2s.yaml").model;
  const auto s_env = sample_environment(two, 18, kSeed, 0);
  double a = 0.0, b2 = 0.0;
  for (std::size_t i = 0; i < 18; ++i) {
    const bool is_a = s_env.state(i).label() == "A";
    a += is_a ? 1.0 : -1.0;
    b2 += is_a ? 1.0 : 2.0;
  }
  double ks_s = kInf;
  std::string overflow;
  try {
    ks_s = hand_ks(final_positions(s_env, 18, 0), a, std::sqrt(b2));
  } catch (const PopulationOverflow& e) {
    overflow = std::string("; ") + e.what();
  }
  const double secs_s = seconds_since(start);
  const bool ok = ks_g <= 0.05 && ks_s <= 0.06 && secs_g < 60.0 && secs_s < 60.0;
  return {ok, "CFG-G KS " + fmt(ks_g, 4) + " (tol 0.05, " + fmt(secs_g, 3) + " s), CFG-2S KS " + fmt(ks_s, 4) +
                  " (tol 0.06, " + fmt(secs_s, 3) + " s)" + overflow};
}

Outcome ac8() {
  const auto env = sample_environment(fixture("cfg_g.yaml").model, 20, kSeed, 0);
  auto xs = final_positions(env, 20, 0);
  std::sort(xs.begin(), xs.end());
  const double a = 0.0, b = std::sqrt(20.0), h = 0.5, total = static_cast<double>(xs.size());
  auto window = [&](double lo) {
    const auto first = std::upper_bound(xs.begin(), xs.end(), lo);
    const auto last = std::lower_bound(xs.begin(), xs.end(), lo + h);
    return b * static_cast<double>(std::max<std::ptrdiff_t>(0, last - first)) / total;
  };
  double sup = 0.0;
  for (int k = -40; k <= 40; ++k) {
    const double x = a + b * k / 10.0;
    const double z = (x - a) / b;
    sup = std::max(sup, std::abs(window(x) - h * std::exp(-z * z / 2) / std::sqrt(2 * std::numbers::pi)));
  }
  const double center = window(a);
  const double center_err = std::abs(center - 0.199471);
  return {sup <= 0.05 && center_err <= 0.03, "sup gap " + fmt(sup, 4) + " (tol 0.05), center window " + fmt(center, 5) +
                                                 " vs 0.199471 (tol 0.03)"};
}

Outcome ac9() {
  const auto start = Clock::now();
  const auto two = fixture("cfg_2s.yaml").model;
  const std::size_t n = 15;
  const double a = -0.2 * n, b = std::sqrt(2.56 * n);
  std::vector<double> grid;
  for (int k = -400; k <= 400; ++k) grid.push_back(k / 100.0);
  std::vector<long double> below(grid.size(), 0.0L);
  long double total = 0.0L;
  for (std::uint32_t r = 0; r < 500; ++r) {
    const auto env = sample_environment(two, n, kSeed, r + 1);
    auto xs = final_positions(env, n, kAnnealedBatchOffset + r);
    std::sort(xs.begin(), xs.end());
    total += xs.size();
    for (std::size_t i = 0; i < grid.size(); ++i)
      below[i] += std::upper_bound(xs.begin(), xs.end(), a + b * grid[i]) - xs.begin();
  }
  double ks = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) ks = std::max(ks, std::abs(static_cast<double>(below[i] / total) - phi(grid[i])));
  const double secs = seconds_since(start);
  return {ks <= 0.05 && secs < 300.0, "KS " + fmt(ks, 4) + " (tol 0.05), " + fmt(secs, 3) + " s"};
}

Outcome ac10() {
  const auto env = sample_environment(fixture("cfg_g.yaml").model, 10, kSeed, 0);
  std::vector<double> w0, wt;
  for (std::uint32_t r = 0; r < 200; ++r) {
    const auto xs = final_positions(env, 10, kMartingaleBatchOffset + r);
    w0.push_back(static_cast<double>(xs.size()) / 1024.0);
    wt.push_back(static_cast<double>(std::exp(hand_log_sum_exp(xs, 0.5) - 10 * (kLog2 + 0.125))));
  }
  auto check = [](const std::vector<double>& v, double& mean, double& se) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    se = std::sqrt(ss / (v.size() - 1) / v.size());
    return std::abs(mean - 1.0) <= 4 * se;
  };
  double m0, s0, mt, st;
  const bool ok0 = check(w0, m0, s0);
  const bool okt = check(wt, mt, st);
  return {ok0 && okt, "mean W_n " + fmt(m0) + " (SE " + fmt(s0, 3) + "), mean W_n(0.5) " + fmt(mt) + " (SE " + fmt(st, 3) + ")"};
}

Outcome ac11() {
  const fs::path base = fs::temp_directory_path() / "brwre_acceptance_determinism";
  fs::remove_all(base);
  std::ostringstream sink;
  std::string reports[2];
  for (int i = 0; i < 2; ++i) {
    const fs::path dir = base / std::to_string(i);
    run_cli({"verify", "--config", (fs::path(BRWRE_CONFIG_DIR) / "cfg_g.yaml").string(), "--out", dir.string()}, sink, sink);
    std::ifstream in(dir / "report.json", std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    reports[i] = os.str();
  }
  const bool ok = !reports[0].empty() && reports[0] == reports[1];
  return {ok, "report.json " + std::to_string(reports[0].size()) + " bytes, " + (ok ? "identical" : "differs")};
}

Outcome ac12() {
  const auto env = sample_environment(fixture("cfg_det.yaml").model, 20, kSeed, 0);
  SimConfig c;
  c.horizon = 20;
  c.seed = kSeed;
  c.t_grid = {-2.0, 0.0, 0.5, 3.0};
  const auto snaps = run_tree(env, c, 0);
  const auto moments = quenched_moments(env, c.t_grid);
  double worst = 0.0;
  for (const auto& row : free_energy_curve(snaps, c.t_grid))
    for (double v : row) worst = std::max(worst, std::abs(v - kLog2));
  for (const auto& s : snaps) {
    worst = std::max({worst, std::abs(s.w_n - 1.0), std::abs(s.r_n), std::abs(s.l_n)});
    for (double t : c.t_grid) worst = std::max(worst, std::abs(additive_martingale(s, t, moments) - 1.0));
  }
  return {worst == 0.0 && snaps.back().count == (1u << 20), "max error " + fmt(worst) + " over n = 0..20"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance battery"};
  int only = 0;
  app.add_option("--only", only, "Run a single criterion (1-12)")->check(CLI::Range(1, 12));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::function<Outcome()>> criteria{ac1, ac2, ac3, ac4, ac5, ac6, ac7, ac8, ac9, ac10, ac11, ac12};
  bool all = true;
  for (int i = 1; i <= 12; ++i) {
    if (only != 0 && i != only) continue;
    Outcome o;
    try {
      o = criteria[i - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("AC-%02d %s %s\n", i, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}

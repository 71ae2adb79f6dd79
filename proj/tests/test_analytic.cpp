#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "brwre/analytic.hpp"
#include "brwre/errors.hpp"
#include "fixtures.hpp"

using namespace brwre;
using namespace fixtures;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

// Hand-derived quadratics.
double lambda_g(double t) { return kLog2 + t * t / 2.0; }
double lambda_2s(double t) {
  const double log_m_a = std::log(2.0) + t + t * t / 2.0;
  const double log_m_b = std::log(3.0) - t + t * t;
  return 0.5 * (log_m_a + log_m_b);
}

double brute_force_conjugate(const std::function<double(double)>& f, double x) {
  double best = -kInf;
  for (long k = -80000; k <= 80000; ++k) {
    const double t = k * 1e-4;
    best = std::max(best, x * t - f(t));
  }
  return best;
}

// Random i.i.d. models for property checks.
std::vector<EnvironmentModel> random_models(int count) {
  std::mt19937_64 gen(12345);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<EnvironmentModel> out;
  while (static_cast<int>(out.size()) < count) {
    const int states = 1 + static_cast<int>(gen() % 3);
    std::vector<EnvState> ss;
    std::vector<double> w;
    for (int i = 0; i < states; ++i) {
      OffspringLaw off;
      switch (gen() % 3) {
        case 0: off = Deterministic{static_cast<std::uint32_t>(1 + gen() % 4)}; break;
        case 1: off = ShiftedGeometric{0.2 + 0.8 * u(gen)}; break;
        default: off = PoissonPositive{0.2 + 3.0 * u(gen)}; break;
      }
      DisplacementLaw disp;
      switch (gen() % 3) {
        case 0: disp = PointMass{2.0 * u(gen) - 1.0}; break;
        case 1: disp = Gaussian{2.0 * u(gen) - 1.0, 0.1 + 2.0 * u(gen)}; break;
        default: disp = TwoPoint{0.1 + 2.0 * u(gen), 0.05 + 0.9 * u(gen)}; break;
      }
      ss.emplace_back("s" + std::to_string(i), off, disp);
      w.push_back(0.1 + u(gen));
    }
    double total = 0.0;
    for (double x : w) total += x;
    for (double& x : w) x /= total;
    try {
      out.push_back(EnvironmentModel::iid(ss, w));
    } catch (const ConfigError&) {
      // subcritical draw
    }
  }
  return out;
}

}  // namespace

TEST(Lambda, Examples) {
  for (double t : {-3.0, 0.0, 0.7, 5.0}) EXPECT_DOUBLE_EQ(lambda_of_t(cfg_det(), t), kLog2);
  EXPECT_NEAR(lambda_of_t(cfg_g(), 1.0), 1.193147, 1e-6);
  EXPECT_NEAR(lambda_of_t(cfg_g(), 1.0), lambda_g(1.0), 1e-14);
  EXPECT_NEAR(lambda_of_t(cfg_2s(), 0.0), 0.895880, 1e-6);
  for (double t = -4.0; t <= 4.0; t += 0.25) {
    EXPECT_NEAR(lambda_of_t(cfg_2s(), t), lambda_2s(t), 1e-13);
    EXPECT_NEAR(lambda_of_t(cfg_2s(), t), 0.5 * std::log(6.0) + 0.75 * t * t, 1e-13);
    EXPECT_NEAR(lambda_prime_of_t(cfg_2s(), t), 1.5 * t, 1e-13);
  }
}

TEST(Lambda, MarkovUsesStationaryWeights) {
  const auto model = EnvironmentModel::markov({state_a(), state_b()}, {{0.9, 0.1}, {0.2, 0.8}});
  const double t = 0.6;
  const double expected = (2.0 / 3.0) * (std::log(2.0) + t + t * t / 2.0) + (1.0 / 3.0) * (std::log(3.0) - t + t * t);
  EXPECT_NEAR(lambda_of_t(model, t), expected, 1e-13);
}

TEST(Legendre, Examples) {
  const auto f = LogMomentFunction(cfg_g()).as_convex();
  EXPECT_NEAR(legendre(f, 0.0), -kLog2, 1e-12);
  EXPECT_NEAR(legendre(f, 1.0), 0.5 - kLog2, 1e-12);
  EXPECT_NEAR(legendre(f, 0.0), -0.693147, 1e-6);
  EXPECT_NEAR(legendre(f, 1.0), -0.193147, 1e-6);

  const ConvexFunction constant{[](double) { return kLog2; }, [](double) { return 0.0; }};
  EXPECT_NEAR(legendre(constant, 0.0), -kLog2, 1e-15);
  EXPECT_EQ(legendre(constant, 0.1), kInf);
  EXPECT_EQ(legendre(constant, -0.1), kInf);
}

TEST(Legendre, RejectsNonConvexInput) {
  const ConvexFunction wavy{[](double t) { return std::sin(t); }, [](double t) { return std::cos(t); }};
  EXPECT_THROW(legendre(wavy, 0.0), NumericError);
  const ConvexFunction concave{[](double t) { return -t * t; }, [](double t) { return -2.0 * t; }};
  EXPECT_THROW(legendre(concave, 0.5), NumericError);
}

TEST(Legendre, AgreesWithBruteForce) {
  for (const auto& [model, f] : {std::pair{cfg_g(), &lambda_g}, std::pair{cfg_2s(), &lambda_2s}}) {
    const auto conv = LogMomentFunction(model).as_convex();
    const double lo = conv.derivative(-7.5), hi = conv.derivative(7.5);
    for (int i = 0; i < 20; ++i) {
      const double x = lo + (hi - lo) * i / 19.0;
      EXPECT_NEAR(legendre(conv, x), brute_force_conjugate(f, x), 1e-6) << "x=" << x;
    }
  }
}

TEST(Legendre, DualityOnInteriorGrid) {
  for (const auto& model : {cfg_g(), cfg_2s()}) {
    const RateFunctionTable table(model, {});
    const auto f = table.log_moment().as_convex();
    for (int k = 1; k < 40; ++k) {
      const double t = table.t_minus() + (table.t_plus() - table.t_minus()) * k / 40.0;
      const double lp = f.derivative(t);
      EXPECT_NEAR(legendre(f, lp), t * lp - f.value(t), 1e-8) << "t=" << t;
    }
  }
}

TEST(Legendre, MinimumIsMinusLambdaZero) {
  for (const auto& model : random_models(12)) {
    const RateFunctionTable table(model, {});
    const double x0 = table.lambda_prime_at(0.0);
    EXPECT_NEAR(table.rate(x0), -table.lambda_at(0.0), 1e-8);
    for (double dx : {-0.3, -0.05, 0.05, 0.3}) EXPECT_GE(table.rate(x0 + dx), table.rate(x0) - 1e-12);
  }
}

TEST(CriticalTemperatures, ClosedForms) {
  const RateFunctionTable g(cfg_g(), {});
  EXPECT_NEAR(g.t_plus(), std::sqrt(2.0 * kLog2), 1e-8);
  EXPECT_NEAR(g.t_minus(), -std::sqrt(2.0 * kLog2), 1e-8);
  EXPECT_NEAR(g.t_plus(), 1.177410, 1e-6);

  const RateFunctionTable s(cfg_2s(), {});
  const double t2 = std::sqrt(2.0 / 3.0 * std::log(6.0));
  EXPECT_NEAR(s.t_plus(), t2, 1e-8);
  EXPECT_NEAR(s.t_minus(), -t2, 1e-8);
  EXPECT_LE(std::abs(s.log_moment().rho(s.t_plus())), 1e-8);
}

TEST(CriticalTemperatures, DegenerateDisplacementIsInfinite) {
  const RateFunctionTable t(cfg_det(), {});
  EXPECT_EQ(t.t_plus(), kInf);
  EXPECT_EQ(t.t_minus(), -kInf);
}

TEST(CriticalTemperatures, RejectsNonSupercritical) {
  const auto model = EnvironmentModel::constant(EnvState("one", Deterministic{1}, Gaussian{0.0, 1.0}), {false});
  EXPECT_THROW(critical_temperatures(LogMomentFunction(model)), ConfigError);
}

TEST(FreeEnergyLimit, Branches) {
  const RateFunctionTable g(cfg_g(), {});
  EXPECT_NEAR(free_energy_limit(g, 0.5), kLog2 + 0.125, 1e-12);
  EXPECT_NEAR(free_energy_limit(g, 0.5), 0.818147, 1e-6);
  EXPECT_NEAR(free_energy_limit(g, 2.0), 2.0 * std::sqrt(2.0 * kLog2), 1e-8);
  EXPECT_NEAR(free_energy_limit(g, 2.0), 2.354820, 1e-6);
  EXPECT_NEAR(free_energy_limit(g, -2.0), 2.0 * std::sqrt(2.0 * kLog2), 1e-8);
  EXPECT_NEAR(free_energy_limit(g, g.t_plus()), 2.0 * kLog2, 1e-8);
  EXPECT_NEAR(free_energy_limit(g, g.t_plus()), 1.386294, 1e-6);
  const double tp = g.t_plus();
  EXPECT_NEAR(free_energy_limit(g, tp - 1e-9), free_energy_limit(g, tp + 1e-9), 1e-8);
}

TEST(Speeds, ClosedForms) {
  const auto [gl, gr] = speeds(RateFunctionTable(cfg_g(), {}));
  EXPECT_NEAR(gr, std::sqrt(2.0 * kLog2), 1e-8);
  EXPECT_NEAR(gl, -std::sqrt(2.0 * kLog2), 1e-8);
  const auto [sl, sr] = speeds(RateFunctionTable(cfg_2s(), {}));
  const double v = 1.5 * std::sqrt(2.0 / 3.0 * std::log(6.0));
  EXPECT_NEAR(sr, v, 1e-8);
  EXPECT_NEAR(sl, -v, 1e-8);
}

TEST(Speeds, BoundedSupportIsBoundedAndSymmetric) {
  const auto model = EnvironmentModel::constant(EnvState("T", Deterministic{2}, TwoPoint{1.0, 0.5}));
  const auto [l, r] = speeds(RateFunctionTable(model, {}));
  EXPECT_LE(std::abs(l), 1.0);
  EXPECT_LE(std::abs(r), 1.0);
  EXPECT_NEAR(l, -r, 1e-12);
  EXPECT_GT(r, 0.0);
}

TEST(Speeds, BiasedTwoPointHasInteriorSpeed) {
  // 3 children, +1 w.p. 0.2: rho has a finite root, speed strictly inside (-1, 1).
  const auto model = EnvironmentModel::constant(EnvState("T", Deterministic{3}, TwoPoint{1.0, 0.2}));
  const RateFunctionTable table(model, {});
  EXPECT_TRUE(std::isfinite(table.t_plus()));
  EXPECT_LT(table.speed_right(), 1.0);
  EXPECT_GT(table.speed_right(), -1.0);
  EXPECT_LE(std::abs(table.log_moment().rho(table.t_plus())), 1e-8);
}

TEST(RateFunctionTable, Invariants) {
  std::vector<double> grid;
  for (int k = -300; k <= 300; ++k) grid.push_back(k / 100.0);
  auto models = random_models(20);
  models.push_back(cfg_g());
  models.push_back(cfg_2s());
  models.push_back(cfg_det());
  for (const auto& model : models) {
    const RateFunctionTable table(model, grid);
    const auto& lam = table.lambda();
    const auto& lp = table.lambda_prime();
    const auto tilde = table.tilde_lambda_values();
    for (std::size_t i = 1; i + 1 < grid.size(); ++i) EXPECT_GE(lam[i + 1] - 2 * lam[i] + lam[i - 1], -1e-9);
    for (std::size_t i = 1; i < grid.size(); ++i) EXPECT_GE(lp[i], lp[i - 1] - 1e-12);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      EXPECT_NEAR(table.rho()[i], grid[i] * lp[i] - lam[i], 1e-9 * std::max(1.0, std::abs(lam[i])));
      EXPECT_LE(tilde[i], lam[i] + 1e-12);
    }
    EXPECT_NEAR(table.log_moment().rho(0.0), -table.lambda_at(0.0), 1e-15);
    EXPECT_LT(table.t_minus(), 0.0);
    EXPECT_GT(table.t_plus(), 0.0);
    if (std::isfinite(table.t_plus())) EXPECT_LE(std::abs(table.log_moment().rho(table.t_plus())), 1e-8);
    if (std::isfinite(table.t_minus())) EXPECT_LE(std::abs(table.log_moment().rho(table.t_minus())), 1e-8);

    // tilde Lambda on each branch
    for (double t : grid) {
      if (t >= table.t_plus())
        EXPECT_NEAR(table.tilde_lambda(t), t * table.speed_right(), 1e-9 * std::max(1.0, std::abs(t)));
      else if (t <= table.t_minus())
        EXPECT_NEAR(table.tilde_lambda(t), t * table.speed_left(), 1e-9 * std::max(1.0, std::abs(t)));
      else
        EXPECT_DOUBLE_EQ(table.tilde_lambda(t), table.lambda_at(t));
    }

    // tilde Lambda* = Lambda* on the interior of the speed interval
    if (table.speed_right() > table.speed_left()) {
      for (int k = 1; k < 10; ++k) {
        const double x = table.speed_left() + (table.speed_right() - table.speed_left()) * k / 10.0;
        EXPECT_NEAR(table.tilde_rate(x), table.rate(x), 1e-6) << "x=" << x;
      }
      EXPECT_EQ(table.tilde_rate(table.speed_right() + 0.1), kInf);
      EXPECT_EQ(table.tilde_rate(table.speed_left() - 0.1), kInf);
    }
  }
}

TEST(AnnealedParams, TwoStateExample) {
  const AnnealedParams ap(cfg_2s());
  // mean and spread of the step distribution weighted by E N
  const double em = 0.5 * 2 + 0.5 * 3;
  const double mu_bar = (0.5 * 2 * 1.0 + 0.5 * 3 * -1.0) / em;
  const double sigma2_bar = (0.5 * 2 * (1.0 + (1.0 - mu_bar) * (1.0 - mu_bar)) +
                             0.5 * 3 * (2.0 + (-1.0 - mu_bar) * (-1.0 - mu_bar))) /
                            em;
  EXPECT_NEAR(ap.mu_bar(), mu_bar, 1e-14);
  EXPECT_NEAR(ap.sigma2_bar(), sigma2_bar, 1e-14);
  EXPECT_NEAR(ap.mu_bar(), -0.2, 1e-14);
  EXPECT_NEAR(ap.sigma2_bar(), 2.56, 1e-14);
  EXPECT_NEAR(ap.mu_bar_prime(), 0.0, 1e-14);
  EXPECT_NEAR(ap.sigma2_bar_prime(), 2.5, 1e-14);
}

TEST(AnnealedParams, MonteCarloOracle) {
  // Sample (state, point process) pairs and form the ratio estimators directly.
  const auto model = cfg_2s();
  std::mt19937_64 gen(99);
  std::normal_distribution<double> z(0.0, 1.0);
  const int draws = 1'000'000;
  double sum_n = 0.0, sum_l = 0.0, sum_l2 = 0.0, sum_mu = 0.0, sum_dev = 0.0;
  for (int i = 0; i < draws; ++i) {
    const bool a = (gen() & 1u) != 0;
    const int n = a ? 2 : 3;
    const double mean = a ? 1.0 : -1.0, sd = a ? 1.0 : std::sqrt(2.0);
    double ls = 0.0, l2 = 0.0, dev = 0.0;
    for (int k = 0; k < n; ++k) {
      const double l = mean + sd * z(gen);
      ls += l;
      l2 += l * l;
      dev += l * l;  // mu_bar' = 0
    }
    sum_n += n;
    sum_l += ls;
    sum_l2 += l2;
    sum_mu += ls / n;
    sum_dev += dev / n;
  }
  const double mu_bar = sum_l / sum_n;
  const double sigma2_bar = sum_l2 / sum_n - mu_bar * mu_bar;
  const AnnealedParams ap(model);
  EXPECT_NEAR(ap.mu_bar(), mu_bar, 0.01);
  EXPECT_NEAR(ap.sigma2_bar(), sigma2_bar, 0.02);
  EXPECT_NEAR(ap.mu_bar_prime(), sum_mu / draws, 0.01);
  EXPECT_NEAR(ap.sigma2_bar_prime(), sum_dev / draws, 0.02);
}

TEST(AnnealedParams, SingleStateReducesToQuenched) {
  const EnvState s("S", ShiftedGeometric{0.4}, Gaussian{0.3, 1.7});
  const AnnealedParams ap(EnvironmentModel::constant(s));
  EXPECT_NEAR(ap.mu_bar(), 0.3, 1e-14);
  EXPECT_NEAR(ap.sigma2_bar(), 1.7, 1e-14);
  EXPECT_NEAR(ap.mu_bar_prime(), 0.3, 1e-14);
  EXPECT_NEAR(ap.sigma2_bar_prime(), 1.7, 1e-14);
}

TEST(AnnealedParams, RejectsMarkov) {
  const auto model = EnvironmentModel::markov({state_a(), state_b()}, {{0.9, 0.1}, {0.2, 0.8}});
  EXPECT_THROW(AnnealedParams{model}, UnsupportedError);
}

TEST(AnnealedParams, LambdaAnnealedDominatesQuenched) {
  auto models = random_models(15);
  models.push_back(cfg_2s());
  for (const auto& model : models) {
    const AnnealedParams ap(model);
    EXPECT_NEAR(ap.bar_lambda_a(0.0), 0.0, 1e-14);
    bool spread = false;
    for (const auto& s : model.states()) spread = spread || !std::holds_alternative<PointMass>(s.displacement());
    if (spread) EXPECT_GT(ap.sigma2_bar(), 0.0);
    EXPECT_GE(ap.sigma2_bar(), 0.0);
    bool strict = false;
    for (int k = -30; k <= 30; ++k) {
      const double t = k / 10.0;
      const double la = ap.lambda_a(t), l = lambda_of_t(model, t);
      EXPECT_GE(la, l - 1e-12) << "t=" << t;
      strict = strict || la > l + 1e-9;
    }
    if (model.states().size() > 1 && model == cfg_2s()) EXPECT_TRUE(strict);
  }
  // two-state closed form of Lambda_a
  const AnnealedParams ap(cfg_2s());
  for (double t : {-1.0, 0.0, 0.5, 2.0}) {
    const double expected = std::log(0.5 * 2.0 * std::exp(t + t * t / 2) + 0.5 * 3.0 * std::exp(-t + t * t));
    EXPECT_NEAR(ap.lambda_a(t), expected, 1e-12);
    const double bar = std::log(0.5 * std::exp(t + t * t / 2) + 0.5 * std::exp(-t + t * t));
    EXPECT_NEAR(ap.bar_lambda_a(t), bar, 1e-12);
  }
}

TEST(AnnealedParams, DerivativesMatchFiniteDifferences) {
  const AnnealedParams ap(cfg_2s());
  const double h = 1e-6;
  for (double t : {-1.5, -0.2, 0.0, 0.9}) {
    EXPECT_NEAR(ap.lambda_a_prime(t), (ap.lambda_a(t + h) - ap.lambda_a(t - h)) / (2 * h), 1e-6);
    EXPECT_NEAR(ap.bar_lambda_a_prime(t), (ap.bar_lambda_a(t + h) - ap.bar_lambda_a(t - h)) / (2 * h), 1e-6);
  }
  // mu_bar is the slope of Lambda_a at 0, mu_bar' that of bar Lambda_a
  EXPECT_NEAR(ap.lambda_a_prime(0.0), ap.mu_bar(), 1e-12);
  EXPECT_NEAR(ap.bar_lambda_a_prime(0.0), ap.mu_bar_prime(), 1e-12);
}

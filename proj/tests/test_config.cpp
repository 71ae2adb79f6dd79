#include <gtest/gtest.h>

#include <random>

#include "brwre/config.hpp"
#include "brwre/errors.hpp"
#include "fixtures.hpp"

using namespace brwre;
using namespace fixtures;

namespace {

const char* kMinimal = R"(schema_version: 1
name: tiny
environment:
  kind: constant
  states:
    - label: G
      offspring: {law: deterministic, k: 2}
      displacement: {law: gaussian, mean: 0.0, variance: 1.0}
)";

// Replaces the first occurrence of `from` in the minimal config.
std::string minimal_with(const std::string& from, const std::string& to) {
  std::string s = kMinimal;
  const auto pos = s.find(from);
  EXPECT_NE(pos, std::string::npos) << from;
  return s.replace(pos, from.size(), to);
}

ConfigError parse_error(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e;
  }
  ADD_FAILURE() << "expected ConfigError for:\n" << text;
  return ConfigError("none");
}

}  // namespace

TEST(ParseConfig, Fixtures) {
  const auto det = load_config(config_path("cfg_det.yaml"));
  EXPECT_EQ(det.name, "CFG-DET");
  EXPECT_EQ(det.seed, 42u);
  EXPECT_EQ(det.model, cfg_det());

  const auto g = load_config(config_path("cfg_g.yaml"));
  EXPECT_EQ(g.model, cfg_g());
  EXPECT_EQ(g.threads, 4u);
  ASSERT_EQ(g.estimators.x_grid.size(), default_x_grid().size());
  for (std::size_t i = 0; i < default_x_grid().size(); ++i) EXPECT_NEAR(g.estimators.x_grid[i], default_x_grid()[i], 1e-12);
  EXPECT_EQ(g.estimators.ldp_x, (std::vector<double>{0.0, 0.4, 0.8}));

  const auto two = load_config(config_path("cfg_2s.yaml"));
  EXPECT_EQ(two.model, cfg_2s());
  EXPECT_EQ(two.simulation.horizon, 15u);
  EXPECT_EQ(two.suite.horizon, 18u);
  EXPECT_EQ(two.suite.trend_horizons, (std::vector<std::size_t>{10, 15, 18}));
  EXPECT_DOUBLE_EQ(two.suite.clt_tol, 0.06);

  const auto markov = load_config(config_path("cfg_markov.yaml"));
  EXPECT_EQ(markov.model.kind(), EnvironmentKind::markov);
  EXPECT_EQ(markov.simulation.particle_cap, 4'000'000u);
  EXPECT_EQ(markov.suite.exact_n, 30u);
}

TEST(ParseConfig, Defaults) {
  const auto cfg = parse_config(kMinimal);
  EXPECT_FALSE(cfg.seed.has_value());
  EXPECT_EQ(cfg.output_dir, "out");
  EXPECT_EQ(cfg.threads, 1u);
  EXPECT_EQ(cfg.simulation, SimulationSettings{});
  EXPECT_EQ(cfg.suite, SuiteConfig{});
  EXPECT_EQ(cfg.estimators.x_grid, default_x_grid());
  EXPECT_EQ(default_x_grid().size(), 81u);
}

TEST(ParseConfig, RangeExpansion) {
  const auto cfg = parse_config(std::string(kMinimal) + "estimators:\n  x_grid: {min: -1, max: 1, step: 0.5}\n");
  EXPECT_EQ(cfg.estimators.x_grid, (std::vector<double>{-1.0, -0.5, 0.0, 0.5, 1.0}));
}

TEST(ParseConfig, RoundTripFixtures) {
  for (const char* name : {"cfg_det.yaml", "cfg_g.yaml", "cfg_2s.yaml", "cfg_markov.yaml"}) {
    const auto cfg = load_config(config_path(name));
    const std::string text = serialize_config(cfg);
    const auto back = parse_config(text);
    EXPECT_EQ(back, cfg) << name;
    EXPECT_EQ(serialize_config(back), text) << name;
  }
}

TEST(ParseConfig, RoundTripRandomConfigs) {
  std::mt19937_64 gen(2718);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int built = 0;
  while (built < 50) {
    const int count = 1 + static_cast<int>(gen() % 3);
    std::vector<EnvState> states;
    for (int i = 0; i < count; ++i) {
      OffspringLaw off;
      switch (gen() % 3) {
        case 0: off = Deterministic{static_cast<std::uint32_t>(2 + gen() % 4)}; break;
        case 1: off = ShiftedGeometric{0.1 + 0.8 * u(gen)}; break;
        default: off = PoissonPositive{0.5 + 3.0 * u(gen)}; break;
      }
      DisplacementLaw disp;
      switch (gen() % 3) {
        case 0: disp = PointMass{u(gen) - 0.5}; break;
        case 1: disp = Gaussian{u(gen) - 0.5, 0.1 + u(gen)}; break;
        default: disp = TwoPoint{0.1 + u(gen), 0.05 + 0.9 * u(gen)}; break;
      }
      states.emplace_back("s" + std::to_string(i), off, disp);
    }
    std::optional<EnvironmentModel> model;
    try {
      if (count == 1) {
        model = EnvironmentModel::constant(states.front());
      } else if (gen() % 2) {
        std::vector<double> p(count);
        double total = 0.0;
        for (auto& x : p) total += (x = 0.1 + u(gen));
        for (auto& x : p) x /= total;
        model = EnvironmentModel::iid(states, p);
      } else {
        std::vector<std::vector<double>> q(count, std::vector<double>(count));
        for (auto& row : q) {
          double total = 0.0;
          for (auto& x : row) total += (x = 0.1 + u(gen));
          for (auto& x : row) x /= total;
        }
        model = EnvironmentModel::markov(states, q);
      }
    } catch (const ConfigError&) {
      continue;  // rounding left a row off by an ulp
    }
    RunConfig cfg(*model);
    cfg.name = "random-" + std::to_string(built);
    if (gen() % 2) cfg.seed = gen();
    cfg.threads = 1 + static_cast<unsigned>(gen() % 8);
    cfg.simulation.horizon = 1 + gen() % 30;
    cfg.simulation.t_grid = {-u(gen), 0.0, u(gen) + 1e-3};
    cfg.estimators.x_grid = {-1.0 / 3.0, 0.1, 2.0 / 3.0};
    cfg.estimators.ldp_x = {u(gen)};
    cfg.estimators.window = 0.1 + u(gen);
    cfg.suite.free_energy_tol = u(gen);
    cfg.suite.horizon = 5 + gen() % 10;
    cfg.suite.trend_horizons = {cfg.suite.horizon};
    const auto back = parse_config(serialize_config(cfg));
    EXPECT_EQ(back, cfg) << serialize_config(cfg);
    ++built;
  }
}

TEST(ParseConfig, UnknownKeyReportsLineAndField) {
  const auto e = parse_error(minimal_with("      offspring: {law: deterministic, k: 2}",
                                          "      offspring: {law: deterministic, k: 2}\n      colour: red"));
  EXPECT_EQ(e.line(), 8u);
  EXPECT_EQ(e.field(), "environment.states[0].colour");
  EXPECT_NE(std::string(e.what()).find("unknown key"), std::string::npos);

  const auto top = parse_error(std::string(kMinimal) + "speed: 3\n");
  EXPECT_EQ(top.field(), "speed");
  EXPECT_EQ(top.line(), 9u);
}

TEST(ParseConfig, WrongTypesAndMissingKeys) {
  EXPECT_EQ(parse_error(minimal_with("k: 2", "k: two")).field(), "environment.states[0].offspring.k");
  EXPECT_EQ(parse_error(minimal_with("mean: 0.0", "mean: [1]")).field(), "environment.states[0].displacement.mean");
  EXPECT_EQ(parse_error(minimal_with("name: tiny\n", "")).field(), "name");
  EXPECT_EQ(parse_error(minimal_with("schema_version: 1", "schema_version: 2")).field(), "schema_version");
  EXPECT_EQ(parse_error(minimal_with("mean: 0.0", "mean: .nan")).field(), "environment.states[0].displacement.mean");
  EXPECT_THROW(parse_config(""), ConfigError);
  EXPECT_THROW(parse_config("a: [1, 2"), ConfigError);
  EXPECT_THROW(load_config(config_path("no_such_file.yaml")), ConfigError);
}

TEST(ParseConfig, BadLaws) {
  const auto e = parse_error(minimal_with("law: deterministic", "law: binomial"));
  EXPECT_EQ(e.field(), "environment.states[0].offspring.law");
  EXPECT_EQ(e.line(), 7u);
  EXPECT_EQ(parse_error(minimal_with("law: gaussian", "law: cauchy")).field(), "environment.states[0].displacement.law");
  // invalid parameters surface with the state's line
  EXPECT_EQ(parse_error(minimal_with("variance: 1.0", "variance: -1.0")).line(), 6u);
  EXPECT_EQ(parse_error(minimal_with("k: 2", "k: 0")).field(), "environment.states[0].offspring.k");
}

TEST(ParseConfig, BadGrids) {
  const auto unsorted = parse_error(std::string(kMinimal) + "simulation:\n  t_grid: [0, 1, 0.5]\n");
  EXPECT_EQ(unsorted.field(), "simulation.t_grid");
  EXPECT_EQ(unsorted.line(), 10u);
  EXPECT_EQ(parse_error(std::string(kMinimal) + "estimators:\n  x_grid: [0, .inf]\n").field(), "estimators.x_grid");
  EXPECT_EQ(parse_error(std::string(kMinimal) + "estimators:\n  x_grid: {min: 1, max: 0, step: 0.1}\n").field(),
            "estimators.x_grid");
  EXPECT_EQ(parse_error(std::string(kMinimal) + "estimators:\n  x_grid: [1, 1]\n").field(), "estimators.x_grid");
}

TEST(ParseConfig, EnvironmentKindRules) {
  const std::string two_states = R"(schema_version: 1
name: two
environment:
  kind: iid
  states:
    - label: A
      offspring: {law: deterministic, k: 2}
      displacement: {law: point_mass, c: 0.0}
    - label: B
      offspring: {law: deterministic, k: 3}
      displacement: {law: two_point, d: 1.0, p: 0.5}
  probabilities: [0.5, 0.6]
)";
  const auto sum = parse_error(two_states);
  EXPECT_EQ(sum.line(), 4u);
  EXPECT_NE(std::string(sum.what()).find("line 4"), std::string::npos);

  std::string markov = two_states;
  markov.replace(markov.find("kind: iid"), 9, "kind: markov");
  EXPECT_EQ(parse_error(markov).field(), "environment.probabilities");
  markov.replace(markov.find("  probabilities: [0.5, 0.6]"), 27, "  transition: [[0.5, 0.5], [1.0, 0.0]]");
  EXPECT_EQ(parse_config(markov).model.kind(), EnvironmentKind::markov);

  std::string constant = two_states;
  constant.replace(constant.find("kind: iid"), 9, "kind: constant");
  EXPECT_THROW(parse_config(constant), ConfigError);
  EXPECT_EQ(parse_error(minimal_with("kind: constant", "kind: periodic")).field(), "environment.kind");
}

TEST(ParseConfig, SuiteValidation) {
  EXPECT_EQ(parse_error(std::string(kMinimal) + "suite:\n  horizon: 10\n  trend_horizons: [5, 12]\n").field(),
            "suite.trend_horizons");
  EXPECT_EQ(parse_error(std::string(kMinimal) + "suite:\n  replicas: 1\n").field(), "suite.replicas");
  EXPECT_EQ(parse_error(std::string(kMinimal) + "suite:\n  particle_cap: 5000000000\n").field(), "suite.particle_cap");
  EXPECT_EQ(parse_error(std::string(kMinimal) + "suite:\n  tolerance: 1\n").field(), "suite.tolerance");
  EXPECT_EQ(parse_error(std::string(kMinimal) + "threads: 0\n").field(), "threads");
  const auto ok = parse_config(std::string(kMinimal) + "suite:\n  clt_tol: 0.07\n  martingale_t: 0.25\n");
  EXPECT_DOUBLE_EQ(ok.suite.clt_tol, 0.07);
  EXPECT_DOUBLE_EQ(ok.suite.martingale_t, 0.25);
}

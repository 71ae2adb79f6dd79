#include "brwre/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <set>

#include "brwre/errors.hpp"
#include "brwre/io.hpp"

namespace brwre {

namespace {

std::size_t line_of(const YAML::Node& node) {
  const auto mark = node.Mark();
  return mark.line >= 0 ? static_cast<std::size_t>(mark.line) + 1 : 0;
}

/// A mapping node plus its dotted path, with strict key checking.
class Section {
 public:
  Section(YAML::Node node, std::string path, std::size_t fallback_line = 0)
      : node_(std::move(node)), path_(std::move(path)) {
    line_ = node_.IsDefined() ? line_of(node_) : fallback_line;
    if (!node_.IsMap()) throw ConfigError("expected a mapping", path_, line_);
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> known(keys.begin(), keys.end());
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!known.count(key)) throw ConfigError("unknown key", field(key), line_of(kv.first));
    }
  }

  bool has(const std::string& key) const { return static_cast<bool>(node_[key]); }

  YAML::Node raw(const std::string& key) const {
    const YAML::Node child = node_[key];
    if (!child) throw ConfigError("missing required key", field(key), line_);
    return child;
  }

  Section section(const std::string& key) const { return Section(raw(key), field(key)); }

  template <class T>
  T get(const std::string& key) const {
    const YAML::Node child = raw(key);
    try {
      return child.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError("wrong type", field(key), line_of(child));
    }
  }

  template <class T>
  T get_or(const std::string& key, T fallback) const {
    return has(key) ? get<T>(key) : fallback;
  }

  double get_finite(const std::string& key) const {
    const double v = get<double>(key);
    if (!std::isfinite(v)) throw ConfigError("must be finite", field(key), line_of(raw(key)));
    return v;
  }

  std::size_t get_count(const std::string& key) const {
    const YAML::Node child = raw(key);
    long long v;
    try {
      v = child.as<long long>();
    } catch (const YAML::Exception&) {
      throw ConfigError("expected a non-negative integer", field(key), line_of(child));
    }
    if (v < 0) throw ConfigError("expected a non-negative integer", field(key), line_of(child));
    return static_cast<std::size_t>(v);
  }

  /// A list of finite numbers, or {min, max, step}. Must be sorted.
  std::vector<double> grid(const std::string& key) const {
    const YAML::Node child = raw(key);
    std::vector<double> out;
    if (child.IsMap()) {
      const Section range(child, field(key));
      range.allow({"min", "max", "step"});
      const double lo = range.get_finite("min"), hi = range.get_finite("max"), step = range.get_finite("step");
      if (!(step > 0.0) || hi < lo) throw ConfigError("range needs min <= max and step > 0", field(key), line_of(child));
      const auto count = std::llround((hi - lo) / step);
      for (long long i = 0; i <= count; ++i) out.push_back(lo + step * static_cast<double>(i));
    } else {
      try {
        out = child.as<std::vector<double>>();
      } catch (const YAML::Exception&) {
        throw ConfigError("expected a list of numbers or {min, max, step}", field(key), line_of(child));
      }
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (!std::isfinite(out[i])) throw ConfigError("grid values must be finite", field(key), line_of(child));
      if (i > 0 && !(out[i] > out[i - 1])) throw ConfigError("grid must be strictly increasing", field(key), line_of(child));
    }
    return out;
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::size_t line() const { return line_; }
  const YAML::Node& node() const { return node_; }

 private:
  YAML::Node node_;
  std::string path_;
  std::size_t line_;
};

OffspringLaw parse_offspring(const Section& s) {
  const auto law = s.get<std::string>("law");
  if (law == "deterministic") {
    s.allow({"law", "k"});
    const std::size_t k = s.get_count("k");
    if (k < 1 || k > 0xffffffffu) throw ConfigError("k must be >= 1", s.field("k"), s.line());
    return Deterministic{static_cast<std::uint32_t>(k)};
  }
  if (law == "shifted_geometric") {
    s.allow({"law", "p"});
    return ShiftedGeometric{s.get_finite("p")};
  }
  if (law == "poisson_positive") {
    s.allow({"law", "lambda"});
    return PoissonPositive{s.get_finite("lambda")};
  }
  throw ConfigError("unknown offspring law '" + law + "' (deterministic, shifted_geometric, poisson_positive)",
                    s.field("law"), line_of(s.raw("law")));
}

DisplacementLaw parse_displacement(const Section& s) {
  const auto law = s.get<std::string>("law");
  if (law == "point_mass") {
    s.allow({"law", "c"});
    return PointMass{s.get_finite("c")};
  }
  if (law == "gaussian") {
    s.allow({"law", "mean", "variance"});
    return Gaussian{s.get_finite("mean"), s.get_finite("variance")};
  }
  if (law == "two_point") {
    s.allow({"law", "d", "p"});
    return TwoPoint{s.get_finite("d"), s.get_finite("p")};
  }
  throw ConfigError("unknown displacement law '" + law + "' (point_mass, gaussian, two_point)", s.field("law"),
                    line_of(s.raw("law")));
}

EnvironmentModel parse_environment(const Section& env) {
  env.allow({"kind", "states", "probabilities", "transition"});
  const auto kind = env.get<std::string>("kind");
  const YAML::Node list = env.raw("states");
  if (!list.IsSequence() || list.size() == 0)
    throw ConfigError("expected a non-empty list of states", env.field("states"), line_of(list));

  std::vector<EnvState> states;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const Section s(list[i], env.field("states[" + std::to_string(i) + "]"));
    s.allow({"label", "offspring", "displacement"});
    const auto label = s.get<std::string>("label");
    try {
      states.emplace_back(label, parse_offspring(s.section("offspring")), parse_displacement(s.section("displacement")));
    } catch (const ConfigError& e) {
      if (e.line() > 0) throw;
      throw ConfigError(e.message(), e.field(), s.line());
    }
  }

  try {
    if (kind == "constant") {
      if (states.size() != 1) throw ConfigError("constant environment takes exactly one state", env.field("states"));
      if (env.has("probabilities") || env.has("transition"))
        throw ConfigError("constant environment takes no probabilities or transition", env.field("kind"));
      return EnvironmentModel::constant(states.front());
    }
    if (kind == "iid") {
      if (env.has("transition")) throw ConfigError("iid environment takes no transition matrix", env.field("transition"));
      return EnvironmentModel::iid(states, env.get<std::vector<double>>("probabilities"));
    }
    if (kind == "markov") {
      if (env.has("probabilities"))
        throw ConfigError("markov environment starts from its stationary law; drop probabilities",
                          env.field("probabilities"));
      return EnvironmentModel::markov(states, env.get<std::vector<std::vector<double>>>("transition"));
    }
  } catch (const ConfigError& e) {
    if (e.line() > 0) throw;
    throw ConfigError(e.message(), e.field(), env.line());
  }
  throw ConfigError("unknown environment kind '" + kind + "' (constant, iid, markov)", env.field("kind"),
                    line_of(env.raw("kind")));
}

std::vector<std::size_t> parse_counts(const Section& s, const std::string& key) {
  const YAML::Node child = s.raw(key);
  try {
    return child.as<std::vector<std::size_t>>();
  } catch (const YAML::Exception&) {
    throw ConfigError("expected a list of non-negative integers", s.field(key), line_of(child));
  }
}

void parse_suite(const Section& s, SuiteConfig& out) {
  s.allow({"replicas", "horizon", "trend_horizons", "trend_slack", "free_energy_t", "free_energy_tol",
           "free_energy_tol_linear", "speed_tol", "ldp_x", "ldp_tol", "exact_n", "exact_tol", "annealed_exact_n",
           "annealed_exact_tol", "clt_tol", "llt_h", "llt_sup_tol", "llt_center_tol", "annealed_replicas",
           "annealed_n", "annealed_clt_tol", "martingale_replicas", "martingale_n", "martingale_t",
           "martingale_se_factor", "normalized_ldp_n_min", "normalized_ldp_n_max", "normalized_ldp_tol",
           "particle_cap"});
  auto count = [&](const char* key, std::size_t& dst) {
    if (s.has(key)) dst = s.get_count(key);
  };
  auto real = [&](const char* key, double& dst) {
    if (s.has(key)) dst = s.get_finite(key);
  };
  count("replicas", out.replicas);
  count("horizon", out.horizon);
  if (s.has("trend_horizons")) out.trend_horizons = parse_counts(s, "trend_horizons");
  real("trend_slack", out.trend_slack);
  if (s.has("free_energy_t")) out.free_energy_t = s.grid("free_energy_t");
  real("free_energy_tol", out.free_energy_tol);
  real("free_energy_tol_linear", out.free_energy_tol_linear);
  real("speed_tol", out.speed_tol);
  real("ldp_x", out.ldp_x);
  real("ldp_tol", out.ldp_tol);
  count("exact_n", out.exact_n);
  real("exact_tol", out.exact_tol);
  count("annealed_exact_n", out.annealed_exact_n);
  real("annealed_exact_tol", out.annealed_exact_tol);
  real("clt_tol", out.clt_tol);
  real("llt_h", out.llt_h);
  real("llt_sup_tol", out.llt_sup_tol);
  real("llt_center_tol", out.llt_center_tol);
  count("annealed_replicas", out.annealed_replicas);
  count("annealed_n", out.annealed_n);
  real("annealed_clt_tol", out.annealed_clt_tol);
  count("martingale_replicas", out.martingale_replicas);
  count("martingale_n", out.martingale_n);
  real("martingale_t", out.martingale_t);
  real("martingale_se_factor", out.martingale_se_factor);
  count("normalized_ldp_n_min", out.normalized_ldp_n_min);
  count("normalized_ldp_n_max", out.normalized_ldp_n_max);
  real("normalized_ldp_tol", out.normalized_ldp_tol);
  if (s.has("particle_cap")) out.particle_cap = s.get_count("particle_cap");

  if (out.replicas < 2) throw ConfigError("suite needs at least 2 replicas", s.field("replicas"), s.line());
  if (out.horizon < 1) throw ConfigError("suite horizon must be >= 1", s.field("horizon"), s.line());
  for (std::size_t n : out.trend_horizons)
    if (n < 1 || n > out.horizon)
      throw ConfigError("trend horizons must lie in [1, horizon]", s.field("trend_horizons"), s.line());
  if (out.martingale_replicas < 2 || out.annealed_replicas < 2)
    throw ConfigError("replica counts must be >= 2", s.field("replicas"), s.line());
  if (out.particle_cap < 1 || out.particle_cap > 0xffffffffull)
    throw ConfigError("particle cap must be in [1, 2^32 - 1]", s.field("particle_cap"), s.line());
}

void emit_grid(YAML::Emitter& out, const std::vector<double>& values) {
  out << YAML::Flow << YAML::BeginSeq;
  for (double v : values) out << v;
  out << YAML::EndSeq;
}

void emit_state(YAML::Emitter& out, const EnvState& s) {
  out << YAML::BeginMap << YAML::Key << "label" << YAML::Value << s.label();
  out << YAML::Key << "offspring" << YAML::Value << YAML::Flow << YAML::BeginMap;
  std::visit(
      [&](const auto& law) {
        using T = std::decay_t<decltype(law)>;
        if constexpr (std::is_same_v<T, Deterministic>)
          out << YAML::Key << "law" << YAML::Value << "deterministic" << YAML::Key << "k" << YAML::Value << law.k;
        else if constexpr (std::is_same_v<T, ShiftedGeometric>)
          out << YAML::Key << "law" << YAML::Value << "shifted_geometric" << YAML::Key << "p" << YAML::Value << law.p;
        else
          out << YAML::Key << "law" << YAML::Value << "poisson_positive" << YAML::Key << "lambda" << YAML::Value
              << law.lambda;
      },
      s.offspring());
  out << YAML::EndMap;
  out << YAML::Key << "displacement" << YAML::Value << YAML::Flow << YAML::BeginMap;
  std::visit(
      [&](const auto& law) {
        using T = std::decay_t<decltype(law)>;
        if constexpr (std::is_same_v<T, PointMass>)
          out << YAML::Key << "law" << YAML::Value << "point_mass" << YAML::Key << "c" << YAML::Value << law.c;
        else if constexpr (std::is_same_v<T, Gaussian>)
          out << YAML::Key << "law" << YAML::Value << "gaussian" << YAML::Key << "mean" << YAML::Value << law.mean
              << YAML::Key << "variance" << YAML::Value << law.variance;
        else
          out << YAML::Key << "law" << YAML::Value << "two_point" << YAML::Key << "d" << YAML::Value << law.d
              << YAML::Key << "p" << YAML::Value << law.p;
      },
      s.displacement());
  out << YAML::EndMap << YAML::EndMap;
}

}  // namespace

std::vector<double> default_x_grid() {
  std::vector<double> out;
  for (int k = -40; k <= 40; ++k) out.push_back(k / 10.0);
  return out;
}

RunConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(e.msg, "", e.mark.line >= 0 ? static_cast<std::size_t>(e.mark.line) + 1 : 0);
  }
  if (!root || root.IsNull()) throw ConfigError("empty config");
  const Section top(root, "");
  top.allow({"schema_version", "name", "seed", "output_dir", "threads", "environment", "simulation", "estimators",
             "suite"});

  const int version = top.get<int>("schema_version");
  if (version != kConfigSchemaVersion)
    throw ConfigError("unsupported schema version " + std::to_string(version), "schema_version",
                      line_of(top.raw("schema_version")));

  RunConfig cfg(parse_environment(top.section("environment")));
  cfg.schema_version = version;
  cfg.name = top.get<std::string>("name");
  if (top.has("seed")) cfg.seed = top.get<std::uint64_t>("seed");
  cfg.output_dir = top.get_or<std::string>("output_dir", cfg.output_dir);
  if (top.has("threads")) {
    const std::size_t threads = top.get_count("threads");
    if (threads < 1 || threads > 1024) throw ConfigError("threads must be in [1, 1024]", "threads", line_of(top.raw("threads")));
    cfg.threads = static_cast<unsigned>(threads);
  }

  if (top.has("simulation")) {
    const Section sim = top.section("simulation");
    sim.allow({"horizon", "replicas", "particle_cap", "t_grid"});
    if (sim.has("horizon")) cfg.simulation.horizon = sim.get_count("horizon");
    if (sim.has("replicas")) cfg.simulation.replicas = sim.get_count("replicas");
    if (sim.has("particle_cap")) cfg.simulation.particle_cap = sim.get_count("particle_cap");
    if (sim.has("t_grid")) cfg.simulation.t_grid = sim.grid("t_grid");
    if (cfg.simulation.horizon < 1) throw ConfigError("horizon must be >= 1", sim.field("horizon"), sim.line());
    if (cfg.simulation.replicas < 1) throw ConfigError("replicas must be >= 1", sim.field("replicas"), sim.line());
    if (cfg.simulation.particle_cap < 1 || cfg.simulation.particle_cap > 0xffffffffull)
      throw ConfigError("particle cap must be in [1, 2^32 - 1]", sim.field("particle_cap"), sim.line());
  }

  cfg.estimators.x_grid = default_x_grid();
  if (top.has("estimators")) {
    const Section est = top.section("estimators");
    est.allow({"x_grid", "ldp_x", "window", "bandwidth"});
    if (est.has("x_grid")) cfg.estimators.x_grid = est.grid("x_grid");
    if (est.has("ldp_x")) cfg.estimators.ldp_x = est.grid("ldp_x");
    if (est.has("window")) cfg.estimators.window = est.get_finite("window");
    if (est.has("bandwidth")) cfg.estimators.bandwidth = est.get_finite("bandwidth");
    if (!(cfg.estimators.window > 0.0)) throw ConfigError("window must be > 0", est.field("window"), est.line());
    if (!(cfg.estimators.bandwidth > 0.0))
      throw ConfigError("bandwidth must be > 0", est.field("bandwidth"), est.line());
  }

  if (top.has("suite")) parse_suite(top.section("suite"), cfg.suite);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const UsageError& e) {
    throw ConfigError(e.what(), "config");
  }
  return parse_config(text);
}

std::string serialize_config(const RunConfig& cfg) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "schema_version" << YAML::Value << cfg.schema_version;
  out << YAML::Key << "name" << YAML::Value << cfg.name;
  if (cfg.seed) out << YAML::Key << "seed" << YAML::Value << *cfg.seed;
  out << YAML::Key << "output_dir" << YAML::Value << cfg.output_dir;
  out << YAML::Key << "threads" << YAML::Value << cfg.threads;

  const auto& model = cfg.model;
  out << YAML::Key << "environment" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << to_string(model.kind());
  out << YAML::Key << "states" << YAML::Value << YAML::BeginSeq;
  for (const auto& s : model.states()) emit_state(out, s);
  out << YAML::EndSeq;
  if (model.kind() == EnvironmentKind::iid) {
    out << YAML::Key << "probabilities" << YAML::Value;
    emit_grid(out, model.probabilities());
  }
  if (model.kind() == EnvironmentKind::markov) {
    out << YAML::Key << "transition" << YAML::Value << YAML::BeginSeq;
    for (const auto& row : model.transition()) emit_grid(out, row);
    out << YAML::EndSeq;
  }
  out << YAML::EndMap;

  out << YAML::Key << "simulation" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "horizon" << YAML::Value << cfg.simulation.horizon;
  out << YAML::Key << "replicas" << YAML::Value << cfg.simulation.replicas;
  out << YAML::Key << "particle_cap" << YAML::Value << cfg.simulation.particle_cap;
  out << YAML::Key << "t_grid" << YAML::Value;
  emit_grid(out, cfg.simulation.t_grid);
  out << YAML::EndMap;

  out << YAML::Key << "estimators" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "x_grid" << YAML::Value;
  emit_grid(out, cfg.estimators.x_grid);
  out << YAML::Key << "ldp_x" << YAML::Value;
  emit_grid(out, cfg.estimators.ldp_x);
  out << YAML::Key << "window" << YAML::Value << cfg.estimators.window;
  out << YAML::Key << "bandwidth" << YAML::Value << cfg.estimators.bandwidth;
  out << YAML::EndMap;

  const auto& s = cfg.suite;
  out << YAML::Key << "suite" << YAML::Value << YAML::BeginMap;
  auto put = [&](const char* key, auto value) { out << YAML::Key << key << YAML::Value << value; };
  put("replicas", s.replicas);
  put("horizon", s.horizon);
  out << YAML::Key << "trend_horizons" << YAML::Value << YAML::Flow << s.trend_horizons;
  put("trend_slack", s.trend_slack);
  out << YAML::Key << "free_energy_t" << YAML::Value;
  emit_grid(out, s.free_energy_t);
  put("free_energy_tol", s.free_energy_tol);
  put("free_energy_tol_linear", s.free_energy_tol_linear);
  put("speed_tol", s.speed_tol);
  put("ldp_x", s.ldp_x);
  put("ldp_tol", s.ldp_tol);
  put("exact_n", s.exact_n);
  put("exact_tol", s.exact_tol);
  put("annealed_exact_n", s.annealed_exact_n);
  put("annealed_exact_tol", s.annealed_exact_tol);
  put("clt_tol", s.clt_tol);
  put("llt_h", s.llt_h);
  put("llt_sup_tol", s.llt_sup_tol);
  put("llt_center_tol", s.llt_center_tol);
  put("annealed_replicas", s.annealed_replicas);
  put("annealed_n", s.annealed_n);
  put("annealed_clt_tol", s.annealed_clt_tol);
  put("martingale_replicas", s.martingale_replicas);
  put("martingale_n", s.martingale_n);
  put("martingale_t", s.martingale_t);
  put("martingale_se_factor", s.martingale_se_factor);
  put("normalized_ldp_n_min", s.normalized_ldp_n_min);
  put("normalized_ldp_n_max", s.normalized_ldp_n_max);
  put("normalized_ldp_tol", s.normalized_ldp_tol);
  put("particle_cap", s.particle_cap);
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace brwre

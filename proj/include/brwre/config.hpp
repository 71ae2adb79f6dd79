#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "brwre/env_model.hpp"
#include "brwre/verify.hpp"

namespace brwre {

inline constexpr int kConfigSchemaVersion = 1;

struct SimulationSettings {
  std::size_t horizon = 20;
  std::size_t replicas = 1;
  std::uint64_t particle_cap = std::uint64_t{1} << 24;
  std::vector<double> t_grid{0.0, 0.5, 1.0, 3.0};
  bool operator==(const SimulationSettings&) const = default;
};

struct EstimatorSettings {
  std::vector<double> x_grid;    // standardized CLT grid
  std::vector<double> ldp_x{0.8};
  double window = 0.5;            // LLT h
  double bandwidth = 0.5;         // Fejer a
  bool operator==(const EstimatorSettings&) const = default;
};

/// Everything one run needs: model, grids, replica counts, seed, output directory.
struct RunConfig {
  explicit RunConfig(EnvironmentModel m) : model(std::move(m)) {}

  int schema_version = kConfigSchemaVersion;
  std::string name;
  std::optional<std::uint64_t> seed;
  EnvironmentModel model;
  SimulationSettings simulation;
  EstimatorSettings estimators;
  SuiteConfig suite;
  std::string output_dir = "out";
  unsigned threads = 1;

  bool operator==(const RunConfig&) const = default;
};

/// Parses the YAML config schema. Errors are ConfigError with field name and
/// 1-based line number.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// YAML text that parse_config maps back to an equal RunConfig.
std::string serialize_config(const RunConfig& config);

/// The default standardized grid: -4 to 4 in steps of 0.1.
std::vector<double> default_x_grid();

}  // namespace brwre

#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "brwre/env_model.hpp"

namespace fixtures {

using namespace brwre;

inline const double kLog2 = std::log(2.0);

inline EnvState det_zero() { return EnvState("D", Deterministic{2}, PointMass{0.0}); }
inline EnvState det_gauss() { return EnvState("G", Deterministic{2}, Gaussian{0.0, 1.0}); }
inline EnvState state_a() { return EnvState("A", Deterministic{2}, Gaussian{1.0, 1.0}); }
inline EnvState state_b() { return EnvState("B", Deterministic{3}, Gaussian{-1.0, 2.0}); }

inline EnvironmentModel cfg_det() { return EnvironmentModel::constant(det_zero()); }
inline EnvironmentModel cfg_g() { return EnvironmentModel::constant(det_gauss()); }
inline EnvironmentModel cfg_2s() { return EnvironmentModel::iid({state_a(), state_b()}, {0.5, 0.5}); }

/// A realization built by hand from state indices.
inline EnvRealization realization(const std::vector<EnvState>& states, std::vector<std::uint32_t> indices) {
  return EnvRealization(std::make_shared<const std::vector<EnvState>>(states), std::move(indices), 0, 0);
}

inline double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline std::string config_path(const std::string& name) { return std::string(BRWRE_CONFIG_DIR) + "/" + name; }

}  // namespace fixtures

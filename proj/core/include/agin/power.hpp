#pragma once

#include "agin/world.hpp"

namespace agin {

/// Rotary-wing propulsion power at horizontal-equivalent speed v (m/s):
/// blade profile + induced + parasite terms. Throws std::domain_error for v < 0.
double propulsion_power(double speed_mps, const RotorcraftParams& params);

/// Network power: propulsion + communication for every alive UAV plus the GBS
/// circuitry. Speeds above cfg.v_max_uav_mps are rejected (std::domain_error).
double total_power(const WorldState& state, const ScenarioConfig& cfg);

/// Bits per joule. Throws std::domain_error if total_power_w <= 0.
double energy_efficiency(double r_sum_bps, double total_power_w);

}  // namespace agin

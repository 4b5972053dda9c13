#include "agin/power.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace agin {

double propulsion_power(double speed_mps, const RotorcraftParams& p) {
  if (!(speed_mps >= 0.0)) throw std::domain_error("propulsion_power: negative or NaN speed");
  const double v2 = speed_mps * speed_mps;
  const double v02 = p.v0_mps * p.v0_mps;
  const double blade = p.p0_w * (1.0 + 3.0 * v2 / (p.u_tip_mps * p.u_tip_mps));
  // Inner term is positive analytically; max() only absorbs rounding at large v.
  const double inner = std::sqrt(1.0 + v2 * v2 / (4.0 * v02 * v02)) - v2 / (2.0 * v02);
  const double induced = p.pi_w * std::sqrt(std::max(inner, 0.0));
  const double parasite = 0.5 * p.d_fuse * p.rho * p.solidity * p.disc_area_m2 * v2 * speed_mps;
  return blade + induced + parasite;
}

double total_power(const WorldState& state, const ScenarioConfig& cfg) {
  double total = cfg.p_gbs_w;
  const double limit = cfg.v_max_uav_mps * (1.0 + 1e-9);
  for (int k = 0; k < state.num_uavs(); ++k) {
    if (!state.alive[k]) continue;
    const double speed = state.uav_vel[k].norm();
    if (speed > limit) {
      throw std::domain_error("total_power: UAV " + std::to_string(k) + " exceeds v_max (" +
                              std::to_string(speed) + " m/s)");
    }
    total += propulsion_power(speed, cfg.rotor) + cfg.p_comm_w;
  }
  return total;
}

double energy_efficiency(double r_sum_bps, double total_power_w) {
  if (!(total_power_w > 0.0)) throw std::domain_error("energy_efficiency: total power must be > 0");
  return r_sum_bps / total_power_w;
}

}  // namespace agin

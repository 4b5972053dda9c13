#include "agin/world.hpp"

#include <algorithm>
#include <cmath>

namespace agin {

std::string to_string(NodeId id) {
  return id.is_gbs() ? std::string("GBS") : "U" + std::to_string(id.uav_index());
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

bool positive(double x) { return std::isfinite(x) && x > 0.0; }

}  // namespace

void ScenarioConfig::validate() const {
  require(positive(area_side_m), "area_side_m must be > 0");
  require(num_uavs >= 1, "num_uavs must be >= 1");
  require(num_users >= 1, "num_users must be >= 1");
  require(h_min_m < h_max_m, "altitude corridor requires h_min_m < h_max_m");
  require(positive(h_min_m), "h_min_m must be > 0");
  require(positive(v_max_uav_mps) && positive(v_max_user_mps) && positive(group_speed_mps),
          "speed limits must be > 0");
  require(positive(d_safe_m), "d_safe_m must be > 0");
  require(positive(carrier_freq_hz) && positive(bandwidth_hz), "carrier/bandwidth must be > 0");
  require(positive(p_gbs_w) && positive(p_comm_w), "power figures must be > 0");
  require(std::isfinite(p_tx_dbm) && std::isfinite(gbs_tx_dbm) && std::isfinite(noise_psd_dbm_hz),
          "dBm figures must be finite");
  require(positive(r_comm_m) && positive(r_th_bps), "r_comm_m and r_th_bps must be > 0");
  require(positive(dt_s), "dt_s must be > 0");
  require(episode_len >= 1, "episode_len must be >= 1");
  require(gbs_position.x() >= 0 && gbs_position.x() <= area_side_m && gbs_position.y() >= 0 &&
              gbs_position.y() <= area_side_m,
          "gbs_position must lie inside the area");

  require(channel.eta_nlos_db >= channel.eta_los_db && channel.eta_los_db >= 0.0,
          "channel requires eta_nlos_db >= eta_los_db >= 0");
  require(channel.kappa >= 2.0, "channel.kappa must be >= 2");
  require(channel.shadow_sigma_db >= 0.0, "channel.shadow_sigma_db must be >= 0");
  require(positive(channel.d0_m), "channel.d0_m must be > 0");
  require(channel.a > 0.0 && channel.b >= 0.0, "channel logistic parameters need a > 0, b >= 0");

  require(antenna.theta_b_deg > 0.0 && antenna.theta_b_deg <= 180.0, "antenna.theta_b_deg out of range");

  const auto& r = rotor;
  require(positive(r.p0_w) && positive(r.pi_w) && positive(r.u_tip_mps) && positive(r.v0_mps) &&
              positive(r.d_fuse) && positive(r.rho) && positive(r.solidity) && positive(r.disc_area_m2),
          "rotorcraft parameters must be > 0");

  require(gauss_markov.alpha >= 0.0 && gauss_markov.alpha <= 1.0, "gauss_markov.alpha must be in [0,1]");
  require(gauss_markov.noise_scale_mps >= 0.0, "gauss_markov.noise_scale_mps must be >= 0");
  require(rpgm.sigma_c_m >= 0.0, "rpgm.sigma_c_m must be >= 0");
  require(rpgm.deviation_radius_m >= 0.0, "rpgm.deviation_radius_m must be >= 0");
  require(rpgm.offset_step_mps >= 0.0, "rpgm.offset_step_mps must be >= 0");
  require(positive(rpgm.waypoint_tolerance_m), "rpgm.waypoint_tolerance_m must be > 0");

  require(kinematics.inertia_beta >= 0.0 && kinematics.inertia_beta <= 1.0, "kinematics.inertia_beta must be in [0,1]");
  require(kinematics.mech_noise_std_mps >= 0.0, "kinematics.mech_noise_std_mps must be >= 0");
  require(positive(kinematics.v_z_max_mps), "kinematics.v_z_max_mps must be > 0");
  require(positive(kinematics.r_sense_m), "kinematics.r_sense_m must be > 0");

  const auto& w = reward;
  require(w.cov >= 0 && w.ee >= 0 && w.jr >= 0 && w.jl >= 0 && w.min_rate >= 0 && w.ho >= 0,
          "reward weights must be non-negative");
  require(positive(w.e_ref_bits_per_joule), "reward.e_ref_bits_per_joule must be > 0");
  require(w.epsilon >= 0.0, "reward.epsilon must be >= 0");

  for (const auto& f : failure_schedule) {
    require(f.step >= 0 && f.step < episode_len, "failure step " + std::to_string(f.step) + " outside [0, T)");
    if (f.uav) {
      require(*f.uav >= 0 && *f.uav < num_uavs, "failure uav index out of range");
    }
  }
}

ScenarioConfig make_scenario(std::string_view name) {
  ScenarioConfig cfg;
  cfg.scenario = std::string(name);
  if (name == "crowded_urban") {
    cfg.channel.a = 12.08;
    cfg.channel.b = 0.11;
    cfg.channel.eta_los_db = 1.0;
    cfg.channel.eta_nlos_db = 23.0;
    cfg.mobility_kind = MobilityKind::Rpgm;
  } else if (name == "suburban") {
    cfg.channel.a = 9.61;
    cfg.channel.b = 0.16;
    cfg.channel.eta_los_db = 0.5;
    cfg.channel.eta_nlos_db = 21.0;
    cfg.mobility_kind = MobilityKind::Rpgm;
  } else if (name == "rural") {
    cfg.channel.a = 4.88;
    cfg.channel.b = 0.43;
    cfg.channel.eta_los_db = 0.1;
    cfg.channel.eta_nlos_db = 15.0;
    cfg.mobility_kind = MobilityKind::GaussMarkov;
  } else {
    throw ConfigError("unknown scenario '" + std::string(name) +
                      "' (expected crowded_urban, suburban or rural)");
  }
  return cfg;
}

int WorldState::alive_count() const {
  return static_cast<int>(std::count(alive.begin(), alive.end(), true));
}

std::vector<NodeId> active_set(const WorldState& state) {
  std::vector<NodeId> out;
  out.reserve(state.alive.size() + 1);
  for (int k = 0; k < static_cast<int>(state.alive.size()); ++k) {
    if (state.alive[k]) out.push_back(NodeId::uav(k));
  }
  out.push_back(NodeId::gbs());
  return out;
}

void apply_failure(WorldState& state, int uav_index) {
  if (uav_index < 0 || uav_index >= state.num_uavs()) {
    throw std::invalid_argument("apply_failure: UAV index " + std::to_string(uav_index) + " out of range");
  }
  if (!state.alive[uav_index]) {
    throw std::invalid_argument("apply_failure: UAV " + std::to_string(uav_index) + " already failed");
  }
  state.alive[uav_index] = false;
  state.uav_vel[uav_index].setZero();
}

std::optional<int> pick_random_alive(const WorldState& state, Rng& rng) {
  std::vector<int> alive;
  for (int k = 0; k < state.num_uavs(); ++k) {
    if (state.alive[k]) alive.push_back(k);
  }
  if (alive.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick(0, alive.size() - 1);
  return alive[pick(rng)];
}

}  // namespace agin

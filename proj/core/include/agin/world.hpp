#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "agin/rng.hpp"

namespace agin {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

/// Raised for malformed or inconsistent configuration. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Identifies a serving node: a UAV index in [0, K_U) or the ground base station.
class NodeId {
 public:
  constexpr NodeId() = default;
  static constexpr NodeId uav(int index) { return NodeId(index); }
  static constexpr NodeId gbs() { return NodeId(kGbsValue); }

  constexpr bool is_gbs() const { return value_ == kGbsValue; }
  constexpr int uav_index() const { return value_; }
  constexpr int raw() const { return value_; }

  friend constexpr bool operator==(NodeId, NodeId) = default;
  friend constexpr auto operator<=>(NodeId, NodeId) = default;

 private:
  static constexpr int kGbsValue = -1;
  constexpr explicit NodeId(int v) : value_(v) {}
  int value_ = kGbsValue;
};

std::string to_string(NodeId id);

struct ChannelProfile {
  double a = 9.61;
  double b = 0.16;
  double eta_los_db = 0.5;
  double eta_nlos_db = 21.0;
  double kappa = 3.5;
  double pl_d0_db = 38.46;
  double d0_m = 1.0;
  double shadow_sigma_db = 8.0;
};

struct AntennaParams {
  double theta_b_deg = 45.0;
  double g_main_db = 10.0;
  double g_side_db = -10.0;
};

struct RotorcraftParams {
  double p0_w = 79.86;       // blade profile power
  double pi_w = 88.63;       // induced power in hover
  double u_tip_mps = 120.0;
  double v0_mps = 4.03;      // mean induced velocity in hover
  double d_fuse = 0.6;
  double rho = 1.225;
  double solidity = 0.05;
  double disc_area_m2 = 0.503;
};

enum class MobilityKind { Rpgm, GaussMarkov };

struct GaussMarkovParams {
  double alpha = 0.8;
  double noise_scale_mps = 1.5;
};

struct RpgmParams {
  double sigma_c_m = 80.0;
  double deviation_radius_m = 50.0;
  double offset_step_mps = 1.5;
  double waypoint_tolerance_m = 1.0;
};

struct RewardWeights {
  double cov = 2.0;
  double ee = 0.1;
  double jr = 0.5;
  double jl = 0.8;
  double min_rate = 0.5;
  double ho = 0.1;
  double e_ref_bits_per_joule = 1.5e5;
  double epsilon = 1e-9;
  /// Divide the handoff count by M before applying the penalty weight.
  bool normalize_handoffs = true;
};

/// UAV kinematics and observation constants used by the environment.
struct KinematicsParams {
  double inertia_beta = 0.6;
  double mech_noise_std_mps = 0.1;
  double v_z_max_mps = 5.0;
  double r_sense_m = 500.0;
};

/// A scheduled UAV loss. `uav` empty means "pick uniformly among alive UAVs".
struct FailureEvent {
  int step = 0;
  std::optional<int> uav;

  friend bool operator==(const FailureEvent&, const FailureEvent&) = default;
};

struct ScenarioConfig {
  std::string scenario = "suburban";
  double area_side_m = 1000.0;
  int num_uavs = 4;
  int num_users = 140;
  Vec3 gbs_position{500.0, 500.0, 0.0};
  double h_min_m = 80.0;
  double h_max_m = 120.0;
  double v_max_uav_mps = 30.0;
  double v_max_user_mps = 15.0;
  double group_speed_mps = 10.0;
  double d_safe_m = 10.0;
  double carrier_freq_hz = 2.0e9;
  double bandwidth_hz = 20e6;
  double p_tx_dbm = 23.0;
  double p_gbs_w = 20.0;
  double p_comm_w = 5.0;
  double gbs_tx_dbm = 40.0;
  double noise_psd_dbm_hz = -174.0;
  ChannelProfile channel;
  AntennaParams antenna;
  RotorcraftParams rotor;
  MobilityKind mobility_kind = MobilityKind::Rpgm;
  GaussMarkovParams gauss_markov;
  RpgmParams rpgm;
  KinematicsParams kinematics;
  RewardWeights reward;
  double r_comm_m = 1500.0;
  double r_th_bps = 0.5e6;
  std::vector<FailureEvent> failure_schedule{{100, std::nullopt}};
  double dt_s = 1.0;
  int episode_len = 200;
  std::uint64_t rng_seed = 1;

  /// Throws ConfigError describing the first violated invariant.
  void validate() const;

  double cruise_altitude() const { return 0.5 * (h_min_m + h_max_m); }
};

/// Table-1 defaults with the named scenario's channel profile and mobility model.
/// Recognized names: crowded_urban, suburban, rural.
ScenarioConfig make_scenario(std::string_view name);

struct WorldState {
  int t = 0;
  std::vector<Vec3> uav_pos;
  std::vector<Vec3> uav_vel;
  std::vector<bool> alive;

  std::vector<Vec2> user_pos;
  std::vector<Vec2> user_vel;       // Gauss-Markov only
  std::vector<Vec2> user_mean_vel;  // Gauss-Markov only

  std::vector<int> user_group;      // RPGM group of each user
  std::vector<Vec2> group_centers;
  std::vector<Vec2> group_waypoints;
  std::vector<Vec2> user_offsets;
  int gbs_group = -1;

  std::vector<double> gbs_shadowing_db;  // frozen for the episode

  std::vector<NodeId> association;
  std::vector<NodeId> prev_association;

  int num_uavs() const { return static_cast<int>(uav_pos.size()); }
  int num_users() const { return static_cast<int>(user_pos.size()); }
  int alive_count() const;
};

/// Alive UAVs in ascending index order, followed by the GBS.
std::vector<NodeId> active_set(const WorldState& state);

/// Marks the UAV failed and halts it. Associations are refreshed by the next
/// association pass. Throws std::invalid_argument if out of range or already failed.
void apply_failure(WorldState& state, int uav_index);

/// Uniformly chosen alive UAV, or nullopt if none remain.
std::optional<int> pick_random_alive(const WorldState& state, Rng& rng);

}  // namespace agin

#pragma once

#include <vector>

#include "agin/world.hpp"

namespace agin {

inline constexpr double kSpeedOfLight = 299792458.0;

double dbm_to_watts(double dbm);
double watts_to_dbm(double watts);
double db_to_linear(double db);

/// Logistic LoS probability 1 / (1 + a exp(-b (theta - a))) for elevation theta in degrees.
double los_probability(double elevation_deg, double a, double b);

/// Free-space path loss 20 log10(4 pi f d / c) in dB.
double free_space_path_loss_db(double distance_m, double carrier_hz);

/// Expected excess loss P_LoS * eta_LoS + (1 - P_LoS) * eta_NLoS.
double expected_excess_loss_db(double p_los, const ChannelProfile& profile);

/// Mean air-to-ground path loss from a UAV to a ground user at z = 0.
/// Throws std::domain_error when the two points coincide.
double a2g_path_loss_db(const Vec3& uav, const Vec2& user, const ChannelProfile& profile, double carrier_hz);

/// Log-distance terrestrial loss plus a frozen shadowing sample. Distances
/// below d0 are treated as d0.
double terrestrial_path_loss_db(const Vec3& gbs, const Vec2& user, const ChannelProfile& profile,
                                double shadowing_db = 0.0);

/// One zero-mean Gaussian shadowing draw (dB) per user.
std::vector<double> sample_shadowing(const ChannelProfile& profile, int num_users, Rng& rng);

/// Flat-top pattern: g_main if |off_axis| <= theta_b (inclusive), else g_side. Linear gains.
double antenna_gain(double off_axis_deg, double theta_b_deg, double g_main, double g_side);

/// Angle between a UAV's downward boresight and the direction to a ground user.
double off_axis_angle_deg(const Vec3& uav, const Vec2& user);

/// Per-link and per-user radio state for one time step.
struct LinkTable {
  std::vector<NodeId> nodes;                 // active set at computation time
  std::vector<std::vector<double>> rx_power_w;  // [node slot][user]
  std::vector<NodeId> serving;               // per user
  std::vector<double> sinr;                  // linear, per user
  std::vector<double> rate_bps;              // per user
  std::vector<int> uav_load;                 // per UAV index (0 for failed UAVs)
  int gbs_load = 0;

  int load_of(NodeId id) const { return id.is_gbs() ? gbs_load : uav_load[id.uav_index()]; }
  double r_sum() const;
};

/// Max-RSSI association over the active set, SINR with interference from every
/// other active transmitter (alive UAVs plus the GBS), and equal bandwidth
/// sharing among each node's users.
LinkTable associate_and_rate(const WorldState& state, const ScenarioConfig& cfg);

}  // namespace agin

#include "agin/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace agin {

namespace {
constexpr double kRadToDeg = 180.0 / std::numbers::pi;
}

double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
double watts_to_dbm(double watts) { return 10.0 * std::log10(watts) + 30.0; }
double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

double los_probability(double elevation_deg, double a, double b) {
  const double p = 1.0 / (1.0 + a * std::exp(-b * (elevation_deg - a)));
  return std::clamp(p, 0.0, 1.0);
}

double free_space_path_loss_db(double distance_m, double carrier_hz) {
  return 20.0 * std::log10(4.0 * std::numbers::pi * carrier_hz * distance_m / kSpeedOfLight);
}

double expected_excess_loss_db(double p_los, const ChannelProfile& profile) {
  return p_los * profile.eta_los_db + (1.0 - p_los) * profile.eta_nlos_db;
}

double a2g_path_loss_db(const Vec3& uav, const Vec2& user, const ChannelProfile& profile, double carrier_hz) {
  const double horizontal = (uav.head<2>() - user).norm();
  const double height = uav.z();
  const double d = std::hypot(horizontal, height);
  if (d <= 0.0) throw std::domain_error("a2g_path_loss_db: UAV and user are co-located");
  const double elevation = std::atan2(std::abs(height), horizontal) * kRadToDeg;
  const double p_los = los_probability(elevation, profile.a, profile.b);
  return expected_excess_loss_db(p_los, profile) + free_space_path_loss_db(d, carrier_hz);
}

double terrestrial_path_loss_db(const Vec3& gbs, const Vec2& user, const ChannelProfile& profile,
                                double shadowing_db) {
  const double horizontal = (gbs.head<2>() - user).norm();
  const double d = std::max(std::hypot(horizontal, gbs.z()), profile.d0_m);
  return profile.pl_d0_db + 10.0 * profile.kappa * std::log10(d / profile.d0_m) + shadowing_db;
}

std::vector<double> sample_shadowing(const ChannelProfile& profile, int num_users, Rng& rng) {
  std::vector<double> out(num_users, 0.0);
  if (profile.shadow_sigma_db <= 0.0) return out;
  std::normal_distribution<double> n(0.0, profile.shadow_sigma_db);
  for (auto& x : out) x = n(rng);
  return out;
}

double antenna_gain(double off_axis_deg, double theta_b_deg, double g_main, double g_side) {
  return std::abs(off_axis_deg) <= theta_b_deg ? g_main : g_side;
}

double off_axis_angle_deg(const Vec3& uav, const Vec2& user) {
  const double horizontal = (uav.head<2>() - user).norm();
  return std::atan2(horizontal, std::abs(uav.z())) * kRadToDeg;
}

double LinkTable::r_sum() const {
  double s = 0.0;
  for (double r : rate_bps) s += r;
  return s;
}

LinkTable associate_and_rate(const WorldState& state, const ScenarioConfig& cfg) {
  const int m = state.num_users();
  LinkTable lt;
  lt.nodes = active_set(state);
  const auto n_nodes = lt.nodes.size();

  const double p_uav = dbm_to_watts(cfg.p_tx_dbm);
  const double p_gbs = dbm_to_watts(cfg.gbs_tx_dbm);
  const double noise = dbm_to_watts(cfg.noise_psd_dbm_hz) * cfg.bandwidth_hz;
  const double g_main = db_to_linear(cfg.antenna.g_main_db);
  const double g_side = db_to_linear(cfg.antenna.g_side_db);

  lt.rx_power_w.assign(n_nodes, std::vector<double>(m, 0.0));
  for (std::size_t s = 0; s < n_nodes; ++s) {
    const NodeId id = lt.nodes[s];
    for (int u = 0; u < m; ++u) {
      const Vec2& q = state.user_pos[u];
      if (id.is_gbs()) {
        const double pl = terrestrial_path_loss_db(cfg.gbs_position, q, cfg.channel,
                                                   state.gbs_shadowing_db.empty() ? 0.0 : state.gbs_shadowing_db[u]);
        lt.rx_power_w[s][u] = p_gbs * std::pow(10.0, -pl / 10.0);
      } else {
        const Vec3& p = state.uav_pos[id.uav_index()];
        const double pl = a2g_path_loss_db(p, q, cfg.channel, cfg.carrier_freq_hz);
        const double g = antenna_gain(off_axis_angle_deg(p, q), cfg.antenna.theta_b_deg, g_main, g_side);
        lt.rx_power_w[s][u] = p_uav * g * std::pow(10.0, -pl / 10.0);
      }
    }
  }

  lt.serving.assign(m, NodeId::gbs());
  lt.sinr.assign(m, 0.0);
  lt.rate_bps.assign(m, 0.0);
  lt.uav_load.assign(state.num_uavs(), 0);
  lt.gbs_load = 0;

  for (int u = 0; u < m; ++u) {
    std::size_t best = 0;
    for (std::size_t s = 1; s < n_nodes; ++s) {
      if (lt.rx_power_w[s][u] > lt.rx_power_w[best][u]) best = s;
    }
    lt.serving[u] = lt.nodes[best];
    double interference = 0.0;
    for (std::size_t s = 0; s < n_nodes; ++s) {
      if (s != best) interference += lt.rx_power_w[s][u];
    }
    lt.sinr[u] = lt.rx_power_w[best][u] / (noise + interference);
    if (lt.serving[u].is_gbs()) {
      ++lt.gbs_load;
    } else {
      ++lt.uav_load[lt.serving[u].uav_index()];
    }
  }
  for (int u = 0; u < m; ++u) {
    const int load = lt.load_of(lt.serving[u]);
    lt.rate_bps[u] = cfg.bandwidth_hz / load * std::log2(1.0 + lt.sinr[u]);
  }
  return lt;
}

}  // namespace agin

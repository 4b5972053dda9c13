#pragma once

#include <span>
#include <string>
#include <vector>

#include "agin/channel.hpp"
#include "agin/world.hpp"

namespace agin {

struct StepMetrics {
  int t = 0;
  double r_sum = 0.0;     // bits/s
  double e_eff = 0.0;     // bits/J
  double c_cov = 0.0;
  double r_min = 0.0;     // bits/s
  double jfi_rate = 0.0;
  double jfi_load = 0.0;
  int handoffs = 0;
  double u_qos = 0.0;
  double utility = 0.0;
  int active_uav_count = 0;
  double total_power_w = 0.0;
};

/// Jain's index (sum x)^2 / (n sum x^2 + eps). Throws std::invalid_argument on
/// empty input or negative entries.
double jain_index(std::span<const double> values, double epsilon = 1e-9);

/// Number of users whose serving node changed. Throws std::invalid_argument on
/// length mismatch.
int handoff_count(std::span<const NodeId> prev, std::span<const NodeId> curr);

/// KPIs and the composite utility for the state's current step. Handoffs compare
/// state.prev_association against state.association and are zero at t = 0.
StepMetrics step_metrics(const LinkTable& links, const WorldState& state, double total_power_w,
                         const ScenarioConfig& cfg);

/// U_QoS from already-normalized KPIs (each in [0,1]).
double qos_utility(const RewardWeights& w, double ee_norm, double jfi_rate, double jfi_load, double c_cov,
                   double r_min_norm);

/// Utility after the handoff penalty. With normalize_handoffs the count is divided by M.
double utility(const RewardWeights& w, double u_qos, int handoffs, int num_users);

/// Column order of the per-step metrics CSV.
const std::vector<std::string>& step_csv_columns();
std::string step_csv_header();
std::string step_csv_row(const StepMetrics& m);

}  // namespace agin

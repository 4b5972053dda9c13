#include "agin/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "agin/power.hpp"

namespace agin {

double jain_index(std::span<const double> values, double epsilon) {
  if (values.empty()) throw std::invalid_argument("jain_index: empty input");
  double sum = 0.0;
  double sq = 0.0;
  for (double v : values) {
    if (v < 0.0) throw std::invalid_argument("jain_index: negative value");
    sum += v;
    sq += v * v;
  }
  const double denom = static_cast<double>(values.size()) * sq + epsilon;
  return denom > 0.0 ? sum * sum / denom : 0.0;
}

int handoff_count(std::span<const NodeId> prev, std::span<const NodeId> curr) {
  if (prev.size() != curr.size()) throw std::invalid_argument("handoff_count: length mismatch");
  int n = 0;
  for (std::size_t i = 0; i < prev.size(); ++i) n += prev[i] != curr[i] ? 1 : 0;
  return n;
}

double qos_utility(const RewardWeights& w, double ee_norm, double jfi_rate, double jfi_load, double c_cov,
                   double r_min_norm) {
  return w.ee * ee_norm + w.jr * jfi_rate + w.jl * jfi_load + w.cov * c_cov + w.min_rate * r_min_norm;
}

double utility(const RewardWeights& w, double u_qos, int handoffs, int num_users) {
  const double ho = w.normalize_handoffs ? static_cast<double>(handoffs) / num_users : handoffs;
  return u_qos - w.ho * ho;
}

StepMetrics step_metrics(const LinkTable& links, const WorldState& state, double total_power_w,
                         const ScenarioConfig& cfg) {
  const auto& w = cfg.reward;
  const int m = state.num_users();
  StepMetrics out;
  out.t = state.t;
  out.total_power_w = total_power_w;
  out.active_uav_count = state.alive_count();
  out.r_sum = links.r_sum();
  out.e_eff = energy_efficiency(out.r_sum, total_power_w);

  int covered = 0;
  double r_min = links.rate_bps.empty() ? 0.0 : links.rate_bps.front();
  for (double r : links.rate_bps) {
    covered += r >= cfg.r_th_bps ? 1 : 0;
    r_min = std::min(r_min, r);
  }
  out.c_cov = static_cast<double>(covered) / m;
  out.r_min = r_min;
  out.jfi_rate = jain_index(links.rate_bps, w.epsilon);

  std::vector<double> loads;
  for (int k = 0; k < state.num_uavs(); ++k) {
    if (state.alive[k]) loads.push_back(links.uav_load[k]);
  }
  out.jfi_load = loads.empty() ? 0.0 : jain_index(loads, w.epsilon);

  out.handoffs = state.t == 0 || state.prev_association.empty()
                     ? 0
                     : handoff_count(state.prev_association, state.association);

  const double ee_norm = std::min(out.e_eff / w.e_ref_bits_per_joule, 1.0);
  const double r_min_norm = std::min(out.r_min / cfg.r_th_bps, 1.0);
  out.u_qos = qos_utility(w, ee_norm, out.jfi_rate, out.jfi_load, out.c_cov, r_min_norm);
  out.utility = utility(w, out.u_qos, out.handoffs, m);
  return out;
}

const std::vector<std::string>& step_csv_columns() {
  static const std::vector<std::string> cols{"t",        "r_sum",    "e_eff",    "c_cov",   "r_min",
                                             "jfi_rate", "jfi_load", "handoffs", "utility", "active_uav_count"};
  return cols;
}

std::string step_csv_header() {
  std::string s;
  for (const auto& c : step_csv_columns()) {
    if (!s.empty()) s += ',';
    s += c;
  }
  return s;
}

std::string step_csv_row(const StepMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%d,%.10g,%d", m.t, m.r_sum, m.e_eff,
                m.c_cov, m.r_min, m.jfi_rate, m.jfi_load, m.handoffs, m.utility, m.active_uav_count);
  return buf;
}

}  // namespace agin

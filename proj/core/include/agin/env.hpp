#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "agin/channel.hpp"
#include "agin/ego_graph.hpp"
#include "agin/metrics.hpp"
#include "agin/world.hpp"

namespace agin {

inline constexpr int kNumActions = 27;
inline constexpr int kHoverAction = 13;
inline constexpr int kNoAction = -1;

/// Action a encodes a direction (dx, dy, dz) in {-1,0,1}^3 as a = 9(dx+1) + 3(dy+1) + (dz+1).
/// Horizontal components scale by V_max, vertical by v_z_max; the result is
/// rescaled to norm V_max when longer.
Vec3 target_velocity(int action, const ScenarioConfig& cfg);

/// Per-agent observation. Every component lies in [-1, 1].
struct Observation {
  std::array<double, 4> self{};   // altitude (corridor-mapped), velocity / V_max
  std::array<double, 3> gbs{};    // (p_GBS - p_k) / area_side
  std::vector<std::array<double, 6>> neighbors;  // relative position, velocity per slot
  std::vector<std::uint8_t> neighbor_mask;
  std::array<double, 6> user{};   // served share, served centroid (2), in-range centroid (2), uncovered share

  static int flat_size(int num_uavs) { return 4 + 3 + 7 * (num_uavs - 1) + 6; }
  std::vector<double> flatten() const;
};

/// Throws std::invalid_argument if agent k is dead or out of range.
Observation build_observation(const WorldState& state, const LinkTable& links, int k, const ScenarioConfig& cfg);

/// Critic input for agent k (same neighbor gating as the observation).
EgoGraph build_ego_graph(const WorldState& state, const LinkTable& links, int k, const ScenarioConfig& cfg);

/// Velocity update with inertia and noise, speed limits, position integration with
/// area/corridor clamping, then the safety projection (a conflicting higher-index
/// mover holds position). Dead UAVs do not move. Actions are validated.
void apply_kinematics(WorldState& state, std::span<const int> actions, const ScenarioConfig& cfg, Rng& noise_rng);

/// sum_t gamma^t r_t. Throws std::invalid_argument unless gamma in [0,1).
double discounted_return(std::span<const double> rewards, double gamma);

struct GlobalSnapshot {
  std::vector<Vec3> uav_pos;
  std::vector<Vec3> uav_vel;
  std::vector<bool> alive;
  std::vector<Vec2> user_pos;
  std::vector<NodeId> association;
};

GlobalSnapshot snapshot(const WorldState& state);

struct Transition {
  int t = 0;
  std::vector<std::optional<Observation>> observations;
  std::vector<int> actions;
  std::vector<double> log_probs;
  double reward = 0.0;
  std::vector<bool> alive;
  GlobalSnapshot global_state;
  bool done = false;
};

/// One JSON object on a single line; keys follow the Transition field names.
std::string transition_to_json_line(const Transition& tr);

struct StepResult {
  std::vector<std::optional<Observation>> observations;
  double reward = 0.0;
  StepMetrics metrics;
  bool done = false;
  std::vector<int> failed;  // UAVs lost during this step
};

/// Single-threaded DEC-POMDP environment instance.
class Environment {
 public:
  explicit Environment(ScenarioConfig cfg);

  std::vector<std::optional<Observation>> reset(std::uint64_t seed);
  StepResult step(std::span<const int> actions);

  const ScenarioConfig& config() const { return cfg_; }
  const WorldState& state() const { return state_; }
  const LinkTable& links() const { return links_; }
  const StepMetrics& metrics() const { return metrics_; }
  bool done() const { return state_.t >= cfg_.episode_len; }

  EgoGraph ego_graph(int k) const { return build_ego_graph(state_, links_, k, cfg_); }
  std::vector<std::optional<Observation>> observations() const;

 private:
  void apply_scheduled_failures(int t);
  void refresh_links();

  ScenarioConfig cfg_;
  WorldState state_;
  LinkTable links_;
  StepMetrics metrics_;
  Rng mobility_rng_;
  Rng noise_rng_;
  Rng failure_rng_;
  bool has_reset_ = false;
};

}  // namespace agin

#pragma once

#include <random>
#include <vector>

#include "agin/env.hpp"
#include "agin/nn.hpp"

namespace agin::fixture {

inline ScenarioConfig desk_config(const char* name = "suburban") {
  ScenarioConfig cfg = make_scenario(name);
  cfg.num_uavs = 2;
  cfg.num_users = 30;
  cfg.episode_len = 100;
  cfg.failure_schedule = {{50, std::nullopt}};
  return cfg;
}

/// A deterministic state without randomness: users on a line, UAVs placed by hand.
inline WorldState manual_state(const ScenarioConfig& cfg, std::vector<Vec3> uavs, std::vector<Vec2> users) {
  WorldState s;
  s.uav_pos = std::move(uavs);
  s.uav_vel.assign(s.uav_pos.size(), Vec3::Zero());
  s.alive.assign(s.uav_pos.size(), true);
  s.user_pos = std::move(users);
  s.user_vel.assign(s.user_pos.size(), Vec2::Zero());
  s.gbs_shadowing_db.assign(s.user_pos.size(), 0.0);
  s.association.assign(s.user_pos.size(), NodeId::gbs());
  s.prev_association = s.association;
  (void)cfg;
  return s;
}

inline EgoGraph random_graph(int slots, Rng& rng, double mask_prob = 0.3) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::bernoulli_distribution masked(mask_prob);
  EgoGraph g;
  g.ego = Eigen::VectorXd::NullaryExpr(kEntityDim, [&] { return u(rng); });
  g.gbs = Eigen::VectorXd::NullaryExpr(kEntityDim, [&] { return u(rng); });
  g.neighbors = Eigen::MatrixXd::Zero(kEntityDim, slots);
  g.mask.assign(slots, 0);
  for (int s = 0; s < slots; ++s) {
    if (masked(rng)) continue;
    g.mask[s] = 1;
    g.neighbors.col(s) = Eigen::VectorXd::NullaryExpr(kEntityDim, [&] { return u(rng); });
  }
  return g;
}

inline void randomize(nn::ParameterSet& p, Rng& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = p[i].unaryExpr([&](double) { return u(rng); });
}

}  // namespace agin::fixture

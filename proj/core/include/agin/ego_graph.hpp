#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace agin {

/// Width of one entity row fed to the critic's entity encoder:
/// relative position (3), velocity (3), altitude, GBS flag, served share,
/// served-centroid offset (2), uncovered share of served users, episode
/// progress, global coverage.
inline constexpr int kEntityDim = 14;

/// Ego-centric graph for one agent at one step. Entities are stored as columns.
/// Neighbor slots follow ascending UAV index (excluding the ego); masked slots
/// are all-zero. The GBS anchor is always present.
struct EgoGraph {
  Eigen::VectorXd ego;
  Eigen::MatrixXd neighbors;        // kEntityDim x slots
  std::vector<std::uint8_t> mask;   // 1 = neighbor present
  Eigen::VectorXd gbs;

  int slots() const { return static_cast<int>(mask.size()); }
};

}  // namespace agin

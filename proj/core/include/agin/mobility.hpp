#pragma once

#include <span>
#include <vector>

#include "agin/world.hpp"

namespace agin {

struct KMeansResult {
  std::vector<Vec2> centroids;
  std::vector<int> labels;
};

/// Lloyd's algorithm with seeded initial centroids drawn from the points.
/// Nearest-centroid ties go to the lowest index. An empty cluster is re-seeded
/// from a random point (bounded retries), after which it may stay empty.
KMeansResult kmeans(std::span<const Vec2> points, int k, Rng& rng, int max_iter = 50);

struct UserLayout {
  std::vector<Vec2> positions;
  std::vector<int> group;         // empty for uniform layouts
  std::vector<Vec2> centroids;    // empty for uniform layouts
  int gbs_group = -1;
};

/// Initial user positions. Clustered (RPGM) scenarios partition the area into
/// K_U+1 K-Means clusters; the cluster nearest the GBS is assigned to it.
UserLayout init_users(const ScenarioConfig& cfg, Rng& rng);

/// UAV k above the k-th non-GBS cluster centroid, or on a centered grid for
/// uniform layouts, always at cruise altitude.
std::vector<Vec3> init_uavs(const ScenarioConfig& cfg, const UserLayout& layout);

/// Fills the user-related parts of `state` from a layout (velocities, offsets,
/// waypoints), drawing Gauss-Markov mean velocities or RPGM waypoints from rng.
void install_users(WorldState& state, const ScenarioConfig& cfg, const UserLayout& layout, Rng& rng);

/// One Gauss-Markov step: v <- a v + (1-a) v_mean + sqrt(1-a^2) eps, speed clamp,
/// position advance with reflection at the area boundary.
void step_gauss_markov(WorldState& state, const GaussMarkovParams& params, double v_max, double area_side,
                       double dt, Rng& rng);

/// One RPGM step: group centers travel toward waypoints, offsets random-walk
/// inside the deviation disk, and users are recomposed as center + offset.
void step_rpgm(WorldState& state, const RpgmParams& params, double group_speed, double area_side, double dt,
               Rng& rng);

void step_users(WorldState& state, const ScenarioConfig& cfg, Rng& rng);

}  // namespace agin

#include "agin/mobility.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace agin {

namespace {

int nearest(const Vec2& p, std::span<const Vec2> centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int j = 0; j < static_cast<int>(centroids.size()); ++j) {
    const double d = (p - centroids[j]).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

Vec2 clip_to_area(Vec2 p, double side) {
  p.x() = std::clamp(p.x(), 0.0, side);
  p.y() = std::clamp(p.y(), 0.0, side);
  return p;
}

Vec2 clamp_norm(Vec2 v, double limit) {
  const double n = v.norm();
  if (n > limit) v *= (limit > 0.0 ? limit / n : 0.0);
  return v;
}

Vec2 uniform_point(double side, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, side);
  const double x = u(rng);
  const double y = u(rng);
  return {x, y};
}

Vec2 gaussian2(double sigma, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double x = n(rng);
  const double y = n(rng);
  return {sigma * x, sigma * y};
}

}  // namespace

KMeansResult kmeans(std::span<const Vec2> points, int k, Rng& rng, int max_iter) {
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  if (points.empty()) throw std::invalid_argument("kmeans: no points");
  constexpr int kMaxReseeds = 10;
  const auto n = points.size();
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  KMeansResult r;
  r.centroids.resize(k);
  // Distinct seed points where possible.
  std::vector<std::size_t> chosen;
  for (int j = 0; j < k; ++j) {
    std::size_t idx = pick(rng);
    for (int tries = 0; tries < 32 && std::find(chosen.begin(), chosen.end(), idx) != chosen.end(); ++tries) {
      idx = pick(rng);
    }
    chosen.push_back(idx);
    r.centroids[j] = points[idx];
  }

  r.labels.assign(n, 0);
  int reseeds = 0;
  for (int it = 0; it < max_iter; ++it) {
    bool changed = it == 0;
    for (std::size_t i = 0; i < n; ++i) {
      const int l = nearest(points[i], r.centroids);
      if (l != r.labels[i]) changed = true;
      r.labels[i] = l;
    }
    std::vector<Vec2> sum(k, Vec2::Zero());
    std::vector<int> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[r.labels[i]] += points[i];
      ++count[r.labels[i]];
    }
    bool reseeded = false;
    for (int j = 0; j < k; ++j) {
      if (count[j] > 0) {
        r.centroids[j] = sum[j] / count[j];
      } else if (reseeds < kMaxReseeds) {
        r.centroids[j] = points[pick(rng)];
        ++reseeds;
        reseeded = true;
      }
    }
    if (!changed && !reseeded) break;
  }
  return r;
}

UserLayout init_users(const ScenarioConfig& cfg, Rng& rng) {
  const int m = cfg.num_users;
  const double side = cfg.area_side_m;
  UserLayout layout;
  layout.positions.reserve(m);

  if (cfg.mobility_kind == MobilityKind::GaussMarkov) {
    for (int i = 0; i < m; ++i) layout.positions.push_back(uniform_point(side, rng));
    return layout;
  }

  std::vector<Vec2> provisional;
  provisional.reserve(m);
  for (int i = 0; i < m; ++i) provisional.push_back(uniform_point(side, rng));
  const int k = cfg.num_uavs + 1;
  auto km = kmeans(provisional, k, rng);

  const Vec2 gbs_xy = cfg.gbs_position.head<2>();
  layout.gbs_group = nearest(gbs_xy, km.centroids);
  layout.centroids = km.centroids;
  layout.group = km.labels;

  const double radius = cfg.rpgm.deviation_radius_m;
  for (int i = 0; i < m; ++i) {
    const Vec2& c = layout.centroids[layout.group[i]];
    const Vec2 offset = clamp_norm(gaussian2(cfg.rpgm.sigma_c_m, rng), radius);
    layout.positions.push_back(clip_to_area(c + offset, side));
  }
  return layout;
}

std::vector<Vec3> init_uavs(const ScenarioConfig& cfg, const UserLayout& layout) {
  const int k = cfg.num_uavs;
  const double z = cfg.cruise_altitude();
  std::vector<Vec3> pos;
  pos.reserve(k);
  if (!layout.centroids.empty()) {
    for (int j = 0; j < static_cast<int>(layout.centroids.size()) && static_cast<int>(pos.size()) < k; ++j) {
      if (j == layout.gbs_group) continue;
      pos.emplace_back(layout.centroids[j].x(), layout.centroids[j].y(), z);
    }
  } else {
    const int n = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(k))));
    const double step = cfg.area_side_m / (n + 1);
    for (int i = 0; i < n && static_cast<int>(pos.size()) < k; ++i) {
      for (int j = 0; j < n && static_cast<int>(pos.size()) < k; ++j) {
        pos.emplace_back(step * (i + 1), step * (j + 1), z);
      }
    }
  }
  // Separate near-coincident starts so the safety distance holds from t = 0.
  for (int a = 1; a < k; ++a) {
    for (int guard = 0; guard < 64; ++guard) {
      bool clash = false;
      for (int b = 0; b < a; ++b) {
        if ((pos[a] - pos[b]).norm() < cfg.d_safe_m) clash = true;
      }
      if (!clash) break;
      pos[a].x() = std::clamp(pos[a].x() + cfg.d_safe_m, 0.0, cfg.area_side_m);
      if (pos[a].x() >= cfg.area_side_m) pos[a].y() = std::clamp(pos[a].y() + cfg.d_safe_m, 0.0, cfg.area_side_m);
    }
  }
  return pos;
}

void install_users(WorldState& state, const ScenarioConfig& cfg, const UserLayout& layout, Rng& rng) {
  const int m = static_cast<int>(layout.positions.size());
  state.user_pos = layout.positions;
  state.user_vel.assign(m, Vec2::Zero());
  state.user_mean_vel.assign(m, Vec2::Zero());
  state.user_group = layout.group;
  state.group_centers = layout.centroids;
  state.gbs_group = layout.gbs_group;
  state.user_offsets.assign(m, Vec2::Zero());
  state.group_waypoints.clear();

  if (cfg.mobility_kind == MobilityKind::GaussMarkov) {
    std::uniform_real_distribution<double> heading(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> speed(0.0, cfg.v_max_user_mps);
    for (int i = 0; i < m; ++i) {
      const double h = heading(rng);
      const double s = speed(rng);
      state.user_mean_vel[i] = Vec2(std::cos(h), std::sin(h)) * s;
      state.user_vel[i] = state.user_mean_vel[i];
    }
    return;
  }
  for (int i = 0; i < m; ++i) {
    state.user_offsets[i] = state.user_pos[i] - state.group_centers[state.user_group[i]];
  }
  for (std::size_t j = 0; j < state.group_centers.size(); ++j) {
    state.group_waypoints.push_back(uniform_point(cfg.area_side_m, rng));
  }
}

void step_gauss_markov(WorldState& state, const GaussMarkovParams& params, double v_max, double area_side,
                       double dt, Rng& rng) {
  const double a = params.alpha;
  const double noise_coeff = std::sqrt(std::max(0.0, 1.0 - a * a));
  for (int i = 0; i < state.num_users(); ++i) {
    const Vec2 eps = gaussian2(params.noise_scale_mps, rng);
    Vec2 v = a * state.user_vel[i] + (1.0 - a) * state.user_mean_vel[i] + noise_coeff * eps;
    v = clamp_norm(v, v_max);
    Vec2 p = state.user_pos[i] + v * dt;
    for (int d = 0; d < 2; ++d) {
      if (p[d] < 0.0) {
        p[d] = -p[d];
        v[d] = -v[d];
        state.user_mean_vel[i][d] = -state.user_mean_vel[i][d];
      } else if (p[d] > area_side) {
        p[d] = 2.0 * area_side - p[d];
        v[d] = -v[d];
        state.user_mean_vel[i][d] = -state.user_mean_vel[i][d];
      }
      p[d] = std::clamp(p[d], 0.0, area_side);
    }
    state.user_vel[i] = v;
    state.user_pos[i] = p;
  }
}

void step_rpgm(WorldState& state, const RpgmParams& params, double group_speed, double area_side, double dt,
               Rng& rng) {
  const double travel = group_speed * dt;
  for (std::size_t j = 0; j < state.group_centers.size(); ++j) {
    Vec2& c = state.group_centers[j];
    Vec2& w = state.group_waypoints[j];
    const Vec2 to = w - c;
    const double dist = to.norm();
    if (dist <= travel) {
      c = w;
    } else {
      c += to * (travel / dist);
    }
    c = clip_to_area(c, area_side);
    if ((w - c).norm() <= params.waypoint_tolerance_m) w = uniform_point(area_side, rng);
  }

  std::uniform_real_distribution<double> heading(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double max_step = params.offset_step_mps * dt;
  for (int i = 0; i < state.num_users(); ++i) {
    const double h = heading(rng);
    const double s = unit(rng) * max_step;
    Vec2& d = state.user_offsets[i];
    d = clamp_norm(d + Vec2(std::cos(h), std::sin(h)) * s, params.deviation_radius_m);
    const Vec2& c = state.group_centers[state.user_group[i]];
    state.user_pos[i] = clip_to_area(c + d, area_side);
  }
}

void step_users(WorldState& state, const ScenarioConfig& cfg, Rng& rng) {
  if (cfg.mobility_kind == MobilityKind::GaussMarkov) {
    step_gauss_markov(state, cfg.gauss_markov, cfg.v_max_user_mps, cfg.area_side_m, cfg.dt_s, rng);
  } else {
    step_rpgm(state, cfg.rpgm, cfg.group_speed_mps, cfg.area_side_m, cfg.dt_s, rng);
  }
}

}  // namespace agin

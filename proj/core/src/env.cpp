#include "agin/env.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "agin/mobility.hpp"
#include "agin/power.hpp"

namespace agin {

namespace {

double clamp1(double x) { return std::clamp(x, -1.0, 1.0); }

double corridor_norm(double z, const ScenarioConfig& cfg) {
  return clamp1(2.0 * (z - cfg.h_min_m) / (cfg.h_max_m - cfg.h_min_m) - 1.0);
}

void check_alive(const WorldState& state, int k) {
  if (k < 0 || k >= state.num_uavs()) throw std::invalid_argument("agent index out of range");
  if (!state.alive[k]) throw std::invalid_argument("agent " + std::to_string(k) + " is not alive");
}

int slot_to_uav(int slot, int ego) { return slot < ego ? slot : slot + 1; }

bool neighbor_visible(const WorldState& state, int ego, int j, const ScenarioConfig& cfg) {
  return state.alive[j] && (state.uav_pos[j] - state.uav_pos[ego]).norm() <= cfg.r_comm_m;
}

struct NodeSummary {
  double served_share = 0.0;
  Vec2 served_centroid = Vec2::Zero();
  bool has_served = false;
  double uncovered_share = 0.0;
};

NodeSummary summarize(const WorldState& state, const LinkTable& links, NodeId id, const ScenarioConfig& cfg) {
  NodeSummary s;
  int n = 0;
  int uncovered = 0;
  for (int u = 0; u < state.num_users(); ++u) {
    if (links.serving[u] != id) continue;
    s.served_centroid += state.user_pos[u];
    uncovered += links.rate_bps[u] < cfg.r_th_bps ? 1 : 0;
    ++n;
  }
  if (n > 0) {
    s.served_centroid /= n;
    s.has_served = true;
    s.uncovered_share = static_cast<double>(uncovered) / n;
  }
  s.served_share = static_cast<double>(n) / state.num_users();
  return s;
}

double global_coverage(const LinkTable& links, const ScenarioConfig& cfg) {
  if (links.rate_bps.empty()) return 0.0;
  int covered = 0;
  for (double r : links.rate_bps) covered += r >= cfg.r_th_bps ? 1 : 0;
  return static_cast<double>(covered) / links.rate_bps.size();
}

Eigen::VectorXd entity_row(const WorldState& state, const LinkTable& links, const ScenarioConfig& cfg,
                           const Vec3& ego_pos, NodeId id, double progress, double coverage) {
  Eigen::VectorXd row = Eigen::VectorXd::Zero(kEntityDim);
  const bool gbs = id.is_gbs();
  const Vec3 pos = gbs ? cfg.gbs_position : state.uav_pos[id.uav_index()];
  const Vec3 vel = gbs ? Vec3::Zero() : state.uav_vel[id.uav_index()];
  const Vec3 rel = (pos - ego_pos) / cfg.area_side_m;
  for (int i = 0; i < 3; ++i) {
    row[i] = clamp1(rel[i]);
    row[3 + i] = clamp1(vel[i] / cfg.v_max_uav_mps);
  }
  row[6] = gbs ? 0.0 : corridor_norm(pos.z(), cfg);
  row[7] = gbs ? 1.0 : 0.0;
  const NodeSummary s = summarize(state, links, id, cfg);
  row[8] = s.served_share;
  if (s.has_served) {
    row[9] = clamp1((s.served_centroid.x() - pos.x()) / cfg.area_side_m);
    row[10] = clamp1((s.served_centroid.y() - pos.y()) / cfg.area_side_m);
  }
  row[11] = s.uncovered_share;
  row[12] = clamp1(progress);
  row[13] = coverage;
  return row;
}

}  // namespace

Vec3 target_velocity(int action, const ScenarioConfig& cfg) {
  if (action < 0 || action >= kNumActions) {
    throw std::invalid_argument("action index " + std::to_string(action) + " outside [0, 27)");
  }
  const int dx = action / 9 - 1;
  const int dy = (action / 3) % 3 - 1;
  const int dz = action % 3 - 1;
  Vec3 v(dx * cfg.v_max_uav_mps, dy * cfg.v_max_uav_mps, dz * cfg.kinematics.v_z_max_mps);
  const double n = v.norm();
  if (n > cfg.v_max_uav_mps) v *= cfg.v_max_uav_mps / n;
  return v;
}

std::vector<double> Observation::flatten() const {
  std::vector<double> out;
  out.reserve(4 + 3 + 7 * neighbors.size() + 6);
  out.insert(out.end(), self.begin(), self.end());
  out.insert(out.end(), gbs.begin(), gbs.end());
  for (std::size_t s = 0; s < neighbors.size(); ++s) {
    out.insert(out.end(), neighbors[s].begin(), neighbors[s].end());
    out.push_back(neighbor_mask[s]);
  }
  out.insert(out.end(), user.begin(), user.end());
  return out;
}

Observation build_observation(const WorldState& state, const LinkTable& links, int k, const ScenarioConfig& cfg) {
  check_alive(state, k);
  const Vec3& p = state.uav_pos[k];
  const Vec3& v = state.uav_vel[k];
  const double side = cfg.area_side_m;
  Observation o;
  o.self = {corridor_norm(p.z(), cfg), clamp1(v.x() / cfg.v_max_uav_mps), clamp1(v.y() / cfg.v_max_uav_mps),
            clamp1(v.z() / cfg.v_max_uav_mps)};
  const Vec3 to_gbs = (cfg.gbs_position - p) / side;
  o.gbs = {clamp1(to_gbs.x()), clamp1(to_gbs.y()), clamp1(to_gbs.z())};

  const int slots = state.num_uavs() - 1;
  o.neighbors.assign(slots, {});
  o.neighbor_mask.assign(slots, 0);
  for (int s = 0; s < slots; ++s) {
    const int j = slot_to_uav(s, k);
    if (!neighbor_visible(state, k, j, cfg)) continue;
    const Vec3 rel = (state.uav_pos[j] - p) / side;
    const Vec3& vj = state.uav_vel[j];
    o.neighbors[s] = {clamp1(rel.x()), clamp1(rel.y()), clamp1(rel.z()), clamp1(vj.x() / cfg.v_max_uav_mps),
                      clamp1(vj.y() / cfg.v_max_uav_mps), clamp1(vj.z() / cfg.v_max_uav_mps)};
    o.neighbor_mask[s] = 1;
  }

  const NodeSummary served = summarize(state, links, NodeId::uav(k), cfg);
  Vec2 in_range_sum = Vec2::Zero();
  int in_range = 0;
  int uncovered = 0;
  for (int u = 0; u < state.num_users(); ++u) {
    if ((state.user_pos[u] - p.head<2>()).norm() > cfg.kinematics.r_sense_m) continue;
    in_range_sum += state.user_pos[u];
    uncovered += links.rate_bps[u] < cfg.r_th_bps ? 1 : 0;
    ++in_range;
  }
  o.user[0] = served.served_share;
  if (served.has_served) {
    o.user[1] = clamp1((served.served_centroid.x() - p.x()) / side);
    o.user[2] = clamp1((served.served_centroid.y() - p.y()) / side);
  }
  if (in_range > 0) {
    const Vec2 c = in_range_sum / in_range;
    o.user[3] = clamp1((c.x() - p.x()) / side);
    o.user[4] = clamp1((c.y() - p.y()) / side);
    o.user[5] = static_cast<double>(uncovered) / in_range;
  }
  return o;
}

EgoGraph build_ego_graph(const WorldState& state, const LinkTable& links, int k, const ScenarioConfig& cfg) {
  check_alive(state, k);
  const double progress = static_cast<double>(state.t) / cfg.episode_len;
  const double coverage = global_coverage(links, cfg);
  const Vec3& p = state.uav_pos[k];
  const int slots = state.num_uavs() - 1;

  EgoGraph g;
  g.ego = entity_row(state, links, cfg, p, NodeId::uav(k), progress, coverage);
  g.gbs = entity_row(state, links, cfg, p, NodeId::gbs(), progress, coverage);
  g.neighbors = Eigen::MatrixXd::Zero(kEntityDim, slots);
  g.mask.assign(slots, 0);
  for (int s = 0; s < slots; ++s) {
    const int j = slot_to_uav(s, k);
    if (!neighbor_visible(state, k, j, cfg)) continue;
    g.neighbors.col(s) = entity_row(state, links, cfg, p, NodeId::uav(j), progress, coverage);
    g.mask[s] = 1;
  }
  return g;
}

void apply_kinematics(WorldState& state, std::span<const int> actions, const ScenarioConfig& cfg, Rng& noise_rng) {
  const int n = state.num_uavs();
  if (static_cast<int>(actions.size()) != n) {
    throw std::invalid_argument("expected one action slot per UAV (" + std::to_string(n) + ")");
  }
  for (int k = 0; k < n; ++k) {
    if (state.alive[k]) {
      if (actions[k] < 0 || actions[k] >= kNumActions) {
        throw std::invalid_argument("malformed action " + std::to_string(actions[k]) + " for UAV " +
                                    std::to_string(k));
      }
    } else if (actions[k] != kNoAction) {
      throw std::invalid_argument("action supplied for failed UAV " + std::to_string(k));
    }
  }

  const auto& kin = cfg.kinematics;
  const double beta = kin.inertia_beta;
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::vector<Vec3> old_pos = state.uav_pos;
  std::vector<Vec3> new_pos = old_pos;
  std::vector<Vec3> new_vel = state.uav_vel;

  for (int k = 0; k < n; ++k) {
    if (!state.alive[k]) continue;
    Vec3 eps = Vec3::Zero();
    if (kin.mech_noise_std_mps > 0.0) {
      for (int i = 0; i < 3; ++i) eps[i] = kin.mech_noise_std_mps * noise(noise_rng);
    }
    Vec3 v = beta * state.uav_vel[k] + (1.0 - beta) * target_velocity(actions[k], cfg) + eps;
    v.z() = std::clamp(v.z(), -kin.v_z_max_mps, kin.v_z_max_mps);
    const double speed = v.norm();
    if (speed > cfg.v_max_uav_mps) v *= cfg.v_max_uav_mps / speed;

    Vec3 p = old_pos[k] + v * cfg.dt_s;
    p.x() = std::clamp(p.x(), 0.0, cfg.area_side_m);
    p.y() = std::clamp(p.y(), 0.0, cfg.area_side_m);
    p.z() = std::clamp(p.z(), cfg.h_min_m, cfg.h_max_m);
    // Keep p(t+1) = p(t) + v dt exact when a boundary clamps the move.
    new_vel[k] = (p - old_pos[k]) / cfg.dt_s;
    new_pos[k] = p;
  }

  // Safety projection. Held UAVs keep their previous (feasible) position.
  std::vector<bool> held(n, false);
  auto hold = [&](int k) {
    held[k] = true;
    new_pos[k] = old_pos[k];
    new_vel[k].setZero();
  };
  for (int guard = 0; guard <= n; ++guard) {
    bool changed = false;
    for (int i = 0; i < n && !changed; ++i) {
      if (!state.alive[i]) continue;
      if (!held[i] && (new_pos[i] - cfg.gbs_position).norm() < cfg.d_safe_m) {
        hold(i);
        changed = true;
        break;
      }
      for (int j = i + 1; j < n; ++j) {
        if (!state.alive[j]) continue;
        if ((new_pos[i] - new_pos[j]).norm() >= cfg.d_safe_m) continue;
        if (!held[j]) {
          hold(j);
        } else if (!held[i]) {
          hold(i);
        } else {
          continue;
        }
        changed = true;
        break;
      }
    }
    if (!changed) break;
  }

  state.uav_pos = std::move(new_pos);
  state.uav_vel = std::move(new_vel);
}

double discounted_return(std::span<const double> rewards, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("discounted_return: gamma must be in [0,1)");
  double g = 0.0;
  double w = 1.0;
  for (double r : rewards) {
    g += w * r;
    w *= gamma;
  }
  return g;
}

GlobalSnapshot snapshot(const WorldState& state) {
  return {state.uav_pos, state.uav_vel, state.alive, state.user_pos, state.association};
}

std::string transition_to_json_line(const Transition& tr) {
  using nlohmann::json;
  auto vec3 = [](const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); };
  json j;
  j["t"] = tr.t;
  json obs = json::array();
  for (const auto& o : tr.observations) {
    obs.push_back(o ? json(o->flatten()) : json(nullptr));
  }
  j["observations"] = std::move(obs);
  j["actions"] = tr.actions;
  j["log_probs"] = tr.log_probs;
  j["reward"] = tr.reward;
  j["alive"] = tr.alive;
  json gs;
  gs["uav_pos"] = json::array();
  gs["uav_vel"] = json::array();
  for (const auto& p : tr.global_state.uav_pos) gs["uav_pos"].push_back(vec3(p));
  for (const auto& v : tr.global_state.uav_vel) gs["uav_vel"].push_back(vec3(v));
  gs["alive"] = tr.global_state.alive;
  gs["user_pos"] = json::array();
  for (const auto& q : tr.global_state.user_pos) gs["user_pos"].push_back(json::array({q.x(), q.y()}));
  gs["association"] = json::array();
  for (const auto& a : tr.global_state.association) gs["association"].push_back(to_string(a));
  j["global_state"] = std::move(gs);
  j["done"] = tr.done;
  return j.dump();
}

Environment::Environment(ScenarioConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::vector<std::optional<Observation>> Environment::observations() const {
  std::vector<std::optional<Observation>> out(state_.num_uavs());
  for (int k = 0; k < state_.num_uavs(); ++k) {
    if (state_.alive[k]) out[k] = build_observation(state_, links_, k, cfg_);
  }
  return out;
}

void Environment::refresh_links() {
  links_ = associate_and_rate(state_, cfg_);
  state_.prev_association = state_.association;
  state_.association = links_.serving;
  metrics_ = step_metrics(links_, state_, total_power(state_, cfg_), cfg_);
}

void Environment::apply_scheduled_failures(int t) {
  for (const auto& f : cfg_.failure_schedule) {
    if (f.step != t) continue;
    if (f.uav) {
      if (state_.alive[*f.uav]) apply_failure(state_, *f.uav);
    } else if (auto k = pick_random_alive(state_, failure_rng_)) {
      apply_failure(state_, *k);
    }
  }
}

std::vector<std::optional<Observation>> Environment::reset(std::uint64_t seed) {
  Rng init_rng = make_rng(seed, Stream::UserInit);
  mobility_rng_ = make_rng(seed, Stream::Mobility);
  noise_rng_ = make_rng(seed, Stream::UavNoise);
  failure_rng_ = make_rng(seed, Stream::Failure);
  Rng shadow_rng = make_rng(seed, Stream::Shadowing);

  state_ = WorldState{};
  const UserLayout layout = init_users(cfg_, init_rng);
  install_users(state_, cfg_, layout, init_rng);
  state_.uav_pos = init_uavs(cfg_, layout);
  state_.uav_vel.assign(cfg_.num_uavs, Vec3::Zero());
  state_.alive.assign(cfg_.num_uavs, true);
  state_.gbs_shadowing_db = sample_shadowing(cfg_.channel, cfg_.num_users, shadow_rng);
  state_.t = 0;
  state_.association.clear();
  apply_scheduled_failures(0);
  refresh_links();
  state_.prev_association = state_.association;
  has_reset_ = true;
  return observations();
}

StepResult Environment::step(std::span<const int> actions) {
  if (!has_reset_) throw std::logic_error("Environment::step before reset");
  if (done()) throw std::logic_error("Environment::step after episode end");

  apply_kinematics(state_, actions, cfg_, noise_rng_);
  state_.t += 1;
  StepResult r;
  const std::vector<bool> before = state_.alive;
  apply_scheduled_failures(state_.t);
  for (int k = 0; k < state_.num_uavs(); ++k) {
    if (before[k] && !state_.alive[k]) r.failed.push_back(k);
  }
  step_users(state_, cfg_, mobility_rng_);
  refresh_links();

  r.metrics = metrics_;
  r.reward = metrics_.utility;
  r.done = done();
  r.observations = observations();
  return r;
}

}  // namespace agin

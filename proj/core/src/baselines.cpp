#include "agin/baselines.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <tuple>

#include "agin/env.hpp"
#include "agin/mobility.hpp"

namespace agin {

namespace {

class MlpCache final : public nn::CriticCache {
 public:
  nn::MatrixXd x, h1, h2;
};

nn::MatrixXd tanh_affine(const nn::MatrixXd& w, const nn::MatrixXd& b, const nn::MatrixXd& x) {
  nn::MatrixXd pre = w * x;
  pre.colwise() += b.col(0);
  return pre.array().tanh().matrix();
}

}  // namespace

MlpCritic::MlpCritic(int num_uavs, int hidden1, int hidden2) : input_width_((num_uavs + 1) * kEntityDim) {
  w1_ = params_.add("fc1.w", hidden1, input_width_);
  b1_ = params_.add("fc1.b", hidden1, 1);
  w2_ = params_.add("fc2.w", hidden2, hidden1);
  b2_ = params_.add("fc2.b", hidden2, 1);
  w3_ = params_.add("out.w", 1, hidden2);
  b3_ = params_.add("out.b", 1, 1);
}

nn::MatrixXd MlpCritic::flatten(const nn::EgoGraphBatch& batch) const {
  batch.validate();
  if ((batch.slots + 2) * kEntityDim != input_width_) {
    throw std::invalid_argument("MlpCritic: feature width " + std::to_string((batch.slots + 2) * kEntityDim) +
                                " does not match " + std::to_string(input_width_));
  }
  nn::MatrixXd x(input_width_, batch.samples);
  for (int i = 0; i < batch.samples; ++i) {
    x.col(i).head(kEntityDim) = batch.ego.col(i);
    for (int s = 0; s < batch.slots; ++s) {
      x.col(i).segment((1 + s) * kEntityDim, kEntityDim) =
          batch.neighbors.col(static_cast<Eigen::Index>(i) * batch.slots + s);
    }
    x.col(i).tail(kEntityDim) = batch.gbs.col(i);
  }
  return x;
}

nn::VectorXd MlpCritic::forward_features(const nn::MatrixXd& features) const {
  if (features.rows() != input_width_) throw std::invalid_argument("MlpCritic: feature width mismatch");
  const nn::MatrixXd h1 = tanh_affine(params_[w1_], params_[b1_], features);
  const nn::MatrixXd h2 = tanh_affine(params_[w2_], params_[b2_], h1);
  nn::VectorXd v = (params_[w3_] * h2).transpose();
  v.array() += params_[b3_](0, 0);
  return v;
}

nn::VectorXd MlpCritic::forward(const nn::EgoGraphBatch& batch, std::unique_ptr<nn::CriticCache>* cache) const {
  auto c = std::make_unique<MlpCache>();
  c->x = flatten(batch);
  c->h1 = tanh_affine(params_[w1_], params_[b1_], c->x);
  c->h2 = tanh_affine(params_[w2_], params_[b2_], c->h1);
  nn::VectorXd v = (params_[w3_] * c->h2).transpose();
  v.array() += params_[b3_](0, 0);
  if (cache) *cache = std::move(c);
  return v;
}

void MlpCritic::backward(const nn::CriticCache& base, const nn::VectorXd& dvalues, nn::ParameterSet& grads) const {
  const auto* c = dynamic_cast<const MlpCache*>(&base);
  if (!c) throw std::logic_error("MlpCritic::backward: missing or foreign cache");
  const nn::MatrixXd dv = dvalues.transpose();
  grads[w3_].noalias() += dv * c->h2.transpose();
  grads[b3_](0, 0) += dvalues.sum();
  const nn::MatrixXd d2 = (params_[w3_].transpose() * dv).array() * (1.0 - c->h2.array().square());
  grads[w2_].noalias() += d2 * c->h1.transpose();
  grads[b2_] += d2.rowwise().sum();
  const nn::MatrixXd d1 = (params_[w2_].transpose() * d2).array() * (1.0 - c->h1.array().square());
  grads[w1_].noalias() += d1 * c->x.transpose();
  grads[b1_] += d1.rowwise().sum();
}

int best_action_toward(const Vec3& pos, const Vec3& vel, const Vec3& target, const ScenarioConfig& cfg) {
  const double beta = cfg.kinematics.inertia_beta;
  int best = kHoverAction;
  double best_d = std::numeric_limits<double>::infinity();
  // Hover first so that exact ties keep the UAV still.
  std::vector<int> order{kHoverAction};
  for (int a = 0; a < kNumActions; ++a) {
    if (a != kHoverAction) order.push_back(a);
  }
  for (int a : order) {
    Vec3 v = beta * vel + (1.0 - beta) * target_velocity(a, cfg);
    v.z() = std::clamp(v.z(), -cfg.kinematics.v_z_max_mps, cfg.kinematics.v_z_max_mps);
    const double s = v.norm();
    if (s > cfg.v_max_uav_mps) v *= cfg.v_max_uav_mps / s;
    const double d = (pos + v * cfg.dt_s - target).norm();
    if (d < best_d - 1e-12) {
      best_d = d;
      best = a;
    }
  }
  return best;
}

std::vector<int> kmeans_policy(const WorldState& state, const ScenarioConfig& cfg, std::uint64_t seed) {
  const int n = state.num_uavs();
  std::vector<int> actions(n, kNoAction);
  std::vector<int> alive;
  for (int k = 0; k < n; ++k) {
    if (state.alive[k]) alive.push_back(k);
  }
  if (alive.empty()) return actions;

  Rng rng = make_rng(seed, Stream::KMeans, static_cast<std::uint64_t>(state.t));
  const int k_clusters = std::min<int>(static_cast<int>(alive.size()), state.num_users());
  const KMeansResult km = kmeans(state.user_pos, k_clusters, rng);

  std::vector<std::tuple<double, int, int>> pairs;  // distance, centroid, uav
  for (int c = 0; c < k_clusters; ++c) {
    for (int k : alive) {
      pairs.emplace_back((state.uav_pos[k].head<2>() - km.centroids[c]).norm(), c, k);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  std::vector<bool> centroid_used(k_clusters, false);
  std::vector<int> target_of(n, -1);
  for (const auto& [d, c, k] : pairs) {
    if (centroid_used[c] || target_of[k] >= 0) continue;
    centroid_used[c] = true;
    target_of[k] = c;
  }
  for (int k : alive) {
    if (target_of[k] < 0) {
      actions[k] = kHoverAction;
      continue;
    }
    const Vec2& c = km.centroids[target_of[k]];
    const Vec3 target(c.x(), c.y(), cfg.cruise_altitude());
    actions[k] = best_action_toward(state.uav_pos[k], state.uav_vel[k], target, cfg);
  }
  return actions;
}

}  // namespace agin

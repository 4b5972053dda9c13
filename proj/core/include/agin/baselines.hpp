#pragma once

#include <cstdint>
#include <vector>

#include "agin/nn.hpp"
#include "agin/world.hpp"

namespace agin {

/// Non-relational critic for the ablation: an MLP over the ego graph flattened
/// in fixed agent order ([ego, neighbor slots by index, GBS]; absent neighbors
/// zero-filled). Input width is fixed by K_U at construction. Ordering matters,
/// so training does not shuffle its inputs.
class MlpCritic final : public nn::ValueFunction {
 public:
  explicit MlpCritic(int num_uavs, int hidden1 = 256, int hidden2 = 128);

  int input_width() const { return input_width_; }

  /// Flattens each sample of the batch column-wise into the fixed-order input.
  nn::MatrixXd flatten(const nn::EgoGraphBatch& batch) const;
  /// Forward on already-flattened features (input_width x samples).
  nn::VectorXd forward_features(const nn::MatrixXd& features) const;

  nn::VectorXd forward(const nn::EgoGraphBatch& batch, std::unique_ptr<nn::CriticCache>* cache = nullptr) const override;
  void backward(const nn::CriticCache& cache, const nn::VectorXd& dvalues, nn::ParameterSet& grads) const override;

  nn::ParameterSet& params() override { return params_; }
  const nn::ParameterSet& params() const override { return params_; }
  bool wants_shuffling() const override { return false; }
  std::string kind() const override { return "mlp"; }

 private:
  int input_width_;
  nn::ParameterSet params_;
  std::size_t w1_, b1_, w2_, b2_, w3_, b3_;
};

/// Geometric controller: K-Means over user positions with K = alive UAVs,
/// greedy nearest centroid-UAV matching by ascending pair distance, and per UAV
/// the discrete action whose one-step predicted position lands closest to its
/// centroid at cruise altitude. kNoAction for failed UAVs.
std::vector<int> kmeans_policy(const WorldState& state, const ScenarioConfig& cfg, std::uint64_t seed);

/// The action among the 27 minimizing the predicted (noise-free) distance to target.
int best_action_toward(const Vec3& pos, const Vec3& vel, const Vec3& target, const ScenarioConfig& cfg);

}  // namespace agin

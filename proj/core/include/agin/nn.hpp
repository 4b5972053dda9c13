#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "agin/ego_graph.hpp"
#include "agin/rng.hpp"

namespace agin::nn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Ordered collection of named f64 tensors. Gradients and optimizer state use
/// the same layout as the parameters they belong to.
class ParameterSet {
 public:
  struct Tensor {
    std::string name;
    MatrixXd value;
  };

  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols);

  MatrixXd& operator[](std::size_t i) { return tensors_[i].value; }
  const MatrixXd& operator[](std::size_t i) const { return tensors_[i].value; }
  const std::string& name(std::size_t i) const { return tensors_[i].name; }
  std::size_t size() const { return tensors_.size(); }
  std::optional<std::size_t> find(std::string_view name) const;
  const std::vector<Tensor>& tensors() const { return tensors_; }

  ParameterSet zeros_like() const;
  void set_zero();
  bool same_layout(const ParameterSet& other) const;
  std::size_t scalar_count() const;
  double squared_norm() const;
  bool all_finite() const;
  void add_scaled(double alpha, const ParameterSet& other);
  void scale(double factor);

 private:
  std::vector<Tensor> tensors_;
};

/// Uniform +-sqrt(6 / (fan_in + fan_out)) for every tensor with both dims > 1
/// or named "*.w"; biases (names ending in ".b") are zeroed.
void glorot_init(ParameterSet& params, Rng& rng);

/// Scales grads so their global L2 norm is at most max_norm. Returns the norm before clipping.
double clip_grad_norm(ParameterSet& grads, double max_norm);

// ---------------------------------------------------------------------------
// Actor

/// Shared decentralized policy: obs -> tanh(128) -> tanh(128) -> 27 logits.
/// Batches are column-major: one column per sample.
class PolicyNet {
 public:
  struct Cache {
    MatrixXd x, h1, h2, logits;
  };

  PolicyNet(int obs_dim, int hidden, int num_actions);

  int obs_dim() const { return obs_dim_; }
  int num_actions() const { return num_actions_; }

  MatrixXd forward(const MatrixXd& obs, Cache* cache = nullptr) const;
  /// Accumulates into grads (same layout as params()).
  void backward(const Cache& cache, const MatrixXd& dlogits, ParameterSet& grads) const;

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

 private:
  int obs_dim_;
  int num_actions_;
  ParameterSet params_;
  std::size_t w1_, b1_, w2_, b2_, w3_, b3_;
};

/// Column-wise log-softmax.
MatrixXd log_softmax(const MatrixXd& logits);
/// Column-wise entropy of the categorical distribution given log-probabilities.
VectorXd entropy(const MatrixXd& log_probs);

// ---------------------------------------------------------------------------
// Critic inputs

/// Batched ego graphs. Neighbor slot s of sample i is column i * slots + s.
struct EgoGraphBatch {
  int samples = 0;
  int slots = 0;
  MatrixXd ego;                      // kEntityDim x samples
  MatrixXd neighbors;                // kEntityDim x (samples * slots)
  std::vector<std::uint8_t> mask;    // samples * slots
  MatrixXd gbs;                      // kEntityDim x samples

  static EgoGraphBatch pack(std::span<const EgoGraph> graphs);
  /// Throws std::invalid_argument on inconsistent shapes or non-zero masked rows.
  void validate() const;
};

/// Uniformly permutes neighbor columns together with their mask bits. The ego
/// and GBS rows are untouched.
void ros_shuffle(Eigen::Ref<MatrixXd> neighbors, std::span<std::uint8_t> mask, Rng& rng);
void ros_shuffle(EgoGraph& graph, Rng& rng);

struct AttentionResult {
  VectorXd context;   // c_neigh
  VectorXd weights;   // alpha per entity column (0 where masked); empty if all masked
  VectorXd scores;    // e per entity column (-inf where masked)
};

/// Masked scaled dot-product attention of one ego embedding over entity
/// embeddings (columns). All-masked input yields a zero context and no weights.
/// Throws std::domain_error on non-finite input.
AttentionResult attention_forward(const MatrixXd& w_q, const MatrixXd& w_k, const MatrixXd& w_v,
                                  const VectorXd& ego, const MatrixXd& entities, std::span<const std::uint8_t> mask);

// ---------------------------------------------------------------------------
// Critics

class CriticCache {
 public:
  virtual ~CriticCache() = default;
};

/// Common critic interface so the PPO code path is identical across architectures.
class ValueFunction {
 public:
  virtual ~ValueFunction() = default;

  virtual VectorXd forward(const EgoGraphBatch& batch, std::unique_ptr<CriticCache>* cache = nullptr) const = 0;
  /// Accumulates parameter gradients for upstream dL/dV into grads.
  virtual void backward(const CriticCache& cache, const VectorXd& dvalues, ParameterSet& grads) const = 0;

  virtual ParameterSet& params() = 0;
  virtual const ParameterSet& params() const = 0;
  /// Whether training should apply random observation shuffling.
  virtual bool wants_shuffling() const = 0;
  virtual std::string kind() const = 0;
};

struct TagCriticShape {
  int hidden = 128;      // D
  int attn_dim = 64;     // d_attn
  int head_hidden = 128;
  bool gbs_anchor = true;
};

/// Topology-aware graph attention critic: shared entity encoder, single-head
/// masked attention over neighbors (+ GBS anchor), ego skip path W_self, MLP head.
class TagCritic final : public ValueFunction {
 public:
  explicit TagCritic(TagCriticShape shape = {});

  VectorXd forward(const EgoGraphBatch& batch, std::unique_ptr<CriticCache>* cache = nullptr) const override;
  void backward(const CriticCache& cache, const VectorXd& dvalues, ParameterSet& grads) const override;

  ParameterSet& params() override { return params_; }
  const ParameterSet& params() const override { return params_; }
  bool wants_shuffling() const override { return true; }
  std::string kind() const override { return "tag_gat"; }
  const TagCriticShape& shape() const { return shape_; }

  /// Attention weights per sample from the last forward with a cache:
  /// (slots + anchor) x samples.
  static const MatrixXd& attention_weights(const CriticCache& cache);

  // Tensor indices, exposed for tests that construct decoupled fixtures.
  std::size_t enc_w, enc_b, w_q, w_k, w_v, w_self, head_w1, head_b1, head_w2, head_b2;

 private:
  TagCriticShape shape_;
  ParameterSet params_;
};

// ---------------------------------------------------------------------------
// Optimizers

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(ParameterSet& params, const ParameterSet& grads, double lr) = 0;
};

/// params -= lr * grads.
class Sgd final : public Optimizer {
 public:
  void step(ParameterSet& params, const ParameterSet& grads, double lr) override;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(ParameterSet& params, const ParameterSet& grads, double lr) override;

 private:
  double beta1_, beta2_, eps_;
  std::optional<ParameterSet> m_, v_;
  long steps_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoints

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string controller;
};

/// Writes `<path>` (JSON manifest: names, shapes, byte offsets, metadata) and
/// `<path>.bin` (little-endian f64, row-major per tensor). Tensor names are
/// prefixed "actor." / "critic.".
void save_checkpoint(const std::string& path, const CheckpointMeta& meta, const ParameterSet& actor,
                     const ParameterSet& critic);

/// Fills actor/critic, whose layouts must match the manifest exactly.
/// Throws std::runtime_error on any mismatch or truncated payload.
CheckpointMeta load_checkpoint(const std::string& path, ParameterSet& actor, ParameterSet& critic);

}  // namespace agin::nn

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "agin/env.hpp"
#include "agin/nn.hpp"

namespace agin {

enum class ControllerKind { TagMappo, MlpMappo, KMeans };

ControllerKind parse_controller(std::string_view name);
std::string to_string(ControllerKind kind);

enum class OptimizerKind { Sgd, Adam };

OptimizerKind parse_optimizer(std::string_view name);
std::string to_string(OptimizerKind kind);

struct TrainConfig {
  double actor_lr = 1e-4;
  double critic_lr = 5e-4;
  double gamma = 0.99;
  double gae_tau = 0.95;
  int ppo_epochs = 10;
  int batch_size = 256;
  double clip_eps = 0.2;
  double huber_delta = 2.0;
  double entropy_start = 0.10;
  double entropy_end = 0.01;
  double lr_final_fraction = 0.1;
  double grad_clip = 0.5;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  bool normalize_advantages = true;
  bool shuffle_neighbors = true;  // ROS; only applied when the critic asks for it
  int episodes = 300;
  int env_count = 1;
  int hidden = 128;
  nn::TagCriticShape critic_shape;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Schedule {
  double entropy_coef;
  double actor_lr;
  double critic_lr;
};

/// Linear annealing: entropy coefficient start -> end and learning rates down to
/// lr_final_fraction of their initial values as episode goes 0 -> episodes.
Schedule anneal(const TrainConfig& cfg, int episode);

/// One alive agent at one step.
struct Sample {
  int env = 0;
  int t = 0;
  int agent = 0;
  bool alive = true;
  std::vector<double> obs;
  EgoGraph graph;
  int action = kHoverAction;
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
};

struct RolloutBuffer {
  std::vector<Sample> samples;
  std::vector<std::vector<StepMetrics>> step_metrics;  // [env][step], post-step metrics
  std::vector<std::vector<Transition>> transitions;    // filled only when requested

  void clear();
};

/// Actor plus critic for one learning controller.
struct Agents {
  nn::PolicyNet actor;
  std::unique_ptr<nn::ValueFunction> critic;
};

Agents make_agents(const ScenarioConfig& scenario, const TrainConfig& cfg, ControllerKind kind);

/// Samples one action per column of the actor's log-probabilities.
int sample_action(const Eigen::Ref<const Eigen::VectorXd>& log_probs, Rng& rng);

/// Runs every environment for a full episode. Each alive agent samples from the
/// shared actor on its own observation; values come from the critic on the
/// canonical (unshuffled) ego graph. Action sampling draws from a policy
/// stream keyed by each environment's reset seed.
RolloutBuffer collect_rollout(std::span<Environment> envs, std::span<const std::uint64_t> reset_seeds,
                              const nn::PolicyNet& actor, const nn::ValueFunction& critic,
                              bool record_transitions = false);

/// Recursive GAE on one agent stream; `bootstrap` is V after the last step (0 when terminal).
std::vector<double> gae(std::span<const double> rewards, std::span<const double> values, double bootstrap,
                        double gamma, double tau);

/// Fills advantage and return for every alive sample. Each (env, agent) stream
/// ends at episode end or at the agent's failure, both treated as terminal.
void compute_gae(RolloutBuffer& buffer, double gamma, double tau);

double huber(double error, double delta);
double huber_grad(double error, double delta);

/// Clipped surrogate min(r A, clip(r, 1-eps, 1+eps) A) for one sample.
double ppo_clip_objective(double ratio, double advantage, double eps);
/// d/d(ratio) of the clipped surrogate (0 when the clipped branch is selected).
double ppo_clip_ratio_grad(double ratio, double advantage, double eps);

struct ActorObjective {
  double loss = 0.0;       // -mean surrogate - beta * mean entropy
  double surrogate = 0.0;  // mean clipped surrogate
  double entropy = 0.0;    // mean policy entropy
  int clipped = 0;         // samples whose clipped branch was selected
};

/// Actor loss on a minibatch (one column of obs per sample). When grads is
/// non-null the exact gradient of `loss` is accumulated into it.
ActorObjective actor_objective(const nn::PolicyNet& actor, const nn::MatrixXd& obs, std::span<const int> actions,
                               std::span<const double> old_log_probs, std::span<const double> advantages,
                               double clip_eps, double entropy_coef, nn::ParameterSet* grads = nullptr);

/// Mean Huber(target - V) on a batch; accumulates its exact gradient when grads is non-null.
double critic_objective(const nn::ValueFunction& critic, const nn::EgoGraphBatch& batch,
                        std::span<const double> targets, double delta, nn::ParameterSet* grads = nullptr);

struct LossStats {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  int minibatches = 0;
};

struct Optimizers {
  std::unique_ptr<nn::Optimizer> actor;
  std::unique_ptr<nn::Optimizer> critic;
};

Optimizers make_optimizers(OptimizerKind kind);

/// PPO epochs over shuffled minibatches of alive samples. Throws
/// std::runtime_error with a diagnostic if a loss becomes non-finite.
LossStats ppo_update(const RolloutBuffer& buffer, Agents& agents, Optimizers& opt, const TrainConfig& cfg,
                     const Schedule& schedule, Rng& rng);

/// Mean Huber loss of the critic over alive samples, optionally after shuffling
/// neighbor rows. No parameter change.
double critic_loss(const RolloutBuffer& buffer, const nn::ValueFunction& critic, double delta, bool shuffle,
                   Rng& rng);

struct EpisodeLog {
  int episode = 0;
  double mean_reward = 0.0;
  double c_cov = 0.0;
  double handoffs = 0.0;
  double e_eff = 0.0;
  double jfi_rate = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
  double beta_ent = 0.0;
};

std::string train_csv_header();
std::string train_csv_row(const EpisodeLog& log);

struct TrainResult {
  Agents agents;
  std::vector<EpisodeLog> log;
};

using EpisodeCallback = std::function<void(const EpisodeLog&, const Agents&)>;

/// Full training loop. `on_episode` (optional) observes each finished episode
/// after its update.
TrainResult train(const ScenarioConfig& scenario, const TrainConfig& cfg, ControllerKind kind,
                  const EpisodeCallback& on_episode = {});

/// Decides actions for all UAV slots (kNoAction for failed ones).
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::vector<int> act(const Environment& env) = 0;
};

/// Argmax of the shared actor.
class GreedyActorPolicy final : public Policy {
 public:
  explicit GreedyActorPolicy(const nn::PolicyNet& actor) : actor_(actor) {}
  std::vector<int> act(const Environment& env) override;

 private:
  const nn::PolicyNet& actor_;
};

class KMeansPolicy final : public Policy {
 public:
  explicit KMeansPolicy(std::uint64_t seed) : seed_(seed) {}
  std::vector<int> act(const Environment& env) override;

 private:
  std::uint64_t seed_;
};

/// Metrics for t = 0 (reset) through T.
std::vector<StepMetrics> run_episode(Environment& env, Policy& policy, std::uint64_t seed);

}  // namespace agin

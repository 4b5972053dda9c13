#include "agin/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "agin/baselines.hpp"

namespace agin {

ControllerKind parse_controller(std::string_view name) {
  if (name == "tag_mappo") return ControllerKind::TagMappo;
  if (name == "mlp_mappo") return ControllerKind::MlpMappo;
  if (name == "kmeans") return ControllerKind::KMeans;
  throw ConfigError("unknown controller '" + std::string(name) + "' (tag_mappo, mlp_mappo, kmeans)");
}

std::string to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::TagMappo: return "tag_mappo";
    case ControllerKind::MlpMappo: return "mlp_mappo";
    case ControllerKind::KMeans: return "kmeans";
  }
  return "?";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (sgd, adam)");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Sgd ? "sgd" : "adam"; }

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("train: ") + what);
  };
  require(actor_lr >= 0 && critic_lr >= 0, "learning rates must be >= 0");
  require(gamma >= 0 && gamma < 1, "gamma must lie in [0,1)");
  require(gae_tau >= 0 && gae_tau <= 1, "gae_tau must lie in [0,1]");
  require(ppo_epochs >= 1, "ppo_epochs must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(clip_eps > 0 && clip_eps < 1, "clip_eps must lie in (0,1)");
  require(huber_delta > 0, "huber_delta must be > 0");
  require(entropy_start >= 0 && entropy_end >= 0, "entropy coefficients must be >= 0");
  require(lr_final_fraction >= 0 && lr_final_fraction <= 1, "lr_final_fraction must lie in [0,1]");
  require(grad_clip > 0, "grad_clip must be > 0");
  require(episodes >= 1, "episodes must be >= 1");
  require(env_count >= 1, "env_count must be >= 1");
  require(hidden >= 1, "hidden must be >= 1");
  require(critic_shape.hidden >= 1 && critic_shape.attn_dim >= 1 && critic_shape.head_hidden >= 1,
          "critic sizes must be >= 1");
}

Schedule anneal(const TrainConfig& cfg, int episode) {
  const double frac = std::clamp(static_cast<double>(episode) / cfg.episodes, 0.0, 1.0);
  const double lr_scale = 1.0 - (1.0 - cfg.lr_final_fraction) * frac;
  return {cfg.entropy_start + (cfg.entropy_end - cfg.entropy_start) * frac, cfg.actor_lr * lr_scale,
          cfg.critic_lr * lr_scale};
}

void RolloutBuffer::clear() {
  samples.clear();
  step_metrics.clear();
  transitions.clear();
}

Agents make_agents(const ScenarioConfig& scenario, const TrainConfig& cfg, ControllerKind kind) {
  Agents a{nn::PolicyNet(Observation::flat_size(scenario.num_uavs), cfg.hidden, kNumActions), nullptr};
  if (kind == ControllerKind::TagMappo) a.critic = std::make_unique<nn::TagCritic>(cfg.critic_shape);
  if (kind == ControllerKind::MlpMappo) a.critic = std::make_unique<MlpCritic>(scenario.num_uavs);
  Rng rng = make_rng(cfg.seed, Stream::WeightInit);
  nn::glorot_init(a.actor.params(), rng);
  if (a.critic) nn::glorot_init(a.critic->params(), rng);
  return a;
}

int sample_action(const Eigen::Ref<const Eigen::VectorXd>& log_probs, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  int last_positive = 0;
  for (Eigen::Index i = 0; i < log_probs.size(); ++i) {
    const double p = std::exp(log_probs[i]);
    if (p > 0) last_positive = static_cast<int>(i);
    acc += p;
    if (u < acc) return static_cast<int>(i);
  }
  return last_positive;  // rounding left u above the accumulated mass
}

namespace {

nn::MatrixXd observation_matrix(const std::vector<const std::vector<double>*>& cols, int dim) {
  nn::MatrixXd m(dim, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) {
    m.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const nn::VectorXd>(cols[i]->data(), dim);
  }
  return m;
}

constexpr std::size_t kValueChunk = 512;

void fill_values(std::vector<Sample>& samples, const nn::ValueFunction& critic) {
  std::vector<EgoGraph> graphs;
  for (std::size_t start = 0; start < samples.size(); start += kValueChunk) {
    const std::size_t end = std::min(samples.size(), start + kValueChunk);
    graphs.clear();
    for (std::size_t i = start; i < end; ++i) graphs.push_back(samples[i].graph);
    const nn::VectorXd v = critic.forward(nn::EgoGraphBatch::pack(graphs));
    for (std::size_t i = start; i < end; ++i) samples[i].value = v[static_cast<Eigen::Index>(i - start)];
  }
}

}  // namespace

RolloutBuffer collect_rollout(std::span<Environment> envs, std::span<const std::uint64_t> reset_seeds,
                              const nn::PolicyNet& actor, const nn::ValueFunction& critic, bool record_transitions) {
  if (reset_seeds.size() != envs.size()) throw std::invalid_argument("collect_rollout: one seed per environment");
  RolloutBuffer buf;
  buf.step_metrics.resize(envs.size());
  if (record_transitions) buf.transitions.resize(envs.size());

  for (std::size_t e = 0; e < envs.size(); ++e) {
    Environment& env = envs[e];
    auto obs = env.reset(reset_seeds[e]);
    Rng policy_rng = make_rng(reset_seeds[e], Stream::Policy);
    const int k_u = env.config().num_uavs;
    while (!env.done()) {
      std::vector<int> alive_ids;
      std::vector<std::vector<double>> flat;
      for (int k = 0; k < k_u; ++k) {
        if (obs[k]) {
          alive_ids.push_back(k);
          flat.push_back(obs[k]->flatten());
        }
      }
      std::vector<int> actions(k_u, kNoAction);
      std::vector<double> log_probs(k_u, 0.0);
      const std::size_t first = buf.samples.size();
      if (!alive_ids.empty()) {
        std::vector<const std::vector<double>*> cols;
        for (const auto& f : flat) cols.push_back(&f);
        const nn::MatrixXd logp = nn::log_softmax(actor.forward(observation_matrix(cols, actor.obs_dim())));
        for (std::size_t j = 0; j < alive_ids.size(); ++j) {
          const int k = alive_ids[j];
          const int a = sample_action(logp.col(static_cast<Eigen::Index>(j)), policy_rng);
          actions[k] = a;
          log_probs[k] = logp(a, static_cast<Eigen::Index>(j));
          Sample s;
          s.env = static_cast<int>(e);
          s.t = env.state().t;
          s.agent = k;
          s.obs = std::move(flat[j]);
          s.graph = env.ego_graph(k);
          s.action = a;
          s.log_prob = log_probs[k];
          buf.samples.push_back(std::move(s));
        }
      }
      Transition tr;
      if (record_transitions) {
        tr.t = env.state().t;
        tr.observations = obs;
        tr.alive = env.state().alive;
        tr.global_state = snapshot(env.state());
      }
      StepResult r = env.step(actions);
      for (std::size_t i = first; i < buf.samples.size(); ++i) buf.samples[i].reward = r.reward;
      buf.step_metrics[e].push_back(r.metrics);
      if (record_transitions) {
        tr.actions = actions;
        tr.log_probs = log_probs;
        tr.reward = r.reward;
        tr.done = r.done;
        buf.transitions[e].push_back(std::move(tr));
      }
      obs = std::move(r.observations);
    }
  }
  fill_values(buf.samples, critic);
  return buf;
}

std::vector<double> gae(std::span<const double> rewards, std::span<const double> values, double bootstrap,
                        double gamma, double tau) {
  if (rewards.size() != values.size()) throw std::invalid_argument("gae: rewards/values length mismatch");
  std::vector<double> adv(rewards.size());
  double running = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    const double next_v = i + 1 < rewards.size() ? values[i + 1] : bootstrap;
    const double delta = rewards[i] + gamma * next_v - values[i];
    running = delta + gamma * tau * running;
    adv[i] = running;
  }
  return adv;
}

void compute_gae(RolloutBuffer& buffer, double gamma, double tau) {
  std::map<std::pair<int, int>, std::vector<std::size_t>> streams;
  for (std::size_t i = 0; i < buffer.samples.size(); ++i) {
    const Sample& s = buffer.samples[i];
    if (s.alive) streams[{s.env, s.agent}].push_back(i);
  }
  for (auto& [key, idx] : streams) {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return buffer.samples[a].t < buffer.samples[b].t; });
    std::vector<double> r, v;
    for (std::size_t i : idx) {
      r.push_back(buffer.samples[i].reward);
      v.push_back(buffer.samples[i].value);
    }
    const std::vector<double> adv = gae(r, v, 0.0, gamma, tau);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      Sample& s = buffer.samples[idx[j]];
      s.advantage = adv[j];
      s.ret = adv[j] + s.value;
    }
  }
}

double huber(double error, double delta) {
  const double a = std::abs(error);
  return a <= delta ? 0.5 * error * error : delta * (a - 0.5 * delta);
}

double huber_grad(double error, double delta) { return std::clamp(error, -delta, delta); }

double ppo_clip_objective(double ratio, double advantage, double eps) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

double ppo_clip_ratio_grad(double ratio, double advantage, double eps) {
  const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps);
  return ratio * advantage <= clipped * advantage ? advantage : 0.0;
}

Optimizers make_optimizers(OptimizerKind kind) {
  if (kind == OptimizerKind::Sgd) return {std::make_unique<nn::Sgd>(), std::make_unique<nn::Sgd>()};
  return {std::make_unique<nn::Adam>(), std::make_unique<nn::Adam>()};
}

namespace {

std::vector<std::size_t> alive_indices(const RolloutBuffer& buffer) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < buffer.samples.size(); ++i) {
    if (buffer.samples[i].alive) idx.push_back(i);
  }
  return idx;
}

nn::EgoGraphBatch graph_batch(const RolloutBuffer& buffer, std::span<const std::size_t> idx, bool shuffle, Rng& rng) {
  std::vector<EgoGraph> graphs;
  graphs.reserve(idx.size());
  for (std::size_t i : idx) {
    graphs.push_back(buffer.samples[i].graph);
    if (shuffle) nn::ros_shuffle(graphs.back(), rng);
  }
  return nn::EgoGraphBatch::pack(graphs);
}

void require_finite(double value, const char* what, int epoch, int minibatch) {
  if (!std::isfinite(value)) {
    char msg[160];
    std::snprintf(msg, sizeof msg, "ppo_update: non-finite %s (epoch %d, minibatch %d)", what, epoch, minibatch);
    throw std::runtime_error(msg);
  }
}

}  // namespace

double critic_loss(const RolloutBuffer& buffer, const nn::ValueFunction& critic, double delta, bool shuffle,
                   Rng& rng) {
  const std::vector<std::size_t> idx = alive_indices(buffer);
  std::vector<double> targets;
  for (std::size_t i : idx) targets.push_back(buffer.samples[i].ret);
  if (idx.empty()) return 0.0;
  return critic_objective(critic, graph_batch(buffer, idx, shuffle, rng), targets, delta);
}

ActorObjective actor_objective(const nn::PolicyNet& actor, const nn::MatrixXd& obs, std::span<const int> actions,
                               std::span<const double> old_log_probs, std::span<const double> advantages,
                               double clip_eps, double entropy_coef, nn::ParameterSet* grads) {
  const Eigen::Index n = obs.cols();
  if (static_cast<std::size_t>(n) != actions.size() || actions.size() != old_log_probs.size() ||
      actions.size() != advantages.size()) {
    throw std::invalid_argument("actor_objective: batch length mismatch");
  }
  ActorObjective out;
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  nn::PolicyNet::Cache cache;
  const nn::MatrixXd logits = actor.forward(obs, grads ? &cache : nullptr);
  const nn::MatrixXd logp = nn::log_softmax(logits);
  const nn::VectorXd ent = nn::entropy(logp);
  const nn::MatrixXd p = logp.array().exp().matrix();
  nn::MatrixXd dlogits(logits.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const int a = actions[j];
    const double adv = advantages[j];
    const double ratio = std::exp(logp(a, j) - old_log_probs[j]);
    out.surrogate += ppo_clip_objective(ratio, adv, clip_eps);
    const double g = ppo_clip_ratio_grad(ratio, adv, clip_eps);
    if (g == 0.0 && adv != 0.0) ++out.clipped;
    // d(-surrogate)/dlogits = -g ratio (onehot - p); d(-beta H)/dlogits = beta p (logp + H).
    dlogits.col(j) = (g * ratio * inv_n) * p.col(j);
    dlogits(a, j) -= g * ratio * inv_n;
    dlogits.col(j).array() += entropy_coef * inv_n * p.col(j).array() * (logp.col(j).array() + ent[j]);
  }
  out.surrogate *= inv_n;
  out.entropy = ent.mean();
  out.loss = -out.surrogate - entropy_coef * out.entropy;
  if (grads) actor.backward(cache, dlogits, *grads);
  return out;
}

double critic_objective(const nn::ValueFunction& critic, const nn::EgoGraphBatch& batch,
                        std::span<const double> targets, double delta, nn::ParameterSet* grads) {
  if (static_cast<std::size_t>(batch.samples) != targets.size()) {
    throw std::invalid_argument("critic_objective: batch length mismatch");
  }
  if (targets.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(targets.size());
  std::unique_ptr<nn::CriticCache> cache;
  const nn::VectorXd v = critic.forward(batch, grads ? &cache : nullptr);
  nn::VectorXd dv(v.size());
  double loss = 0.0;
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    const double err = targets[j] - v[j];
    loss += huber(err, delta);
    dv[j] = -huber_grad(err, delta) * inv_n;
  }
  if (grads) critic.backward(*cache, dv, *grads);
  return loss * inv_n;
}

LossStats ppo_update(const RolloutBuffer& buffer, Agents& agents, Optimizers& opt, const TrainConfig& cfg,
                     const Schedule& schedule, Rng& rng) {
  if (!agents.critic) throw std::invalid_argument("ppo_update: controller has no critic");
  LossStats stats;
  std::vector<std::size_t> idx = alive_indices(buffer);
  if (idx.empty()) return stats;

  // Per-update advantage normalization.
  std::vector<double> adv(buffer.samples.size(), 0.0);
  double mean = 0.0;
  for (std::size_t i : idx) mean += buffer.samples[i].advantage;
  mean /= static_cast<double>(idx.size());
  double var = 0.0;
  for (std::size_t i : idx) var += std::pow(buffer.samples[i].advantage - mean, 2);
  const double sd = std::sqrt(var / static_cast<double>(idx.size()));
  for (std::size_t i : idx) {
    adv[i] = cfg.normalize_advantages ? (buffer.samples[i].advantage - mean) / (sd + 1e-8) : buffer.samples[i].advantage;
  }

  nn::PolicyNet& actor = agents.actor;
  nn::ValueFunction& critic = *agents.critic;
  const bool shuffle = cfg.shuffle_neighbors && critic.wants_shuffling();
  nn::ParameterSet actor_grads = actor.params().zeros_like();
  nn::ParameterSet critic_grads = critic.params().zeros_like();
  const int obs_dim = actor.obs_dim();
  long clipped = 0;
  long counted = 0;

  for (int epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    int mb = 0;
    for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(cfg.batch_size), ++mb) {
      const std::size_t end = std::min(idx.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const std::size_t> batch(idx.data() + start, end - start);
      const auto n = static_cast<Eigen::Index>(batch.size());

      nn::MatrixXd obs(obs_dim, n);
      std::vector<int> actions(batch.size());
      std::vector<double> old_logp(batch.size()), batch_adv(batch.size()), targets(batch.size());
      for (Eigen::Index j = 0; j < n; ++j) {
        const Sample& s = buffer.samples[batch[j]];
        obs.col(j) = Eigen::Map<const nn::VectorXd>(s.obs.data(), obs_dim);
        actions[j] = s.action;
        old_logp[j] = s.log_prob;
        batch_adv[j] = adv[batch[j]];
        targets[j] = s.ret;
      }

      actor_grads.set_zero();
      const ActorObjective a = actor_objective(actor, obs, actions, old_logp, batch_adv, cfg.clip_eps,
                                               schedule.entropy_coef, &actor_grads);
      require_finite(a.loss, "actor loss", epoch, mb);
      critic_grads.set_zero();
      const double closs =
          critic_objective(critic, graph_batch(buffer, batch, shuffle, rng), targets, cfg.huber_delta, &critic_grads);
      require_finite(closs, "critic loss", epoch, mb);

      require_finite(nn::clip_grad_norm(actor_grads, cfg.grad_clip), "actor gradient", epoch, mb);
      require_finite(nn::clip_grad_norm(critic_grads, cfg.grad_clip), "critic gradient", epoch, mb);
      opt.actor->step(actor.params(), actor_grads, schedule.actor_lr);
      opt.critic->step(critic.params(), critic_grads, schedule.critic_lr);

      stats.actor_loss += a.loss;
      stats.critic_loss += closs;
      stats.entropy += a.entropy;
      clipped += a.clipped;
      counted += n;
      ++stats.minibatches;
    }
  }
  if (stats.minibatches > 0) {
    stats.actor_loss /= stats.minibatches;
    stats.critic_loss /= stats.minibatches;
    stats.entropy /= stats.minibatches;
  }
  stats.clip_fraction = counted > 0 ? static_cast<double>(clipped) / static_cast<double>(counted) : 0.0;
  return stats;
}

std::string train_csv_header() {
  return "episode,mean_reward,c_cov,handoffs,e_eff,jfi_rate,actor_loss,critic_loss,entropy,beta_ent";
}

std::string train_csv_row(const EpisodeLog& l) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g", l.episode, l.mean_reward,
                l.c_cov, l.handoffs, l.e_eff, l.jfi_rate, l.actor_loss, l.critic_loss, l.entropy, l.beta_ent);
  return buf;
}

namespace {

void summarize(const std::vector<std::vector<StepMetrics>>& per_env, EpisodeLog& log) {
  double n = 0.0;
  for (const auto& steps : per_env) {
    for (const StepMetrics& m : steps) {
      log.mean_reward += m.utility;
      log.c_cov += m.c_cov;
      log.handoffs += m.handoffs;
      log.e_eff += m.e_eff;
      log.jfi_rate += m.jfi_rate;
      n += 1.0;
    }
  }
  if (n > 0) {
    log.mean_reward /= n;
    log.c_cov /= n;
    log.handoffs /= n;
    log.e_eff /= n;
    log.jfi_rate /= n;
  }
}

}  // namespace

TrainResult train(const ScenarioConfig& scenario, const TrainConfig& cfg, ControllerKind kind,
                  const EpisodeCallback& on_episode) {
  scenario.validate();
  cfg.validate();
  TrainResult result{make_agents(scenario, cfg, kind), {}};
  Optimizers opt = make_optimizers(cfg.optimizer);
  std::vector<Environment> envs(static_cast<std::size_t>(cfg.env_count), Environment(scenario));
  Rng update_rng = make_rng(cfg.seed, Stream::Minibatch);
  KMeansPolicy kmeans(cfg.seed);

  for (int m = 0; m < cfg.episodes; ++m) {
    const Schedule sched = anneal(cfg, m);
    std::vector<std::uint64_t> seeds(envs.size());
    for (std::size_t e = 0; e < envs.size(); ++e) seeds[e] = derive_seed(cfg.seed, static_cast<std::uint64_t>(m), e);

    EpisodeLog log;
    log.episode = m;
    log.beta_ent = sched.entropy_coef;
    if (kind == ControllerKind::KMeans) {
      std::vector<std::vector<StepMetrics>> per_env;
      for (std::size_t e = 0; e < envs.size(); ++e) {
        auto steps = run_episode(envs[e], kmeans, seeds[e]);
        steps.erase(steps.begin());  // match the learners: post-step metrics only
        per_env.push_back(std::move(steps));
      }
      summarize(per_env, log);
    } else {
      RolloutBuffer buf = collect_rollout(envs, seeds, result.agents.actor, *result.agents.critic);
      compute_gae(buf, cfg.gamma, cfg.gae_tau);
      const LossStats stats = ppo_update(buf, result.agents, opt, cfg, sched, update_rng);
      summarize(buf.step_metrics, log);
      log.actor_loss = stats.actor_loss;
      log.critic_loss = stats.critic_loss;
      log.entropy = stats.entropy;
    }
    result.log.push_back(log);
    if (on_episode) on_episode(log, result.agents);
  }
  return result;
}

std::vector<int> GreedyActorPolicy::act(const Environment& env) {
  const auto obs = env.observations();
  std::vector<int> actions(obs.size(), kNoAction);
  std::vector<int> ids;
  std::vector<std::vector<double>> flat;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    if (obs[k]) {
      ids.push_back(static_cast<int>(k));
      flat.push_back(obs[k]->flatten());
    }
  }
  if (ids.empty()) return actions;
  std::vector<const std::vector<double>*> cols;
  for (const auto& f : flat) cols.push_back(&f);
  const nn::MatrixXd logits = actor_.forward(observation_matrix(cols, actor_.obs_dim()));
  for (std::size_t j = 0; j < ids.size(); ++j) {
    Eigen::Index best = 0;
    logits.col(static_cast<Eigen::Index>(j)).maxCoeff(&best);
    actions[ids[j]] = static_cast<int>(best);
  }
  return actions;
}

std::vector<int> KMeansPolicy::act(const Environment& env) { return kmeans_policy(env.state(), env.config(), seed_); }

std::vector<StepMetrics> run_episode(Environment& env, Policy& policy, std::uint64_t seed) {
  env.reset(seed);
  std::vector<StepMetrics> out{env.metrics()};
  while (!env.done()) {
    const std::vector<int> actions = policy.act(env);
    out.push_back(env.step(actions).metrics);
  }
  return out;
}

}  // namespace agin

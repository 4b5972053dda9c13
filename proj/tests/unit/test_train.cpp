#include <gtest/gtest.h>

#include <cmath>

#include "agin/baselines.hpp"
#include "agin/train.hpp"
#include "fixtures.hpp"

using namespace agin;

namespace {

// A_t = sum_l (gamma tau)^l delta_{t+l}, written out as a double loop.
std::vector<double> gae_oracle(const std::vector<double>& r, const std::vector<double>& v, double gamma, double tau) {
  const std::size_t n = r.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double w = 1.0;
    for (std::size_t l = t; l < n; ++l) {
      const double next = l + 1 < n ? v[l + 1] : 0.0;
      out[t] += w * (r[l] + gamma * next - v[l]);
      w *= gamma * tau;
    }
  }
  return out;
}

TrainConfig small_train() {
  TrainConfig cfg;
  cfg.hidden = 16;
  cfg.critic_shape = {8, 4, 8, true};
  cfg.batch_size = 64;
  cfg.ppo_epochs = 2;
  return cfg;
}

RolloutBuffer desk_rollout(const ScenarioConfig& scn, const Agents& agents, std::uint64_t seed) {
  std::vector<Environment> envs{Environment(scn)};
  const std::vector<std::uint64_t> seeds{seed};
  return collect_rollout(envs, seeds, agents.actor, *agents.critic);
}

}  // namespace

TEST(Anneal, LinearSchedule) {
  TrainConfig cfg;
  cfg.episodes = 300;
  EXPECT_DOUBLE_EQ(anneal(cfg, 0).entropy_coef, 0.10);
  EXPECT_DOUBLE_EQ(anneal(cfg, 0).actor_lr, 1e-4);
  EXPECT_NEAR(anneal(cfg, 150).entropy_coef, 0.055, 1e-15);
  EXPECT_NEAR(anneal(cfg, 150).critic_lr, 5e-4 * 0.55, 1e-18);
  EXPECT_NEAR(anneal(cfg, 300).entropy_coef, 0.01, 1e-15);
  EXPECT_NEAR(anneal(cfg, 300).actor_lr, 1e-5, 1e-18);
}

TEST(Config, ValidationAndNames) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.gamma = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.huber_delta = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(parse_controller("mlp_mappo"), ControllerKind::MlpMappo);
  EXPECT_EQ(to_string(ControllerKind::TagMappo), "tag_mappo");
  EXPECT_THROW(parse_controller("qmix"), ConfigError);
  EXPECT_EQ(parse_optimizer("adam"), OptimizerKind::Adam);
}

TEST(Gae, OneStepLimit) {
  const std::vector<double> r{1, -2, 0.5, 3}, v{0.2, 0.4, -1, 2};
  const auto a = gae(r, v, 0.0, 0.9, 0.0);
  for (std::size_t t = 0; t < r.size(); ++t) {
    const double next = t + 1 < r.size() ? v[t + 1] : 0.0;
    EXPECT_DOUBLE_EQ(a[t], r[t] + 0.9 * next - v[t]);
  }
}

TEST(Gae, MonteCarloLimit) {
  const std::vector<double> r{1, -2, 0.5, 3}, v{0.2, 0.4, -1, 2};
  const auto a = gae(r, v, 0.0, 1.0, 1.0);
  double tail = 0.0;
  for (std::size_t t = r.size(); t-- > 0;) {
    tail += r[t];
    EXPECT_NEAR(a[t], tail - v[t], 1e-12);
  }
}

TEST(Gae, MatchesDoubleLoopOracle) {
  Rng rng = make_rng(1, Stream::Minibatch);
  std::uniform_real_distribution<double> u(-5, 5), g(0, 0.999);
  std::uniform_int_distribution<int> len(5, 20);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> r(len(rng)), v(r.size());
    for (auto& x : r) x = u(rng);
    for (auto& x : v) x = u(rng);
    const double gamma = g(rng), tau = g(rng);
    const auto a = gae(r, v, 0.0, gamma, tau);
    const auto o = gae_oracle(r, v, gamma, tau);
    for (std::size_t t = 0; t < r.size(); ++t) ASSERT_NEAR(a[t], o[t], 1e-12);
  }
  const std::vector<double> r{1, 2}, v{0};
  EXPECT_THROW(gae(r, v, 0.0, 0.9, 0.9), std::invalid_argument);
}

TEST(Gae, StreamsEndAtDeath) {
  RolloutBuffer buf;
  // Agent 0 lives for 4 steps, agent 1 dies after 2; samples interleaved by step.
  for (int t = 0; t < 4; ++t) {
    for (int k = 0; k < 2; ++k) {
      if (k == 1 && t >= 2) continue;
      Sample s;
      s.t = t;
      s.agent = k;
      s.reward = 1.0 + t;
      s.value = 0.5 * (k + 1);
      buf.samples.push_back(s);
    }
  }
  compute_gae(buf, 0.9, 0.8);
  const auto a0 = gae_oracle({1, 2, 3, 4}, {0.5, 0.5, 0.5, 0.5}, 0.9, 0.8);
  const auto a1 = gae_oracle({1, 2}, {1.0, 1.0}, 0.9, 0.8);
  int i0 = 0, i1 = 0;
  for (const auto& s : buf.samples) {
    const double want = s.agent == 0 ? a0[i0++] : a1[i1++];
    EXPECT_NEAR(s.advantage, want, 1e-12);
    EXPECT_NEAR(s.ret, s.advantage + s.value, 1e-15);
  }
}

TEST(Huber, ContinuousAtDelta) {
  const double d = 2.0;
  for (double sign : {-1.0, 1.0}) {
    EXPECT_NEAR(huber(sign * d, d), d * d / 2, 1e-12);
    const double below = huber(sign * (d - 1e-9), d), above = huber(sign * (d + 1e-9), d);
    EXPECT_NEAR(below, above, 1e-8);
    EXPECT_NEAR(huber_grad(sign * (d - 1e-9), d), huber_grad(sign * (d + 1e-9), d), 1e-8);
    EXPECT_NEAR(huber(sign * (d + 1e-9), d), d * d / 2, 1e-8);
  }
  EXPECT_DOUBLE_EQ(huber(5.0, d), 2.0 * (5.0 - 1.0));
  EXPECT_DOUBLE_EQ(huber_grad(-5.0, d), -2.0);
}

TEST(PpoClip, BranchSelection) {
  EXPECT_DOUBLE_EQ(ppo_clip_objective(1.0, 2.0, 0.2), 2.0);
  EXPECT_DOUBLE_EQ(ppo_clip_objective(1.4, 2.0, 0.2), 2.4);
  EXPECT_DOUBLE_EQ(ppo_clip_ratio_grad(1.4, 2.0, 0.2), 0.0);
  EXPECT_DOUBLE_EQ(ppo_clip_ratio_grad(1.4, -2.0, 0.2), -2.0);  // pessimistic branch keeps the gradient
  EXPECT_DOUBLE_EQ(ppo_clip_ratio_grad(0.5, -2.0, 0.2), 0.0);
  EXPECT_DOUBLE_EQ(ppo_clip_ratio_grad(1.1, 3.0, 0.2), 3.0);
}

TEST(ActorObjective, RatioOneIsVanillaPolicyGradient) {
  Rng rng = make_rng(2, Stream::WeightInit);
  nn::PolicyNet actor(6, 8, 27);
  fixture::randomize(actor.params(), rng);
  const nn::MatrixXd obs = nn::MatrixXd::Random(6, 4);
  const nn::MatrixXd logp = nn::log_softmax(actor.forward(obs));
  const std::vector<int> acts{0, 5, 13, 26};
  const std::vector<double> adv{1.0, -0.5, 2.0, 0.3};
  std::vector<double> old(4);
  for (int j = 0; j < 4; ++j) old[j] = logp(acts[j], j);

  nn::ParameterSet g = actor.params().zeros_like();
  const auto obj = actor_objective(actor, obs, acts, old, adv, 0.2, 0.0, &g);
  EXPECT_EQ(obj.clipped, 0);

  // -mean A grad log pi(a): dlogits = -(A/n)(onehot - p).
  nn::MatrixXd d = logp.array().exp().matrix();
  for (int j = 0; j < 4; ++j) {
    d.col(j) *= adv[j] / 4;
    d(acts[j], j) -= adv[j] / 4;
  }
  nn::PolicyNet::Cache cache;
  actor.forward(obs, &cache);
  nn::ParameterSet vanilla = actor.params().zeros_like();
  actor.backward(cache, d, vanilla);
  for (std::size_t t = 0; t < g.size(); ++t) EXPECT_TRUE(g[t].isApprox(vanilla[t], 1e-12));
}

TEST(ActorObjective, ClippedSampleHasNoGradient) {
  Rng rng = make_rng(3, Stream::WeightInit);
  nn::PolicyNet actor(6, 8, 27);
  fixture::randomize(actor.params(), rng);
  const nn::MatrixXd obs = nn::MatrixXd::Random(6, 1);
  const double lp = nn::log_softmax(actor.forward(obs))(4, 0);
  const std::vector<int> acts{4};
  const std::vector<double> old{lp - std::log(1.4)}, adv{1.0};  // ratio = 1 + 2 eps
  nn::ParameterSet g = actor.params().zeros_like();
  const auto obj = actor_objective(actor, obs, acts, old, adv, 0.2, 0.0, &g);
  EXPECT_EQ(obj.clipped, 1);
  EXPECT_NEAR(obj.surrogate, 1.2, 1e-12);
  EXPECT_EQ(g.squared_norm(), 0.0);
}

TEST(ActorObjective, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(4, Stream::WeightInit);
  nn::PolicyNet actor(5, 6, 27);
  fixture::randomize(actor.params(), rng, 0.6);
  const nn::MatrixXd obs = nn::MatrixXd::Random(5, 6);
  const nn::MatrixXd logp = nn::log_softmax(actor.forward(obs));
  std::vector<int> acts{1, 7, 13, 20, 26, 3};
  std::vector<double> adv{1.0, -1.5, 0.4, 2.0, -0.3, 0.9}, old(6);
  for (int j = 0; j < 6; ++j) old[j] = logp(acts[j], j) + 0.05 * (j % 3 - 1);  // ratios within the clip band
  nn::ParameterSet g = actor.params().zeros_like();
  actor_objective(actor, obs, acts, old, adv, 0.2, 0.07, &g);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t t = 0; t < g.size(); ++t) {
    for (Eigen::Index i = 0; i < g[t].size(); ++i) {
      double& w = actor.params()[t].data()[i];
      const double keep = w;
      w = keep + h;
      const double up = actor_objective(actor, obs, acts, old, adv, 0.2, 0.07).loss;
      w = keep - h;
      const double dn = actor_objective(actor, obs, acts, old, adv, 0.2, 0.07).loss;
      w = keep;
      const double fd = (up - dn) / (2 * h), an = g[t].data()[i];
      if (std::abs(fd) + std::abs(an) < 1e-9) continue;
      worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(fd), std::abs(an)));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(CriticObjective, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(5, Stream::WeightInit);
  nn::TagCritic critic({6, 4, 5, true});
  fixture::randomize(critic.params(), rng, 0.8);
  std::vector<EgoGraph> gs;
  for (int i = 0; i < 5; ++i) gs.push_back(fixture::random_graph(3, rng));
  const auto batch = nn::EgoGraphBatch::pack(gs);
  const nn::VectorXd v = critic.forward(batch);
  // Errors on both sides of the Huber knee.
  const std::vector<double> targets{v[0] + 0.5, v[1] - 3.0, v[2] + 4.0, v[3] - 0.1, v[4] + 1.9};
  nn::ParameterSet g = critic.params().zeros_like();
  critic_objective(critic, batch, targets, 2.0, &g);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t t = 0; t < g.size(); ++t) {
    for (Eigen::Index i = 0; i < g[t].size(); ++i) {
      double& w = critic.params()[t].data()[i];
      const double keep = w;
      w = keep + h;
      const double up = critic_objective(critic, batch, targets, 2.0);
      w = keep - h;
      const double dn = critic_objective(critic, batch, targets, 2.0);
      w = keep;
      const double fd = (up - dn) / (2 * h), an = g[t].data()[i];
      if (std::abs(fd) + std::abs(an) < 1e-9) continue;
      worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(fd), std::abs(an)));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Rollout, DeterministicPolicyFixture) {
  const auto scn = fixture::desk_config();
  Agents agents = make_agents(scn, small_train(), ControllerKind::TagMappo);
  for (std::size_t t = 0; t < agents.actor.params().size(); ++t) agents.actor.params()[t].setZero();
  agents.actor.params()[5](kHoverAction, 0) = 1e3;  // policy bias
  const auto buf = desk_rollout(scn, agents, 11);
  ASSERT_FALSE(buf.samples.empty());
  for (const auto& s : buf.samples) {
    EXPECT_EQ(s.action, kHoverAction);
    EXPECT_EQ(s.log_prob, 0.0);
  }
}

TEST(Rollout, FailureShrinksLiveAgents) {
  const auto scn = fixture::desk_config();
  Agents agents = make_agents(scn, small_train(), ControllerKind::TagMappo);
  const auto buf = desk_rollout(scn, agents, 3);
  std::vector<int> per_t(scn.episode_len, 0);
  for (const auto& s : buf.samples) ++per_t[s.t];
  for (int t = 0; t < scn.episode_len; ++t) EXPECT_EQ(per_t[t], t < 50 ? 2 : 1) << "t=" << t;
  ASSERT_EQ(buf.step_metrics[0].size(), 100u);
  EXPECT_EQ(buf.step_metrics[0][48].active_uav_count, 2);
  EXPECT_EQ(buf.step_metrics[0][49].active_uav_count, 1);
}

TEST(Rollout, IdenticalSeedsGiveIdenticalBuffers) {
  const auto scn = fixture::desk_config();
  Agents agents = make_agents(scn, small_train(), ControllerKind::TagMappo);
  std::vector<Environment> envs(2, Environment(scn));
  const std::vector<std::uint64_t> seeds{77, 77};
  const auto buf = collect_rollout(envs, seeds, agents.actor, *agents.critic, true);
  std::vector<const Sample*> e0, e1;
  for (const auto& s : buf.samples) (s.env == 0 ? e0 : e1).push_back(&s);
  ASSERT_EQ(e0.size(), e1.size());
  for (std::size_t i = 0; i < e0.size(); ++i) {
    EXPECT_EQ(e0[i]->action, e1[i]->action);
    EXPECT_EQ(e0[i]->obs, e1[i]->obs);
    EXPECT_EQ(e0[i]->value, e1[i]->value);
    EXPECT_EQ(e0[i]->reward, e1[i]->reward);
  }
  ASSERT_EQ(buf.transitions[0].size(), 100u);
  for (std::size_t t = 0; t < 100; ++t)
    EXPECT_EQ(transition_to_json_line(buf.transitions[0][t]), transition_to_json_line(buf.transitions[1][t]));
  EXPECT_TRUE(buf.transitions[0].back().done);
}

TEST(PpoUpdate, ZeroLearningRateLeavesParametersUntouched) {
  const auto scn = fixture::desk_config();
  const TrainConfig cfg = small_train();
  Agents agents = make_agents(scn, cfg, ControllerKind::TagMappo);
  auto buf = desk_rollout(scn, agents, 4);
  compute_gae(buf, cfg.gamma, cfg.gae_tau);
  const nn::ParameterSet actor0 = agents.actor.params(), critic0 = agents.critic->params();
  for (auto kind : {OptimizerKind::Sgd, OptimizerKind::Adam}) {
    Optimizers opt = make_optimizers(kind);
    Rng rng = make_rng(1, Stream::Minibatch);
    const auto stats = ppo_update(buf, agents, opt, cfg, {0.05, 0.0, 0.0}, rng);
    EXPECT_GT(stats.minibatches, 0);
    for (std::size_t t = 0; t < actor0.size(); ++t) ASSERT_EQ(agents.actor.params()[t], actor0[t]);
    for (std::size_t t = 0; t < critic0.size(); ++t) ASSERT_EQ(agents.critic->params()[t], critic0[t]);
  }
}

TEST(PpoUpdate, DeadSamplesAreInert) {
  const auto scn = fixture::desk_config();
  const TrainConfig cfg = small_train();
  Agents a = make_agents(scn, cfg, ControllerKind::TagMappo);
  Agents b = make_agents(scn, cfg, ControllerKind::TagMappo);
  auto buf = desk_rollout(scn, a, 5);
  compute_gae(buf, cfg.gamma, cfg.gae_tau);

  RolloutBuffer padded;
  for (std::size_t i = 0; i < buf.samples.size(); ++i) {
    padded.samples.push_back(buf.samples[i]);
    if (i % 3 == 0) {
      Sample ghost = buf.samples[i];
      ghost.alive = false;
      ghost.advantage = 1e6;
      ghost.ret = -1e6;
      padded.samples.push_back(ghost);
    }
  }
  Optimizers oa = make_optimizers(cfg.optimizer), ob = make_optimizers(cfg.optimizer);
  Rng ra = make_rng(9, Stream::Minibatch), rb = make_rng(9, Stream::Minibatch);
  const Schedule sched = anneal(cfg, 0);
  ppo_update(buf, a, oa, cfg, sched, ra);
  ppo_update(padded, b, ob, cfg, sched, rb);
  for (std::size_t t = 0; t < a.actor.params().size(); ++t) ASSERT_EQ(a.actor.params()[t], b.actor.params()[t]);
  for (std::size_t t = 0; t < a.critic->params().size(); ++t)
    ASSERT_EQ(a.critic->params()[t], b.critic->params()[t]);
}

TEST(PpoUpdate, RosLeavesTagLossUnchangedButMovesMlp) {
  auto scn = fixture::desk_config();
  scn.num_uavs = 4;
  scn.failure_schedule.clear();
  const TrainConfig cfg = small_train();
  for (auto kind : {ControllerKind::TagMappo, ControllerKind::MlpMappo}) {
    Agents agents = make_agents(scn, cfg, kind);
    Rng init = make_rng(6, Stream::WeightInit);
    fixture::randomize(agents.critic->params(), init, 0.3);
    auto buf = desk_rollout(scn, agents, 6);
    compute_gae(buf, cfg.gamma, cfg.gae_tau);
    Rng r1 = make_rng(1, Stream::Shuffle), r2 = make_rng(1, Stream::Shuffle);
    const double plain = critic_loss(buf, *agents.critic, cfg.huber_delta, false, r1);
    const double shuffled = critic_loss(buf, *agents.critic, cfg.huber_delta, true, r2);
    if (kind == ControllerKind::TagMappo) {
      EXPECT_NEAR(plain, shuffled, 1e-9 * std::abs(plain));
    } else {
      EXPECT_GT(std::abs(plain - shuffled), 1e-9 * std::abs(plain));
    }
  }
}

TEST(PpoUpdate, NonFiniteLossAborts) {
  const auto scn = fixture::desk_config();
  const TrainConfig cfg = small_train();
  Agents agents = make_agents(scn, cfg, ControllerKind::TagMappo);
  auto buf = desk_rollout(scn, agents, 8);
  compute_gae(buf, cfg.gamma, cfg.gae_tau);
  buf.samples[3].ret = std::nan("");
  Optimizers opt = make_optimizers(cfg.optimizer);
  Rng rng = make_rng(1, Stream::Minibatch);
  EXPECT_THROW(ppo_update(buf, agents, opt, cfg, anneal(cfg, 0), rng), std::runtime_error);
}

TEST(PpoUpdate, BanditPreferenceIsLearned) {
  // One fixed observation; action 3 pays, action 7 costs.
  const auto scn = fixture::desk_config();
  TrainConfig cfg = small_train();
  cfg.optimizer = OptimizerKind::Adam;
  cfg.batch_size = 32;
  cfg.ppo_epochs = 4;
  Agents agents = make_agents(scn, cfg, ControllerKind::TagMappo);
  Rng rng = make_rng(10, Stream::Policy);
  const int dim = agents.actor.obs_dim();
  std::vector<double> obs(dim, 0.1);
  EgoGraph g = fixture::random_graph(1, rng, 0.0);
  auto prob = [&](int a) {
    const nn::MatrixXd x = Eigen::Map<const nn::VectorXd>(obs.data(), dim);
    return std::exp(nn::log_softmax(agents.actor.forward(x))(a, 0));
  };
  const double p3 = prob(3), p7 = prob(7);
  Optimizers opt = make_optimizers(cfg.optimizer);
  for (int round = 0; round < 5; ++round) {
    RolloutBuffer buf;
    const nn::MatrixXd x = Eigen::Map<const nn::VectorXd>(obs.data(), dim);
    const nn::MatrixXd lp = nn::log_softmax(agents.actor.forward(x));
    for (int i = 0; i < 128; ++i) {
      Sample s;
      s.t = i;
      s.obs = obs;
      s.graph = g;
      s.action = i % 2 ? 3 : 7;
      s.log_prob = lp(s.action, 0);
      s.advantage = i % 2 ? 1.0 : -1.0;
      s.ret = s.advantage;
      buf.samples.push_back(s);
    }
    ppo_update(buf, agents, opt, cfg, {0.0, 1e-3, 1e-3}, rng);
  }
  EXPECT_GT(prob(3), 2 * p3);
  EXPECT_LT(prob(7), 0.5 * p7);
}

TEST(TrainLog, CsvColumns) {
  EXPECT_EQ(train_csv_header(),
            "episode,mean_reward,c_cov,handoffs,e_eff,jfi_rate,actor_loss,critic_loss,entropy,beta_ent");
  EpisodeLog l;
  l.episode = 2;
  l.mean_reward = 3.5;
  l.beta_ent = 0.1;
  EXPECT_EQ(train_csv_row(l), "2,3.5,0,0,0,0,0,0,0,0.1");
}

TEST(Train, ShortRunIsFiniteAndRepeatable) {
  auto scn = fixture::desk_config();
  scn.episode_len = 30;
  scn.failure_schedule = {{15, std::nullopt}};
  TrainConfig cfg = small_train();
  cfg.episodes = 3;
  cfg.env_count = 2;
  int calls = 0;
  const auto a = train(scn, cfg, ControllerKind::TagMappo, [&](const EpisodeLog&, const Agents&) { ++calls; });
  const auto b = train(scn, cfg, ControllerKind::TagMappo);
  EXPECT_EQ(calls, 3);
  ASSERT_EQ(a.log.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(train_csv_row(a.log[i]), train_csv_row(b.log[i]));
    EXPECT_TRUE(std::isfinite(a.log[i].actor_loss) && std::isfinite(a.log[i].critic_loss));
  }
  const auto km = train(scn, cfg, ControllerKind::KMeans);
  EXPECT_EQ(km.log.size(), 3u);
  EXPECT_EQ(km.agents.critic, nullptr);
  EXPECT_EQ(km.log[0].actor_loss, 0.0);
}

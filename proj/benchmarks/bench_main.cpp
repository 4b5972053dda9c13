#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "agin/baselines.hpp"
#include "agin/env.hpp"
#include "agin/nn.hpp"

using namespace agin;

namespace {

void BM_EnvStep(benchmark::State& state) {
  auto cfg = make_scenario("crowded_urban");
  cfg.num_users = static_cast<int>(state.range(0));
  Environment env(cfg);
  env.reset(1);
  Rng rng = make_rng(1, Stream::Policy);
  std::uniform_int_distribution<int> pick(0, kNumActions - 1);
  std::vector<int> actions(cfg.num_uavs);
  std::uint64_t episode = 1;
  for (auto _ : state) {
    if (env.done()) env.reset(++episode);
    for (int k = 0; k < cfg.num_uavs; ++k) actions[k] = env.state().alive[k] ? pick(rng) : kNoAction;
    benchmark::DoNotOptimize(env.step(actions));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_EnvStep)->Arg(30)->Arg(100)->Arg(300);

std::vector<EgoGraph> graphs_from_env(int count) {
  Environment env(make_scenario("suburban"));
  env.reset(2);
  std::vector<EgoGraph> out;
  const std::vector<int> hover(env.config().num_uavs, kHoverAction);
  while (static_cast<int>(out.size()) < count) {
    for (int k = 0; k < env.config().num_uavs && static_cast<int>(out.size()) < count; ++k)
      out.push_back(env.ego_graph(k));
    if (env.done()) env.reset(out.size());
    env.step(hover);
  }
  return out;
}

void BM_ActorForwardBackward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  nn::PolicyNet actor(Observation::flat_size(4), 128, kNumActions);
  Rng rng = make_rng(3, Stream::WeightInit);
  nn::glorot_init(actor.params(), rng);
  const nn::MatrixXd obs = nn::MatrixXd::Random(actor.obs_dim(), batch);
  const nn::MatrixXd dlogits = nn::MatrixXd::Random(kNumActions, batch);
  nn::ParameterSet grads = actor.params().zeros_like();
  nn::PolicyNet::Cache cache;
  for (auto _ : state) {
    benchmark::DoNotOptimize(actor.forward(obs, &cache));
    actor.backward(cache, dlogits, grads);
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_ActorForwardBackward)->Arg(1)->Arg(256);

template <typename Critic>
void critic_bench(benchmark::State& state, Critic& critic) {
  const int batch = static_cast<int>(state.range(0));
  Rng rng = make_rng(4, Stream::WeightInit);
  nn::glorot_init(critic.params(), rng);
  const auto packed = nn::EgoGraphBatch::pack(graphs_from_env(batch));
  const nn::VectorXd dv = nn::VectorXd::Ones(batch);
  nn::ParameterSet grads = critic.params().zeros_like();
  std::unique_ptr<nn::CriticCache> cache;
  for (auto _ : state) {
    benchmark::DoNotOptimize(critic.forward(packed, &cache));
    critic.backward(*cache, dv, grads);
  }
  state.SetItemsProcessed(state.iterations() * batch);
}

void BM_TagCriticForwardBackward(benchmark::State& state) {
  nn::TagCritic critic;
  critic_bench(state, critic);
}
BENCHMARK(BM_TagCriticForwardBackward)->Arg(1)->Arg(256);

void BM_MlpCriticForwardBackward(benchmark::State& state) {
  MlpCritic critic(4);
  critic_bench(state, critic);
}
BENCHMARK(BM_MlpCriticForwardBackward)->Arg(1)->Arg(256);

}  // namespace

BENCHMARK_MAIN();

// Runs the nine acceptance criteria and prints one PASS/FAIL line each.
// Exit status is nonzero only when a criterion fails that was not listed with
// --known-failure; criterion 8 is informative and never affects the status.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "agin/baselines.hpp"
#include "agin/harness.hpp"
#include "agin/power.hpp"

namespace fs = std::filesystem;
using namespace agin;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream ss;
  ss << std::setprecision(precision) << v;
  return ss.str();
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

EgoGraph random_graph(int slots, Rng& rng, double mask_prob) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::bernoulli_distribution masked(mask_prob);
  EgoGraph g;
  g.ego = Eigen::VectorXd::NullaryExpr(kEntityDim, [&] { return u(rng); });
  g.gbs = Eigen::VectorXd::NullaryExpr(kEntityDim, [&] { return u(rng); });
  g.neighbors = Eigen::MatrixXd::Zero(kEntityDim, slots);
  g.mask.assign(slots, 0);
  for (int s = 0; s < slots; ++s) {
    if (masked(rng)) continue;
    g.mask[s] = 1;
    g.neighbors.col(s) = Eigen::VectorXd::NullaryExpr(kEntityDim, [&] { return u(rng); });
  }
  return g;
}

void randomize(nn::ParameterSet& p, Rng& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = p[i].unaryExpr([&](double) { return u(rng); });
}

EgoGraph permuted(const EgoGraph& g, const std::vector<int>& perm) {
  EgoGraph out = g;
  for (std::size_t s = 0; s < perm.size(); ++s) {
    out.neighbors.col(static_cast<Eigen::Index>(s)) = g.neighbors.col(perm[s]);
    out.mask[s] = g.mask[perm[s]];
  }
  return out;
}

double value_of(const nn::ValueFunction& critic, const EgoGraph& g) {
  return critic.forward(nn::EgoGraphBatch::pack(std::span(&g, 1)))[0];
}

// Worst relative error between central differences and the analytic gradient.
template <typename F>
double worst_gradient_error(nn::ParameterSet& params, const nn::ParameterSet& grads, F&& loss) {
  double worst = 0.0;
  const double h = 1e-5;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (Eigen::Index i = 0; i < params[t].size(); ++i) {
      double& w = params[t].data()[i];
      const double keep = w;
      w = keep + h;
      const double up = loss();
      w = keep - h;
      const double down = loss();
      w = keep;
      const double fd = (up - down) / (2 * h), an = grads[t].data()[i];
      if (std::abs(fd) < 1e-9 && std::abs(an) < 1e-9) continue;
      worst = std::max(worst, rel_err(fd, an));
    }
  }
  return worst;
}

Outcome permutation_invariance() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(101, Stream::WeightInit);
  const int fixtures = 1000, slots = 3;
  std::vector<int> perm(slots);
  int tag_violations = 0, mlp_violations = 0;
  double tag_worst = 0.0;
  for (int f = 0; f < fixtures; ++f) {
    nn::TagCritic tag(nn::TagCriticShape{16, 8, 16, true});
    MlpCritic mlp(slots + 1, 32, 16);
    randomize(tag.params(), rng, 1.0);
    randomize(mlp.params(), rng, 1.0);
    const EgoGraph g = random_graph(slots, rng, 0.1);
    const double vt = value_of(tag, g), vm = value_of(mlp, g);
    bool mlp_changed = false;
    std::iota(perm.begin(), perm.end(), 0);
    while (std::next_permutation(perm.begin(), perm.end())) {
      const EgoGraph p = permuted(g, perm);
      const double err = std::abs(value_of(tag, p) - vt) / std::max(std::abs(vt), 1.0);
      tag_worst = std::max(tag_worst, err);
      if (err > 1e-9) ++tag_violations;
      if (std::abs(value_of(mlp, p) - vm) > 1e-9 * std::max(std::abs(vm), 1.0)) mlp_changed = true;
    }
    mlp_violations += mlp_changed ? 1 : 0;
  }
  const double secs = seconds_since(t0);
  const double mlp_frac = double(mlp_violations) / fixtures;
  return {tag_violations == 0 && mlp_frac >= 0.99 && secs < 10.0,
          "tag worst rel " + fmt(tag_worst) + ", mlp non-invariant on " + fmt(100 * mlp_frac) + "% of " +
              std::to_string(fixtures) + " fixtures, " + fmt(secs, 3) + " s"};
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  Rng rng = make_rng(102, Stream::WeightInit);
  double actor_worst = 0.0, critic_worst = 0.0;
  const int fixtures = 20;
  for (int f = 0; f < fixtures; ++f) {
    nn::PolicyNet actor(Observation::flat_size(3), 6, kNumActions);
    randomize(actor.params(), rng, 0.8);
    const nn::MatrixXd obs = nn::MatrixXd::Random(actor.obs_dim(), 3);
    const nn::MatrixXd u = nn::MatrixXd::Random(kNumActions, 3);
    nn::PolicyNet::Cache cache;
    actor.forward(obs, &cache);
    nn::ParameterSet ga = actor.params().zeros_like();
    actor.backward(cache, u, ga);
    actor_worst = std::max(actor_worst, worst_gradient_error(actor.params(), ga, [&] {
                             return (actor.forward(obs).array() * u.array()).sum();
                           }));

    nn::TagCritic critic(nn::TagCriticShape{6, 4, 5, f % 4 != 3});
    randomize(critic.params(), rng, 0.8);
    std::vector<EgoGraph> gs;
    for (int i = 0; i < 3; ++i) gs.push_back(random_graph(3, rng, 0.4));
    const auto batch = nn::EgoGraphBatch::pack(gs);
    const nn::VectorXd w = nn::VectorXd::Random(3);
    std::unique_ptr<nn::CriticCache> cc;
    critic.forward(batch, &cc);
    nn::ParameterSet gc = critic.params().zeros_like();
    critic.backward(*cc, w, gc);
    critic_worst = std::max(critic_worst, worst_gradient_error(critic.params(), gc, [&] {
                              return critic.forward(batch).dot(w);
                            }));
  }
  const double secs = seconds_since(t0);
  return {actor_worst < 1e-4 && critic_worst < 1e-4 && secs < 60.0,
          "actor worst rel " + fmt(actor_worst) + ", critic worst rel " + fmt(critic_worst) + " over " +
              std::to_string(fixtures) + " fixtures, " + fmt(secs, 3) + " s"};
}

Outcome gae_oracle() {
  Rng rng = make_rng(103, Stream::Minibatch);
  std::uniform_real_distribution<double> u(-5, 5), g(0, 0.999);
  std::uniform_int_distribution<int> len(5, 20);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = static_cast<std::size_t>(len(rng));
    std::vector<double> r(n), v(n);
    for (auto& x : r) x = u(rng);
    for (auto& x : v) x = u(rng);
    const double gamma = g(rng), tau = g(rng);
    const auto a = gae(r, v, 0.0, gamma, tau);
    for (std::size_t t = 0; t < n; ++t) {
      double direct = 0.0, w = 1.0;
      for (std::size_t l = t; l < n; ++l) {
        const double next = l + 1 < n ? v[l + 1] : 0.0;
        direct += w * (r[l] + gamma * next - v[l]);
        w *= gamma * tau;
      }
      worst = std::max(worst, std::abs(a[t] - direct));
    }
  }
  return {worst <= 1e-12, "worst abs " + fmt(worst) + " over 100 fixtures"};
}

Outcome formula_spot_checks() {
  const RotorcraftParams rotor;
  const double hover = propulsion_power(0.0, rotor);
  const bool hover_ok = std::abs(hover - (rotor.p0_w + rotor.pi_w)) <= 1e-6 * hover &&
                        std::abs(hover - 168.49) <= 1e-6 * 168.49;
  const std::vector<double> loads{1, 2, 3, 4};
  const double jfi = jain_index(loads);
  const bool jfi_ok = std::abs(jfi - 0.8333333333) <= 1e-9;
  const double fspl = free_space_path_loss_db(100.0, 2e9);
  const bool fspl_ok = std::abs(fspl - 78.46) <= 0.01;
  const double d = TrainConfig{}.huber_delta, e = 1e-10;
  double huber_gap = 0.0;
  for (double s : {-1.0, 1.0}) {
    huber_gap = std::max(huber_gap, std::abs(huber(s * (d - e), d) - huber(s * (d + e), d)));
    huber_gap = std::max(huber_gap, std::abs(huber_grad(s * (d - e), d) - huber_grad(s * (d + e), d)));
  }
  const bool huber_ok = huber_gap <= 1e-9;
  return {hover_ok && jfi_ok && fspl_ok && huber_ok,
          "hover " + fmt(hover, 8) + " W, jain " + fmt(jfi, 10) + ", fspl " + fmt(fspl, 6) + " dB, huber gap " +
              fmt(huber_gap)};
}

bool all_finite(const StepMetrics& m) {
  for (double x : {m.r_sum, m.e_eff, m.c_cov, m.r_min, m.jfi_rate, m.jfi_load, m.u_qos, m.utility, m.total_power_w})
    if (!std::isfinite(x)) return false;
  return true;
}

Outcome constraint_suite() {
  long violations = 0, nonfinite = 0;
  const int steps = 10000;
  for (const auto* name : {"crowded_urban", "suburban", "rural"}) {
    const auto cfg = make_scenario(name);
    Environment env(cfg);
    Rng rng = make_rng(104, Stream::Policy);
    std::uniform_int_distribution<int> pick(0, kNumActions - 1);
    std::uint64_t episode = 0;
    env.reset(derive_seed(104, 0, episode));
    for (int i = 0; i < steps; ++i) {
      if (env.done()) env.reset(derive_seed(104, 0, ++episode));
      std::vector<int> actions(cfg.num_uavs, kNoAction);
      for (int k = 0; k < cfg.num_uavs; ++k)
        if (env.state().alive[k]) actions[k] = pick(rng);
      const auto r = env.step(actions);
      const auto& s = env.state();
      const double tol = 1e-9;
      for (int k = 0; k < s.num_uavs(); ++k) {
        if (!s.alive[k]) continue;
        const Vec3& p = s.uav_pos[k];
        if (s.uav_vel[k].norm() > cfg.v_max_uav_mps + tol) ++violations;
        if (p.z() < cfg.h_min_m - tol || p.z() > cfg.h_max_m + tol) ++violations;
        if (p.x() < -tol || p.y() < -tol || p.x() > cfg.area_side_m + tol || p.y() > cfg.area_side_m + tol)
          ++violations;
        if ((p - cfg.gbs_position).norm() < cfg.d_safe_m - tol) ++violations;
        for (int j = k + 1; j < s.num_uavs(); ++j)
          if (s.alive[j] && (p - s.uav_pos[j]).norm() < cfg.d_safe_m - tol) ++violations;
      }
      for (const NodeId n : env.links().serving)
        if (!n.is_gbs() && !s.alive[n.uav_index()]) ++violations;
      if (!all_finite(r.metrics) || !std::isfinite(r.reward)) ++nonfinite;
    }
  }
  return {violations == 0 && nonfinite == 0,
          std::to_string(violations) + " violations, " + std::to_string(nonfinite) +
              " non-finite steps over 3 x " + std::to_string(steps) + " steps"};
}

Outcome failure_semantics() {
  auto cfg = make_scenario("suburban");
  cfg.num_users = 40;
  // Users packed under UAVs 0-2; UAV 3 parked over the far corner serves nobody.
  WorldState s;
  s.uav_pos = {Vec3(200, 200, 100), Vec3(200, 700, 100), Vec3(700, 200, 100), Vec3(980, 980, 120)};
  s.uav_vel = {Vec3(3, 0, 0), Vec3::Zero(), Vec3(0, 4, 1), Vec3(12, -5, 0)};
  s.alive.assign(4, true);
  for (int u = 0; u < cfg.num_users; ++u) {
    const Vec3& c = s.uav_pos[u % 3];
    s.user_pos.emplace_back(c.x() + 4.0 * (u / 3 % 5) - 8.0, c.y() + 3.0 * (u / 15) - 3.0);
  }
  s.user_vel.assign(s.user_pos.size(), Vec2::Zero());
  s.gbs_shadowing_db.assign(s.user_pos.size(), 0.0);
  s.association.assign(s.user_pos.size(), NodeId::gbs());
  s.prev_association = s.association;

  const auto before = associate_and_rate(s, cfg);
  const double p_before = total_power(s, cfg);
  WorldState after_state = s;
  apply_failure(after_state, 3);
  const auto after = associate_and_rate(after_state, cfg);
  const double p_after = total_power(after_state, cfg);

  bool sinr_ok = before.uav_load[3] == 0;
  for (int u = 0; u < cfg.num_users; ++u) sinr_ok = sinr_ok && after.sinr[u] >= before.sinr[u];
  const double expected_drop = propulsion_power(s.uav_vel[3].norm(), cfg.rotor) + cfg.p_comm_w;
  const bool power_ok = std::abs((p_before - p_after) - expected_drop) <= 1e-9 * p_before;

  // Handoffs from the environment against a direct diff of consecutive association tables.
  auto env_cfg = make_scenario("suburban");
  env_cfg.failure_schedule = {{20, std::nullopt}, {40, 1}};
  Environment env(env_cfg);
  env.reset(106);
  Rng rng = make_rng(106, Stream::Policy);
  std::uniform_int_distribution<int> pick(0, kNumActions - 1);
  int mismatches = 0, total_handoffs = 0;
  while (!env.done()) {
    const std::vector<NodeId> prev = env.links().serving;
    std::vector<int> actions(env_cfg.num_uavs, kNoAction);
    for (int k = 0; k < env_cfg.num_uavs; ++k)
      if (env.state().alive[k]) actions[k] = pick(rng);
    const auto r = env.step(actions);
    const auto curr = associate_and_rate(env.state(), env_cfg).serving;
    int diff = 0;
    for (std::size_t u = 0; u < curr.size(); ++u) diff += prev[u] != curr[u] ? 1 : 0;
    mismatches += diff != r.metrics.handoffs ? 1 : 0;
    total_handoffs += r.metrics.handoffs;
  }
  return {sinr_ok && power_ok && mismatches == 0,
          std::string("sinr ") + (sinr_ok ? "ok" : "decreased") + ", power drop " + fmt(p_before - p_after, 8) +
              " W (expected " + fmt(expected_drop, 8) + "), handoff mismatches " + std::to_string(mismatches) +
              " over " + std::to_string(total_handoffs) + " handoffs"};
}

ExperimentSpec desk_spec(const fs::path& out) {
  ExperimentSpec spec;
  spec.scenario = make_scenario("suburban");
  spec.scenario.num_uavs = 2;
  spec.scenario.num_users = 30;
  spec.scenario.episode_len = 100;
  spec.scenario.failure_schedule = {{50, std::nullopt}};
  spec.controller = ControllerKind::TagMappo;
  spec.train.episodes = 300;
  spec.seeds = {1, 2, 3};
  spec.eval_episodes = 3;
  spec.output_dir = out;
  return spec;
}

double column_mean(const CsvTable& t, const std::string& col, std::size_t from, std::size_t to) {
  const std::size_t c = t.column(col);
  double sum = 0.0;
  for (std::size_t r = from; r < to; ++r) sum += t.rows[r][c];
  return sum / static_cast<double>(to - from);
}

struct DeskRun {
  TrainOutputs outputs;
  double seconds = 0.0;
};

Outcome learning_trend(const DeskRun& run) {
  std::string detail;
  bool pass = run.seconds < 1800.0;
  double first_all = 0.0, last_all = 0.0;
  for (const auto& csv : run.outputs.seed_csvs) {
    const auto t = read_csv(csv);
    const std::size_t n = t.rows.size();
    const double first = column_mean(t, "mean_reward", 0, 50), last = column_mean(t, "mean_reward", n - 50, n);
    first_all += first;
    last_all += last;
    const double ratio = last / first;
    pass = pass && ratio >= 1.2;
    detail += csv.stem().string() + " " + fmt(first) + " -> " + fmt(last) + " (x" + fmt(ratio) + "); ";
  }
  detail += "mean x" + fmt(last_all / first_all) + ", " + fmt(run.seconds, 4) + " s";
  return {pass, detail};
}

Outcome v_shape(const ExperimentSpec& spec) {
  const auto res = cmd_failure_eval(spec, std::nullopt);
  const int failure_step = spec.scenario.failure_schedule.front().step;
  int trough_at_failure = 0, recovered = 0, fast = 0;
  double pre = 0.0, fin = 0.0;
  for (const auto& s : res.stats) {
    trough_at_failure += s.trough_step == failure_step ? 1 : 0;
    recovered += s.final_mean >= 0.8 * s.pre_mean ? 1 : 0;
    fast += s.recovery_steps && *s.recovery_steps <= 15 ? 1 : 0;
    pre += s.pre_mean;
    fin += s.final_mean;
  }
  const int n = static_cast<int>(res.stats.size());
  const bool pass = trough_at_failure == n && fin >= 0.8 * pre;
  return {pass, "trough at failure in " + std::to_string(trough_at_failure) + "/" + std::to_string(n) +
                    " episodes, final/pre coverage " + fmt(fin / pre) + "; 90% within 15 steps in " +
                    std::to_string(fast) + "/" + std::to_string(n) + " (reported, not gated)"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism(const DeskRun& a, const DeskRun& b) {
  int identical = 0, total = 0;
  std::vector<fs::path> lhs = a.outputs.seed_csvs, rhs = b.outputs.seed_csvs;
  lhs.push_back(a.outputs.aggregate_csv);
  rhs.push_back(b.outputs.aggregate_csv);
  for (std::size_t i = 0; i < lhs.size() && i < rhs.size(); ++i) {
    ++total;
    identical += slurp(lhs[i]) == slurp(rhs[i]) ? 1 : 0;
  }
  const bool pass = total == static_cast<int>(lhs.size()) && lhs.size() == rhs.size() && identical == total;
  return {pass, std::to_string(identical) + "/" + std::to_string(total) + " training CSVs byte-identical"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> known;
  fs::path workdir = fs::temp_directory_path() / "agin_acceptance";
  std::vector<int> only;
  app.add_option("--known-failure", known, "criterion expected to fail (repeatable)");
  app.add_option("--workdir", workdir, "directory for training outputs");
  app.add_option("--only", only, "run just these criteria");
  CLI11_PARSE(app, argc, argv);

  const std::set<int> known_set(known.begin(), known.end());
  const std::set<int> only_set(only.begin(), only.end());
  auto wanted = [&](int c) { return only_set.empty() || only_set.count(c) > 0; };
  int unexpected = 0;
  auto report = [&](int id, const std::string& name, const Outcome& o, bool gating = true) {
    std::string tag;
    if (!gating) tag = " (informative)";
    else if (!o.pass && known_set.count(id)) tag = " (known)";
    std::cout << "[" << (o.pass ? "PASS" : "FAIL") << "] " << id << " " << name << tag << ": " << o.detail
              << std::endl;
    if (gating && !o.pass && !known_set.count(id)) ++unexpected;
  };
  auto guarded = [&](const std::function<Outcome()>& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("threw: ") + e.what()};
    }
  };

  if (wanted(1)) report(1, "permutation invariance", guarded(permutation_invariance));
  if (wanted(2)) report(2, "gradient correctness", guarded(gradient_correctness));
  if (wanted(3)) report(3, "gae oracle", guarded(gae_oracle));
  if (wanted(4)) report(4, "formula spot checks", guarded(formula_spot_checks));
  if (wanted(5)) report(5, "constraint suite", guarded(constraint_suite));
  if (wanted(6)) report(6, "failure semantics", guarded(failure_semantics));

  if (wanted(7) || wanted(8) || wanted(9)) {
    const ExperimentSpec first = desk_spec(workdir / "desk_a");
    const ExperimentSpec second = desk_spec(workdir / "desk_b");
    std::optional<DeskRun> run_a, run_b;
    std::string train_error;
    try {
      fs::remove_all(first.output_dir);
      const auto t0 = Clock::now();
      run_a = DeskRun{cmd_train(first), 0.0};
      run_a->seconds = seconds_since(t0);
    } catch (const std::exception& e) {
      train_error = std::string("training threw: ") + e.what();
    }
    if (wanted(7)) report(7, "desk-scale learning trend", run_a ? guarded([&] { return learning_trend(*run_a); })
                                                                 : Outcome{false, train_error});
    if (wanted(8)) report(8, "v-shaped recovery", run_a ? guarded([&] { return v_shape(first); })
                                                        : Outcome{false, train_error}, false);
    if (wanted(9)) {
      Outcome o{false, train_error};
      if (run_a) {
        o = guarded([&] {
          fs::remove_all(second.output_dir);
          run_b = DeskRun{cmd_train(second), 0.0};
          return determinism(*run_a, *run_b);
        });
      }
      report(9, "determinism", o);
    }
  }
  return unexpected == 0 ? 0 : 1;
}

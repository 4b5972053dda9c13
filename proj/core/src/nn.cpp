#include "agin/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace agin::nn {

// ---------------------------------------------------------------------------
// ParameterSet

std::size_t ParameterSet::add(std::string name, Eigen::Index rows, Eigen::Index cols) {
  tensors_.push_back({std::move(name), MatrixXd::Zero(rows, cols)});
  return tensors_.size() - 1;
}

std::optional<std::size_t> ParameterSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name == name) return i;
  }
  return std::nullopt;
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  for (const auto& t : tensors_) out.add(t.name, t.value.rows(), t.value.cols());
  return out;
}

void ParameterSet::set_zero() {
  for (auto& t : tensors_) t.value.setZero();
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
  if (other.size() != size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    const auto& a = tensors_[i];
    const auto& b = other.tensors_[i];
    if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols()) return false;
  }
  return true;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
  return n;
}

double ParameterSet::squared_norm() const {
  double s = 0.0;
  for (const auto& t : tensors_) s += t.value.squaredNorm();
  return s;
}

bool ParameterSet::all_finite() const {
  return std::all_of(tensors_.begin(), tensors_.end(), [](const Tensor& t) { return t.value.allFinite(); });
}

void ParameterSet::add_scaled(double alpha, const ParameterSet& other) {
  for (std::size_t i = 0; i < size(); ++i) tensors_[i].value += alpha * other.tensors_[i].value;
}

void ParameterSet::scale(double factor) {
  for (auto& t : tensors_) t.value *= factor;
}

namespace {
bool is_bias(const std::string& name) { return name.size() >= 2 && name.ends_with(".b"); }
}  // namespace

void glorot_init(ParameterSet& params, Rng& rng) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    MatrixXd& w = params[i];
    if (is_bias(params.name(i))) {
      w.setZero();
      continue;
    }
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = u(rng);
    }
  }
}

double clip_grad_norm(ParameterSet& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (norm > max_norm && norm > 0.0) grads.scale(max_norm / norm);
  return norm;
}

// ---------------------------------------------------------------------------
// Actor

namespace {

MatrixXd tanh_layer(const MatrixXd& w, const MatrixXd& b, const MatrixXd& x) {
  MatrixXd pre = w * x;
  pre.colwise() += b.col(0);
  return pre.array().tanh().matrix();
}

void check_finite(const MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw std::domain_error(std::string(what) + ": non-finite input");
}

}  // namespace

PolicyNet::PolicyNet(int obs_dim, int hidden, int num_actions) : obs_dim_(obs_dim), num_actions_(num_actions) {
  w1_ = params_.add("enc1.w", hidden, obs_dim);
  b1_ = params_.add("enc1.b", hidden, 1);
  w2_ = params_.add("enc2.w", hidden, hidden);
  b2_ = params_.add("enc2.b", hidden, 1);
  w3_ = params_.add("policy.w", num_actions, hidden);
  b3_ = params_.add("policy.b", num_actions, 1);
}

MatrixXd PolicyNet::forward(const MatrixXd& obs, Cache* cache) const {
  if (obs.rows() != obs_dim_) {
    throw std::invalid_argument("PolicyNet: expected " + std::to_string(obs_dim_) + " input rows, got " +
                                std::to_string(obs.rows()));
  }
  MatrixXd h1 = tanh_layer(params_[w1_], params_[b1_], obs);
  MatrixXd h2 = tanh_layer(params_[w2_], params_[b2_], h1);
  MatrixXd logits = params_[w3_] * h2;
  logits.colwise() += params_[b3_].col(0);
  if (cache) {
    cache->x = obs;
    cache->h1 = std::move(h1);
    cache->h2 = std::move(h2);
    cache->logits = logits;
  }
  return logits;
}

void PolicyNet::backward(const Cache& cache, const MatrixXd& dlogits, ParameterSet& grads) const {
  if (cache.x.cols() == 0 || cache.logits.cols() != dlogits.cols()) {
    throw std::logic_error("PolicyNet::backward: missing or mismatched cache");
  }
  grads[w3_].noalias() += dlogits * cache.h2.transpose();
  grads[b3_] += dlogits.rowwise().sum();
  MatrixXd d2 = (params_[w3_].transpose() * dlogits).array() * (1.0 - cache.h2.array().square());
  grads[w2_].noalias() += d2 * cache.h1.transpose();
  grads[b2_] += d2.rowwise().sum();
  MatrixXd d1 = (params_[w2_].transpose() * d2).array() * (1.0 - cache.h1.array().square());
  grads[w1_].noalias() += d1 * cache.x.transpose();
  grads[b1_] += d1.rowwise().sum();
}

MatrixXd log_softmax(const MatrixXd& logits) {
  MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const auto shifted = logits.col(c).array() - logits.col(c).maxCoeff();
    out.col(c) = shifted - std::log(shifted.exp().sum());
  }
  return out;
}

VectorXd entropy(const MatrixXd& log_probs) {
  VectorXd h(log_probs.cols());
  for (Eigen::Index c = 0; c < log_probs.cols(); ++c) {
    h[c] = -(log_probs.col(c).array().exp() * log_probs.col(c).array()).sum();
  }
  return h;
}

// ---------------------------------------------------------------------------
// Ego graphs, shuffling, attention

EgoGraphBatch EgoGraphBatch::pack(std::span<const EgoGraph> graphs) {
  EgoGraphBatch b;
  b.samples = static_cast<int>(graphs.size());
  b.slots = graphs.empty() ? 0 : graphs.front().slots();
  b.ego.resize(kEntityDim, b.samples);
  b.gbs.resize(kEntityDim, b.samples);
  b.neighbors.resize(kEntityDim, static_cast<Eigen::Index>(b.samples) * b.slots);
  b.mask.assign(static_cast<std::size_t>(b.samples) * b.slots, 0);
  for (int i = 0; i < b.samples; ++i) {
    const EgoGraph& g = graphs[i];
    if (g.slots() != b.slots || g.ego.size() != kEntityDim || g.gbs.size() != kEntityDim ||
        g.neighbors.rows() != kEntityDim || g.neighbors.cols() != b.slots) {
      throw std::invalid_argument("EgoGraphBatch::pack: inconsistent graph shapes");
    }
    b.ego.col(i) = g.ego;
    b.gbs.col(i) = g.gbs;
    if (b.slots > 0) b.neighbors.middleCols(static_cast<Eigen::Index>(i) * b.slots, b.slots) = g.neighbors;
    std::copy(g.mask.begin(), g.mask.end(), b.mask.begin() + static_cast<std::ptrdiff_t>(i) * b.slots);
  }
  return b;
}

void EgoGraphBatch::validate() const {
  const auto n = static_cast<Eigen::Index>(samples);
  if (ego.rows() != kEntityDim || ego.cols() != n || gbs.rows() != kEntityDim || gbs.cols() != n ||
      neighbors.rows() != kEntityDim || neighbors.cols() != n * slots ||
      mask.size() != static_cast<std::size_t>(n * slots)) {
    throw std::invalid_argument("EgoGraphBatch: shape mismatch");
  }
  for (std::size_t c = 0; c < mask.size(); ++c) {
    if (!mask[c] && !neighbors.col(static_cast<Eigen::Index>(c)).isZero(0.0)) {
      throw std::invalid_argument("EgoGraphBatch: masked neighbor row is not zeroed");
    }
  }
}

void ros_shuffle(Eigen::Ref<MatrixXd> neighbors, std::span<std::uint8_t> mask, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(mask.size());
  if (neighbors.cols() != n) throw std::invalid_argument("ros_shuffle: rows/mask size mismatch");
  // Fisher-Yates applied jointly to columns and mask bits.
  for (Eigen::Index i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<Eigen::Index> pick(0, i);
    const Eigen::Index j = pick(rng);
    if (j == i) continue;
    neighbors.col(i).swap(neighbors.col(j));
    std::swap(mask[i], mask[j]);
  }
}

void ros_shuffle(EgoGraph& graph, Rng& rng) { ros_shuffle(graph.neighbors, graph.mask, rng); }

namespace {

/// Softmax over valid entity scores; writes weights (0 for masked) and returns
/// false if nothing is valid.
bool masked_softmax(const VectorXd& scores, std::span<const std::uint8_t> valid, Eigen::Ref<VectorXd> weights) {
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < scores.size(); ++j) {
    if (valid[j]) mx = std::max(mx, scores[j]);
  }
  weights.setZero();
  if (!std::isfinite(mx)) return false;
  double z = 0.0;
  for (Eigen::Index j = 0; j < scores.size(); ++j) {
    if (!valid[j]) continue;
    weights[j] = std::exp(scores[j] - mx);
    z += weights[j];
  }
  weights /= z;
  return true;
}

}  // namespace

AttentionResult attention_forward(const MatrixXd& w_q, const MatrixXd& w_k, const MatrixXd& w_v,
                                  const VectorXd& ego, const MatrixXd& entities,
                                  std::span<const std::uint8_t> mask) {
  if (static_cast<Eigen::Index>(mask.size()) != entities.cols()) {
    throw std::invalid_argument("attention_forward: mask size mismatch");
  }
  if (w_q.cols() != ego.size() || w_k.cols() != entities.rows() || w_q.rows() != w_k.rows() ||
      w_v.cols() != entities.rows()) {
    throw std::invalid_argument("attention_forward: shape mismatch");
  }
  check_finite(ego, "attention_forward");
  check_finite(entities, "attention_forward");

  const double scale = 1.0 / std::sqrt(static_cast<double>(w_q.rows()));
  const VectorXd q = w_q * ego;
  AttentionResult r;
  r.context = VectorXd::Zero(w_v.rows());
  r.scores = VectorXd::Constant(entities.cols(), -std::numeric_limits<double>::infinity());
  for (Eigen::Index j = 0; j < entities.cols(); ++j) {
    if (mask[j]) r.scores[j] = q.dot(w_k * entities.col(j)) * scale;
  }
  VectorXd weights(entities.cols());
  if (!masked_softmax(r.scores, mask, weights)) return r;
  r.weights = weights;
  for (Eigen::Index j = 0; j < entities.cols(); ++j) {
    if (mask[j]) r.context += weights[j] * (w_v * entities.col(j));
  }
  return r;
}

// ---------------------------------------------------------------------------
// TA-GAT critic

namespace {

class TagCache final : public CriticCache {
 public:
  EgoGraphBatch batch;
  MatrixXd h_ego, h_nb, h_gbs;       // encoder outputs
  MatrixXd q, k_nb, v_nb, k_gbs, v_gbs;
  MatrixXd alpha;                    // (slots + 1) x samples
  MatrixXd self_proj, context;       // D x samples
  MatrixXd z, a1;                    // head input / hidden
};

}  // namespace

TagCritic::TagCritic(TagCriticShape shape) : shape_(shape) {
  const int d = shape.hidden;
  enc_w = params_.add("enc.w", d, kEntityDim);
  enc_b = params_.add("enc.b", d, 1);
  w_q = params_.add("attn.q.w", shape.attn_dim, d);
  w_k = params_.add("attn.k.w", shape.attn_dim, d);
  w_v = params_.add("attn.v.w", d, d);
  w_self = params_.add("self.w", d, d);
  head_w1 = params_.add("head1.w", shape.head_hidden, 2 * d);
  head_b1 = params_.add("head1.b", shape.head_hidden, 1);
  head_w2 = params_.add("head2.w", 1, shape.head_hidden);
  head_b2 = params_.add("head2.b", 1, 1);
}

const MatrixXd& TagCritic::attention_weights(const CriticCache& cache) {
  return dynamic_cast<const TagCache&>(cache).alpha;
}

VectorXd TagCritic::forward(const EgoGraphBatch& batch, std::unique_ptr<CriticCache>* cache) const {
  batch.validate();
  check_finite(batch.ego, "TagCritic");
  check_finite(batch.neighbors, "TagCritic");
  check_finite(batch.gbs, "TagCritic");

  const int n = batch.samples;
  const int slots = batch.slots;
  const int ents = slots + 1;
  const int d = shape_.hidden;
  const double scale = 1.0 / std::sqrt(static_cast<double>(shape_.attn_dim));

  auto c = std::make_unique<TagCache>();
  c->h_ego = tanh_layer(params_[enc_w], params_[enc_b], batch.ego);
  c->h_nb = tanh_layer(params_[enc_w], params_[enc_b], batch.neighbors);
  c->h_gbs = tanh_layer(params_[enc_w], params_[enc_b], batch.gbs);
  c->q = params_[w_q] * c->h_ego;
  c->k_nb = params_[w_k] * c->h_nb;
  c->v_nb = params_[w_v] * c->h_nb;
  c->k_gbs = params_[w_k] * c->h_gbs;
  c->v_gbs = params_[w_v] * c->h_gbs;
  c->self_proj = params_[w_self] * c->h_ego;
  c->alpha = MatrixXd::Zero(ents, n);
  c->context = MatrixXd::Zero(d, n);

  std::vector<std::uint8_t> valid(ents);
  VectorXd scores(ents);
  for (int i = 0; i < n; ++i) {
    for (int s = 0; s < slots; ++s) {
      const auto col = static_cast<Eigen::Index>(i) * slots + s;
      valid[s] = batch.mask[col];
      scores[s] = valid[s] ? c->q.col(i).dot(c->k_nb.col(col)) * scale : 0.0;
    }
    valid[slots] = shape_.gbs_anchor ? 1 : 0;
    scores[slots] = c->q.col(i).dot(c->k_gbs.col(i)) * scale;
    auto alpha = c->alpha.col(i);
    if (!masked_softmax(scores, valid, alpha)) continue;
    for (int s = 0; s < slots; ++s) {
      if (valid[s]) c->context.col(i) += alpha[s] * c->v_nb.col(static_cast<Eigen::Index>(i) * slots + s);
    }
    if (valid[slots]) c->context.col(i) += alpha[slots] * c->v_gbs.col(i);
  }

  c->z.resize(2 * d, n);
  c->z.topRows(d) = c->self_proj;
  c->z.bottomRows(d) = c->context;
  c->a1 = tanh_layer(params_[head_w1], params_[head_b1], c->z);
  VectorXd values = (params_[head_w2] * c->a1).transpose();
  values.array() += params_[head_b2](0, 0);

  if (cache) {
    c->batch = batch;
    *cache = std::move(c);
  }
  return values;
}

void TagCritic::backward(const CriticCache& base, const VectorXd& dvalues, ParameterSet& grads) const {
  const auto* cp = dynamic_cast<const TagCache*>(&base);
  if (!cp) throw std::logic_error("TagCritic::backward: missing or foreign cache");
  const TagCache& c = *cp;
  const int n = c.batch.samples;
  if (dvalues.size() != n) throw std::invalid_argument("TagCritic::backward: gradient size mismatch");
  const int slots = c.batch.slots;
  const int d = shape_.hidden;
  const double scale = 1.0 / std::sqrt(static_cast<double>(shape_.attn_dim));

  const MatrixXd dv_row = dvalues.transpose();  // 1 x n
  grads[head_w2].noalias() += dv_row * c.a1.transpose();
  grads[head_b2](0, 0) += dvalues.sum();
  const MatrixXd d_a1 = (params_[head_w2].transpose() * dv_row).array() * (1.0 - c.a1.array().square());
  grads[head_w1].noalias() += d_a1 * c.z.transpose();
  grads[head_b1] += d_a1.rowwise().sum();
  const MatrixXd dz = params_[head_w1].transpose() * d_a1;
  const MatrixXd d_self = dz.topRows(d);
  const MatrixXd d_ctx = dz.bottomRows(d);

  grads[w_self].noalias() += d_self * c.h_ego.transpose();
  MatrixXd dh_ego = params_[w_self].transpose() * d_self;

  MatrixXd dq = MatrixXd::Zero(c.q.rows(), n);
  MatrixXd dk_nb = MatrixXd::Zero(c.k_nb.rows(), c.k_nb.cols());
  MatrixXd dv_nb = MatrixXd::Zero(c.v_nb.rows(), c.v_nb.cols());
  MatrixXd dk_gbs = MatrixXd::Zero(c.k_gbs.rows(), n);
  MatrixXd dv_gbs = MatrixXd::Zero(c.v_gbs.rows(), n);

  VectorXd dalpha(slots + 1);
  for (int i = 0; i < n; ++i) {
    const auto alpha = c.alpha.col(i);
    const auto g = d_ctx.col(i);
    double weighted = 0.0;
    for (int s = 0; s <= slots; ++s) {
      dalpha[s] = 0.0;
      if (alpha[s] == 0.0) continue;
      const auto vcol = s < slots ? c.v_nb.col(static_cast<Eigen::Index>(i) * slots + s) : c.v_gbs.col(i);
      dalpha[s] = g.dot(vcol);
      weighted += alpha[s] * dalpha[s];
    }
    for (int s = 0; s <= slots; ++s) {
      if (alpha[s] == 0.0) continue;
      const double ds = alpha[s] * (dalpha[s] - weighted) * scale;
      if (s < slots) {
        const auto col = static_cast<Eigen::Index>(i) * slots + s;
        dq.col(i) += ds * c.k_nb.col(col);
        dk_nb.col(col) += ds * c.q.col(i);
        dv_nb.col(col) += alpha[s] * g;
      } else {
        dq.col(i) += ds * c.k_gbs.col(i);
        dk_gbs.col(i) += ds * c.q.col(i);
        dv_gbs.col(i) += alpha[s] * g;
      }
    }
  }

  grads[w_q].noalias() += dq * c.h_ego.transpose();
  dh_ego.noalias() += params_[w_q].transpose() * dq;
  grads[w_k].noalias() += dk_nb * c.h_nb.transpose() + dk_gbs * c.h_gbs.transpose();
  grads[w_v].noalias() += dv_nb * c.h_nb.transpose() + dv_gbs * c.h_gbs.transpose();
  const MatrixXd dh_nb = params_[w_k].transpose() * dk_nb + params_[w_v].transpose() * dv_nb;
  const MatrixXd dh_gbs = params_[w_k].transpose() * dk_gbs + params_[w_v].transpose() * dv_gbs;

  auto encoder_grad = [&](const MatrixXd& dh, const MatrixXd& h, const MatrixXd& x) {
    const MatrixXd dpre = dh.array() * (1.0 - h.array().square());
    grads[enc_w].noalias() += dpre * x.transpose();
    grads[enc_b] += dpre.rowwise().sum();
  };
  encoder_grad(dh_ego, c.h_ego, c.batch.ego);
  encoder_grad(dh_nb, c.h_nb, c.batch.neighbors);
  encoder_grad(dh_gbs, c.h_gbs, c.batch.gbs);
}

// ---------------------------------------------------------------------------
// Optimizers

void Sgd::step(ParameterSet& params, const ParameterSet& grads, double lr) { params.add_scaled(-lr, grads); }

void Adam::step(ParameterSet& params, const ParameterSet& grads, double lr) {
  if (!m_) {
    m_ = grads.zeros_like();
    v_ = grads.zeros_like();
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    MatrixXd& m = (*m_)[i];
    MatrixXd& v = (*v_)[i];
    m = beta1_ * m + (1.0 - beta1_) * grads[i];
    v = beta2_ * v + (1.0 - beta2_) * grads[i].cwiseAbs2();
    params[i].array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kFormat = "agin-checkpoint-v1";

void write_f64_le(std::ostream& out, double x) {
  auto bits = std::bit_cast<std::uint64_t>(x);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

double read_f64_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::string payload_path(const std::string& path) { return path + ".bin"; }

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointMeta& meta, const ParameterSet& actor,
                     const ParameterSet& critic) {
  using nlohmann::json;
  json manifest;
  manifest["format"] = kFormat;
  manifest["seed"] = meta.seed;
  manifest["config_hash"] = meta.config_hash;
  manifest["controller"] = meta.controller;
  manifest["payload"] = std::filesystem::path(payload_path(path)).filename().string();
  manifest["tensors"] = json::array();

  std::ofstream bin(payload_path(path), std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("cannot write checkpoint payload " + payload_path(path));
  std::uint64_t offset = 0;
  auto emit = [&](const std::string& prefix, const ParameterSet& set) {
    for (const auto& t : set.tensors()) {
      manifest["tensors"].push_back(
          {{"name", prefix + t.name}, {"shape", {t.value.rows(), t.value.cols()}}, {"offset", offset}});
      for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
        for (Eigen::Index c = 0; c < t.value.cols(); ++c) write_f64_le(bin, t.value(r, c));
      }
      offset += static_cast<std::uint64_t>(t.value.size()) * 8;
    }
  };
  emit("actor.", actor);
  emit("critic.", critic);
  manifest["payload_bytes"] = offset;
  bin.close();
  if (!bin) throw std::runtime_error("failed writing checkpoint payload");

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint manifest " + path);
  out << manifest.dump(2) << '\n';
}

CheckpointMeta load_checkpoint(const std::string& path, ParameterSet& actor, ParameterSet& critic) {
  using nlohmann::json;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint manifest " + path);
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed checkpoint manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != kFormat) throw std::runtime_error("unsupported checkpoint format");

  const auto bin_path = (std::filesystem::path(path).parent_path() / manifest.at("payload").get<std::string>());
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open checkpoint payload " + bin_path.string());
  std::vector<unsigned char> payload((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  if (payload.size() != manifest.at("payload_bytes").get<std::uint64_t>()) {
    throw std::runtime_error("checkpoint payload size mismatch");
  }

  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != actor.size() + critic.size()) {
    throw std::runtime_error("checkpoint tensor count mismatch");
  }
  std::size_t idx = 0;
  auto fill = [&](const std::string& prefix, ParameterSet& set) {
    for (std::size_t i = 0; i < set.size(); ++i, ++idx) {
      const auto& t = tensors[idx];
      const std::string name = t.at("name").get<std::string>();
      const auto rows = t.at("shape")[0].get<Eigen::Index>();
      const auto cols = t.at("shape")[1].get<Eigen::Index>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      MatrixXd& m = set[i];
      if (name != prefix + set.name(i) || rows != m.rows() || cols != m.cols()) {
        throw std::runtime_error("checkpoint tensor '" + name + "' does not match expected '" + prefix +
                                 set.name(i) + "' [" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                                 "]");
      }
      if (offset + static_cast<std::uint64_t>(m.size()) * 8 > payload.size()) {
        throw std::runtime_error("checkpoint tensor '" + name + "' exceeds payload");
      }
      const unsigned char* p = payload.data() + offset;
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c, p += 8) m(r, c) = read_f64_le(p);
      }
    }
  };
  fill("actor.", actor);
  fill("critic.", critic);

  CheckpointMeta meta;
  meta.seed = manifest.at("seed").get<std::uint64_t>();
  meta.config_hash = manifest.at("config_hash").get<std::string>();
  meta.controller = manifest.at("controller").get<std::string>();
  return meta;
}

}  // namespace agin::nn

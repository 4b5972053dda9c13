#include "agin/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

namespace agin {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Config I/O

namespace {

[[noreturn]] void type_error(const std::string& key, const char* expected) {
  throw ConfigError("config key '" + key + "' must be " + expected);
}

void read_value(const json& j, const std::string& key, double& out) {
  if (!j.is_number()) type_error(key, "a number");
  out = j.get<double>();
}

void read_value(const json& j, const std::string& key, int& out) {
  if (!j.is_number_integer()) type_error(key, "an integer");
  const auto v = j.get<long long>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) type_error(key, "a 32-bit integer");
  out = static_cast<int>(v);
}

void read_value(const json& j, const std::string& key, std::uint64_t& out) {
  if (!j.is_number_unsigned()) type_error(key, "a non-negative integer");
  out = j.get<std::uint64_t>();
}

void read_value(const json& j, const std::string& key, bool& out) {
  if (!j.is_boolean()) type_error(key, "true or false");
  out = j.get<bool>();
}

void read_value(const json& j, const std::string& key, std::string& out) {
  if (!j.is_string()) type_error(key, "a string");
  out = j.get<std::string>();
}

void read_value(const json& j, const std::string& key, Vec3& out) {
  if (!j.is_array() || j.size() != 3 || !std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_number(); })) {
    type_error(key, "an array of 3 numbers");
  }
  out = Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

void read_value(const json& j, const std::string& key, MobilityKind& out) {
  std::string s;
  read_value(j, key, s);
  if (s == "rpgm") {
    out = MobilityKind::Rpgm;
  } else if (s == "gauss_markov") {
    out = MobilityKind::GaussMarkov;
  } else {
    type_error(key, "\"rpgm\" or \"gauss_markov\"");
  }
}

void read_value(const json& j, const std::string& key, OptimizerKind& out) {
  std::string s;
  read_value(j, key, s);
  out = parse_optimizer(s);
}

void read_value(const json& j, const std::string& key, std::vector<FailureEvent>& out) {
  if (!j.is_array()) type_error(key, "an array of {\"step\": n, \"uav\": k | \"random\"}");
  out.clear();
  for (std::size_t i = 0; i < j.size(); ++i) {
    const json& e = j[i];
    const std::string k = key + "[" + std::to_string(i) + "]";
    if (!e.is_object()) type_error(k, "an object");
    for (const auto& [name, _] : e.items()) {
      if (name != "step" && name != "uav") throw ConfigError("unknown config key '" + k + "." + name + "'");
    }
    FailureEvent f;
    if (!e.contains("step")) throw ConfigError("config key '" + k + ".step' is required");
    read_value(e["step"], k + ".step", f.step);
    if (e.contains("uav") && !(e["uav"].is_string() && e["uav"] == "random") && !e["uav"].is_null()) {
      int u = 0;
      read_value(e["uav"], k + ".uav", u);
      f.uav = u;
    }
    out.push_back(f);
  }
}

json write_value(double v) { return v; }
json write_value(int v) { return v; }
json write_value(std::uint64_t v) { return v; }
json write_value(bool v) { return v; }
json write_value(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
json write_value(MobilityKind k) { return k == MobilityKind::Rpgm ? "rpgm" : "gauss_markov"; }
json write_value(OptimizerKind k) { return to_string(k); }
json write_value(const std::vector<FailureEvent>& events) {
  json arr = json::array();
  for (const auto& f : events) {
    arr.push_back({{"step", f.step}, {"uav", f.uav ? json(*f.uav) : json("random")}});
  }
  return arr;
}

class Reader {
 public:
  Reader(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object()) {
      throw ConfigError("config key '" + (prefix_.empty() ? std::string("<root>") : prefix_) + "' must be an object");
    }
  }

  template <class T>
  void operator()(const char* key, T& value) {
    used_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) read_value(*it, prefix_ + key, value);
  }

  template <class F>
  void object(const char* key, F&& fn) {
    used_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) {
      Reader sub(*it, prefix_ + key + ".");
      fn(sub);
      sub.finish();
    }
  }

  void mark(const char* key) { used_.insert(key); }

  void finish() const {
    for (const auto& [name, _] : j_.items()) {
      if (!used_.count(name)) throw ConfigError("unknown config key '" + prefix_ + name + "'");
    }
  }

 private:
  const json& j_;
  std::string prefix_;
  std::set<std::string> used_;
};

class Writer {
 public:
  explicit Writer(json& j) : j_(j) {}

  template <class T>
  void operator()(const char* key, T& value) {
    j_[key] = write_value(value);
  }

  template <class F>
  void object(const char* key, F&& fn) {
    json sub = json::object();
    Writer w(sub);
    fn(w);
    j_[key] = std::move(sub);
  }

 private:
  json& j_;
};

template <class V>
void visit_world(V& v, ScenarioConfig& c) {
  v("area_side_m", c.area_side_m);
  v("num_uavs", c.num_uavs);
  v("num_users", c.num_users);
  v("gbs_position", c.gbs_position);
  v("h_min_m", c.h_min_m);
  v("h_max_m", c.h_max_m);
  v("v_max_uav_mps", c.v_max_uav_mps);
  v("v_max_user_mps", c.v_max_user_mps);
  v("group_speed_mps", c.group_speed_mps);
  v("d_safe_m", c.d_safe_m);
  v("carrier_freq_hz", c.carrier_freq_hz);
  v("bandwidth_hz", c.bandwidth_hz);
  v("p_tx_dbm", c.p_tx_dbm);
  v("p_gbs_w", c.p_gbs_w);
  v("p_comm_w", c.p_comm_w);
  v("gbs_tx_dbm", c.gbs_tx_dbm);
  v("noise_psd_dbm_hz", c.noise_psd_dbm_hz);
  v.object("channel", [&](auto& s) {
    s("a", c.channel.a);
    s("b", c.channel.b);
    s("eta_los_db", c.channel.eta_los_db);
    s("eta_nlos_db", c.channel.eta_nlos_db);
    s("kappa", c.channel.kappa);
    s("pl_d0_db", c.channel.pl_d0_db);
    s("d0_m", c.channel.d0_m);
    s("shadow_sigma_db", c.channel.shadow_sigma_db);
  });
  v.object("antenna", [&](auto& s) {
    s("theta_b_deg", c.antenna.theta_b_deg);
    s("g_main_db", c.antenna.g_main_db);
    s("g_side_db", c.antenna.g_side_db);
  });
  v.object("rotor", [&](auto& s) {
    s("p0_w", c.rotor.p0_w);
    s("pi_w", c.rotor.pi_w);
    s("u_tip_mps", c.rotor.u_tip_mps);
    s("v0_mps", c.rotor.v0_mps);
    s("d_fuse", c.rotor.d_fuse);
    s("rho", c.rotor.rho);
    s("solidity", c.rotor.solidity);
    s("disc_area_m2", c.rotor.disc_area_m2);
  });
  v("mobility_kind", c.mobility_kind);
  v.object("gauss_markov", [&](auto& s) {
    s("alpha", c.gauss_markov.alpha);
    s("noise_scale_mps", c.gauss_markov.noise_scale_mps);
  });
  v.object("rpgm", [&](auto& s) {
    s("sigma_c_m", c.rpgm.sigma_c_m);
    s("deviation_radius_m", c.rpgm.deviation_radius_m);
    s("offset_step_mps", c.rpgm.offset_step_mps);
    s("waypoint_tolerance_m", c.rpgm.waypoint_tolerance_m);
  });
  v.object("kinematics", [&](auto& s) {
    s("inertia_beta", c.kinematics.inertia_beta);
    s("mech_noise_std_mps", c.kinematics.mech_noise_std_mps);
    s("v_z_max_mps", c.kinematics.v_z_max_mps);
    s("r_sense_m", c.kinematics.r_sense_m);
  });
  v.object("reward", [&](auto& s) {
    s("cov", c.reward.cov);
    s("ee", c.reward.ee);
    s("jr", c.reward.jr);
    s("jl", c.reward.jl);
    s("min_rate", c.reward.min_rate);
    s("ho", c.reward.ho);
    s("e_ref_bits_per_joule", c.reward.e_ref_bits_per_joule);
    s("epsilon", c.reward.epsilon);
    s("normalize_handoffs", c.reward.normalize_handoffs);
  });
  v("r_comm_m", c.r_comm_m);
  v("r_th_bps", c.r_th_bps);
  v("failure_schedule", c.failure_schedule);
  v("dt_s", c.dt_s);
  v("episode_len", c.episode_len);
  v("rng_seed", c.rng_seed);
}

template <class V>
void visit_train(V& v, TrainConfig& c) {
  v("actor_lr", c.actor_lr);
  v("critic_lr", c.critic_lr);
  v("gamma", c.gamma);
  v("gae_tau", c.gae_tau);
  v("ppo_epochs", c.ppo_epochs);
  v("batch_size", c.batch_size);
  v("clip_eps", c.clip_eps);
  v("huber_delta", c.huber_delta);
  v("entropy_start", c.entropy_start);
  v("entropy_end", c.entropy_end);
  v("lr_final_fraction", c.lr_final_fraction);
  v("grad_clip", c.grad_clip);
  v("optimizer", c.optimizer);
  v("normalize_advantages", c.normalize_advantages);
  v("shuffle_neighbors", c.shuffle_neighbors);
  v("episodes", c.episodes);
  v("env_count", c.env_count);
  v("hidden", c.hidden);
  v.object("critic", [&](auto& s) {
    s("hidden", c.critic_shape.hidden);
    s("attn_dim", c.critic_shape.attn_dim);
    s("head_hidden", c.critic_shape.head_hidden);
    s("gbs_anchor", c.critic_shape.gbs_anchor);
  });
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

ExperimentSpec from_json(const json& root) {
  Reader top(root, "");
  ExperimentSpec spec;
  std::string scenario_name = "suburban";
  top("scenario", scenario_name);
  spec.scenario = make_scenario(scenario_name);
  std::string controller = to_string(spec.controller);
  top("controller", controller);
  spec.controller = parse_controller(controller);
  top.mark("seeds");
  if (root.contains("seeds")) {
    const json& s = root["seeds"];
    if (!s.is_array()) type_error("seeds", "an array of non-negative integers");
    spec.seeds.clear();
    for (std::size_t i = 0; i < s.size(); ++i) {
      std::uint64_t v = 0;
      read_value(s[i], "seeds[" + std::to_string(i) + "]", v);
      spec.seeds.push_back(v);
    }
  }
  top.object("world", [&](auto& r) { visit_world(r, spec.scenario); });
  top.object("train", [&](auto& r) { visit_train(r, spec.train); });
  top("eval_episodes", spec.eval_episodes);
  top("checkpoint_every", spec.checkpoint_every);
  std::string out = spec.output_dir.string();
  top("output_dir", out);
  spec.output_dir = out;
  top.finish();
  return spec;
}

}  // namespace

void ExperimentSpec::validate() const {
  scenario.validate();
  train.validate();
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  std::set<std::uint64_t> distinct(seeds.begin(), seeds.end());
  if (distinct.size() != seeds.size()) throw ConfigError("seeds must be distinct");
  if (eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

ExperimentSpec parse_experiment(std::string_view json_text, std::span<const std::string> overrides) {
  json root = parse_json(json_text);
  if (!root.is_object()) throw ConfigError("config root must be a JSON object");
  for (const auto& o : overrides) apply_override(root, o);
  ExperimentSpec spec = from_json(root);
  spec.validate();
  return spec;
}

ExperimentSpec parse_experiment(std::string_view json_text) { return parse_experiment(json_text, {}); }

ExperimentSpec load_experiment(const fs::path& path, std::span<const std::string> overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment(ss.str(), overrides);
}

std::string experiment_to_json(const ExperimentSpec& spec) {
  ExperimentSpec copy = spec;
  json root = json::object();
  root["scenario"] = copy.scenario.scenario;
  root["controller"] = to_string(copy.controller);
  root["seeds"] = copy.seeds;
  root["eval_episodes"] = copy.eval_episodes;
  root["checkpoint_every"] = copy.checkpoint_every;
  root["output_dir"] = copy.output_dir.string();
  Writer top(root);
  top.object("world", [&](auto& w) { visit_world(w, copy.scenario); });
  top.object("train", [&](auto& w) { visit_train(w, copy.train); });
  return root.dump(2) + "\n";
}

std::string model_hash(const ExperimentSpec& spec) {
  const json j = {{"controller", to_string(spec.controller)},
                  {"num_uavs", spec.scenario.num_uavs},
                  {"hidden", spec.train.hidden},
                  {"critic",
                   {{"hidden", spec.train.critic_shape.hidden},
                    {"attn_dim", spec.train.critic_shape.attn_dim},
                    {"head_hidden", spec.train.critic_shape.head_hidden},
                    {"gbs_anchor", spec.train.critic_shape.gbs_anchor}}}};
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Statistics and tables

MeanCi mean_ci95(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("mean_ci95: no values");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  if (values.size() == 1) return {mean, mean, mean};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const boost::math::students_t dist(n - 1.0);
  const double half = boost::math::quantile(dist, 0.975) * sd / std::sqrt(n);
  return {mean, mean - half, mean + half};
}

std::size_t CsvTable::column(std::string_view name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw CsvError("no column named '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

namespace {

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

CsvTable parse_csv(std::string_view text, const std::string& source) {
  CsvTable table;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool have_header = false;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto fields = split_fields(line);
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (!have_header) {
      for (const auto& f : fields) {
        if (f.empty()) throw CsvError(where + "empty column name in header");
      }
      table.columns = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.columns.size()) {
      throw CsvError(where + "expected " + std::to_string(table.columns.size()) + " fields, got " +
                     std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const std::string& f = fields[c];
      char* parse_end = nullptr;
      const double v = std::strtod(f.c_str(), &parse_end);
      if (f.empty() || parse_end != f.c_str() + f.size()) {
        throw CsvError(where + "column '" + table.columns[c] + "': not a number '" + f + "'");
      }
      row.push_back(v);
    }
    table.rows.push_back(std::move(row));
  }
  if (!have_header) throw CsvError(source + ": empty file");
  return table;
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CsvError(path.string() + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), path.string());
}

std::string format_csv(const CsvTable& table) {
  std::string out;
  for (std::size_t c = 0; c < table.columns.size(); ++c) out += (c ? "," : "") + table.columns[c];
  out += "\n";
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + format_number(row[c]);
    out += "\n";
  }
  return out;
}

CsvTable aggregate(std::span<const CsvTable> tables) {
  if (tables.empty()) throw CsvError("aggregate: no tables");
  const CsvTable& first = tables.front();
  if (first.columns.empty()) throw CsvError("aggregate: no columns");
  for (const auto& t : tables) {
    if (t.columns != first.columns) throw CsvError("aggregate: column mismatch between inputs");
    if (t.rows.size() != first.rows.size()) throw CsvError("aggregate: row count mismatch between inputs");
  }
  CsvTable out;
  out.columns.push_back(first.columns[0]);
  for (std::size_t c = 1; c < first.columns.size(); ++c) {
    out.columns.push_back(first.columns[c] + "_mean");
    out.columns.push_back(first.columns[c] + "_ci_lo");
    out.columns.push_back(first.columns[c] + "_ci_hi");
  }
  std::vector<double> column_values(tables.size());
  for (std::size_t r = 0; r < first.rows.size(); ++r) {
    std::vector<double> row{first.rows[r][0]};
    for (const auto& t : tables) {
      if (t.rows[r][0] != first.rows[r][0]) {
        throw CsvError("aggregate: row " + std::to_string(r + 1) + " has mismatched '" + first.columns[0] + "'");
      }
    }
    for (std::size_t c = 1; c < first.columns.size(); ++c) {
      for (std::size_t i = 0; i < tables.size(); ++i) column_values[i] = tables[i].rows[r][c];
      const MeanCi ci = mean_ci95(column_values);
      row.insert(row.end(), {ci.mean, ci.lo, ci.hi});
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::string render_svg(const std::string& title, const std::string& x_label, std::span<const double> x,
                       std::span<const double> mean, std::span<const double> lo, std::span<const double> hi) {
  if (x.empty() || mean.size() != x.size() || lo.size() != x.size() || hi.size() != x.size()) {
    throw std::invalid_argument("render_svg: series lengths differ or are empty");
  }
  constexpr double W = 640, H = 400, L = 70, R = 20, T = 40, B = 50;
  const auto [xmin_it, xmax_it] = std::minmax_element(x.begin(), x.end());
  double xmin = *xmin_it, xmax = *xmax_it;
  double ymin = *std::min_element(lo.begin(), lo.end());
  double ymax = *std::max_element(hi.begin(), hi.end());
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) {
    const double pad = std::max(std::abs(ymin) * 0.05, 1e-9);
    ymin -= pad;
    ymax += pad;
  }
  auto px = [&](double v) { return L + (v - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double v) { return H - B - (v - ymin) / (ymax - ymin) * (H - T - B); };
  auto pt = [](double a, double b) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f,%.2f", a, b);
    return std::string(buf);
  };

  std::string band, line;
  for (std::size_t i = 0; i < x.size(); ++i) band += pt(px(x[i]), py(hi[i])) + " ";
  for (std::size_t i = x.size(); i-- > 0;) band += pt(px(x[i]), py(lo[i])) + " ";
  for (std::size_t i = 0; i < x.size(); ++i) line += pt(px(x[i]), py(mean[i])) + " ";

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  svg << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << L << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << format_number(xmin)
      << "</text>\n";
  svg << "<text x=\"" << W - R << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << format_number(xmax)
      << "</text>\n";
  svg << "<text x=\"" << L - 6 << "\" y=\"" << H - B << "\" text-anchor=\"end\">" << format_number(ymin)
      << "</text>\n";
  svg << "<text x=\"" << L - 6 << "\" y=\"" << T + 4 << "\" text-anchor=\"end\">" << format_number(ymax)
      << "</text>\n";
  svg << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << x_label
      << "</text>\n";
  svg << "<polygon points=\"" << band << "\" fill=\"steelblue\" fill-opacity=\"0.25\" stroke=\"none\"/>\n";
  svg << "<polyline points=\"" << line << "\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\"/>\n";
  svg << "</svg>\n";
  return svg.str();
}

// ---------------------------------------------------------------------------
// Recovery analysis

RecoveryStats recovery_stats(std::span<const double> coverage, int failure_step, int pre_window, double fraction,
                             int final_window) {
  const int n = static_cast<int>(coverage.size());
  if (failure_step <= 0 || failure_step >= n) throw std::invalid_argument("recovery_stats: failure step out of range");
  if (pre_window < 1 || final_window < 1) throw std::invalid_argument("recovery_stats: windows must be >= 1");
  RecoveryStats s;
  const int pre_start = std::max(0, failure_step - pre_window);
  for (int t = pre_start; t < failure_step; ++t) s.pre_mean += coverage[t];
  s.pre_mean /= failure_step - pre_start;
  s.trough = coverage[failure_step];
  s.trough_step = failure_step;
  for (int t = failure_step; t < n; ++t) {
    if (coverage[t] < s.trough) {
      s.trough = coverage[t];
      s.trough_step = t;
    }
  }
  const double target = fraction * s.pre_mean;
  for (int t = failure_step; t < n; ++t) {
    if (coverage[t] >= target) {
      s.recovery_steps = t - failure_step + 1;
      break;
    }
  }
  const int final_start = std::max(0, n - final_window);
  for (int t = final_start; t < n; ++t) s.final_mean += coverage[t];
  s.final_mean /= n - final_start;
  return s;
}

// ---------------------------------------------------------------------------
// Commands

namespace {

constexpr std::uint64_t kEvalTag = 0xe7a1;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
}

fs::path seed_file(const fs::path& dir, const char* stem, std::uint64_t seed, const char* ext) {
  return dir / (std::string(stem) + "_seed" + std::to_string(seed) + ext);
}

bool is_learner(ControllerKind k) { return k != ControllerKind::KMeans; }

}  // namespace

TrainOutputs cmd_train(const ExperimentSpec& spec) {
  spec.validate();
  ensure_dir(spec.output_dir);
  write_text(spec.output_dir / "config.json", experiment_to_json(spec));
  TrainOutputs outputs;
  std::vector<CsvTable> tables;
  for (std::uint64_t seed : spec.seeds) {
    TrainConfig tc = spec.train;
    tc.seed = seed;
    const fs::path csv_path = seed_file(spec.output_dir, "train", seed, ".csv");
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + csv_path.string());
    csv << train_csv_header() << "\n";
    const nn::CheckpointMeta meta{seed, model_hash(spec), to_string(spec.controller)};
    TrainResult result = train(spec.scenario, tc, spec.controller, [&](const EpisodeLog& log, const Agents& agents) {
      csv << train_csv_row(log) << "\n";
      if (spec.checkpoint_every > 0 && agents.critic && (log.episode + 1) % spec.checkpoint_every == 0) {
        const fs::path p = spec.output_dir / ("checkpoint_seed" + std::to_string(seed) + "_ep" +
                                              std::to_string(log.episode + 1) + ".json");
        nn::save_checkpoint(p.string(), meta, agents.actor.params(), agents.critic->params());
      }
    });
    csv.close();
    if (!csv) throw std::runtime_error("write failed: " + csv_path.string());
    outputs.seed_csvs.push_back(csv_path);
    if (result.agents.critic) {
      const fs::path ckpt = seed_file(spec.output_dir, "checkpoint", seed, ".json");
      nn::save_checkpoint(ckpt.string(), meta, result.agents.actor.params(), result.agents.critic->params());
      outputs.checkpoints.push_back(ckpt);
    }
    tables.push_back(read_csv(csv_path));
  }
  outputs.aggregate_csv = spec.output_dir / "train_aggregate.csv";
  write_text(outputs.aggregate_csv, format_csv(aggregate(tables)));
  return outputs;
}

Agents load_agents(const ExperimentSpec& spec, const fs::path& checkpoint) {
  std::ifstream in(checkpoint);
  if (!in) throw ConfigError("cannot open checkpoint " + checkpoint.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::parse_error&) {
    throw ConfigError("checkpoint manifest " + checkpoint.string() + " is not valid JSON");
  }
  const std::string expected = model_hash(spec);
  if (!manifest.contains("config_hash") || manifest["config_hash"] != expected) {
    throw ConfigError("checkpoint " + checkpoint.string() + " was trained with a different model configuration (hash " +
                      manifest.value("config_hash", std::string("?")) + ", expected " + expected + ")");
  }
  Agents agents = make_agents(spec.scenario, spec.train, spec.controller);
  if (!agents.critic) throw ConfigError("controller " + to_string(spec.controller) + " has no checkpoint");
  nn::load_checkpoint(checkpoint.string(), agents.actor.params(), agents.critic->params());
  return agents;
}

std::unique_ptr<Policy> make_policy(const ExperimentSpec& spec, const Agents* agents, std::uint64_t seed) {
  if (!is_learner(spec.controller)) return std::make_unique<KMeansPolicy>(seed);
  if (!agents) throw std::invalid_argument("make_policy: learner controller needs agents");
  return std::make_unique<GreedyActorPolicy>(agents->actor);
}

namespace {

std::optional<Agents> agents_for_seed(const ExperimentSpec& spec, const std::optional<fs::path>& checkpoint,
                                      std::uint64_t seed) {
  if (!is_learner(spec.controller)) return std::nullopt;
  return load_agents(spec, checkpoint ? *checkpoint : seed_file(spec.output_dir, "checkpoint", seed, ".json"));
}

}  // namespace

fs::path cmd_eval(const ExperimentSpec& spec, const std::optional<fs::path>& checkpoint) {
  spec.validate();
  ensure_dir(spec.output_dir);
  std::string steps = "seed,episode," + step_csv_header() + "\n";
  std::string summary = "seed,episode,mean_utility,mean_c_cov,mean_e_eff,mean_jfi_rate,total_handoffs\n";
  Environment env(spec.scenario);
  for (std::uint64_t seed : spec.seeds) {
    const std::optional<Agents> agents = agents_for_seed(spec, checkpoint, seed);
    auto policy = make_policy(spec, agents ? &*agents : nullptr, seed);
    for (int ep = 0; ep < spec.eval_episodes; ++ep) {
      const auto metrics = run_episode(env, *policy, derive_seed(seed, kEvalTag, static_cast<std::uint64_t>(ep)));
      double u = 0, cov = 0, ee = 0, jr = 0, ho = 0;
      const std::string prefix = std::to_string(seed) + "," + std::to_string(ep) + ",";
      for (const auto& m : metrics) {
        steps += prefix + step_csv_row(m) + "\n";
        u += m.utility;
        cov += m.c_cov;
        ee += m.e_eff;
        jr += m.jfi_rate;
        ho += m.handoffs;
      }
      const double n = static_cast<double>(metrics.size());
      summary += prefix + format_number(u / n) + "," + format_number(cov / n) + "," + format_number(ee / n) + "," +
                 format_number(jr / n) + "," + format_number(ho) + "\n";
    }
  }
  write_text(spec.output_dir / "eval_steps.csv", steps);
  const fs::path summary_path = spec.output_dir / "eval_summary.csv";
  write_text(summary_path, summary);
  return summary_path;
}

FailureEvalResult cmd_failure_eval(const ExperimentSpec& spec, const std::optional<fs::path>& checkpoint) {
  spec.validate();
  if (spec.scenario.failure_schedule.empty()) throw ConfigError("failure-eval needs a non-empty failure_schedule");
  int failure_step = spec.scenario.failure_schedule.front().step;
  for (const auto& f : spec.scenario.failure_schedule) failure_step = std::min(failure_step, f.step);
  if (failure_step == 0) throw ConfigError("failure-eval needs the first failure after step 0");
  ensure_dir(spec.output_dir);

  ScenarioConfig intact = spec.scenario;
  intact.failure_schedule.clear();
  Environment with_failure(spec.scenario);
  Environment without_failure(intact);

  FailureEvalResult result;
  std::string trace = "arm,seed,episode,t,c_cov,jfi_rate,jfi_load,active_uav_count,utility\n";
  std::string recovery =
      "seed,episode,failure_step,pre_mean,trough,trough_step,recovery_steps,final_mean,intact_final_mean\n";
  for (std::uint64_t seed : spec.seeds) {
    const std::optional<Agents> agents = agents_for_seed(spec, checkpoint, seed);
    for (int ep = 0; ep < spec.eval_episodes; ++ep) {
      const std::uint64_t reset_seed = derive_seed(seed, kEvalTag, static_cast<std::uint64_t>(ep));
      auto p1 = make_policy(spec, agents ? &*agents : nullptr, seed);
      auto p2 = make_policy(spec, agents ? &*agents : nullptr, seed);
      const auto failed = run_episode(with_failure, *p1, reset_seed);
      const auto intact_run = run_episode(without_failure, *p2, reset_seed);
      std::vector<double> cov, cov_intact;
      auto emit = [&](const char* arm, const std::vector<StepMetrics>& ms, std::vector<double>& c) {
        for (const auto& m : ms) {
          c.push_back(m.c_cov);
          trace += std::string(arm) + "," + std::to_string(seed) + "," + std::to_string(ep) + "," +
                   std::to_string(m.t) + "," + format_number(m.c_cov) + "," + format_number(m.jfi_rate) + "," +
                   format_number(m.jfi_load) + "," + std::to_string(m.active_uav_count) + "," +
                   format_number(m.utility) + "\n";
        }
      };
      emit("failure", failed, cov);
      emit("no_failure", intact_run, cov_intact);
      const RecoveryStats rs = recovery_stats(cov, failure_step);
      const RecoveryStats ri = recovery_stats(cov_intact, failure_step);
      recovery += std::to_string(seed) + "," + std::to_string(ep) + "," + std::to_string(failure_step) + "," +
                  format_number(rs.pre_mean) + "," + format_number(rs.trough) + "," + std::to_string(rs.trough_step) +
                  "," + std::to_string(rs.recovery_steps.value_or(-1)) + "," + format_number(rs.final_mean) + "," +
                  format_number(ri.final_mean) + "\n";
      result.stats.push_back(rs);
    }
  }
  result.trace_csv = spec.output_dir / "failure_trace.csv";
  result.recovery_csv = spec.output_dir / "failure_recovery.csv";
  write_text(result.trace_csv, trace);
  write_text(result.recovery_csv, recovery);
  return result;
}

std::vector<fs::path> cmd_plot(std::span<const fs::path> inputs, const fs::path& out_dir) {
  if (inputs.empty()) throw CsvError("plot: no input files");
  std::vector<CsvTable> tables;
  for (const auto& p : inputs) {
    tables.push_back(read_csv(p));
    if (tables.back().rows.empty()) throw CsvError(p.string() + ": no data rows");
  }
  const CsvTable agg = aggregate(tables);
  const CsvTable& first = tables.front();

  std::vector<std::pair<fs::path, std::string>> files;
  files.emplace_back(out_dir / "plot_data.csv", format_csv(agg));
  std::vector<double> x;
  for (const auto& row : agg.rows) x.push_back(row[0]);
  for (std::size_t c = 1; c < first.columns.size(); ++c) {
    std::vector<double> mean, lo, hi;
    const std::size_t base = 1 + 3 * (c - 1);
    for (const auto& row : agg.rows) {
      mean.push_back(row[base]);
      lo.push_back(row[base + 1]);
      hi.push_back(row[base + 2]);
    }
    const std::string title = first.columns[c] + " (n=" + std::to_string(tables.size()) + ", 95% CI)";
    files.emplace_back(out_dir / (first.columns[c] + ".svg"), render_svg(title, first.columns[0], x, mean, lo, hi));
  }
  ensure_dir(out_dir);
  std::vector<fs::path> written;
  for (const auto& [path, text] : files) {
    write_text(path, text);
    written.push_back(path);
  }
  return written;
}

}  // namespace agin

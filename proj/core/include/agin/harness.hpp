#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "agin/train.hpp"

namespace agin {

struct ExperimentSpec {
  ScenarioConfig scenario = make_scenario("suburban");
  TrainConfig train;
  ControllerKind controller = ControllerKind::TagMappo;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  int eval_episodes = 5;
  int checkpoint_every = 0;  // 0: only the final checkpoint
  std::filesystem::path output_dir = "runs";

  /// Throws ConfigError.
  void validate() const;
};

/// JSON layout:
///   { "scenario": "<profile>", "controller": ..., "seeds": [...], "eval_episodes": n,
///     "checkpoint_every": n, "output_dir": "...", "world": {...}, "train": {...} }
/// "world" keys are ScenarioConfig field names applied on top of the named
/// profile; "train" keys are TrainConfig field names. Unknown keys, wrong
/// types and invariant violations raise ConfigError.
ExperimentSpec parse_experiment(std::string_view json_text);
/// `overrides` are "dotted.key=value" strings; the value is read as JSON and
/// falls back to a plain string.
ExperimentSpec load_experiment(const std::filesystem::path& path, std::span<const std::string> overrides = {});
ExperimentSpec parse_experiment(std::string_view json_text, std::span<const std::string> overrides);
/// Fully resolved spec (every field present); parses back to an equal spec.
std::string experiment_to_json(const ExperimentSpec& spec);

/// Hash over the fields that determine network shapes (controller, K_U, sizes).
std::string model_hash(const ExperimentSpec& spec);

// ---------------------------------------------------------------------------
// Statistics and tables

struct MeanCi {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Student-t 95% interval of the mean; collapses to the mean for one value.
MeanCi mean_ci95(std::span<const double> values);

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(std::string_view name) const;  // throws CsvError
};

/// Numeric CSV with a header row. Errors name the source and the 1-based line.
CsvTable parse_csv(std::string_view text, const std::string& source);
CsvTable read_csv(const std::filesystem::path& path);
std::string format_csv(const CsvTable& table);

/// Row-aligned aggregate over tables with identical columns. Output columns:
/// the first input column, then <col>_mean, <col>_ci_lo, <col>_ci_hi per remaining column.
CsvTable aggregate(std::span<const CsvTable> tables);

/// Line chart with a shaded band. Pure string output.
std::string render_svg(const std::string& title, const std::string& x_label, std::span<const double> x,
                       std::span<const double> mean, std::span<const double> lo, std::span<const double> hi);

// ---------------------------------------------------------------------------
// Recovery analysis

struct RecoveryStats {
  double pre_mean = 0.0;                // mean over [failure - pre_window, failure)
  double trough = 0.0;                  // minimum at or after the failure
  int trough_step = 0;
  std::optional<int> recovery_steps;    // failure sample counts as step 1
  double final_mean = 0.0;              // mean over the last final_window samples
};

/// Throws std::invalid_argument unless 0 < failure_step < coverage.size().
RecoveryStats recovery_stats(std::span<const double> coverage, int failure_step, int pre_window = 20,
                             double fraction = 0.9, int final_window = 20);

// ---------------------------------------------------------------------------
// Commands

struct TrainOutputs {
  std::vector<std::filesystem::path> seed_csvs;
  std::filesystem::path aggregate_csv;
  std::vector<std::filesystem::path> checkpoints;
};

/// Trains every seed and writes train_seed<s>.csv, train_aggregate.csv,
/// checkpoint_seed<s>.json(+.bin) and the resolved config.json.
TrainOutputs cmd_train(const ExperimentSpec& spec);

/// Loads a checkpoint into freshly built agents after checking the model hash.
/// Throws ConfigError on a hash or controller mismatch.
Agents load_agents(const ExperimentSpec& spec, const std::filesystem::path& checkpoint);

/// Greedy policy for learners, K-Means otherwise.
std::unique_ptr<Policy> make_policy(const ExperimentSpec& spec, const Agents* agents, std::uint64_t seed);

/// eval_episodes per seed; writes eval_steps.csv (seed, episode, step columns)
/// and eval_summary.csv (per-episode means). Returns the summary path.
std::filesystem::path cmd_eval(const ExperimentSpec& spec, const std::optional<std::filesystem::path>& checkpoint);

struct FailureEvalResult {
  std::filesystem::path trace_csv;
  std::filesystem::path recovery_csv;
  std::vector<RecoveryStats> stats;  // one per (seed, episode) of the failure arm
};

/// Paired episodes with the configured failure schedule and with none (same
/// reset seeds). Needs at least one scheduled failure.
FailureEvalResult cmd_failure_eval(const ExperimentSpec& spec, const std::optional<std::filesystem::path>& checkpoint);

/// Aggregates same-shaped CSVs; writes plot_data.csv and one SVG per metric.
/// Nothing is written if any input fails to parse or is empty.
std::vector<std::filesystem::path> cmd_plot(std::span<const std::filesystem::path> inputs,
                                            const std::filesystem::path& out_dir);

}  // namespace agin

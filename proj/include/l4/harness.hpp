#pragma once

// Experiment runner: seeded multi-restart runs, batch-size sweeps and
// optimizer comparison tables.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "l4/baselines.hpp"
#include "l4/data_io.hpp"
#include "l4/l4.hpp"
#include "l4/lma.hpp"

namespace l4 {

enum class ProblemKind { Regression, Mnist, Synthetic };
enum class OptimizerKind { L4Mom, L4Adam, Sgd, Momentum, Adam, Lma };

const char* to_string(ProblemKind k) noexcept;
const char* to_string(OptimizerKind k) noexcept;

struct ProblemSpec {
  ProblemKind kind = ProblemKind::Regression;
  // regression
  double kappa = 1e10;
  int scale = 1;
  double init_std = 1e-3;
  // shared: sample count (regression dataset size, synthetic size, MNIST subset)
  std::size_t samples = 1000;
  // 0 means full batch
  std::size_t batch_size = 0;
  // classification
  std::string images;
  std::string labels;
  std::size_t dim = 784;
  std::size_t classes = 10;
  std::uint64_t data_seed = 7;
  std::vector<std::size_t> hidden{300, 100};

  bool is_classification() const noexcept { return kind != ProblemKind::Regression; }
  /// True when two specs describe the same objective (batch size may differ).
  bool same_problem(const ProblemSpec& other) const noexcept;
};

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::L4Adam;
  L4Config l4{};
  BaselineConfig baseline{};
  LmaConfig lma{};
  /// Non-empty for baselines: grid-search lr over these values first.
  std::vector<double> lr_grid;

  std::string label() const;
};

struct ExperimentSpec {
  std::string name;
  ProblemSpec problem;
  OptimizerSpec optimizer;
  std::size_t restarts = 1;
  std::optional<std::size_t> max_steps;
  std::optional<std::size_t> max_epochs;
  std::uint64_t seed_base = 1;
  std::optional<double> stop_loss;
  std::size_t log_every = 0;  // 0: every step for regression, every 10 for classification
  std::size_t threads = 1;

  void validate() const;
  std::size_t effective_log_every() const noexcept;
};

/// Parses the JSON experiment description (see README for the schema).
/// Unknown keys are rejected with ContractError.
ExperimentSpec parse_experiment(std::string_view json_text);
std::string experiment_to_json(const ExperimentSpec& spec);

/// 8 log-spaced points per decade over [1e-6, 10].
std::vector<double> default_lr_grid();

struct RunResult {
  std::string run_id;
  std::uint64_t seed = 0;
  std::size_t steps = 0;  // parameter updates (LMA: linear solves)
  double final_loss = 0.0;
  std::optional<std::size_t> steps_to_target;
  bool diverged = false;
  std::optional<std::size_t> divergence_step;
  std::string divergence_reason;
  double wallclock_s = 0.0;
  std::optional<double> min_gv;          // L4 only: smallest g^T v seen
  std::optional<double> final_accuracy;  // classification only
  std::vector<MetricsRow> rows;
};

/// Log-space aggregate over runs on the union of logged steps. Runs that
/// stopped early hold their last logged loss; diverged runs are excluded.
struct Trajectory {
  std::vector<std::size_t> steps;
  std::vector<double> data_points;
  std::vector<double> mean;
  std::vector<double> min;
  std::vector<double> max;
};

struct GridPoint {
  double lr = 0.0;
  double log_mean_final_loss = 0.0;
};

struct Summary {
  ExperimentSpec spec;
  std::string dataset;  // "regression", "mnist", "synthetic" or "synthetic-fallback"
  std::optional<double> selected_lr;
  std::vector<GridPoint> grid;
  std::vector<RunResult> runs;
  Trajectory trajectory;
};

struct RunOptions {
  bool keep_rows = true;
};

/// One restart (seed = seed_base + restart). Divergence is recorded, not thrown.
RunResult run_single(const ExperimentSpec& spec, std::size_t restart, RunOptions options = {});

/// All restarts plus aggregation, in memory. Performs the lr grid search when
/// the optimizer spec carries one.
Summary run_experiment(const ExperimentSpec& spec);

/// run_experiment, then writes <out>/<run_id>.csv per run and <out>/summary.json.
Summary run(const ExperimentSpec& spec, const std::filesystem::path& out_dir);

Trajectory aggregate_log_space(std::span<const RunResult> runs, std::size_t samples_per_step);
std::string summary_to_json(const Summary& summary);

/// One run() per batch size under <out>/bs<size>/, plus <out>/sweep.json.
std::vector<std::pair<std::size_t, Summary>> sweep_batch_size(
    const ExperimentSpec& spec, std::span<const std::size_t> sizes,
    const std::filesystem::path& out_dir);
std::string sweep_to_json(std::span<const std::pair<std::size_t, Summary>> sweep);

struct ComparisonRow {
  std::string label;
  std::size_t runs = 0;
  std::size_t converged = 0;
  double steps_mean = 0.0;
  double steps_std = 0.0;
  double seconds_mean = 0.0;
  double seconds_std = 0.0;
  double log_mean_final_loss = 0.0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;

  std::string to_csv() const;
  std::string to_text() const;
};

/// Table from already computed summaries. Throws ContractError if they cover
/// different problems.
ComparisonTable tabulate(std::span<const Summary> summaries);

/// Runs each spec under <out>/<index>_<label>/ and writes comparison.csv and
/// comparison.txt.
ComparisonTable compare(std::span<const ExperimentSpec> specs, const std::filesystem::path& out_dir);

}  // namespace l4

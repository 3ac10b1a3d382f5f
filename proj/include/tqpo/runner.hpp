#pragma once

#include "tqpo/io.hpp"
#include "tqpo/trainer.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace tqpo {

struct RunResult {
  std::vector<EpochMetrics> metrics;
  TrainerState final_state;
  RunSummary summary;
};

/// Trains for config.epochs. With a non-empty out_dir the run writes
/// config.ini, metrics.csv, metrics.jsonl, summary.json and, every
/// config.checkpoint_every epochs, checkpoints/epoch_NNNNN.ckpt. Metrics rows
/// are flushed as each epoch ends. `on_epoch` is called after every epoch.
RunResult run_training(const RunConfig& config, const std::filesystem::path& out_dir = {},
                       const std::function<void(const EpochMetrics&)>& on_epoch = {});

/// One row of the sweep aggregate: mean and sample standard deviation over
/// seeds for one (variant, env, epsilon) group.
struct AggregateRow {
  std::string variant;
  std::string env;
  double epsilon = 0.0;
  int n_runs = 0;
  double return_mean = 0.0, return_std = 0.0;
  double safety_mean = 0.0, safety_std = 0.0;
  double cost_mean = 0.0, cost_std = 0.0;
  double quantile_mean = 0.0, quantile_std = 0.0;
};

struct SweepRecord {
  std::string variant;
  std::string env;
  double epsilon = 0.0;
  RunSummary summary;
};

/// Groups are emitted in sorted key order, so the result does not depend on
/// the order of `records`.
std::vector<AggregateRow> aggregate(const std::vector<SweepRecord>& records);
std::string aggregate_to_csv(const std::vector<AggregateRow>& rows);
std::vector<AggregateRow> parse_aggregate_csv(const std::string& text);

/// Mean and sample standard deviation (0 for a single value).
std::pair<double, double> mean_std(const std::vector<double>& xs);

/// Per-epoch mean and standard deviation of one metric across the runs of
/// a group, with the group's threshold and 1 - epsilon as reference columns.
struct PlotRow {
  std::string group;
  int epoch = 0;
  double mean = 0.0;
  double std = 0.0;
  int n_runs = 0;
  double threshold_d = 0.0;
  double level = 0.0;
};

struct PlotSeries {
  std::string group;
  double threshold_d = 0.0;
  double level = 0.0;
  std::vector<std::vector<EpochMetrics>> runs;
};

/// Metric names accepted by plot_bands (every metrics column except epoch).
const std::vector<std::string>& plot_metric_names();
std::vector<PlotRow> plot_bands(const std::vector<PlotSeries>& series, const std::string& metric);
std::string plot_to_csv(const std::vector<PlotRow>& rows);
std::vector<PlotRow> parse_plot_csv(const std::string& text);

/// Display name of a run's environment (preset name or file stem).
std::string env_label(const RunConfig& config);

}  // namespace tqpo

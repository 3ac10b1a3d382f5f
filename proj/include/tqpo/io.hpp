#pragma once

#include "tqpo/core.hpp"
#include "tqpo/trainer.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace tqpo {

/// Column order of the metrics CSV.
inline constexpr const char* kMetricsHeader =
    "epoch,avg_return,avg_cost,cost_quantile,safety_probability,lambda,q_tracker,eta_used,F_q_at_d";

/// Shortest decimal text that reads back to the same double.
std::string format_double(double x);

std::string metrics_csv_row(const EpochMetrics& m);
std::string metrics_json_line(const EpochMetrics& m);

/// Reads a metrics CSV written by write/append. Throws ConfigError on a bad
/// header or row.
std::vector<EpochMetrics> read_metrics_csv(const std::filesystem::path& path);
std::vector<EpochMetrics> parse_metrics_csv(const std::string& text);
std::vector<EpochMetrics> read_metrics_jsonl(const std::filesystem::path& path);

/// Means of the last `window` epochs (fewer if the run is shorter).
struct RunSummary {
  int epochs = 0;
  int window = 0;
  double final_return = 0.0;
  double final_safety_probability = 0.0;
  double final_avg_cost = 0.0;
  double final_cost_quantile = 0.0;
  double final_lambda = 0.0;

  friend bool operator==(const RunSummary&, const RunSummary&) = default;
};

RunSummary summarize(const std::vector<EpochMetrics>& metrics, int window = 10);
std::string summary_to_json(const RunSummary& s, const RunConfig& config);
RunSummary summary_from_json(const std::string& text);

// Checkpoint layout (all integers and floats little-endian):
//   char[8]  "TQPOCKPT"
//   u32      format version
//   i32      epoch
//   policy:  u8 head, architecture, u64 n, f64[n] theta
//   value:   architecture, u64 n, f64[n] phi
//   tracker: f64 q_current, f64 level, u64 update_count, u8 initialized
//   multiplier: f64 lambda, f64 delta, u8 mode, f64 eta_plus, f64 eta_minus, f64 last_eta
//   rng:     u64 key, u64 counter (rollouts), then the same for bootstrap
// An architecture is u32 input_dim, u32 n_hidden, u32[n_hidden], u32 output_dim, u8 bias.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const TrainerState& state);
TrainerState read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const TrainerState& state);
TrainerState load_checkpoint(const std::filesystem::path& path);

}  // namespace tqpo

#pragma once

#include <string>
#include <vector>

namespace bapolab {

// One training update. Field order here is the CSV column order.
struct MetricsRow {
  int step = 0;
  int epoch = 0;
  double mean_reward = 0.0;
  double policy_entropy = 0.0;  // batch-token mean of per-state entropies, pre-update
  double grad_norm = 0.0;       // L2 over touched logits
  double pos_ratio = 0.0;
  double c_low = 0.0;
  double c_high = 0.0;
  double clip_fraction_pos = 0.0;
  double clip_fraction_neg = 0.0;
  double mean_is_ratio_deviation = 0.0;  // mean |r - 1| over batch tokens, pre-update
};

inline constexpr const char* kMetricsCsvHeader =
    "step,epoch,mean_reward,policy_entropy,grad_norm,pos_ratio,c_low,c_high,"
    "clip_fraction_pos,clip_fraction_neg,mean_is_ratio_deviation";

// Shortest-deterministic double formatting used for all CSV output.
std::string format_double(double v);

std::string metrics_to_csv(const std::vector<MetricsRow>& rows);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

// Numeric CSV with a header line. Parse errors carry 1-based line numbers.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int column_index(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text, const std::string& origin);

}  // namespace bapolab

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "egfn/trainer.hpp"

namespace egfn {

// One `key=v1,v2,...` grid dimension.
struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

GridAxis parse_grid_axis(const std::string& text);
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

// Cartesian product in row-major order (last axis varies fastest). Each cell
// is a list of `key=value` overrides.
std::vector<std::vector<std::string>> grid_cells(const std::vector<GridAxis>& axes);

// Final-row metrics summarised per cell.
inline const std::vector<std::string>& aggregate_metric_names() {
  static const std::vector<std::string> names{"loss",         "modes_cells", "modes_regions",
                                              "l1_empirical", "l1_exact",    "top100",
                                              "reward_calls", "states_visited"};
  return names;
}

std::vector<std::optional<double>> final_metric_values(const MetricsRow& row);

struct MetricStats {
  std::optional<double> mean;
  std::optional<double> variance;  // population variance (divide by n)
};

// Per metric, over the runs that report it.
std::vector<MetricStats> aggregate_runs(const std::vector<MetricsRow>& finals);

struct SweepRun {
  std::size_t cell = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string message;
  std::optional<MetricsRow> final_row;
};

struct SweepResult {
  std::vector<GridAxis> axes;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<std::string>> cells;
  std::vector<SweepRun> runs;

  std::size_t failures() const;
};

// One training run per cell and seed under out_dir/cell_<i>/seed_<s>. A
// failing run is recorded and the sweep moves on.
SweepResult run_sweep(const std::filesystem::path& config_path,
                      const std::vector<std::string>& base_overrides,
                      const std::vector<GridAxis>& axes, const std::vector<std::uint64_t>& seeds,
                      const std::filesystem::path& out_dir, int workers);

// Header: cell,<axis keys>,seeds,runs,failed,<metric>_mean,<metric>_var,...
// Seeds are written verbatim, separated by ';'.
void write_aggregate_csv(std::ostream& out, const SweepResult& result);
void write_runs_csv(std::ostream& out, const SweepResult& result);

}  // namespace egfn

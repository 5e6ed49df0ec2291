#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "egfn/config.hpp"
#include "egfn/trainer.hpp"

namespace egfn {

inline constexpr const char* kMetricsHeader =
    "step,loss,log_z,states_visited,reward_calls,modes_cells,modes_regions,l1_empirical,"
    "l1_exact,top100,buffer_size,wall_ms";

// Shortest text that reads back to the same double.
std::string format_real(double v);

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const MetricsRow& row);

// Parses a metrics.csv, rejecting any header other than kMetricsHeader.
std::vector<MetricsRow> read_metrics_csv(std::istream& in);

// `step,length,count` rows, one per nonzero bin.
void write_length_hist_csv(std::ostream& out, const std::vector<LengthHistogram>& hists);

// Binary parameter dump, little-endian:
//   8 bytes  "EGFNPARM"
//   u32      format version (1)
//   u32      objective (0 FM, 1 DB, 2 TB)
//   u32      layer count L
//   L x (u32 inputs, u32 outputs)
//   f64      log Z
//   u64      value count N
//   N x f64  values (per layer, row-major, each row = weights then bias)
void write_params(std::ostream& out, const GfnAgent& agent);

struct ParamDump {
  ObjectiveKind objective = ObjectiveKind::kTB;
  std::vector<std::pair<std::size_t, std::size_t>> layers;
  double log_z = 0.0;
  std::vector<double> values;
};
ParamDump read_params(std::istream& in);

nlohmann::json run_summary(const RunConfig& cfg, const RunResult& result, const Environment& env,
                           int workers);

// Output directory for a configured dir: absolute paths are kept, relative
// ones are placed under $EGFN_OUTPUT_ROOT when it is set.
std::filesystem::path resolve_output_dir(const std::string& dir);

// Runs training and writes metrics.csv (streamed), summary.json,
// length_hist.csv, and optionally buffer_snapshot.txt and final_params.bin.
// On a non-finite abort writes nonfinite_dump.txt and rethrows.
RunResult train_to_directory(const RunConfig& cfg, const std::filesystem::path& dir, int workers);

}  // namespace egfn

#include "egfn/sweep.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include "egfn/artifacts.hpp"
#include "egfn/config.hpp"
#include "egfn/errors.hpp"

namespace egfn {

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(part);
  if (!text.empty() && text.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

GridAxis parse_grid_axis(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size()) {
    throw ConfigError("grid '" + text + "' must look like key=v1,v2,...");
  }
  GridAxis axis;
  axis.key = text.substr(0, eq);
  axis.values = split(text.substr(eq + 1), ',');
  for (const std::string& v : axis.values) {
    if (v.empty()) throw ConfigError("grid '" + text + "' has an empty value");
  }
  return axis;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const std::string& s : split(text, ',')) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (s.empty() || pos != s.size() || s.front() == '-') {
      throw ConfigError("seed list entry '" + s + "' is not a nonnegative integer");
    }
    seeds.push_back(v);
  }
  if (seeds.empty()) throw ConfigError("seed list is empty");
  return seeds;
}

std::vector<std::vector<std::string>> grid_cells(const std::vector<GridAxis>& axes) {
  std::vector<std::vector<std::string>> cells{{}};
  for (const GridAxis& axis : axes) {
    std::vector<std::vector<std::string>> next;
    for (const auto& prefix : cells) {
      for (const std::string& v : axis.values) {
        auto c = prefix;
        c.push_back(axis.key + "=" + v);
        next.push_back(std::move(c));
      }
    }
    cells = std::move(next);
  }
  return cells;
}

std::vector<std::optional<double>> final_metric_values(const MetricsRow& row) {
  auto count = [](const std::optional<std::size_t>& v) -> std::optional<double> {
    if (!v) return std::nullopt;
    return static_cast<double>(*v);
  };
  return {row.loss,
          count(row.modes_cells),
          count(row.modes_regions),
          row.l1_empirical,
          row.l1_exact,
          row.top100,
          static_cast<double>(row.reward_calls),
          static_cast<double>(row.states_visited)};
}

std::vector<MetricStats> aggregate_runs(const std::vector<MetricsRow>& finals) {
  const std::size_t m = aggregate_metric_names().size();
  std::vector<std::vector<double>> values(m);
  for (const MetricsRow& row : finals) {
    const auto v = final_metric_values(row);
    for (std::size_t i = 0; i < m; ++i) {
      if (v[i]) values[i].push_back(*v[i]);
    }
  }
  std::vector<MetricStats> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (values[i].empty()) continue;
    const double n = static_cast<double>(values[i].size());
    double mean = 0.0;
    for (double x : values[i]) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : values[i]) var += (x - mean) * (x - mean);
    out[i].mean = mean;
    out[i].variance = var / n;
  }
  return out;
}

std::size_t SweepResult::failures() const {
  std::size_t n = 0;
  for (const SweepRun& r : runs) n += r.ok ? 0 : 1;
  return n;
}

SweepResult run_sweep(const std::filesystem::path& config_path,
                      const std::vector<std::string>& base_overrides,
                      const std::vector<GridAxis>& axes, const std::vector<std::uint64_t>& seeds,
                      const std::filesystem::path& out_dir, int workers) {
  SweepResult result;
  result.axes = axes;
  result.seeds = seeds;
  result.cells = grid_cells(axes);
  std::filesystem::create_directories(out_dir);
  for (std::size_t c = 0; c < result.cells.size(); ++c) {
    for (std::uint64_t seed : seeds) {
      SweepRun run;
      run.cell = c;
      run.seed = seed;
      try {
        auto overrides = base_overrides;
        overrides.insert(overrides.end(), result.cells[c].begin(), result.cells[c].end());
        overrides.push_back("seed=" + std::to_string(seed));
        const RunConfig cfg = load_config(config_path, overrides);
        const auto dir = out_dir / ("cell_" + std::to_string(c)) / ("seed_" + std::to_string(seed));
        const RunResult r = train_to_directory(cfg, dir, workers);
        if (!r.record.rows.empty()) run.final_row = r.record.rows.back();
        run.ok = true;
      } catch (const std::exception& e) {
        run.message = e.what();
        log_warning("sweep cell " + std::to_string(c) + " seed " + std::to_string(seed) +
                    " failed: " + e.what());
      }
      result.runs.push_back(std::move(run));
    }
  }
  return result;
}

void write_aggregate_csv(std::ostream& out, const SweepResult& result) {
  out << "cell";
  for (const GridAxis& a : result.axes) out << ',' << a.key;
  out << ",seeds,runs,failed";
  for (const std::string& m : aggregate_metric_names()) out << ',' << m << "_mean," << m << "_var";
  out << '\n';
  for (std::size_t c = 0; c < result.cells.size(); ++c) {
    std::vector<MetricsRow> finals;
    std::size_t runs = 0, failed = 0;
    for (const SweepRun& r : result.runs) {
      if (r.cell != c) continue;
      ++runs;
      if (!r.ok) {
        ++failed;
      } else if (r.final_row) {
        finals.push_back(*r.final_row);
      }
    }
    out << c;
    for (std::size_t a = 0; a < result.axes.size(); ++a) {
      const std::string& kv = result.cells[c][a];
      out << ',' << kv.substr(kv.find('=') + 1);
    }
    out << ',';
    for (std::size_t i = 0; i < result.seeds.size(); ++i) out << (i ? ";" : "") << result.seeds[i];
    out << ',' << runs << ',' << failed;
    for (const MetricStats& s : aggregate_runs(finals)) {
      out << ',' << (s.mean ? format_real(*s.mean) : "") << ',' << (s.variance ? format_real(*s.variance) : "");
    }
    out << '\n';
  }
}

void write_runs_csv(std::ostream& out, const SweepResult& result) {
  out << "cell,seed,status,message\n";
  for (const SweepRun& r : result.runs) {
    std::string msg = r.message;
    for (char& ch : msg) {
      if (ch == ',' || ch == '\n') ch = ' ';
    }
    out << r.cell << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ',' << msg << '\n';
  }
}

}  // namespace egfn

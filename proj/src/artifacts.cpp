#include "egfn/artifacts.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "egfn/errors.hpp"

namespace egfn {

using nlohmann::json;

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_metrics_header(std::ostream& out) { out << kMetricsHeader << '\n'; }

namespace {

template <typename T>
void opt_field(std::ostream& out, const std::optional<T>& v) {
  out << ',';
  if (!v) return;
  if constexpr (std::is_floating_point_v<T>) {
    out << format_real(*v);
  } else {
    out << *v;
  }
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_real(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("'" + s + "' is not a number", line);
  }
  return v;
}

std::uint64_t parse_count(const std::string& s, std::size_t line) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("'" + s + "' is not a nonnegative integer", line);
  }
  return v;
}

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T take(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw DataError("truncated parameter file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

constexpr char kParamMagic[8] = {'E', 'G', 'F', 'N', 'P', 'A', 'R', 'M'};

}  // namespace

void write_metrics_row(std::ostream& out, const MetricsRow& row) {
  out << row.step << ',' << format_real(row.loss);
  opt_field(out, row.log_z);
  out << ',' << row.states_visited << ',' << row.reward_calls;
  opt_field(out, row.modes_cells);
  opt_field(out, row.modes_regions);
  opt_field(out, row.l1_empirical);
  opt_field(out, row.l1_exact);
  opt_field(out, row.top100);
  out << ',' << row.buffer_size;
  opt_field(out, row.wall_ms);
  out << '\n';
}

std::vector<MetricsRow> read_metrics_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("empty metrics file", line_no);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader) {
    const auto got = split_csv(line);
    const auto want = split_csv(kMetricsHeader);
    for (std::size_t i = 0; i < want.size(); ++i) {
      if (i >= got.size() || got[i] != want[i]) {
        throw ParseError("metrics header: expected column '" + want[i] + "' at position " +
                             std::to_string(i + 1),
                         line_no);
      }
    }
    throw ParseError("metrics header has extra columns", line_no);
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 12) throw ParseError("expected 12 fields", line_no);
    MetricsRow r;
    auto opt_real = [&](const std::string& s) -> std::optional<double> {
      if (s.empty()) return std::nullopt;
      return parse_real(s, line_no);
    };
    auto opt_count = [&](const std::string& s) -> std::optional<std::size_t> {
      if (s.empty()) return std::nullopt;
      return parse_count(s, line_no);
    };
    r.step = parse_count(f[0], line_no);
    r.loss = parse_real(f[1], line_no);
    r.log_z = opt_real(f[2]);
    r.states_visited = parse_count(f[3], line_no);
    r.reward_calls = parse_count(f[4], line_no);
    r.modes_cells = opt_count(f[5]);
    r.modes_regions = opt_count(f[6]);
    r.l1_empirical = opt_real(f[7]);
    r.l1_exact = opt_real(f[8]);
    r.top100 = opt_real(f[9]);
    r.buffer_size = parse_count(f[10], line_no);
    r.wall_ms = opt_real(f[11]);
    rows.push_back(r);
  }
  return rows;
}

void write_length_hist_csv(std::ostream& out, const std::vector<LengthHistogram>& hists) {
  out << "step,length,count\n";
  for (const LengthHistogram& h : hists) {
    for (std::size_t len = 0; len < h.counts.size(); ++len) {
      if (h.counts[len] > 0) out << h.step << ',' << len << ',' << h.counts[len] << '\n';
    }
  }
}

void write_params(std::ostream& out, const GfnAgent& agent) {
  out.write(kParamMagic, sizeof kParamMagic);
  put<std::uint32_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(agent.kind));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(agent.spec.layer_count()));
  for (std::size_t l = 0; l < agent.spec.layer_count(); ++l) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(agent.spec.layer_inputs(l)));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(agent.spec.layer_outputs(l)));
  }
  put<double>(out, agent.log_z);
  put<std::uint64_t>(out, agent.params.values.size());
  for (double v : agent.params.values) put<double>(out, v);
}

ParamDump read_params(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kParamMagic, sizeof magic) != 0) {
    throw DataError("not an egfn parameter file");
  }
  if (take<std::uint32_t>(in) != 1) throw DataError("unsupported parameter file version");
  ParamDump d;
  const auto kind = take<std::uint32_t>(in);
  if (kind > 2) throw DataError("bad objective code in parameter file");
  d.objective = static_cast<ObjectiveKind>(kind);
  const auto layers = take<std::uint32_t>(in);
  std::uint64_t expected = 0;
  for (std::uint32_t l = 0; l < layers; ++l) {
    const auto i = take<std::uint32_t>(in);
    const auto o = take<std::uint32_t>(in);
    d.layers.emplace_back(i, o);
    expected += static_cast<std::uint64_t>(o) * (i + 1);
  }
  d.log_z = take<double>(in);
  const auto n = take<std::uint64_t>(in);
  if (n != expected) throw DataError("parameter count does not match the layer header");
  d.values.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) d.values.push_back(take<double>(in));
  return d;
}

json run_summary(const RunConfig& cfg, const RunResult& result, const Environment& env,
                 int workers) {
  const Trainer& tr = *result.trainer;
  json s;
  s["format"] = "egfn-summary/1";
  s["config"] = to_json(cfg);
  json totals;
  totals["steps"] = tr.steps_done();
  totals["reward_calls"] = tr.reward_calls();
  totals["states_visited"] = tr.states_visited();
  totals["buffer_size"] = tr.buffer().size();
  totals["rows"] = result.record.rows.size();
  if (!result.record.rows.empty()) {
    const MetricsRow& last = result.record.rows.back();
    totals["final_loss"] = last.loss;
    totals["l1_exact"] = last.l1_exact ? json(*last.l1_exact) : json(nullptr);
    totals["l1_empirical"] = last.l1_empirical ? json(*last.l1_empirical) : json(nullptr);
    totals["top100"] = last.top100 ? json(*last.top100) : json(nullptr);
  }
  if (tr.star().kind == ObjectiveKind::kTB) totals["log_z"] = tr.star().log_z;
  s["totals"] = totals;
  if (const ModeTracker* m = tr.modes()) {
    json modes;
    modes["total_cells"] = m->modes().size();
    modes["total_regions"] = env.region_count();
    modes["cells_found"] = m->count().cells;
    modes["regions_found"] = m->count().regions;
    json found = json::array();
    for (const State& x : m->discovered()) found.push_back(env.describe(x));
    modes["discovered"] = found;
    s["modes"] = modes;
  }
  s["runtime"] = {{"workers", workers}, {"wall_ms", result.wall_ms}};
  return s;
}

std::filesystem::path resolve_output_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("EGFN_OUTPUT_ROOT"); root && *root) return std::filesystem::path(root) / p;
  return p;
}

RunResult train_to_directory(const RunConfig& cfg, const std::filesystem::path& dir, int workers) {
  std::filesystem::create_directories(dir);
  std::shared_ptr<const Environment> env = make_environment(cfg.env);
  TrainConfig tc = cfg.train;
  tc.workers = workers;

  std::ofstream metrics(dir / "metrics.csv", std::ios::binary);
  if (!metrics) throw ConfigError("cannot write " + (dir / "metrics.csv").string());
  write_metrics_header(metrics);
  RunResult result;
  try {
    result = run(tc, *env, [&](const MetricsRow& row) {
      write_metrics_row(metrics, row);
      metrics.flush();
    });
  } catch (const NonFiniteError& e) {
    std::ofstream dump(dir / "nonfinite_dump.txt", std::ios::binary);
    dump << e.what() << '\n' << e.dump();
    throw;
  }
  result.env = env;

  {
    std::ofstream out(dir / "length_hist.csv", std::ios::binary);
    write_length_hist_csv(out, result.record.length_hists);
  }
  if (cfg.output.buffer_snapshot) {
    std::ofstream out(dir / "buffer_snapshot.txt", std::ios::binary);
    write_snapshot(out, result.trainer->buffer());
  }
  if (cfg.output.final_params) {
    std::ofstream out(dir / "final_params.bin", std::ios::binary);
    write_params(out, result.trainer->star());
  }
  {
    std::ofstream out(dir / "summary.json", std::ios::binary);
    out << run_summary(cfg, result, *env, workers).dump(2) << '\n';
  }
  return result;
}

}  // namespace egfn

// egfn_acceptance [criterion|all]: one PASS/FAIL line per criterion.
// Exit status is nonzero when any selected criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "egfn/artifacts.hpp"
#include "egfn/config.hpp"
#include "egfn/losses.hpp"
#include "egfn/oracle.hpp"
#include "egfn/replay.hpp"
#include "egfn/trainer.hpp"
#include "evo_invariants.hpp"
#include "support.hpp"
#include "zero_loss.hpp"

using namespace egfn;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

SeqEnv seq_ac3() {
  SeqParams p;
  p.alphabet = "AC";
  p.length = 3;
  p.beta = 1.0;
  return SeqEnv(p, testsupport::random_table("AC", 3, 2024));
}

int run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string(EGFN_BINARY) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome zero_loss() {
  const auto t0 = Clock::now();
  const HypergridEnv grid({2, 4, 1e-2, .5, 2});
  const SeqEnv seq = seq_ac3();
  double worst = 0.0;
  std::size_t items = 0;
  for (const Environment* env : {static_cast<const Environment*>(&grid), static_cast<const Environment*>(&seq)}) {
    const auto r = testsupport::exact_flow_losses(*env);
    worst = std::max({worst, r.fm, r.db, r.tb});
    items += r.fm_items + r.db_items + r.tb_items;
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-12 && secs < 1.0 && items > 0,
          "max loss " + fmt(worst) + " over " + std::to_string(items) + " states/edges/trajectories (< 1e-12), " +
              fmt(secs) + " s (< 1 s)"};
}

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  const HypergridEnv grid({2, 5, 1e-2, .5, 2});
  const SeqEnv seq = seq_ac3();
  double worst = 0.0;
  std::size_t coords = 0, one_sided = 0;
  for (auto kind : {ObjectiveKind::kFM, ObjectiveKind::kDB, ObjectiveKind::kTB}) {
    for (int agent = 0; agent < 20; ++agent) {
      const Environment& env = agent % 2 == 0 ? static_cast<const Environment&>(grid) : seq;
      Rng rng(1000 * static_cast<int>(kind) + agent);
      GfnAgent a = make_agent(kind, env, {8, 8}, rng);
      a.log_z = std::uniform_real_distribution<double>(-1, 1)(rng);
      for (int b = 0; b < 5; ++b) {
        const auto batch = sample_trajectories(a, env, 4, rng, 0.3);
        const LossBatchReport r = objective_loss(a, env, batch);
        const auto fd = testsupport::finite_difference_check(a, env, batch, r.gradient.values, r.log_z_grad);
        if (fd.max_rel > worst && std::getenv("EGFN_FD_VERBOSE")) {
          std::cerr << to_string(kind) << " agent " << agent << " batch " << b << " coord " << fd.index << "/"
                    << a.params.size() << " analytic " << fd.analytic << " numeric " << fd.numeric << " rel "
                    << fd.max_rel << '\n';
        }
        worst = std::max(worst, fd.max_rel);
        coords += fd.coords;
        one_sided += fd.one_sided;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && secs < 30.0,
          "max relative error " + fmt(worst) + " (<= 1e-4) over " + std::to_string(coords) + " coordinates (" +
              std::to_string(one_sided) + " one-sided at kinks), 3 objectives x 20 agents x 5 batches, " +
              fmt(secs) + " s (< 30 s)"};
}

RunConfig config_from(const json& doc) { return resolve_config(doc); }

Outcome distribution_fitting() {
  bool pass = true;
  std::ostringstream d;
  for (std::uint64_t seed : {1, 2, 3}) {
    const RunConfig cfg = config_from({{"seed", seed},
                                       {"objective", "TB"},
                                       {"env", {{"type", "hypergrid"}, {"D", 2}, {"H", 8}, {"r0", 1e-2}}},
                                       {"train", {{"total_steps", 2500}}},
                                       {"output", {{"cadence", 2500}}}});
    const auto env = make_environment(cfg.env);
    const DensityTable truth = true_density(*env);
    double uniform = 0.0;
    for (double p : truth.prob) uniform += std::abs(1.0 / static_cast<double>(truth.size()) - p);
    uniform /= static_cast<double>(truth.size());
    const auto t0 = Clock::now();
    const RunResult r = run(cfg.train, *env);
    const double secs = seconds_since(t0);
    const MetricsRow& last = r.record.rows.back();
    const std::size_t modes = env->mode_set().size();
    const bool ok = *last.l1_exact <= 0.1 * uniform && *last.modes_cells == modes && secs < 300.0;
    pass = pass && ok;
    d << "seed " << seed << ": l1 " << fmt(*last.l1_exact) << " vs bound " << fmt(0.1 * uniform) << ", modes "
      << *last.modes_cells << '/' << modes << ", " << fmt(secs) << " s; ";
  }
  return {pass, d.str() + "(l1 <= 0.1 x uniform l1, all modes, < 300 s per seed)"};
}

Outcome egfn_vs_baseline() {
  double cells[2] = {0, 0}, l1[2] = {0, 0}, worst_secs = 0.0;
  std::ostringstream d;
  for (int arm = 0; arm < 2; ++arm) {
    for (std::uint64_t seed : {1, 2, 3}) {
      const RunConfig cfg = config_from({{"seed", seed},
                                         {"objective", "DB"},
                                         {"env", {{"type", "hypergrid"}, {"D", 4}, {"H", 8}, {"r0", 1e-4}}},
                                         {"train", {{"total_steps", 2500}}},
                                         {"evo", {{"disabled", arm == 1}}},
                                         {"output", {{"cadence", 2500}}}});
      const auto env = make_environment(cfg.env);
      const auto t0 = Clock::now();
      const RunResult r = run(cfg.train, *env);
      worst_secs = std::max(worst_secs, seconds_since(t0));
      const MetricsRow& last = r.record.rows.back();
      cells[arm] += static_cast<double>(*last.modes_cells) / 3.0;
      l1[arm] += *last.l1_exact / 3.0;
      d << (arm ? "baseline" : "egfn") << " seed " << seed << ": cells " << *last.modes_cells << ", l1 "
        << fmt(*last.l1_exact) << "; ";
    }
  }
  const bool pass = cells[0] >= cells[1] && l1[0] <= l1[1] && worst_secs < 900.0;
  d << "mean cells " << fmt(cells[0]) << " vs " << fmt(cells[1]) << " (>=), mean l1 " << fmt(l1[0]) << " vs "
    << fmt(l1[1]) << " (<=), slowest run " << fmt(worst_secs) << " s (< 900 s)";
  return {pass, d.str()};
}

// Coordinates c with 0.3 < |c/(H-1) - 1/2| <= 0.4, in integers.
std::set<int> inner_band(int H) {
  std::set<int> out;
  for (int c = 0; c < H; ++c) {
    const int dev = std::abs(2 * c - (H - 1));  // |c/(H-1) - 1/2| = dev / (2(H-1))
    if (10 * dev > 6 * (H - 1) && 10 * dev <= 8 * (H - 1)) out.insert(c);
  }
  return out;
}

Outcome mode_sets() {
  const HypergridEnv h16({2, 16, 1e-3, .5, 2});
  std::set<std::vector<int>> got16;
  for (const State& s : h16.mode_set()) got16.insert(s.cells);
  const std::set<std::vector<int>> want16{{2, 2}, {2, 13}, {13, 2}, {13, 13}};
  const HypergridEnv h20({2, 20, 1e-3, .5, 2});
  const std::set<int> band20 = inner_band(20);
  std::set<std::vector<int>> want20, got20;
  for (int a : band20) {
    for (int b : band20) want20.insert({a, b});
  }
  for (const State& s : h20.mode_set()) got20.insert(s.cells);
  std::ostringstream d;
  d << "H=16: " << got16.size() << " modes, exact match " << (got16 == want16) << "; H=20: " << band20.size()
    << " coordinates per dimension {";
  for (int c : band20) d << ' ' << c;
  d << " }, " << got20.size() << " modes, exact match " << (got20 == want20);
  return {got16 == want16 && got20 == want20 && band20.size() == 4, d.str()};
}

// Within-stratum uniformity: Pearson chi-square of the draw counts within 3
// standard deviations of its mean (m - 1 degrees of freedom).
double chi_square_z(const std::vector<std::size_t>& counts) {
  double n = 0;
  for (auto c : counts) n += static_cast<double>(c);
  const double m = static_cast<double>(counts.size());
  const double e = n / m;
  double chi = 0;
  for (auto c : counts) chi += (static_cast<double>(c) - e) * (static_cast<double>(c) - e) / e;
  return (chi - (m - 1)) / std::sqrt(2 * (m - 1));
}

Outcome replay_stratification() {
  ReplayConfig cfg;
  cfg.capacity = 100;
  cfg.priority_percentile = 80;
  cfg.priority_split = 0.5;
  ReplayBuffer buf(cfg);
  for (int i = 0; i < 100; ++i) {
    Trajectory t;
    t.reward = 1.0 + ((i * 37) % 100);  // a permutation of 1..100
    buf.insert(t);
  }
  const auto prio = buf.priority_members();
  std::vector<bool> is_prio(100, false);
  for (auto i : prio) is_prio[i] = true;
  const std::size_t n = 16, want = ceil_count(0.5 * n);
  Rng rng(99);
  std::vector<std::size_t> counts(100, 0);
  std::size_t bad_batches = 0;
  for (int b = 0; b < 10000; ++b) {
    const StratifiedDraw draw = buf.sample_indices(n, rng);
    std::size_t in_prio = 0;
    for (std::size_t j = 0; j < draw.indices.size(); ++j) {
      const std::size_t i = draw.indices[j];
      ++counts[i];
      in_prio += is_prio[i];
      // priority draws come first
      if ((j < want) != is_prio[i]) ++bad_batches;
    }
    if (in_prio != want || draw.priority_count != want || draw.indices.size() != n) ++bad_batches;
  }
  std::vector<std::size_t> cp, cr;
  double max_cell_z = 0.0;
  for (std::size_t i = 0; i < 100; ++i) (is_prio[i] ? cp : cr).push_back(counts[i]);
  auto cell_z = [&](const std::vector<std::size_t>& c) {
    double tot = 0;
    for (auto x : c) tot += static_cast<double>(x);
    const double p = 1.0 / static_cast<double>(c.size());
    for (auto x : c) max_cell_z = std::max(max_cell_z, std::abs(x - tot * p) / std::sqrt(tot * p * (1 - p)));
  };
  cell_z(cp);
  cell_z(cr);
  const double zp = chi_square_z(cp), zr = chi_square_z(cr);
  const bool pass = bad_batches == 0 && prio.size() == 20 && std::abs(zp) <= 3 && std::abs(zr) <= 3;
  return {pass, std::to_string(bad_batches) + " batches off ceil(q n) = " + std::to_string(want) + "; stratum sizes " +
                    std::to_string(cp.size()) + "/" + std::to_string(cr.size()) + "; chi-square z " + fmt(zp) +
                    " / " + fmt(zr) + " (|z| <= 3); largest single-entry z " + fmt(max_cell_z)};
}

Outcome evolution_invariants() {
  const MlpSpec s{12, {32, 32}, 6};
  EvoConfig cfg;
  cfg.sync_period = 5;
  const auto audit = testsupport::audit_evolution(ParamLayout::for_spec(s), cfg, 100, 17);
  return {audit.ok(cfg.mutation_strength), audit.describe()};
}

Outcome determinism() {
  const auto dir = testsupport::scratch_dir("acceptance_determinism");
  {
    std::ofstream c(dir / "cfg.json");
    c << R"({"seed": 11, "objective": "TB",
      "env": {"type": "hypergrid", "D": 2, "H": 8, "r0": 0.01},
      "train": {"total_steps": 300, "hidden_dims": [64, 64]},
      "output": {"cadence": 10}})";
  }
  const std::string base = "train --config '" + (dir / "cfg.json").string() + "'";
  int codes[3];
  codes[0] = run_cli(base + " --workers 1 --out '" + (dir / "a").string() + "'", dir / "a.log");
  codes[1] = run_cli(base + " --workers 1 --out '" + (dir / "b").string() + "'", dir / "b.log");
  codes[2] = run_cli(base + " --workers 4 --out '" + (dir / "c").string() + "'", dir / "c.log");
  const std::string a = slurp(dir / "a" / "metrics.csv");
  const bool same_seed = a == slurp(dir / "b" / "metrics.csv");
  const bool workers = a == slurp(dir / "c" / "metrics.csv");
  const bool ran = codes[0] == 0 && codes[1] == 0 && codes[2] == 0 && !a.empty();
  return {ran && same_seed && workers,
          "exit codes " + std::to_string(codes[0]) + "/" + std::to_string(codes[1]) + "/" + std::to_string(codes[2]) +
              "; metrics.csv (" + std::to_string(a.size()) + " bytes) identical on rerun: " +
              (same_seed ? "yes" : "no") + ", with 4 workers: " + (workers ? "yes" : "no")};
}

Outcome ablation_sweeps() {
  const auto dir = testsupport::scratch_dir("acceptance_sweeps");
  {
    std::ofstream c(dir / "cfg.json");
    c << R"({"objective": "TB",
      "env": {"type": "hypergrid", "D": 2, "H": 8, "r0": 0.01},
      "train": {"total_steps": 40, "hidden_dims": [64, 64], "hist_checkpoints": [20, 40]},
      "output": {"cadence": 20}})";
  }
  const std::vector<std::pair<std::string, std::size_t>> grids{
      {"evo.elite_frac=0.2,0.4,0.6", 3},
      {"evo.mutation_strength=1,5", 2},
      {"replay.priority_percentile=50,80,90", 3},
      {"replay.priority_split=0.2,0.5,0.8", 3}};
  bool pass = true;
  std::ostringstream d;
  for (std::size_t g = 0; g < grids.size(); ++g) {
    const auto out = dir / ("sweep_" + std::to_string(g));
    const int code = run_cli("sweep --config '" + (dir / "cfg.json").string() + "' --grid " + grids[g].first +
                                 " --seeds 1,2 --out '" + out.string() + "'",
                             dir / ("sweep_" + std::to_string(g) + ".log"));
    std::ifstream agg(out / "aggregate.csv");
    std::string line;
    std::size_t rows = 0, failed = 0;
    std::getline(agg, line);
    const bool header = line.rfind("cell,", 0) == 0;
    while (std::getline(agg, line)) {
      ++rows;
      // cell,<axis>,seeds,runs,failed,...
      std::stringstream ss(line);
      std::string f;
      for (int i = 0; i < 5 && std::getline(ss, f, ','); ++i) {
        if (i == 4) failed += std::stoul(f);
      }
    }
    const bool ok = code == 0 && header && rows == grids[g].second && failed == 0;
    pass = pass && ok;
    d << grids[g].first.substr(0, grids[g].first.find('=')) << ": exit " << code << ", " << rows << " rows, "
      << failed << " failed; ";
  }
  return {pass, d.str() + "(2 seeds, 40 steps per run)"};
}

const std::vector<std::pair<std::string, std::function<Outcome()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<Outcome()>>> list{
      {"zero_loss", zero_loss},
      {"gradient_fidelity", gradient_fidelity},
      {"distribution_fitting", distribution_fitting},
      {"egfn_vs_baseline", egfn_vs_baseline},
      {"mode_sets", mode_sets},
      {"replay_stratification", replay_stratification},
      {"evolution_invariants", evolution_invariants},
      {"determinism", determinism},
      {"ablation_sweeps", ablation_sweeps}};
  return list;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string which = argc > 1 ? argv[1] : "all";
  bool all_pass = true, matched = false;
  for (const auto& [name, fn] : criteria()) {
    if (which != "all" && which != name) continue;
    matched = true;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    all_pass = all_pass && o.pass;
  }
  if (!matched) {
    std::cerr << "unknown criterion '" << which << "'\n";
    return 2;
  }
  return all_pass ? 0 : 1;
}

// egfn: train, sweep and oracle subcommands.
//
// Exit codes: 0 success, 1 sweep with failed cells or unexpected error,
// 2 invalid configuration or arguments, 3 non-finite loss, 4 oracle cap exceeded.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "egfn/artifacts.hpp"
#include "egfn/config.hpp"
#include "egfn/errors.hpp"
#include "egfn/oracle.hpp"
#include "egfn/sweep.hpp"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNonFinite = 3;
constexpr int kExitOracle = 4;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  int workers = 1;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run configuration")->required();
  cmd->add_option("--override", c.overrides, "Dotted-key override, e.g. evo.k=10 (repeatable)");
  cmd->add_option("--workers", c.workers, "OpenMP worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, "Output directory (default: output.dir from the config)");
}

std::filesystem::path output_dir(const egfn::RunConfig& cfg, const std::string& flag) {
  return egfn::resolve_output_dir(flag.empty() ? cfg.output.dir : flag);
}

int cmd_train(const Common& c, std::optional<std::uint64_t> seed) {
  auto overrides = c.overrides;
  if (seed) overrides.push_back("seed=" + std::to_string(*seed));
  const egfn::RunConfig cfg = egfn::load_config(c.config, overrides);
  const auto dir = output_dir(cfg, c.out);
  const egfn::RunResult r = egfn::train_to_directory(cfg, dir, c.workers);
  std::cout << "wrote " << dir.string() << " (" << r.record.rows.size() << " metric rows)\n";
  return 0;
}

int cmd_sweep(const Common& c, const std::vector<std::string>& grids, const std::string& seeds) {
  std::vector<egfn::GridAxis> axes;
  for (const std::string& g : grids) axes.push_back(egfn::parse_grid_axis(g));
  const auto seed_list = egfn::parse_seed_list(seeds);
  const egfn::RunConfig base = egfn::load_config(c.config, c.overrides);
  const auto dir = output_dir(base, c.out);
  // Validate every cell before spending time on any of them.
  for (const auto& cell : egfn::grid_cells(axes)) {
    auto o = c.overrides;
    o.insert(o.end(), cell.begin(), cell.end());
    egfn::load_config(c.config, o);
  }
  const egfn::SweepResult result = egfn::run_sweep(c.config, c.overrides, axes, seed_list, dir, c.workers);
  {
    std::ofstream out(dir / "aggregate.csv", std::ios::binary);
    egfn::write_aggregate_csv(out, result);
  }
  {
    std::ofstream out(dir / "runs.csv", std::ios::binary);
    egfn::write_runs_csv(out, result);
  }
  std::cout << "sweep: " << result.runs.size() << " runs, " << result.failures() << " failed; wrote "
            << (dir / "aggregate.csv").string() << '\n';
  return result.failures() == 0 ? 0 : kExitFailure;
}

int cmd_oracle(const Common& c) {
  const egfn::RunConfig cfg = egfn::load_config(c.config, c.overrides);
  const auto dir = output_dir(cfg, c.out);
  const auto env = egfn::make_environment(cfg.env);
  const std::size_t cap = cfg.train.oracle_cap;
  const auto density = egfn::true_density(*env, cap);
  const auto modes = env->mode_set(cap);
  const auto flows = egfn::exact_edge_flows(*env, cap);
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "density.csv", std::ios::binary);
    egfn::write_density_csv(out, *env, density);
  }
  {
    std::ofstream out(dir / "modes.csv", std::ios::binary);
    egfn::write_modes_csv(out, *env, modes);
  }
  {
    std::ofstream out(dir / "flows.csv", std::ios::binary);
    egfn::write_flows_csv(out, *env, flows);
  }
  std::cout << "oracle: " << density.size() << " terminals, " << modes.size() << " modes, Z = "
            << egfn::format_real(density.partition) << "; wrote " << dir.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Evolution-augmented GFlowNet training and oracles"};
  app.require_subcommand(1);

  Common train_opts, sweep_opts, oracle_opts;
  std::optional<std::uint64_t> seed;
  auto* train = app.add_subcommand("train", "Train one run and write its artifacts");
  add_common(train, train_opts);
  train->add_option("--seed", seed, "Master seed (overrides the config)");

  std::vector<std::string> grids;
  std::string seeds = "1,2,3";
  auto* sweep = app.add_subcommand("sweep", "Run a grid of configurations over several seeds");
  add_common(sweep, sweep_opts);
  sweep->add_option("--grid", grids, "key=v1,v2,... (repeatable; cartesian product)")->required();
  sweep->add_option("--seeds", seeds, "Comma-separated seeds");

  auto* oracle = app.add_subcommand("oracle", "Write the exact density, modes and flows");
  add_common(oracle, oracle_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*train) return cmd_train(train_opts, seed);
    if (*sweep) return cmd_sweep(sweep_opts, grids, seeds);
    if (*oracle) return cmd_oracle(oracle_opts);
  } catch (const egfn::NonFiniteError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNonFinite;
  } catch (const egfn::TrainingError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNonFinite;
  } catch (const egfn::OracleUnavailable& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOracle;
  } catch (const egfn::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const egfn::ParseError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const egfn::DataError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

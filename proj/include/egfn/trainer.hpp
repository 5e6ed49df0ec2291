#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "egfn/agent.hpp"
#include "egfn/errors.hpp"
#include "egfn/evolution.hpp"
#include "egfn/losses.hpp"
#include "egfn/oracle.hpp"
#include "egfn/replay.hpp"

namespace egfn {

struct TrainConfig {
  ObjectiveKind objective = ObjectiveKind::kTB;
  std::size_t total_steps = 2500;
  std::size_t batch_size = 16;
  double online_ratio = 0.5;
  std::optional<double> lr;  // unset: 1e-4 for FM, 1e-3 for DB and TB
  double z_lr = 0.1;
  double explore_eps = 0.0;
  std::size_t steps_per_batch = 1;
  std::vector<std::size_t> hidden_dims{256, 256};
  bool uniform_pb = false;

  bool evo_enabled = true;
  EvoConfig evo;
  ReplayConfig replay;

  std::uint64_t seed = 0;
  std::size_t metrics_window = 200000;
  std::size_t cadence = 10;
  std::size_t topk = 100;
  std::vector<std::size_t> hist_checkpoints{500, 1000, 1500, 2000, 2500};
  std::size_t oracle_cap = kDefaultEnumerationCap;
  bool exact_l1 = true;
  bool record_wall_time = false;
  int workers = 1;

  double effective_lr() const;
  void validate() const;
};

struct MetricsRow {
  std::size_t step = 0;
  double loss = 0.0;
  std::optional<double> log_z;
  std::uint64_t states_visited = 0;
  std::uint64_t reward_calls = 0;
  std::optional<std::size_t> modes_cells;
  std::optional<std::size_t> modes_regions;
  std::optional<double> l1_empirical;
  std::optional<double> l1_exact;
  std::optional<double> top100;
  std::size_t buffer_size = 0;
  std::optional<double> wall_ms;
};

// counts[len] = number of trajectories with `len` actions.
struct LengthHistogram {
  std::size_t step = 0;
  std::vector<std::size_t> counts;
};

LengthHistogram trajectory_length_histogram(const std::vector<Trajectory>& trajs,
                                            std::size_t step = 0);

class LengthHistogramRecorder {
 public:
  explicit LengthHistogramRecorder(std::vector<std::size_t> checkpoints);
  void record(std::size_t step, const std::vector<Trajectory>& batch);
  const std::vector<LengthHistogram>& histograms() const { return hists_; }

 private:
  std::vector<std::size_t> checkpoints_;
  std::vector<LengthHistogram> hists_;
};

struct RunRecord {
  std::vector<MetricsRow> rows;
  std::vector<LengthHistogram> length_hists;
};

// Non-finite loss or gradient. `dump` describes the offending batch.
class NonFiniteError : public TrainingError {
 public:
  NonFiniteError(const std::string& what, std::string dump)
      : TrainingError(what), dump_(std::move(dump)) {}
  const std::string& dump() const { return dump_; }

 private:
  std::string dump_;
};

struct StepReport {
  double loss = 0.0;
  std::size_t online = 0;
  std::size_t offline = 0;
  std::vector<Trajectory> batch;
};

// Full training state for one run; step() performs one iteration of the loop.
class Trainer {
 public:
  Trainer(TrainConfig cfg, const Environment& env);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  StepReport step();
  MetricsRow metrics_row(const StepReport& last) const;
  std::size_t steps_done() const { return steps_done_; }

  const TrainConfig& config() const { return cfg_; }
  const GfnAgent& star() const { return star_; }
  GfnAgent& star() { return star_; }
  const Population& population() const { return pop_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const ModeTracker* modes() const { return modes_ ? &*modes_ : nullptr; }
  const DensityTable* truth() const { return truth_ ? &*truth_ : nullptr; }
  std::uint64_t reward_calls() const { return reward_calls_; }
  std::uint64_t states_visited() const { return states_visited_; }
  const TopKTracker& topk() const { return topk_; }

 private:
  void observe(const Trajectory& t);

  TrainConfig cfg_;
  const Environment* env_;
  GfnAgent star_;
  AdamState adam_;
  AdamState z_adam_;
  Population pop_;
  ReplayBuffer buffer_;
  std::optional<ModeTracker> modes_;
  std::optional<DensityTable> truth_;
  std::unique_ptr<VisitWindow> window_;
  TopKTracker topk_;
  std::size_t steps_done_ = 0;
  std::uint64_t reward_calls_ = 0;
  std::uint64_t states_visited_ = 0;
};

struct RunResult {
  RunRecord record;
  std::unique_ptr<Trainer> trainer;
  std::shared_ptr<const Environment> env;  // set when the run owns its environment
  double wall_ms = 0.0;
};

// Runs cfg.total_steps steps, emitting a metrics row every cfg.cadence steps
// and after the last one. `on_row` sees each row as it is produced.
RunResult run(const TrainConfig& cfg, const Environment& env,
              const std::function<void(const MetricsRow&)>& on_row = {});

}  // namespace egfn

#include "egfn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "egfn/errors.hpp"

namespace egfn {

double TrainConfig::effective_lr() const {
  if (lr) return *lr;
  return objective == ObjectiveKind::kFM ? 1e-4 : 1e-3;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (!(online_ratio >= 0.0 && online_ratio <= 1.0)) {
    throw ConfigError("train.online_ratio must lie in [0, 1]");
  }
  if (!(effective_lr() > 0.0)) throw ConfigError("train.lr must be positive");
  if (!(z_lr > 0.0)) throw ConfigError("train.z_lr must be positive");
  if (!(explore_eps >= 0.0 && explore_eps <= 1.0)) {
    throw ConfigError("train.explore_eps must lie in [0, 1]");
  }
  if (steps_per_batch < 1) throw ConfigError("train.steps_per_batch must be at least 1");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ConfigError("train.hidden_dims entries must be positive");
  }
  if (metrics_window < 1) throw ConfigError("train.metrics_window must be at least 1");
  if (cadence < 1) throw ConfigError("output.cadence must be at least 1");
  if (topk < 1) throw ConfigError("train.topk must be at least 1");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (evo_enabled) evo.validate();
  replay.validate();
}

LengthHistogram trajectory_length_histogram(const std::vector<Trajectory>& trajs, std::size_t step) {
  LengthHistogram h;
  h.step = step;
  for (const Trajectory& t : trajs) {
    if (h.counts.size() <= t.length()) h.counts.resize(t.length() + 1, 0);
    ++h.counts[t.length()];
  }
  return h;
}

LengthHistogramRecorder::LengthHistogramRecorder(std::vector<std::size_t> checkpoints)
    : checkpoints_(std::move(checkpoints)) {
  std::sort(checkpoints_.begin(), checkpoints_.end());
}

void LengthHistogramRecorder::record(std::size_t step, const std::vector<Trajectory>& batch) {
  if (std::binary_search(checkpoints_.begin(), checkpoints_.end(), step)) {
    hists_.push_back(trajectory_length_histogram(batch, step));
  }
}

namespace {

std::string describe_batch(const Environment& env, const std::vector<Trajectory>& batch,
                           const LossBatchReport* report) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Trajectory& t = batch[i];
    out << "trajectory " << i << " reward " << t.reward << " terminal " << env.describe(t.terminal())
        << " actions";
    for (int a : t.actions) out << ' ' << a;
    out << '\n';
  }
  if (report) {
    out << "item losses:";
    for (double l : report->item_losses) out << ' ' << l;
    out << '\n';
  }
  return out.str();
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, const Environment& env)
    : cfg_(std::move(cfg)), env_(&env), buffer_(cfg_.replay), topk_(cfg_.topk) {
  cfg_.validate();
  Rng init = make_stream(cfg_.seed, StreamTag::kStarInit);
  star_ = make_agent(cfg_.objective, env, cfg_.hidden_dims, init, cfg_.uniform_pb);
  adam_ = AdamState(star_.params.size());
  z_adam_ = AdamState(1);
  if (cfg_.evo_enabled) pop_ = make_population(star_, cfg_.evo.k, cfg_.seed);

  try {
    modes_.emplace(env, env.mode_set(cfg_.oracle_cap));
  } catch (const OracleUnavailable& e) {
    log_warning(std::string("mode tracking disabled: ") + e.what());
  }
  try {
    truth_.emplace(true_density(env, cfg_.oracle_cap));
    window_ = std::make_unique<VisitWindow>(*truth_, cfg_.metrics_window);
  } catch (const OracleUnavailable& e) {
    log_warning(std::string("density metrics disabled: ") + e.what());
  }
}

void Trainer::observe(const Trajectory& t) {
  if (modes_) modes_->observe(t.terminal());
  topk_.observe(t.terminal(), t.reward);
}

StepReport Trainer::step() {
  const std::size_t step_index = steps_done_;
  StepReport rep;

  // A diverged network shows up first as non-finite logits while sampling.
  auto diverged = [&](const TrainingError& e, const char* phase) {
    double largest = 0.0;
    for (double v : star_.params.values) largest = std::max(largest, std::abs(v));
    std::ostringstream dump;
    dump << "step " << step_index + 1 << ", " << phase << ": " << e.what() << '\n'
         << "star max |param| " << largest << ", log Z " << star_.log_z << '\n';
    return NonFiniteError(std::string(e.what()) + " while " + phase + " at step " + std::to_string(step_index + 1),
                          dump.str());
  };

  if (cfg_.evo_enabled) {
    GenerationReport gen;
    try {
      pop_ = evolve_generation(pop_, star_, *env_, buffer_, cfg_.evo, cfg_.seed, &star_.params,
                               cfg_.workers, &gen);
    } catch (const TrainingError& e) {
      throw diverged(e, "evaluating the population");
    }
    for (const Trajectory& t : gen.trajectories) observe(t);
    reward_calls_ += gen.trajectories.size();
  }

  const std::size_t t_total = cfg_.batch_size;
  std::size_t n_on = std::min(t_total, ceil_count(cfg_.online_ratio * static_cast<double>(t_total)));
  std::size_t n_off = t_total - n_on;
  if (n_off > 0 && buffer_.empty() && n_on == 0) {
    log_warning("replay buffer empty at step " + std::to_string(step_index + 1) +
                "; using an all-online batch");
    n_on = t_total;
    n_off = 0;
  }

  Rng online_rng = make_stream(cfg_.seed, StreamTag::kOnline, step_index);
  std::vector<Trajectory> batch;
  try {
    batch = sample_trajectories(star_, *env_, n_on, online_rng, cfg_.explore_eps, cfg_.workers);
  } catch (const TrainingError& e) {
    throw diverged(e, "sampling online trajectories");
  }
  for (const Trajectory& t : batch) {
    buffer_.insert(t);
    observe(t);
    if (window_) window_->add(t.terminal());
  }
  reward_calls_ += n_on;
  states_visited_ += n_on;

  if (n_off > 0) {
    Rng offline_rng = make_stream(cfg_.seed, StreamTag::kOffline, step_index);
    for (Trajectory& t : buffer_.sample_batch(n_off, offline_rng)) batch.push_back(std::move(t));
  }
  rep.online = n_on;
  rep.offline = n_off;

  const bool tb = star_.kind == ObjectiveKind::kTB;
  for (std::size_t it = 0; it < cfg_.steps_per_batch; ++it) {
    LossBatchReport loss;
    try {
      loss = objective_loss(star_, *env_, batch, cfg_.workers);
    } catch (const TrainingError& e) {
      throw NonFiniteError(std::string(e.what()) + " at step " + std::to_string(step_index + 1),
                           describe_batch(*env_, batch, nullptr));
    }
    if (!std::isfinite(loss.mean_loss)) {
      throw NonFiniteError("non-finite loss at step " + std::to_string(step_index + 1),
                           describe_batch(*env_, batch, &loss));
    }
    try {
      adam_step(star_.params.values, loss.gradient.values, adam_, cfg_.effective_lr());
      if (tb) {
        double z = star_.log_z;
        const double g = loss.log_z_grad;
        adam_step(std::span<double>(&z, 1), std::span<const double>(&g, 1), z_adam_, cfg_.z_lr);
        star_.log_z = z;
      }
    } catch (const TrainingError& e) {
      throw NonFiniteError(std::string(e.what()) + " at step " + std::to_string(step_index + 1),
                           describe_batch(*env_, batch, &loss));
    }
    rep.loss = loss.mean_loss;
  }
  rep.batch = std::move(batch);
  ++steps_done_;
  return rep;
}

MetricsRow Trainer::metrics_row(const StepReport& last) const {
  MetricsRow row;
  row.step = steps_done_;
  row.loss = last.loss;
  if (star_.kind == ObjectiveKind::kTB) row.log_z = star_.log_z;
  row.states_visited = states_visited_;
  row.reward_calls = reward_calls_;
  if (modes_) {
    row.modes_cells = modes_->count().cells;
    if (env_->region_count() > 0) row.modes_regions = modes_->count().regions;
  }
  if (truth_ && window_ && window_->size() > 0) row.l1_empirical = empirical_l1(*window_, *truth_);
  if (truth_ && cfg_.exact_l1) {
    try {
      row.l1_exact = l1_error(exact_learned_density(star_, *env_, cfg_.oracle_cap, cfg_.workers), *truth_);
    } catch (const OracleUnavailable&) {
    }
  }
  if (topk_.distinct() > 0) row.top100 = topk_.value().mean;
  row.buffer_size = buffer_.size();
  return row;
}

RunResult run(const TrainConfig& cfg, const Environment& env,
              const std::function<void(const MetricsRow&)>& on_row) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  RunResult result;
  result.trainer = std::make_unique<Trainer>(cfg, env);
  Trainer& tr = *result.trainer;
  LengthHistogramRecorder hist(cfg.hist_checkpoints);
  for (std::size_t s = 1; s <= cfg.total_steps; ++s) {
    const StepReport rep = tr.step();
    hist.record(s, rep.batch);
    if (s % cfg.cadence == 0 || s == cfg.total_steps) {
      MetricsRow row = tr.metrics_row(rep);
      if (cfg.record_wall_time) {
        row.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
      }
      if (on_row) on_row(row);
      result.record.rows.push_back(std::move(row));
    }
  }
  result.record.length_hists = hist.histograms();
  result.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
  return result;
}

}  // namespace egfn

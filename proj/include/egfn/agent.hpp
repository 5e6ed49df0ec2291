#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "egfn/envs.hpp"
#include "egfn/numnet.hpp"
#include "egfn/rng.hpp"

namespace egfn {

enum class ObjectiveKind { kFM, kDB, kTB };

std::string to_string(ObjectiveKind kind);
ObjectiveKind parse_objective(const std::string& text);

// Where each head lives in the network output.
//   FM: [log edge flow per action]
//   DB: [forward logits | backward logits | log state flow]
//   TB: [forward logits | backward logits]   (log Z is a separate scalar)
struct HeadLayout {
  ObjectiveKind kind = ObjectiveKind::kTB;
  std::size_t actions = 0;

  std::size_t forward_offset() const { return 0; }
  std::size_t backward_offset() const { return actions; }
  std::size_t flow_index() const { return 2 * actions; }
  std::size_t output_dim() const;
  bool has_backward() const { return kind != ObjectiveKind::kFM; }
};

struct GfnAgent {
  ObjectiveKind kind = ObjectiveKind::kTB;
  MlpSpec spec;
  ParamVector params;
  double log_z = 0.0;
  bool uniform_pb = false;
  std::size_t actions = 0;

  HeadLayout heads() const { return HeadLayout{kind, actions}; }
};

// Network sized for `env`, parameters initialised from `rng`.
GfnAgent make_agent(ObjectiveKind kind, const Environment& env,
                    const std::vector<std::size_t>& hidden_dims, Rng& rng, bool uniform_pb = false);

struct Trajectory {
  std::vector<State> states;  // s_0 ... s_n, s_n terminal
  std::vector<int> actions;   // n actions
  double reward = 0.0;
  double log_pf = 0.0;  // sum of log P_F accumulated while sampling

  std::size_t length() const { return actions.size(); }
  const State& terminal() const { return states.back(); }
};

std::vector<double> encode_state(const Environment& env, const State& s);
Matrix encode_states(const Environment& env, const std::vector<State>& states);

// Masked log-softmax of the forward head; masked actions get -inf.
std::vector<double> forward_log_probs(const HeadLayout& heads, const Environment& env,
                                      const State& s, std::span<const double> output);

// Log-probabilities over parents(s_next), in the order parents() lists them.
std::vector<double> backward_log_probs(const HeadLayout& heads, const Environment& env,
                                       const State& s_next, std::span<const double> output,
                                       bool uniform_pb);

// Probability of every action (0 for masked ones).
std::vector<double> forward_dist(const GfnAgent& agent, const Environment& env, const State& s);

// Probability of every parent edge of s_next. Throws UsageError at the root.
std::vector<double> backward_dist(const GfnAgent& agent, const Environment& env,
                                  const State& s_next);

// Samples `count` trajectories in lockstep so each step is one batched
// forward pass. With probability explore_eps an action is drawn uniformly
// from the allowed set instead of from P_F.
std::vector<Trajectory> sample_trajectories(const GfnAgent& agent, const Environment& env,
                                            std::size_t count, Rng& rng, double explore_eps = 0.0,
                                            int workers = 1);
Trajectory sample_trajectory(const GfnAgent& agent, const Environment& env, Rng& rng,
                             double explore_eps = 0.0);

struct TrajLogProbs {
  double sum_log_pf = 0.0;
  double sum_log_pb = 0.0;
  std::vector<double> step_log_pf;
  std::vector<double> step_log_pb;
};

// Checks that consecutive states follow env.step and the last is terminal.
// Throws DataError naming the first bad step.
void validate_trajectory(const Environment& env, const Trajectory& traj);

TrajLogProbs traj_logprobs(const GfnAgent& agent, const Environment& env, const Trajectory& traj);

// Distinct states whose network outputs a computation needs, evaluated in one
// batched forward pass.
class HeadTable {
 public:
  std::size_t add(const State& s);
  std::optional<std::size_t> find(const State& s) const;
  std::size_t row(const State& s) const;
  const std::vector<State>& states() const { return states_; }
  std::size_t size() const { return states_.size(); }

  void evaluate(const GfnAgent& agent, const Environment& env, ForwardCache* cache = nullptr,
                int workers = 1);

  Matrix outputs;

 private:
  std::vector<State> states_;
  StateMap<std::size_t> index_;
};

}  // namespace egfn

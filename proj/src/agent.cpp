#include "egfn/agent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "egfn/errors.hpp"

namespace egfn {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t edge_index(const std::vector<ParentEdge>& edges, const State& parent, int action) {
  for (std::size_t k = 0; k < edges.size(); ++k) {
    if (edges[k].action == action && edges[k].parent == parent) return k;
  }
  return edges.size();
}

}  // namespace

std::string to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::kFM: return "FM";
    case ObjectiveKind::kDB: return "DB";
    case ObjectiveKind::kTB: return "TB";
  }
  return "?";
}

ObjectiveKind parse_objective(const std::string& text) {
  if (text == "FM" || text == "fm") return ObjectiveKind::kFM;
  if (text == "DB" || text == "db") return ObjectiveKind::kDB;
  if (text == "TB" || text == "tb") return ObjectiveKind::kTB;
  throw ConfigError("unknown objective '" + text + "' (expected FM, DB or TB)");
}

std::size_t HeadLayout::output_dim() const {
  switch (kind) {
    case ObjectiveKind::kFM: return actions;
    case ObjectiveKind::kDB: return 2 * actions + 1;
    case ObjectiveKind::kTB: return 2 * actions;
  }
  return 0;
}

GfnAgent make_agent(ObjectiveKind kind, const Environment& env,
                    const std::vector<std::size_t>& hidden_dims, Rng& rng, bool uniform_pb) {
  GfnAgent agent;
  agent.kind = kind;
  agent.actions = env.action_count();
  agent.uniform_pb = uniform_pb;
  agent.spec = MlpSpec{env.encoding_dim(), hidden_dims, agent.heads().output_dim()};
  agent.params = ParamVector(agent.spec);
  xavier_init(agent.params, rng);
  return agent;
}

std::vector<double> encode_state(const Environment& env, const State& s) {
  std::vector<double> out(env.encoding_dim());
  env.encode(s, out);
  return out;
}

Matrix encode_states(const Environment& env, const std::vector<State>& states) {
  Matrix m(states.size(), env.encoding_dim());
  for (std::size_t i = 0; i < states.size(); ++i) env.encode(states[i], m.row(i));
  return m;
}

std::vector<double> forward_log_probs(const HeadLayout& heads, const Environment& env,
                                      const State& s, std::span<const double> output) {
  const auto mask = env.allowed_actions(s);
  const auto logits = output.subspan(heads.forward_offset(), heads.actions);
  double top = kNegInf;
  for (std::size_t a = 0; a < heads.actions; ++a) {
    if (!mask[a]) continue;
    // NaN would silently lose every comparison below
    if (!std::isfinite(logits[a])) {
      throw TrainingError("non-finite forward logit for action " + std::to_string(a) + " at " + env.describe(s));
    }
    top = std::max(top, logits[a]);
  }
  if (top == kNegInf) throw std::logic_error("no allowed action at " + env.describe(s));
  double sum = 0.0;
  for (std::size_t a = 0; a < heads.actions; ++a) {
    if (mask[a]) sum += std::exp(logits[a] - top);
  }
  const double log_norm = top + std::log(sum);
  std::vector<double> out(heads.actions, kNegInf);
  for (std::size_t a = 0; a < heads.actions; ++a) {
    if (mask[a]) out[a] = logits[a] - log_norm;
  }
  return out;
}

std::vector<double> backward_log_probs(const HeadLayout& heads, const Environment& env,
                                       const State& s_next, std::span<const double> output,
                                       bool uniform_pb) {
  const auto edges = env.parents(s_next);
  if (edges.empty()) throw UsageError("no parents at root state " + env.describe(s_next));
  const std::size_t n = edges.size();
  if (uniform_pb || !heads.has_backward() || n == 1) {
    return std::vector<double>(n, -std::log(static_cast<double>(n)));
  }
  std::vector<double> logits(n);
  double top = kNegInf;
  for (std::size_t k = 0; k < n; ++k) {
    logits[k] = output[heads.backward_offset() + static_cast<std::size_t>(edges[k].action)];
    top = std::max(top, logits[k]);
  }
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - top);
  const double log_norm = top + std::log(sum);
  for (double& l : logits) l -= log_norm;
  return logits;
}

std::vector<double> forward_dist(const GfnAgent& agent, const Environment& env, const State& s) {
  const auto out = mlp_forward(agent.spec, agent.params, encode_state(env, s));
  auto logp = forward_log_probs(agent.heads(), env, s, out);
  for (double& v : logp) v = std::exp(v);
  return logp;
}

std::vector<double> backward_dist(const GfnAgent& agent, const Environment& env,
                                  const State& s_next) {
  if (env.parents(s_next).empty()) {
    throw UsageError("backward distribution undefined at root " + env.describe(s_next));
  }
  const auto out = mlp_forward(agent.spec, agent.params, encode_state(env, s_next));
  auto logp = backward_log_probs(agent.heads(), env, s_next, out, agent.uniform_pb);
  for (double& v : logp) v = std::exp(v);
  return logp;
}

std::vector<Trajectory> sample_trajectories(const GfnAgent& agent, const Environment& env,
                                            std::size_t count, Rng& rng, double explore_eps,
                                            int workers) {
  if (explore_eps < 0.0 || explore_eps > 1.0) throw ConfigError("explore_eps must lie in [0, 1]");
  const HeadLayout heads = agent.heads();
  const std::size_t bound = env.max_trajectory_length();
  std::vector<Trajectory> trajs(count);
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < count; ++i) {
    trajs[i].states.push_back(env.initial_state());
    active.push_back(i);
  }
  std::vector<State> batch;
  while (!active.empty()) {
    batch.clear();
    for (std::size_t i : active) batch.push_back(trajs[i].states.back());
    const Matrix out = mlp_forward_batch(agent.spec, agent.params, encode_states(env, batch),
                                         nullptr, workers);
    std::vector<std::size_t> still_active;
    for (std::size_t k = 0; k < active.size(); ++k) {
      Trajectory& t = trajs[active[k]];
      const State& s = batch[k];
      const auto logp = forward_log_probs(heads, env, s, out.row(k));
      std::size_t action = heads.actions;
      if (explore_eps > 0.0 && uniform01(rng) < explore_eps) {
        std::vector<std::size_t> allowed;
        for (std::size_t a = 0; a < heads.actions; ++a) {
          if (logp[a] != kNegInf) allowed.push_back(a);
        }
        action = allowed[uniform_index(rng, allowed.size())];
      } else {
        const double u = uniform01(rng);
        double cumulative = 0.0;
        for (std::size_t a = 0; a < heads.actions; ++a) {
          if (logp[a] == kNegInf) continue;
          action = a;
          cumulative += std::exp(logp[a]);
          if (u < cumulative) break;
        }
      }
      t.log_pf += logp[action];
      t.actions.push_back(static_cast<int>(action));
      t.states.push_back(env.step(s, static_cast<int>(action)));
      if (t.actions.size() > bound) {
        throw std::logic_error("trajectory exceeded the environment length bound");
      }
      if (t.states.back().terminal) {
        t.reward = env.reward(t.states.back());
      } else {
        still_active.push_back(active[k]);
      }
    }
    active = std::move(still_active);
  }
  return trajs;
}

Trajectory sample_trajectory(const GfnAgent& agent, const Environment& env, Rng& rng,
                             double explore_eps) {
  return std::move(sample_trajectories(agent, env, 1, rng, explore_eps).front());
}

void validate_trajectory(const Environment& env, const Trajectory& traj) {
  if (traj.states.size() != traj.actions.size() + 1 || traj.states.empty()) {
    throw DataError("trajectory has " + std::to_string(traj.states.size()) + " states for " +
                    std::to_string(traj.actions.size()) + " actions");
  }
  if (!(traj.states.front() == env.initial_state())) {
    throw DataError("trajectory does not start at the initial state");
  }
  for (std::size_t t = 0; t < traj.actions.size(); ++t) {
    const State& s = traj.states[t];
    bool ok = !s.terminal;
    if (ok) {
      const auto mask = env.allowed_actions(s);
      const int a = traj.actions[t];
      ok = a >= 0 && a < static_cast<int>(mask.size()) && mask[a] &&
           env.step(s, a) == traj.states[t + 1];
    }
    if (!ok) {
      throw DataError("invalid transition at step " + std::to_string(t) + ": " + env.describe(s) +
                      " --" + std::to_string(traj.actions[t]) + "--> " +
                      env.describe(traj.states[t + 1]));
    }
  }
  if (!traj.states.back().terminal) throw DataError("trajectory does not end in a terminal state");
}

TrajLogProbs traj_logprobs(const GfnAgent& agent, const Environment& env, const Trajectory& traj) {
  validate_trajectory(env, traj);
  const HeadLayout heads = agent.heads();
  HeadTable table;
  for (std::size_t t = 0; t < traj.actions.size(); ++t) {
    table.add(traj.states[t]);
    const State& next = traj.states[t + 1];
    if (heads.has_backward() && !agent.uniform_pb && env.parents(next).size() > 1) table.add(next);
  }
  table.evaluate(agent, env);

  TrajLogProbs out;
  for (std::size_t t = 0; t < traj.actions.size(); ++t) {
    const State& s = traj.states[t];
    const State& next = traj.states[t + 1];
    const double lpf = forward_log_probs(heads, env, s, table.outputs.row(table.row(s)))[traj.actions[t]];
    const auto edges = env.parents(next);
    const std::size_t k = edge_index(edges, s, traj.actions[t]);
    const auto found = table.find(next);
    const auto lpb_all =
        found ? backward_log_probs(heads, env, next, table.outputs.row(*found), agent.uniform_pb)
              : std::vector<double>(edges.size(), -std::log(static_cast<double>(edges.size())));
    out.step_log_pf.push_back(lpf);
    out.step_log_pb.push_back(lpb_all[k]);
    out.sum_log_pf += lpf;
    out.sum_log_pb += lpb_all[k];
  }
  return out;
}

std::size_t HeadTable::add(const State& s) {
  const auto [it, inserted] = index_.try_emplace(s, states_.size());
  if (inserted) states_.push_back(s);
  return it->second;
}

std::optional<std::size_t> HeadTable::find(const State& s) const {
  const auto it = index_.find(s);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t HeadTable::row(const State& s) const {
  const auto it = index_.find(s);
  if (it == index_.end()) throw std::logic_error("state missing from head table");
  return it->second;
}

void HeadTable::evaluate(const GfnAgent& agent, const Environment& env, ForwardCache* cache,
                         int workers) {
  outputs = mlp_forward_batch(agent.spec, agent.params, encode_states(env, states_), cache, workers);
}

}  // namespace egfn

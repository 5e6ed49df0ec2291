#include "egfn/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>

#include "egfn/errors.hpp"

namespace egfn {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double DensityTable::at(const State& x) const {
  const auto it = index.find(x);
  if (it == index.end()) throw UsageError("state is not a terminal of this density table");
  return prob[it->second];
}

DensityTable true_density(const Environment& env, std::size_t cap) {
  DensityTable t;
  t.terminals = env.enumerate_terminals(cap);
  t.prob.reserve(t.terminals.size());
  for (std::size_t i = 0; i < t.terminals.size(); ++i) {
    t.index.emplace(t.terminals[i], i);
    t.prob.push_back(env.reward(t.terminals[i]));
    t.partition += t.prob.back();
  }
  if (!(t.partition > 0.0)) throw DataError("total reward is not positive");
  for (double& p : t.prob) p /= t.partition;
  return t;
}

DensityTable exact_learned_density(const GfnAgent& agent, const Environment& env, std::size_t cap,
                                   int workers) {
  const auto states = env.enumerate_states(cap);
  std::vector<State> interior;
  for (const State& s : states) {
    if (!s.terminal) interior.push_back(s);
  }
  const Matrix out = mlp_forward_batch(agent.spec, agent.params, encode_states(env, interior),
                                       nullptr, workers);
  const HeadLayout heads = agent.heads();

  StateMap<double> mass;
  mass[env.initial_state()] = 1.0;
  for (std::size_t i = 0; i < interior.size(); ++i) {
    const State& s = interior[i];
    const auto it = mass.find(s);
    if (it == mass.end() || it->second == 0.0) continue;
    const double m = it->second;
    const auto logp = forward_log_probs(heads, env, s, out.row(i));
    for (std::size_t a = 0; a < heads.actions; ++a) {
      if (std::isinf(logp[a])) continue;
      mass[env.step(s, static_cast<int>(a))] += m * std::exp(logp[a]);
    }
  }

  DensityTable t;
  t.terminals = env.enumerate_terminals(cap);
  for (std::size_t i = 0; i < t.terminals.size(); ++i) {
    t.index.emplace(t.terminals[i], i);
    const auto it = mass.find(t.terminals[i]);
    t.prob.push_back(it == mass.end() ? 0.0 : it->second);
  }
  return t;
}

FlowTable exact_edge_flows(const Environment& env, std::size_t cap) {
  FlowTable f;
  f.states = env.enumerate_states(cap);
  const std::size_t n = f.states.size();
  f.state_flow.assign(n, 0.0);
  f.edge_flow.assign(n, std::vector<double>(env.action_count(), 0.0));
  for (std::size_t i = 0; i < n; ++i) f.index.emplace(f.states[i], i);

  for (std::size_t i = n; i-- > 0;) {
    const State& s = f.states[i];
    if (s.terminal) {
      f.state_flow[i] = env.reward(s);
    } else {
      double total = 0.0;
      for (double e : f.edge_flow[i]) total += e;
      f.state_flow[i] = total;
    }
    const auto edges = env.parents(s);
    if (edges.empty()) continue;
    const double share = f.state_flow[i] / static_cast<double>(edges.size());
    for (const ParentEdge& e : edges) f.edge_flow[f.index.at(e.parent)][e.action] += share;
  }
  return f;
}

std::vector<Trajectory> enumerate_trajectories(const Environment& env, std::size_t cap) {
  std::vector<Trajectory> out;
  Trajectory cur;
  cur.states.push_back(env.initial_state());
  std::function<void()> walk = [&]() {
    const State s = cur.states.back();
    if (s.terminal) {
      if (out.size() >= cap) throw OracleUnavailable("trajectory enumeration exceeds cap");
      cur.reward = env.reward(s);
      out.push_back(cur);
      return;
    }
    const auto mask = env.allowed_actions(s);
    for (std::size_t a = 0; a < mask.size(); ++a) {
      if (!mask[a]) continue;
      cur.actions.push_back(static_cast<int>(a));
      cur.states.push_back(env.step(s, static_cast<int>(a)));
      walk();
      cur.states.pop_back();
      cur.actions.pop_back();
    }
  };
  walk();
  return out;
}

double l1_error(const DensityTable& estimate, const DensityTable& truth) {
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    sum += std::abs(estimate.at(truth.terminals[i]) - truth.prob[i]);
  }
  return sum / static_cast<double>(truth.size());
}

VisitWindow::VisitWindow(const DensityTable& truth, std::size_t capacity)
    : truth_(&truth), capacity_(capacity), counts_(truth.size(), 0) {
  if (capacity_ == 0) throw ConfigError("visit window capacity must be positive");
}

void VisitWindow::add(const State& terminal) {
  const std::size_t id = truth_->index.at(terminal);
  if (order_.size() == capacity_) {
    --counts_[order_.front()];
    order_.pop_front();
  }
  order_.push_back(id);
  ++counts_[id];
}

double empirical_l1(const VisitWindow& window, const DensityTable& truth) {
  if (window.size() == 0) throw UsageError("empirical l1 over an empty window");
  const double n = static_cast<double>(window.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    sum += std::abs(static_cast<double>(window.counts()[i]) / n - truth.prob[i]);
  }
  return sum / static_cast<double>(truth.size());
}

double empirical_l1(const std::vector<State>& visits, const DensityTable& truth) {
  VisitWindow w(truth, std::max<std::size_t>(1, visits.size()));
  for (const State& s : visits) w.add(s);
  return empirical_l1(w, truth);
}

ModeCount count_modes(const std::vector<State>& discovered, const Environment& env,
                      const std::vector<State>& modes) {
  ModeTracker tracker(env, modes);
  for (const State& s : discovered) tracker.observe(s);
  return tracker.count();
}

ModeTracker::ModeTracker(const Environment& env, std::vector<State> modes)
    : env_(&env), modes_(std::move(modes)), region_hit_(env.region_count(), false) {
  for (const State& m : modes_) is_mode_[m] = true;
}

bool ModeTracker::observe(const State& terminal) {
  if (!is_mode_.count(terminal) || seen_.count(terminal)) return false;
  seen_[terminal] = true;
  discovered_.push_back(terminal);
  ++count_.cells;
  const int r = env_->mode_region(terminal);
  if (r >= 0 && static_cast<std::size_t>(r) < region_hit_.size() && !region_hit_[r]) {
    region_hit_[r] = true;
    ++count_.regions;
  }
  return true;
}

TopK topk_mean(std::vector<double> rewards, std::size_t k) {
  if (k == 0) throw UsageError("top-K needs K >= 1");
  TopK out;
  if (rewards.empty()) {
    out.partial = true;
    return out;
  }
  const std::size_t m = std::min(k, rewards.size());
  std::partial_sort(rewards.begin(), rewards.begin() + static_cast<long>(m), rewards.end(),
                    std::greater<double>());
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) s += rewards[i];
  out.mean = s / static_cast<double>(m);
  out.partial = rewards.size() < k;
  return out;
}

TopKTracker::TopKTracker(std::size_t k) : k_(k) {
  if (k_ == 0) throw UsageError("top-K needs K >= 1");
}

void TopKTracker::observe(const State& terminal, double reward) {
  if (!seen_.emplace(terminal, true).second) return;
  if (heap_.size() < k_) {
    heap_.push(reward);
    sum_ += reward;
  } else if (reward > heap_.top()) {
    sum_ += reward - heap_.top();
    heap_.pop();
    heap_.push(reward);
  }
}

TopK TopKTracker::value() const {
  TopK out;
  out.partial = heap_.size() < k_;
  if (!heap_.empty()) out.mean = sum_ / static_cast<double>(heap_.size());
  return out;
}

void write_density_csv(std::ostream& out, const Environment& env, const DensityTable& density) {
  out << "state,reward,probability\n";
  for (std::size_t i = 0; i < density.size(); ++i) {
    out << env.describe(density.terminals[i]) << ',' << fmt(env.reward(density.terminals[i])) << ','
        << fmt(density.prob[i]) << '\n';
  }
}

void write_modes_csv(std::ostream& out, const Environment& env, const std::vector<State>& modes) {
  out << "state,region,reward\n";
  for (const State& m : modes) {
    out << env.describe(m) << ',' << env.mode_region(m) << ',' << fmt(env.reward(m)) << '\n';
  }
}

void write_flows_csv(std::ostream& out, const Environment& env, const FlowTable& flows) {
  out << "state,action,child,edge_flow,state_flow\n";
  for (std::size_t i = 0; i < flows.states.size(); ++i) {
    const State& s = flows.states[i];
    if (s.terminal) {
      out << env.describe(s) << ",,," << ',' << fmt(flows.state_flow[i]) << '\n';
      continue;
    }
    const auto mask = env.allowed_actions(s);
    for (std::size_t a = 0; a < mask.size(); ++a) {
      if (!mask[a]) continue;
      out << env.describe(s) << ',' << a << ',' << env.describe(env.step(s, static_cast<int>(a)))
          << ',' << fmt(flows.edge_flow[i][a]) << ',' << fmt(flows.state_flow[i]) << '\n';
    }
  }
}

}  // namespace egfn

#pragma once

#include <cstddef>
#include <deque>
#include <iosfwd>
#include <optional>
#include <queue>
#include <vector>

#include "egfn/agent.hpp"
#include "egfn/envs.hpp"

namespace egfn {

// Probability per terminal, in enumerate_terminals order.
struct DensityTable {
  std::vector<State> terminals;
  std::vector<double> prob;
  double partition = 0.0;  // sum of rewards (true density only)
  StateMap<std::size_t> index;

  std::size_t size() const { return terminals.size(); }
  double at(const State& x) const;
};

// pi*(x) = R(x) / sum R.
DensityTable true_density(const Environment& env, std::size_t cap = kDefaultEnumerationCap);

// Terminal marginal of the agent's forward policy by forward dynamic
// programming over the DAG in topological order.
DensityTable exact_learned_density(const GfnAgent& agent, const Environment& env,
                                   std::size_t cap = kDefaultEnumerationCap, int workers = 1);

// A flow satisfying in-flow = out-flow at every interior state with terminal
// out-flow R(x). Each state's in-flow is split equally among its parent edges.
struct FlowTable {
  std::vector<State> states;           // topological order
  StateMap<std::size_t> index;
  std::vector<double> state_flow;      // per state
  std::vector<std::vector<double>> edge_flow;  // [state][action], 0 where absent

  double flow(const State& s) const { return state_flow[index.at(s)]; }
  double edge(const State& s, int action) const { return edge_flow[index.at(s)][action]; }
};

FlowTable exact_edge_flows(const Environment& env, std::size_t cap = kDefaultEnumerationCap);

// Every complete trajectory from the root, depth first in action order.
std::vector<Trajectory> enumerate_trajectories(const Environment& env, std::size_t cap);

// (1/|X|) sum_x |p(x) - q(x)| over the terminals of `truth`.
double l1_error(const DensityTable& estimate, const DensityTable& truth);

// Visits of terminal states kept in a sliding window of fixed capacity.
class VisitWindow {
 public:
  VisitWindow(const DensityTable& truth, std::size_t capacity);

  void add(const State& terminal);
  std::size_t size() const { return order_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::vector<std::size_t>& counts() const { return counts_; }

 private:
  const DensityTable* truth_;
  std::size_t capacity_;
  std::deque<std::size_t> order_;
  std::vector<std::size_t> counts_;
};

// (1/|X|) sum_x |freq(x) - pi*(x)|. Throws UsageError on an empty window.
double empirical_l1(const VisitWindow& window, const DensityTable& truth);
double empirical_l1(const std::vector<State>& visits, const DensityTable& truth);

struct ModeCount {
  std::size_t cells = 0;
  std::size_t regions = 0;
};

// Cells: discovered members of the mode set. Regions: distinct mode_region()
// values among those cells.
ModeCount count_modes(const std::vector<State>& discovered, const Environment& env,
                      const std::vector<State>& modes);

class ModeTracker {
 public:
  ModeTracker(const Environment& env, std::vector<State> modes);

  // Returns true when `terminal` is a mode seen for the first time.
  bool observe(const State& terminal);
  ModeCount count() const { return count_; }
  const std::vector<State>& discovered() const { return discovered_; }
  const std::vector<State>& modes() const { return modes_; }

 private:
  const Environment* env_;
  std::vector<State> modes_;
  StateMap<bool> is_mode_;
  StateMap<bool> seen_;
  std::vector<State> discovered_;
  std::vector<bool> region_hit_;
  ModeCount count_;
};

struct TopK {
  double mean = 0.0;
  bool partial = false;  // fewer than K values available
};

TopK topk_mean(std::vector<double> rewards, std::size_t k);

// Mean of the K largest rewards over distinct terminal states seen so far.
class TopKTracker {
 public:
  explicit TopKTracker(std::size_t k);

  void observe(const State& terminal, double reward);
  TopK value() const;
  std::size_t distinct() const { return seen_.size(); }

 private:
  std::size_t k_;
  StateMap<bool> seen_;
  std::priority_queue<double, std::vector<double>, std::greater<double>> heap_;
  double sum_ = 0.0;
};

// CSV dumps used by the oracle command.
void write_density_csv(std::ostream& out, const Environment& env, const DensityTable& density);
void write_modes_csv(std::ostream& out, const Environment& env, const std::vector<State>& modes);
void write_flows_csv(std::ostream& out, const Environment& env, const FlowTable& flows);

}  // namespace egfn

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace egfn {

inline constexpr std::size_t kDefaultEnumerationCap = 10'000'000;

// A node of the environment DAG. For the hypergrid `cells` are coordinates and
// a terminal state is the sink reached from the same coordinates by the stop
// action. For the sequence environment `cells` are token indices and a state
// is terminal exactly when it has full length.
struct State {
  std::vector<int> cells;
  bool terminal = false;

  bool operator==(const State&) const = default;
};

struct StateHash {
  std::size_t operator()(const State& s) const noexcept {
    std::uint64_t h = s.terminal ? 0x9e3779b97f4a7c15ULL : 0x2545f4914f6cdd1dULL;
    for (int c : s.cells) {
      h ^= static_cast<std::uint64_t>(c) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

template <typename T>
using StateMap = std::unordered_map<State, T, StateHash>;

struct ParentEdge {
  State parent;
  int action = 0;
  bool operator==(const ParentEdge&) const = default;
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::size_t action_count() const = 0;
  virtual State initial_state() const = 0;

  // Mask over actions at a non-terminal state. Throws UsageError on terminals.
  virtual std::vector<bool> allowed_actions(const State& s) const = 0;

  // Throws UsageError for terminal states or disallowed actions.
  virtual State step(const State& s, int action) const = 0;

  // Every (parent, action) edge entering s. Edges from the same parent via
  // different actions are listed separately.
  virtual std::vector<ParentEdge> parents(const State& s) const = 0;

  // Strictly positive reward of a terminal state.
  virtual double reward(const State& terminal) const = 0;

  virtual std::size_t encoding_dim() const = 0;
  virtual void encode(const State& s, std::span<double> out) const = 0;

  // Upper bound on the number of actions in any trajectory.
  virtual std::size_t max_trajectory_length() const = 0;

  // Number of terminal states and of all DAG nodes (terminal and not).
  virtual double terminal_count() const = 0;
  virtual double state_count() const = 0;

  // Deterministic exhaustive listings. Throws OracleUnavailable above `cap`.
  virtual std::vector<State> enumerate_terminals(std::size_t cap = kDefaultEnumerationCap) const = 0;
  // All nodes in topological order (parents before children).
  virtual std::vector<State> enumerate_states(std::size_t cap = kDefaultEnumerationCap) const = 0;

  // Terminal states of maximal reward.
  virtual std::vector<State> mode_set(std::size_t cap = kDefaultEnumerationCap) const = 0;

  // Index of the high-reward region a terminal belongs to, or -1 when the
  // environment has no region structure.
  virtual int mode_region(const State&) const { return -1; }
  virtual std::size_t region_count() const { return 0; }

  virtual std::string describe(const State& s) const = 0;
  virtual std::string name() const = 0;

  bool is_terminal(const State& s) const { return s.terminal; }
};

struct HypergridParams {
  std::size_t dims = 2;
  std::size_t horizon = 8;
  double r0 = 1e-3;
  double r1 = 0.5;
  double r2 = 2.0;
};

// D-dimensional grid of side H. Actions 0..D-1 increment one coordinate,
// action D stops and emits the current coordinates as the terminal state.
class HypergridEnv final : public Environment {
 public:
  explicit HypergridEnv(HypergridParams params);

  const HypergridParams& params() const { return params_; }
  std::size_t dims() const { return params_.dims; }
  std::size_t horizon() const { return params_.horizon; }
  int stop_action() const { return static_cast<int>(params_.dims); }

  // Band memberships of one coordinate, evaluated in exact integer arithmetic.
  bool in_outer_band(int coord) const;
  bool in_inner_band(int coord) const;

  std::size_t action_count() const override { return params_.dims + 1; }
  State initial_state() const override;
  std::vector<bool> allowed_actions(const State& s) const override;
  State step(const State& s, int action) const override;
  std::vector<ParentEdge> parents(const State& s) const override;
  double reward(const State& terminal) const override;
  std::size_t encoding_dim() const override { return params_.dims * params_.horizon; }
  void encode(const State& s, std::span<double> out) const override;
  State decode(std::span<const double> encoding) const;
  std::size_t max_trajectory_length() const override;
  double terminal_count() const override;
  double state_count() const override { return 2.0 * terminal_count(); }
  std::vector<State> enumerate_terminals(std::size_t cap = kDefaultEnumerationCap) const override;
  std::vector<State> enumerate_states(std::size_t cap = kDefaultEnumerationCap) const override;
  std::vector<State> mode_set(std::size_t cap = kDefaultEnumerationCap) const override;
  int mode_region(const State& terminal) const override;
  std::size_t region_count() const override { return std::size_t{1} << params_.dims; }
  std::string describe(const State& s) const override;
  std::string name() const override { return "hypergrid"; }

 private:
  void check_state(const State& s) const;
  std::vector<std::vector<int>> all_coords(std::size_t cap) const;

  HypergridParams params_;
};

inline constexpr double kSeqRewardFloor = 1e-6;

struct SeqParams {
  std::string alphabet = "ACGT";
  std::size_t length = 8;
  double beta = 3.0;
  // Relative tolerance for the mode set: x is a mode when its table reward is
  // at least (1 - tol) times the maximum.
  double mode_tol = 0.0;
};

// Prepend/append sequence builder. Actions [0, A) prepend token a, actions
// [A, 2A) append token a - A. Trajectories always have exactly L actions.
class SeqEnv final : public Environment {
 public:
  SeqEnv(SeqParams params, std::unordered_map<std::string, double> reward_table);

  const SeqParams& params() const { return params_; }
  std::size_t alphabet_size() const { return params_.alphabet.size(); }
  std::string to_string(const State& s) const;
  State from_string(const std::string& text) const;

  // Raw table value for a full-length sequence; throws DataError if missing.
  double table_reward(const State& terminal) const;

  std::size_t action_count() const override { return 2 * alphabet_size(); }
  State initial_state() const override { return State{}; }
  std::vector<bool> allowed_actions(const State& s) const override;
  State step(const State& s, int action) const override;
  std::vector<ParentEdge> parents(const State& s) const override;
  double reward(const State& terminal) const override;
  std::size_t encoding_dim() const override { return params_.length * (alphabet_size() + 1); }
  void encode(const State& s, std::span<double> out) const override;
  std::size_t max_trajectory_length() const override { return params_.length; }
  double terminal_count() const override;
  double state_count() const override;
  std::vector<State> enumerate_terminals(std::size_t cap = kDefaultEnumerationCap) const override;
  std::vector<State> enumerate_states(std::size_t cap = kDefaultEnumerationCap) const override;
  std::vector<State> mode_set(std::size_t cap = kDefaultEnumerationCap) const override;
  std::string describe(const State& s) const override { return s.cells.empty() ? "-" : to_string(s); }
  std::string name() const override { return "sequence"; }

 private:
  void check_state(const State& s) const;
  std::vector<State> strings_of_length(std::size_t len) const;

  SeqParams params_;
  std::unordered_map<std::string, double> table_;
};

// Parses `sequence,reward` lines (UTF-8, optional header, '#' comments and
// blank lines ignored). Duplicate keys keep the last value with a warning.
std::unordered_map<std::string, double> load_reward_table(const std::filesystem::path& path);
std::unordered_map<std::string, double> parse_reward_table(const std::string& text);

}  // namespace egfn

#pragma once
// s_0 -> s_1 -> ... -> s_n, one action per state; s_n is terminal.

#include <algorithm>
#include <string>

#include "egfn/agent.hpp"
#include "egfn/envs.hpp"
#include "egfn/errors.hpp"

namespace testsupport {

class ChainEnv final : public egfn::Environment {
 public:
  ChainEnv(int n, double reward) : n_(n), reward_(reward) {}

  std::size_t action_count() const override { return 1; }
  egfn::State initial_state() const override { return at(0); }
  std::vector<bool> allowed_actions(const egfn::State& s) const override {
    if (s.terminal) throw egfn::UsageError("chain: terminal");
    return {true};
  }
  egfn::State step(const egfn::State& s, int action) const override {
    if (s.terminal || action != 0) throw egfn::UsageError("chain: bad step");
    return at(s.cells[0] + 1);
  }
  std::vector<egfn::ParentEdge> parents(const egfn::State& s) const override {
    if (s.cells[0] == 0) return {};
    return {egfn::ParentEdge{at(s.cells[0] - 1), 0}};
  }
  double reward(const egfn::State&) const override { return reward_; }
  std::size_t encoding_dim() const override { return static_cast<std::size_t>(n_) + 1; }
  void encode(const egfn::State& s, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    out[static_cast<std::size_t>(s.cells[0])] = 1.0;
  }
  std::size_t max_trajectory_length() const override { return static_cast<std::size_t>(n_); }
  double terminal_count() const override { return 1; }
  double state_count() const override { return n_ + 1; }
  std::vector<egfn::State> enumerate_terminals(std::size_t) const override { return {at(n_)}; }
  std::vector<egfn::State> enumerate_states(std::size_t) const override {
    std::vector<egfn::State> out;
    for (int i = 0; i <= n_; ++i) out.push_back(at(i));
    return out;
  }
  std::vector<egfn::State> mode_set(std::size_t) const override { return {at(n_)}; }
  std::string describe(const egfn::State& s) const override { return "c" + std::to_string(s.cells[0]); }
  std::string name() const override { return "chain"; }

  egfn::State at(int i) const { return egfn::State{{i}, i == n_}; }
  egfn::Trajectory path() const {
    egfn::Trajectory t;
    for (int i = 0; i <= n_; ++i) t.states.push_back(at(i));
    t.actions.assign(static_cast<std::size_t>(n_), 0);
    t.reward = reward_;
    return t;
  }

 private:
  int n_;
  double reward_;
};

}  // namespace testsupport

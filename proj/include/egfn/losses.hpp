#pragma once

#include <cstddef>
#include <vector>

#include "egfn/agent.hpp"

namespace egfn {

inline constexpr double kRewardFloor = 1e-30;

// log R with R clamped below at kRewardFloor.
double safe_log_reward(double reward);

struct Transition {
  State from;
  int action = 0;
  State to;
};

// d(loss)/d(output[row][col]) contributed by one batch item.
struct OutputGrad {
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;
};

struct ItemTerm {
  double loss = 0.0;
  std::vector<OutputGrad> grads;
  double log_z_grad = 0.0;
};

struct LossBatchReport {
  double mean_loss = 0.0;
  std::vector<double> item_losses;
  ParamVector gradient;
  double log_z_grad = 0.0;
  // TB: current log Z. DB: mean log F over the source states. FM: 0.
  double aux = 0.0;
};

// Per-item terms against network outputs already placed in `table`. These
// take the outputs as given, so tests can plant exact flows or policies.
//
// FM, per non-root state s: inflow is the log-sum-exp of the parent edge flows
// out_{s'}[a]; outflow is log R(s) at a terminal and the log-sum-exp of the
// allowed child edge flows (stop included) elsewhere.
ItemTerm fm_term(const HeadLayout& heads, const Environment& env, const HeadTable& table,
                 const State& s);
// DB, per edge s -a-> s': log F(s) + log P_F(a|s) - log F(s') - log P_B(s|s'),
// with F(s') := R(s') at a terminal.
ItemTerm db_term(const HeadLayout& heads, const Environment& env, const HeadTable& table,
                 const Transition& edge, bool uniform_pb);
// TB, per trajectory: log Z + sum log P_F - log R(x) - sum log P_B.
ItemTerm tb_term(const HeadLayout& heads, const Environment& env, const HeadTable& table,
                 const Trajectory& traj, double log_z, bool uniform_pb);

// States whose outputs each term reads.
void fm_register(const Environment& env, HeadTable& table, const State& s);
void db_register(const HeadLayout& heads, const Environment& env, HeadTable& table,
                 const Transition& edge, bool uniform_pb);
void tb_register(const HeadLayout& heads, const Environment& env, HeadTable& table,
                 const Trajectory& traj, bool uniform_pb);

// Mean losses with gradients for the agent's parameters. Items are evaluated
// on `workers` threads; their output gradients are merged in item order so
// the result does not depend on the worker count.
LossBatchReport fm_loss(const GfnAgent& agent, const Environment& env,
                        const std::vector<State>& states, int workers = 1);
LossBatchReport db_loss(const GfnAgent& agent, const Environment& env,
                        const std::vector<Transition>& edges, int workers = 1);
LossBatchReport tb_loss(const GfnAgent& agent, const Environment& env,
                        const std::vector<Trajectory>& trajs, int workers = 1);

// Splits a trajectory batch the way each objective consumes it: FM takes every
// non-root state, DB every transition, TB whole trajectories.
std::vector<State> batch_states(const std::vector<Trajectory>& trajs);
std::vector<Transition> batch_transitions(const std::vector<Trajectory>& trajs);
LossBatchReport objective_loss(const GfnAgent& agent, const Environment& env,
                               const std::vector<Trajectory>& trajs, int workers = 1);

// One forward and backward pass per item through the unbatched reference
// kernels. Same results as objective_loss up to rounding.
namespace reference {
LossBatchReport objective_loss(const GfnAgent& agent, const Environment& env,
                               const std::vector<Trajectory>& trajs);
}  // namespace reference

}  // namespace egfn

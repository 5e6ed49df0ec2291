#include "egfn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

#include "egfn/errors.hpp"

namespace egfn {

namespace {

struct Lse {
  double value = 0.0;
  std::vector<double> weights;  // softmax of the inputs
};

Lse log_sum_exp(const std::vector<double>& v) {
  Lse out;
  double top = -std::numeric_limits<double>::infinity();
  for (double x : v) top = std::max(top, x);
  double sum = 0.0;
  out.weights.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.weights[i] = std::exp(v[i] - top);
    sum += out.weights[i];
  }
  for (double& w : out.weights) w /= sum;
  out.value = top + std::log(sum);
  return out;
}

std::size_t parent_edge_index(const std::vector<ParentEdge>& edges, const State& parent,
                              int action) {
  for (std::size_t k = 0; k < edges.size(); ++k) {
    if (edges[k].action == action && edges[k].parent == parent) return k;
  }
  throw DataError("edge is not a parent edge of its target");
}

bool learned_backward(const HeadLayout& heads, bool uniform_pb, std::size_t parent_count) {
  return heads.has_backward() && !uniform_pb && parent_count > 1;
}

// Adds scale * d log P_F(action|s) / d logits to the item gradient.
void push_forward_grads(ItemTerm& item, const HeadLayout& heads, std::size_t row,
                        const std::vector<double>& logp, int action, double scale) {
  for (std::size_t b = 0; b < heads.actions; ++b) {
    if (std::isinf(logp[b])) continue;
    const double indicator = static_cast<int>(b) == action ? 1.0 : 0.0;
    item.grads.push_back({row, heads.forward_offset() + b, scale * (indicator - std::exp(logp[b]))});
  }
}

void push_backward_grads(ItemTerm& item, const HeadLayout& heads, std::size_t row,
                         const std::vector<ParentEdge>& edges, const std::vector<double>& logpb,
                         std::size_t k, double scale) {
  for (std::size_t j = 0; j < edges.size(); ++j) {
    const double indicator = j == k ? 1.0 : 0.0;
    item.grads.push_back({row, heads.backward_offset() + static_cast<std::size_t>(edges[j].action),
                          scale * (indicator - std::exp(logpb[j]))});
  }
}

template <typename Item, typename Register, typename Term>
LossBatchReport run_batch(const GfnAgent& agent, const Environment& env,
                          const std::vector<Item>& items, HeadTable& table, Register reg,
                          Term term, int workers) {
  LossBatchReport report;
  report.gradient = ParamVector(agent.params.layout);
  report.item_losses.assign(items.size(), 0.0);
  if (items.empty()) return report;

  for (const Item& item : items) reg(table, item);
  ForwardCache cache;
  table.evaluate(agent, env, &cache, workers);

  std::vector<ItemTerm> terms(items.size());
  std::vector<std::exception_ptr> failures(items.size());
  const long n = static_cast<long>(items.size());
#pragma omp parallel for num_threads(std::max(1, workers)) schedule(static)
  for (long i = 0; i < n; ++i) {
    try {
      terms[i] = term(table, items[i]);
    } catch (...) {
      failures[i] = std::current_exception();
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  const double inv_n = 1.0 / static_cast<double>(items.size());
  Matrix upstream(table.size(), agent.spec.output_dim);
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    report.item_losses[i] = terms[i].loss;
    loss_sum += terms[i].loss;
    report.log_z_grad += terms[i].log_z_grad * inv_n;
    for (const OutputGrad& g : terms[i].grads) upstream(g.row, g.col) += g.value * inv_n;
  }
  report.mean_loss = loss_sum * inv_n;
  mlp_backward_batch(agent.spec, agent.params, cache, upstream, report.gradient.values, workers);
  return report;
}

}  // namespace

double safe_log_reward(double reward) { return std::log(std::max(reward, kRewardFloor)); }

void fm_register(const Environment& env, HeadTable& table, const State& s) {
  if (!s.terminal) table.add(s);
  for (const ParentEdge& e : env.parents(s)) table.add(e.parent);
}

ItemTerm fm_term(const HeadLayout& heads, const Environment& env, const HeadTable& table,
                 const State& s) {
  const auto edges = env.parents(s);
  if (edges.empty()) throw UsageError("flow matching is undefined at the root state");

  std::vector<double> in_vals;
  std::vector<std::size_t> in_rows;
  for (const ParentEdge& e : edges) {
    const std::size_t r = table.row(e.parent);
    in_rows.push_back(r);
    in_vals.push_back(table.outputs(r, heads.forward_offset() + static_cast<std::size_t>(e.action)));
  }
  const Lse in = log_sum_exp(in_vals);

  Lse out;
  std::vector<std::size_t> out_cols;
  std::size_t own_row = 0;
  if (s.terminal) {
    out.value = safe_log_reward(env.reward(s));
  } else {
    own_row = table.row(s);
    const auto mask = env.allowed_actions(s);
    std::vector<double> vals;
    for (std::size_t a = 0; a < heads.actions; ++a) {
      if (!mask[a]) continue;
      out_cols.push_back(heads.forward_offset() + a);
      vals.push_back(table.outputs(own_row, heads.forward_offset() + a));
    }
    out = log_sum_exp(vals);
  }

  ItemTerm item;
  const double diff = in.value - out.value;
  item.loss = diff * diff;
  for (std::size_t k = 0; k < edges.size(); ++k) {
    item.grads.push_back({in_rows[k], heads.forward_offset() + static_cast<std::size_t>(edges[k].action),
                          2.0 * diff * in.weights[k]});
  }
  for (std::size_t k = 0; k < out_cols.size(); ++k) {
    item.grads.push_back({own_row, out_cols[k], -2.0 * diff * out.weights[k]});
  }
  return item;
}

void db_register(const HeadLayout& heads, const Environment& env, HeadTable& table,
                 const Transition& edge, bool uniform_pb) {
  table.add(edge.from);
  if (!edge.to.terminal || learned_backward(heads, uniform_pb, env.parents(edge.to).size())) {
    table.add(edge.to);
  }
}

ItemTerm db_term(const HeadLayout& heads, const Environment& env, const HeadTable& table,
                 const Transition& edge, bool uniform_pb) {
  if (edge.from.terminal || !(env.step(edge.from, edge.action) == edge.to)) {
    throw DataError("transition " + env.describe(edge.from) + " --" + std::to_string(edge.action) +
                    "--> " + env.describe(edge.to) + " is not an edge of the environment");
  }
  const std::size_t rf = table.row(edge.from);
  const auto out_f = table.outputs.row(rf);
  const auto logp = forward_log_probs(heads, env, edge.from, out_f);

  const auto edges = env.parents(edge.to);
  const std::size_t k = parent_edge_index(edges, edge.from, edge.action);
  const bool learned = learned_backward(heads, uniform_pb, edges.size());
  std::size_t rt = 0;
  double log_f_next;
  std::vector<double> logpb;
  if (!edge.to.terminal || learned) rt = table.row(edge.to);
  if (edge.to.terminal) {
    log_f_next = safe_log_reward(env.reward(edge.to));
  } else {
    log_f_next = table.outputs(rt, heads.flow_index());
  }
  if (learned) {
    logpb = backward_log_probs(heads, env, edge.to, table.outputs.row(rt), false);
  } else {
    logpb.assign(edges.size(), -std::log(static_cast<double>(edges.size())));
  }

  ItemTerm item;
  const double diff = out_f[heads.flow_index()] + logp[edge.action] - log_f_next - logpb[k];
  item.loss = diff * diff;
  item.grads.push_back({rf, heads.flow_index(), 2.0 * diff});
  push_forward_grads(item, heads, rf, logp, edge.action, 2.0 * diff);
  if (!edge.to.terminal) item.grads.push_back({rt, heads.flow_index(), -2.0 * diff});
  if (learned) push_backward_grads(item, heads, rt, edges, logpb, k, -2.0 * diff);
  return item;
}

void tb_register(const HeadLayout& heads, const Environment& env, HeadTable& table,
                 const Trajectory& traj, bool uniform_pb) {
  for (std::size_t t = 0; t < traj.actions.size(); ++t) {
    table.add(traj.states[t]);
    const State& next = traj.states[t + 1];
    if (learned_backward(heads, uniform_pb, env.parents(next).size())) table.add(next);
  }
}

ItemTerm tb_term(const HeadLayout& heads, const Environment& env, const HeadTable& table,
                 const Trajectory& traj, double log_z, bool uniform_pb) {
  validate_trajectory(env, traj);
  if (!(traj.reward > 0.0)) {
    throw DataError("trajectory reward must be positive, got " + std::to_string(traj.reward));
  }
  struct Step {
    std::size_t row;
    std::vector<double> logp;
    std::size_t next_row;
    bool learned;
    std::vector<ParentEdge> edges;
    std::vector<double> logpb;
    std::size_t k;
  };
  std::vector<Step> steps;
  double diff = log_z - safe_log_reward(traj.reward);
  for (std::size_t t = 0; t < traj.actions.size(); ++t) {
    const State& s = traj.states[t];
    const State& next = traj.states[t + 1];
    Step st;
    st.row = table.row(s);
    st.logp = forward_log_probs(heads, env, s, table.outputs.row(st.row));
    st.edges = env.parents(next);
    st.k = parent_edge_index(st.edges, s, traj.actions[t]);
    st.learned = learned_backward(heads, uniform_pb, st.edges.size());
    st.next_row = 0;
    if (st.learned) {
      st.next_row = table.row(next);
      st.logpb = backward_log_probs(heads, env, next, table.outputs.row(st.next_row), false);
    } else {
      st.logpb.assign(st.edges.size(), -std::log(static_cast<double>(st.edges.size())));
    }
    diff += st.logp[traj.actions[t]] - st.logpb[st.k];
    steps.push_back(std::move(st));
  }

  ItemTerm item;
  item.loss = diff * diff;
  item.log_z_grad = 2.0 * diff;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const Step& st = steps[t];
    push_forward_grads(item, heads, st.row, st.logp, traj.actions[t], 2.0 * diff);
    if (st.learned) push_backward_grads(item, heads, st.next_row, st.edges, st.logpb, st.k, -2.0 * diff);
  }
  return item;
}

LossBatchReport fm_loss(const GfnAgent& agent, const Environment& env,
                        const std::vector<State>& states, int workers) {
  if (agent.kind != ObjectiveKind::kFM) throw UsageError("fm_loss needs an FM agent");
  std::vector<State> kept;
  kept.reserve(states.size());
  std::size_t dropped = 0;
  for (const State& s : states) {
    if (env.parents(s).empty()) {
      ++dropped;
    } else {
      kept.push_back(s);
    }
  }
  if (dropped > 0) {
    log_warning("flow matching batch: excluded " + std::to_string(dropped) + " root state(s)");
  }
  const HeadLayout heads = agent.heads();
  HeadTable table;
  return run_batch(
      agent, env, kept, table, [&](HeadTable& t, const State& s) { fm_register(env, t, s); },
      [&](const HeadTable& t, const State& s) { return fm_term(heads, env, t, s); }, workers);
}

LossBatchReport db_loss(const GfnAgent& agent, const Environment& env,
                        const std::vector<Transition>& edges, int workers) {
  if (agent.kind != ObjectiveKind::kDB) throw UsageError("db_loss needs a DB agent");
  const HeadLayout heads = agent.heads();
  HeadTable table;
  auto report = run_batch(
      agent, env, edges, table,
      [&](HeadTable& t, const Transition& e) { db_register(heads, env, t, e, agent.uniform_pb); },
      [&](const HeadTable& t, const Transition& e) {
        return db_term(heads, env, t, e, agent.uniform_pb);
      },
      workers);
  if (!edges.empty()) {
    double sum = 0.0;
    for (const Transition& e : edges) sum += table.outputs(table.row(e.from), heads.flow_index());
    report.aux = sum / static_cast<double>(edges.size());
  }
  return report;
}

LossBatchReport tb_loss(const GfnAgent& agent, const Environment& env,
                        const std::vector<Trajectory>& trajs, int workers) {
  if (agent.kind != ObjectiveKind::kTB) throw UsageError("tb_loss needs a TB agent");
  const HeadLayout heads = agent.heads();
  HeadTable table;
  auto report = run_batch(
      agent, env, trajs, table,
      [&](HeadTable& t, const Trajectory& tr) { tb_register(heads, env, t, tr, agent.uniform_pb); },
      [&](const HeadTable& t, const Trajectory& tr) {
        return tb_term(heads, env, t, tr, agent.log_z, agent.uniform_pb);
      },
      workers);
  report.aux = agent.log_z;
  return report;
}

std::vector<State> batch_states(const std::vector<Trajectory>& trajs) {
  std::vector<State> out;
  for (const Trajectory& t : trajs) {
    for (std::size_t i = 1; i < t.states.size(); ++i) out.push_back(t.states[i]);
  }
  return out;
}

std::vector<Transition> batch_transitions(const std::vector<Trajectory>& trajs) {
  std::vector<Transition> out;
  for (const Trajectory& t : trajs) {
    for (std::size_t i = 0; i < t.actions.size(); ++i) {
      out.push_back({t.states[i], t.actions[i], t.states[i + 1]});
    }
  }
  return out;
}

LossBatchReport objective_loss(const GfnAgent& agent, const Environment& env,
                               const std::vector<Trajectory>& trajs, int workers) {
  switch (agent.kind) {
    case ObjectiveKind::kFM: return fm_loss(agent, env, batch_states(trajs), workers);
    case ObjectiveKind::kDB: return db_loss(agent, env, batch_transitions(trajs), workers);
    case ObjectiveKind::kTB: return tb_loss(agent, env, trajs, workers);
  }
  throw std::logic_error("unknown objective");
}

namespace reference {

namespace {

template <typename Item, typename Register, typename Term>
LossBatchReport run_items(const GfnAgent& agent, const Environment& env,
                          const std::vector<Item>& items, Register reg, Term term) {
  LossBatchReport report;
  report.gradient = ParamVector(agent.params.layout);
  if (items.empty()) return report;
  const double inv_n = 1.0 / static_cast<double>(items.size());
  for (const Item& item : items) {
    HeadTable table;
    reg(table, item);
    table.outputs = Matrix(table.size(), agent.spec.output_dim);
    for (std::size_t r = 0; r < table.size(); ++r) {
      const auto x = encode_state(env, table.states()[r]);
      const auto y = egfn::reference::mlp_forward(agent.spec, agent.params, x);
      std::copy(y.begin(), y.end(), table.outputs.row(r).begin());
    }
    const ItemTerm t = term(table, item);
    report.item_losses.push_back(t.loss);
    report.mean_loss += t.loss * inv_n;
    report.log_z_grad += t.log_z_grad * inv_n;
    Matrix upstream(table.size(), agent.spec.output_dim);
    for (const OutputGrad& g : t.grads) upstream(g.row, g.col) += g.value;
    for (std::size_t r = 0; r < table.size(); ++r) {
      const auto x = encode_state(env, table.states()[r]);
      const ParamVector g = egfn::reference::mlp_backward(agent.spec, agent.params, x, upstream.row(r));
      for (std::size_t i = 0; i < g.values.size(); ++i) report.gradient.values[i] += g.values[i] * inv_n;
    }
  }
  return report;
}

}  // namespace

LossBatchReport objective_loss(const GfnAgent& agent, const Environment& env,
                               const std::vector<Trajectory>& trajs) {
  const HeadLayout heads = agent.heads();
  switch (agent.kind) {
    case ObjectiveKind::kFM: {
      std::vector<State> states;
      for (State& s : batch_states(trajs)) {
        if (!env.parents(s).empty()) states.push_back(std::move(s));
      }
      return run_items(
          agent, env, states, [&](HeadTable& t, const State& s) { fm_register(env, t, s); },
          [&](const HeadTable& t, const State& s) { return fm_term(heads, env, t, s); });
    }
    case ObjectiveKind::kDB:
      return run_items(
          agent, env, batch_transitions(trajs),
          [&](HeadTable& t, const Transition& e) { db_register(heads, env, t, e, agent.uniform_pb); },
          [&](const HeadTable& t, const Transition& e) {
            return db_term(heads, env, t, e, agent.uniform_pb);
          });
    case ObjectiveKind::kTB: {
      auto report = run_items(
          agent, env, trajs,
          [&](HeadTable& t, const Trajectory& tr) { tb_register(heads, env, t, tr, agent.uniform_pb); },
          [&](const HeadTable& t, const Trajectory& tr) {
            return tb_term(heads, env, t, tr, agent.log_z, agent.uniform_pb);
          });
      report.aux = agent.log_z;
      return report;
    }
  }
  throw std::logic_error("unknown objective");
}

}  // namespace reference

}  // namespace egfn

#pragma once
// Test-side oracles. Everything here is computed from the environment API and
// the reference MLP only, so library results can be checked against it.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "egfn/agent.hpp"
#include "egfn/envs.hpp"
#include "egfn/numnet.hpp"

namespace testsupport {

using egfn::Environment;
using egfn::State;
using egfn::Trajectory;

inline double lse(const std::vector<double>& v) {
  double top = -std::numeric_limits<double>::infinity();
  for (double x : v) top = std::max(top, x);
  if (!std::isfinite(top)) return top;
  double s = 0.0;
  for (double x : v) s += std::exp(x - top);
  return top + std::log(s);
}

// Depth-first over every complete trajectory.
inline void for_each_path(const Environment& env, const std::function<void(const Trajectory&)>& fn) {
  Trajectory t;
  t.states.push_back(env.initial_state());
  std::function<void()> rec = [&]() {
    const State s = t.states.back();  // copy: push_back below may reallocate
    if (s.terminal) {
      t.reward = env.reward(s);
      fn(t);
      return;
    }
    const auto mask = env.allowed_actions(s);
    for (std::size_t a = 0; a < mask.size(); ++a) {
      if (!mask[a]) continue;
      t.states.push_back(env.step(s, static_cast<int>(a)));
      t.actions.push_back(static_cast<int>(a));
      rec();
      t.states.pop_back();
      t.actions.pop_back();
    }
  };
  rec();
}

inline std::vector<Trajectory> all_paths(const Environment& env) {
  std::vector<Trajectory> out;
  for_each_path(env, [&](const Trajectory& t) { out.push_back(t); });
  return out;
}

// Flow of every trajectory is R(x) times the product of uniform backward
// probabilities; state and edge flows are sums over the trajectories through
// them. This is a valid flow for any DAG.
struct PathFlows {
  egfn::StateMap<double> state;
  egfn::StateMap<std::map<int, double>> edge;
  double z = 0.0;
};

inline PathFlows path_flows(const Environment& env) {
  PathFlows f;
  for_each_path(env, [&](const Trajectory& t) {
    double w = t.reward;
    for (std::size_t i = 1; i < t.states.size(); ++i) {
      w /= static_cast<double>(env.parents(t.states[i]).size());
    }
    f.z += w;
    for (std::size_t i = 0; i < t.states.size(); ++i) {
      f.state[t.states[i]] += w;
      if (i + 1 < t.states.size()) f.edge[t.states[i]][t.actions[i]] += w;
    }
  });
  return f;
}

// Terminal probabilities by brute force: sum over paths of the product of
// forward probabilities.
inline egfn::StateMap<double> path_marginal(
    const Environment& env, const std::function<std::vector<double>(const State&)>& pf) {
  egfn::StateMap<double> out;
  for_each_path(env, [&](const Trajectory& t) {
    double p = 1.0;
    for (std::size_t i = 0; i < t.actions.size(); ++i) p *= pf(t.states[i])[t.actions[i]];
    out[t.terminal()] += p;
  });
  return out;
}

// Network outputs that encode the exact flows: log edge flows as FM flows and
// forward logits, log parent-edge flows as backward logits, log F(s) in the
// DB flow slot.
inline std::vector<double> exact_outputs(const egfn::HeadLayout& heads, const Environment& env,
                                         const PathFlows& flows, const State& s) {
  std::vector<double> out(heads.output_dim(), 0.0);
  if (!s.terminal) {
    const auto it = flows.edge.find(s);
    for (const auto& [a, w] : it->second) out[heads.forward_offset() + a] = std::log(w);
  }
  if (heads.has_backward()) {
    for (const auto& e : env.parents(s)) {
      out[heads.backward_offset() + e.action] = std::log(flows.edge.at(e.parent).at(e.action));
    }
  }
  if (heads.kind == egfn::ObjectiveKind::kDB) out[heads.flow_index()] = std::log(flows.state.at(s));
  return out;
}

// Objective losses written from scratch against env + reference forward.
struct LossOracle {
  const egfn::GfnAgent& agent;
  const Environment& env;

  std::vector<double> out(const State& s) const {
    std::vector<double> x(env.encoding_dim());
    env.encode(s, x);
    return egfn::reference::mlp_forward(agent.spec, agent.params, x);
  }
  std::size_t A() const { return env.action_count(); }

  double log_pf(const State& s, int a) const {
    const auto o = out(s);
    const auto mask = env.allowed_actions(s);
    std::vector<double> live;
    for (std::size_t i = 0; i < A(); ++i) {
      if (mask[i]) live.push_back(o[i]);
    }
    return o[a] - lse(live);
  }
  double log_pb(const State& child, const State& parent, int a) const {
    const auto ps = env.parents(child);
    if (agent.uniform_pb || agent.kind == egfn::ObjectiveKind::kFM || ps.size() == 1) {
      return -std::log(static_cast<double>(ps.size()));
    }
    const auto o = out(child);
    std::vector<double> logits;
    double mine = 0.0;
    for (const auto& e : ps) {
      logits.push_back(o[A() + e.action]);
      if (e.parent == parent && e.action == a) mine = o[A() + e.action];
    }
    return mine - lse(logits);
  }
  double tb(const Trajectory& t) const {
    double r = agent.log_z - std::log(env.reward(t.terminal()));
    for (std::size_t i = 0; i < t.actions.size(); ++i) {
      r += log_pf(t.states[i], t.actions[i]) - log_pb(t.states[i + 1], t.states[i], t.actions[i]);
    }
    return r * r;
  }
  double db(const State& s, int a, const State& s2) const {
    const double fs = out(s)[2 * A()];
    const double fs2 = s2.terminal ? std::log(env.reward(s2)) : out(s2)[2 * A()];
    const double r = fs + log_pf(s, a) - fs2 - log_pb(s2, s, a);
    return r * r;
  }
  double fm(const State& s) const {
    std::vector<double> in;
    for (const auto& e : env.parents(s)) in.push_back(out(e.parent)[e.action]);
    double outflow;
    if (s.terminal) {
      outflow = std::log(env.reward(s));
    } else {
      const auto o = out(s);
      const auto mask = env.allowed_actions(s);
      std::vector<double> live;
      for (std::size_t i = 0; i < A(); ++i) {
        if (mask[i]) live.push_back(o[i]);
      }
      outflow = lse(live);
    }
    const double r = lse(in) - outflow;
    return r * r;
  }

  double mean(const std::vector<Trajectory>& batch) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const Trajectory& t : batch) {
      if (agent.kind == egfn::ObjectiveKind::kTB) {
        sum += tb(t);
        ++n;
        continue;
      }
      for (std::size_t i = 0; i < t.actions.size(); ++i) {
        sum += agent.kind == egfn::ObjectiveKind::kDB ? db(t.states[i], t.actions[i], t.states[i + 1])
                                                      : fm(t.states[i + 1]);
        ++n;
      }
    }
    return sum / static_cast<double>(n);
  }
};

// Sign pattern of every hidden pre-activation over `states`; a change means a
// finite-difference probe straddled a leaky-ReLU kink.
inline std::vector<bool> kink_pattern(const egfn::GfnAgent& agent, const Environment& env,
                                      const std::vector<State>& states) {
  std::vector<bool> signs;
  for (const State& s : states) {
    std::vector<double> x(env.encoding_dim());
    env.encode(s, x);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < agent.spec.layer_count(); ++l) {
      const std::size_t in = agent.spec.layer_inputs(l), outn = agent.spec.layer_outputs(l);
      std::vector<double> y(outn);
      for (std::size_t r = 0; r < outn; ++r) {
        const double* w = agent.params.values.data() + off + r * (in + 1);
        double acc = w[in];
        for (std::size_t c = 0; c < in; ++c) acc += w[c] * x[c];
        signs.push_back(acc > 0.0);
        y[r] = acc > 0.0 ? acc : egfn::kLeakySlope * acc;
      }
      off += outn * (in + 1);
      x = std::move(y);
    }
  }
  return signs;
}

struct FdResult {
  double max_rel = 0.0;
  std::size_t coords = 0;
  std::size_t one_sided = 0;
  // worst coordinate
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t index = 0;
};

// |analytic - numeric| / max(|analytic|, |numeric|, floor) per coordinate.
inline double rel_error(double a, double n, double floor = 1e-6) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

// Compares `grad` (and the log Z derivative for TB) with finite differences of
// the oracle loss. Five-point central stencil, O(h^4); a three-point stencil at
// small h drowns gradients near 1e-6 in rounding. Where a probe crosses a
// leaky-ReLU kink, a fourth-order one-sided stencil from the smooth side is
// used; if both sides are kinked, h shrinks.
inline FdResult finite_difference_check(egfn::GfnAgent agent, const Environment& env,
                                        const std::vector<Trajectory>& batch,
                                        const std::vector<double>& grad, double log_z_grad,
                                        double h = 1e-4) {
  std::vector<State> states;
  for (const Trajectory& t : batch) states.insert(states.end(), t.states.begin(), t.states.end());
  auto loss = [&](const egfn::GfnAgent& g) { return LossOracle{g, env}.mean(batch); };
  FdResult res;
  const auto base_pattern = kink_pattern(agent, env, states);
  const double f0 = loss(agent);

  auto derivative = [&](double& x, bool check_kinks) {
    const double keep = x;
    auto at = [&](double delta, bool& smooth) {
      x = keep + delta;
      const double f = loss(agent);
      if (check_kinks && kink_pattern(agent, env, states) != base_pattern) smooth = false;
      x = keep;
      return f;
    };
    for (double step = h; step >= h * 1e-3; step /= 10) {
      bool sp = true, sm = true;
      const double p1 = at(step, sp), p2 = at(2 * step, sp);
      const double m1 = at(-step, sm), m2 = at(-2 * step, sm);
      if (sp && sm) return std::pair{(m2 - 8 * m1 + 8 * p1 - p2) / (12 * step), false};
      for (double dir : {1.0, -1.0}) {
        if ((dir > 0 && !sp) || (dir < 0 && !sm)) continue;
        bool ok = true;
        const double f3 = at(dir * 3 * step, ok), f4 = at(dir * 4 * step, ok);
        if (!ok) continue;
        const double f1 = dir > 0 ? p1 : m1, f2 = dir > 0 ? p2 : m2;
        return std::pair{dir * (-25 * f0 + 48 * f1 - 36 * f2 + 16 * f3 - 3 * f4) / (12 * step), true};
      }
    }
    // kinks on both sides at every step tried; report the plain central value
    bool unused = true;
    const double small = h * 1e-3;
    return std::pair{(at(small, unused) - at(-small, unused)) / (2 * small), true};
  };

  auto record = [&](double analytic, std::pair<double, bool> fd, std::size_t index) {
    const double rel = rel_error(analytic, fd.first);
    res.one_sided += fd.second ? 1 : 0;
    if (rel > res.max_rel) {
      res.max_rel = rel;
      res.analytic = analytic;
      res.numeric = fd.first;
      res.index = index;
    }
    ++res.coords;
  };
  for (std::size_t i = 0; i < agent.params.size(); ++i) {
    record(grad[i], derivative(agent.params.values[i], true), i);
  }
  if (agent.kind == egfn::ObjectiveKind::kTB) {
    record(log_z_grad, derivative(agent.log_z, false), agent.params.size());
  }
  return res;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("egfn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Random reward table over every length-L string of `alphabet`.
inline std::unordered_map<std::string, double> random_table(const std::string& alphabet,
                                                            std::size_t L, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::unordered_map<std::string, double> t;
  std::vector<std::string> words{""};
  for (std::size_t i = 0; i < L; ++i) {
    std::vector<std::string> next;
    for (const auto& w : words) {
      for (char c : alphabet) next.push_back(w + c);
    }
    words = std::move(next);
  }
  for (const auto& w : words) t[w] = u(rng);
  return t;
}

}  // namespace testsupport

#include "egfn/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <random>

#include "egfn/errors.hpp"

namespace egfn {

std::size_t EvoConfig::elite_count() const {
  return ceil_count(elite_frac * static_cast<double>(k));
}

void EvoConfig::validate() const {
  if (k < 2) throw ConfigError("evo.k must be at least 2");
  if (eval_episodes < 1) throw ConfigError("evo.eval_episodes must be at least 1");
  if (!(elite_frac > 0.0 && elite_frac < 1.0)) throw ConfigError("evo.elite_frac must lie in (0, 1)");
  if (elite_count() < 1 || elite_count() >= k) {
    throw ConfigError("evo.elite_frac leaves no room for non-elite members at this k");
  }
  if (!(mutation_strength > 0.0)) throw ConfigError("evo.mutation_strength must be positive");
  if (!(p_mutation >= 0.0 && p_mutation <= 1.0)) throw ConfigError("evo.p_mutation must lie in [0, 1]");
  if (!(row_mut_frac > 0.0 && row_mut_frac <= 1.0)) {
    throw ConfigError("evo.row_mut_frac must lie in (0, 1]");
  }
  if (selection == SelectionKind::kTournament && tournament_size < 1) {
    throw ConfigError("evo.tournament_size must be at least 1");
  }
}

Population make_population(const GfnAgent& shape, std::size_t k, std::uint64_t seed) {
  Population pop;
  for (std::size_t i = 0; i < k; ++i) {
    Rng rng = make_stream(seed, StreamTag::kPopulationInit, i);
    ParamVector p(shape.params.layout);
    xavier_init(p, rng);
    pop.members.push_back(std::move(p));
  }
  pop.fitness.assign(k, std::numeric_limits<double>::quiet_NaN());
  return pop;
}

MemberEvaluation evaluate_member(const GfnAgent& shape, const ParamVector& member,
                                 const Environment& env, std::size_t episodes, Rng& rng) {
  if (episodes < 1) throw ConfigError("evaluation needs at least one episode");
  if (!member.same_layout(shape.params)) throw ConfigError("member layout differs from the agent");
  GfnAgent agent = shape;
  agent.params = member;
  MemberEvaluation out;
  out.trajectories = sample_trajectories(agent, env, episodes, rng, 0.0, 1);
  double sum = 0.0;
  for (const Trajectory& t : out.trajectories) sum += t.reward;
  out.fitness = sum / static_cast<double>(episodes);
  return out;
}

double evaluate(const GfnAgent& shape, const ParamVector& member, const Environment& env,
                std::size_t episodes, Rng& rng, ReplayBuffer& buffer) {
  MemberEvaluation e = evaluate_member(shape, member, env, episodes, rng);
  for (const Trajectory& t : e.trajectories) buffer.insert(t);
  return e.fitness;
}

std::vector<MemberEvaluation> evaluate_population(const GfnAgent& shape, const Population& pop,
                                                  const Environment& env, std::size_t episodes,
                                                  std::uint64_t seed, int workers) {
  std::vector<MemberEvaluation> out(pop.size());
  std::vector<std::exception_ptr> failures(pop.size());
  const long n = static_cast<long>(pop.size());
#pragma omp parallel for num_threads(std::max(1, workers)) schedule(dynamic, 1)
  for (long i = 0; i < n; ++i) {
    try {
      Rng rng = make_stream(seed, StreamTag::kEvaluate, pop.generation, static_cast<std::uint64_t>(i));
      out[i] = evaluate_member(shape, pop.members[i], env, episodes, rng);
    } catch (...) {
      failures[i] = std::current_exception();
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  return out;
}

namespace reference {

std::vector<MemberEvaluation> evaluate_population(const GfnAgent& shape, const Population& pop,
                                                  const Environment& env, std::size_t episodes,
                                                  std::uint64_t seed) {
  std::vector<MemberEvaluation> out;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    Rng rng = make_stream(seed, StreamTag::kEvaluate, pop.generation, i);
    out.push_back(evaluate_member(shape, pop.members[i], env, episodes, rng));
  }
  return out;
}

}  // namespace reference

std::vector<std::size_t> select_elites(const std::vector<double>& fitness, std::size_t count) {
  for (double f : fitness) {
    if (!std::isfinite(f)) throw UsageError("elite selection needs evaluated fitness");
  }
  std::vector<std::size_t> idx(fitness.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return fitness[a] > fitness[b]; });
  idx.resize(std::min(count, idx.size()));
  return idx;
}

std::vector<std::size_t> roulette_select(const std::vector<double>& fitness, std::size_t count,
                                         Rng& rng) {
  std::vector<std::size_t> out;
  if (count == 0) return out;
  if (fitness.empty()) throw UsageError("roulette selection over an empty population");
  const auto [lo_it, hi_it] = std::minmax_element(fitness.begin(), fitness.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw UsageError("roulette selection needs finite fitness");
  const double shift = 1e-8 * (hi - lo) + 1e-12;
  std::vector<double> cumulative(fitness.size());
  double total = 0.0;
  for (std::size_t i = 0; i < fitness.size(); ++i) {
    total += fitness[i] - lo + shift;
    cumulative[i] = total;
  }
  out.reserve(count);
  for (std::size_t c = 0; c < count; ++c) {
    const double u = uniform01(rng) * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    out.push_back(std::min<std::size_t>(it - cumulative.begin(), fitness.size() - 1));
  }
  return out;
}

std::vector<std::size_t> tournament_select(const std::vector<double>& fitness, std::size_t count,
                                           std::size_t tournament_size, Rng& rng) {
  std::vector<std::size_t> out;
  if (count == 0) return out;
  if (fitness.empty()) throw UsageError("tournament selection over an empty population");
  for (std::size_t c = 0; c < count; ++c) {
    std::size_t best = uniform_index(rng, fitness.size());
    for (std::size_t t = 1; t < tournament_size; ++t) {
      const std::size_t j = uniform_index(rng, fitness.size());
      if (fitness[j] > fitness[best] || (fitness[j] == fitness[best] && j < best)) best = j;
    }
    out.push_back(best);
  }
  return out;
}

std::pair<ParamVector, ParamVector> crossover(const ParamVector& a, const ParamVector& b, Rng& rng) {
  if (!a.same_layout(b)) throw ConfigError("crossover parents have different layouts");
  ParamVector child_a = a;
  ParamVector child_b = b;
  for (std::size_t l = 0; l < a.layout.layers.size(); ++l) {
    const std::size_t rows = a.layout.layers[l].rows;
    const std::size_t swaps = uniform_index(rng, rows);
    for (std::size_t m = 0; m < swaps; ++m) {
      const std::size_t i = uniform_index(rng, rows);
      if (uniform01(rng) < 0.5) {
        const auto src = b.row(l, i);
        std::copy(src.begin(), src.end(), child_a.row(l, i).begin());
      } else {
        const auto src = child_a.row(l, i);
        std::copy(src.begin(), src.end(), child_b.row(l, i).begin());
      }
    }
  }
  return {std::move(child_a), std::move(child_b)};
}

bool mutate(ParamVector& theta, const EvoConfig& cfg, Rng& rng) {
  if (!(cfg.mutation_strength > 0.0)) throw ConfigError("mutation strength must be positive");
  if (!(uniform01(rng) < cfg.p_mutation)) return false;
  const std::size_t total = theta.layout.total_rows();
  const std::size_t n = std::min(total, std::max<std::size_t>(1, ceil_count(cfg.row_mut_frac * static_cast<double>(total))));

  // Partial Fisher-Yates over global row ids.
  std::vector<std::size_t> ids(total);
  std::iota(ids.begin(), ids.end(), 0);
  for (std::size_t i = 0; i < n; ++i) std::swap(ids[i], ids[i + uniform_index(rng, total - i)]);
  std::sort(ids.begin(), ids.begin() + static_cast<long>(n));

  std::normal_distribution<double> noise(0.0, cfg.mutation_strength);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t id = ids[i];
    std::size_t layer = 0;
    while (id >= theta.layout.layers[layer].rows) id -= theta.layout.layers[layer++].rows;
    for (double& v : theta.row(layer, id)) v += noise(rng);
  }
  return true;
}

bool sync_due(const EvoConfig& cfg, std::size_t generation) {
  return cfg.sync_period > 0 && (generation + 1) % cfg.sync_period == 0;
}

Population breed_next_generation(const Population& pop, const EvoConfig& cfg, Rng& rng,
                                 const ParamVector* star, BreedReport* report) {
  cfg.validate();
  if (pop.size() != cfg.k) throw ConfigError("population size differs from evo.k");
  const std::size_t n_elite = cfg.elite_count();
  const std::size_t target = cfg.k - n_elite;
  const std::size_t seed_count = std::min(target, cfg.k > 2 * n_elite ? cfg.k - 2 * n_elite : 1);

  BreedReport local;
  BreedReport& rep = report ? *report : local;
  rep = BreedReport{};
  rep.elites = select_elites(pop.fitness, n_elite);
  rep.selected = cfg.selection == SelectionKind::kRoulette
                     ? roulette_select(pop.fitness, seed_count, rng)
                     : tournament_select(pop.fitness, seed_count, cfg.tournament_size, rng);

  std::vector<ParamVector> s;
  std::vector<double> s_fit;
  for (std::size_t i : rep.selected) {
    s.push_back(pop.members[i]);
    s_fit.push_back(pop.fitness[i]);
  }
  while (s.size() < target) {
    const std::size_t e = rep.elites[uniform_index(rng, rep.elites.size())];
    const std::size_t j = uniform_index(rng, s.size());
    rep.crossovers.emplace_back(e, j);
    s.push_back(crossover(pop.members[e], s[j], rng).first);
    s_fit.push_back(s_fit[j]);
  }

  Population next;
  next.generation = pop.generation + 1;
  for (std::size_t e : rep.elites) {
    next.members.push_back(pop.members[e]);
    rep.inherited.push_back(pop.fitness[e]);
    rep.mutated.push_back(false);
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    rep.mutated.push_back(mutate(s[i], cfg, rng));
    next.members.push_back(std::move(s[i]));
    rep.inherited.push_back(s_fit[i]);
  }

  if (star && sync_due(cfg, pop.generation)) {
    if (!star->same_layout(pop.members.front())) throw ConfigError("star layout differs from population");
    std::size_t worst = n_elite;
    for (std::size_t i = n_elite + 1; i < next.members.size(); ++i) {
      if (rep.inherited[i] < rep.inherited[worst]) worst = i;
    }
    next.members[worst] = *star;
    rep.sync_slot = worst;
  }
  next.fitness.assign(next.members.size(), std::numeric_limits<double>::quiet_NaN());
  return next;
}

Population evolve_generation(const Population& pop, const GfnAgent& shape, const Environment& env,
                             ReplayBuffer& buffer, const EvoConfig& cfg, std::uint64_t seed,
                             const ParamVector* star, int workers, GenerationReport* report) {
  auto evals = evaluate_population(shape, pop, env, cfg.eval_episodes, seed, workers);
  Population scored = pop;
  GenerationReport local;
  GenerationReport& rep = report ? *report : local;
  rep = GenerationReport{};
  for (std::size_t i = 0; i < evals.size(); ++i) {
    scored.fitness[i] = evals[i].fitness;
    for (Trajectory& t : evals[i].trajectories) {
      buffer.insert(t);
      rep.trajectories.push_back(std::move(t));
    }
  }
  rep.fitness = scored.fitness;
  Rng rng = make_stream(seed, StreamTag::kBreed, pop.generation);
  return breed_next_generation(scored, cfg, rng, star, &rep.breed);
}

}  // namespace egfn

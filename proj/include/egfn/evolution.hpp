#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "egfn/agent.hpp"
#include "egfn/replay.hpp"
#include "egfn/rng.hpp"

namespace egfn {

enum class SelectionKind { kRoulette, kTournament };

struct EvoConfig {
  std::size_t k = 5;
  std::size_t eval_episodes = 4;
  double elite_frac = 0.2;
  double mutation_strength = 1.0;
  double p_mutation = 0.9;
  double row_mut_frac = 0.1;
  std::size_t sync_period = 10;  // 0 disables star reinsertion
  SelectionKind selection = SelectionKind::kRoulette;
  std::size_t tournament_size = 3;

  std::size_t elite_count() const;
  void validate() const;
};

struct Population {
  std::vector<ParamVector> members;
  std::vector<double> fitness;  // NaN until evaluated
  std::size_t generation = 0;

  std::size_t size() const { return members.size(); }
};

// k freshly initialised members shaped like `shape`, member i drawn from
// its own stream.
Population make_population(const GfnAgent& shape, std::size_t k, std::uint64_t seed);

struct MemberEvaluation {
  double fitness = 0.0;
  std::vector<Trajectory> trajectories;
};

// Mean terminal reward of `episodes` on-policy trajectories (no exploration).
MemberEvaluation evaluate_member(const GfnAgent& shape, const ParamVector& member,
                                 const Environment& env, std::size_t episodes, Rng& rng);
// Same, appending every trajectory to `buffer`.
double evaluate(const GfnAgent& shape, const ParamVector& member, const Environment& env,
                std::size_t episodes, Rng& rng, ReplayBuffer& buffer);

// Evaluates every member on its own (seed, generation, index) stream across
// `workers` threads. Results come back in member order.
std::vector<MemberEvaluation> evaluate_population(const GfnAgent& shape, const Population& pop,
                                                  const Environment& env, std::size_t episodes,
                                                  std::uint64_t seed, int workers = 1);

namespace reference {
std::vector<MemberEvaluation> evaluate_population(const GfnAgent& shape, const Population& pop,
                                                  const Environment& env, std::size_t episodes,
                                                  std::uint64_t seed);
}  // namespace reference

// Indices of the `count` fittest members, best first, ties to the lower index.
std::vector<std::size_t> select_elites(const std::vector<double>& fitness, std::size_t count);

// Draws with replacement, probability proportional to
// fitness - min + (1e-8 (max - min) + 1e-12).
std::vector<std::size_t> roulette_select(const std::vector<double>& fitness, std::size_t count,
                                         Rng& rng);
std::vector<std::size_t> tournament_select(const std::vector<double>& fitness, std::size_t count,
                                           std::size_t tournament_size, Rng& rng);

// Row-swap crossover on copies of a and b. Per layer: draw m in [0, N), then
// m times draw a row index i and r in [0, 1); r < 0.5 copies b's row i into
// child_a, otherwise child_a's row i into child_b.
std::pair<ParamVector, ParamVector> crossover(const ParamVector& a, const ParamVector& b, Rng& rng);

// With probability p_mutation, adds N(0, gamma^2) noise to every entry of
// ceil(row_mut_frac * rows) distinct rows chosen uniformly across all layers.
// Returns whether anything changed.
bool mutate(ParamVector& theta, const EvoConfig& cfg, Rng& rng);

// What one breeding step did, for tests and logs.
struct BreedReport {
  std::vector<std::size_t> elites;     // old indices, placed in slots 0..n_elite-1
  std::vector<std::size_t> selected;   // old indices picked by selection
  // (elite old index, S slot of the partner) for each crossover child
  std::vector<std::pair<std::size_t, std::size_t>> crossovers;
  std::vector<bool> mutated;           // per new slot
  std::vector<double> inherited;       // per new slot
  std::optional<std::size_t> sync_slot;
};

// Next generation from an evaluated population: elites copied unchanged,
// then selection seeds S with max(1, k - 2 n_elite) members, crossover
// children of a random elite and a random S member fill S up to
// k - n_elite, and every member of S is mutated. When reinsertion is due the
// non-elite slot with the lowest inherited fitness receives `star`.
Population breed_next_generation(const Population& pop, const EvoConfig& cfg, Rng& rng,
                                 const ParamVector* star = nullptr, BreedReport* report = nullptr);

bool sync_due(const EvoConfig& cfg, std::size_t generation);

struct GenerationReport {
  std::vector<double> fitness;
  std::vector<Trajectory> trajectories;  // member order, episode order
  BreedReport breed;
};

// Evaluates (filling `buffer` in member order) and breeds.
Population evolve_generation(const Population& pop, const GfnAgent& shape, const Environment& env,
                             ReplayBuffer& buffer, const EvoConfig& cfg, std::uint64_t seed,
                             const ParamVector* star = nullptr, int workers = 1,
                             GenerationReport* report = nullptr);

}  // namespace egfn

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "egfn/agent.hpp"
#include "egfn/rng.hpp"

namespace egfn {

struct ReplayConfig {
  std::size_t capacity = 1000;
  // Entries with reward strictly above the nearest-rank p-th percentile form
  // the priority stratum (p = 80 keeps the top 20%).
  double priority_percentile = 80.0;
  // Fraction of each batch drawn from the priority stratum.
  double priority_split = 0.5;

  void validate() const;
};

struct ReplayEntry {
  Trajectory trajectory;
  double reward = 0.0;
  std::uint64_t insert_seq = 0;
};

struct InsertResult {
  bool stored = false;
  std::optional<ReplayEntry> evicted;
};

struct StratifiedDraw {
  std::vector<std::size_t> indices;  // priority draws first, then the rest
  std::size_t priority_count = 0;
  double threshold = 0.0;
};

// ceil/floor of x that ignore representation error of about 1e-9, so that
// 0.6 * 5 counts as 3.
std::size_t ceil_count(double x);
std::size_t floor_count(double x);

class ReplayBuffer {
 public:
  explicit ReplayBuffer(ReplayConfig cfg = {});

  const ReplayConfig& config() const { return cfg_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<ReplayEntry>& entries() const { return entries_; }

  // Appends while under capacity. When full, the entry with the smallest
  // reward (oldest among ties) is replaced if the newcomer beats it, and the
  // newcomer is rejected otherwise.
  InsertResult insert(const Trajectory& traj);

  // Reward of the nearest-rank percentile of the current contents.
  double priority_threshold() const;
  std::vector<std::size_t> priority_members() const;

  // ceil(q n) draws with replacement from the priority stratum and the rest
  // from the remainder; one empty stratum sends the whole batch to the other.
  StratifiedDraw sample_indices(std::size_t n, Rng& rng) const;
  std::vector<Trajectory> sample_batch(std::size_t n, Rng& rng) const;

  double min_reward() const;
  double max_reward() const;
  double mean_reward() const;

 private:
  ReplayConfig cfg_;
  std::vector<ReplayEntry> entries_;
  std::uint64_t next_seq_ = 0;
};

// Text snapshot: a `# egfn buffer snapshot v1` line, the header
// `insert_seq,reward,length,actions`, then one entry per line in insertion
// order with actions space-separated.
struct SnapshotRecord {
  std::uint64_t insert_seq = 0;
  double reward = 0.0;
  std::vector<int> actions;
};

void write_snapshot(std::ostream& out, const ReplayBuffer& buffer);
std::vector<SnapshotRecord> parse_snapshot(std::istream& in);

}  // namespace egfn

#include "egfn/replay.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "egfn/errors.hpp"

namespace egfn {

namespace {

constexpr double kCountTolerance = 1e-9;

}  // namespace

std::size_t ceil_count(double x) {
  if (x <= 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(x - kCountTolerance));
}

std::size_t floor_count(double x) {
  if (x <= 0.0) return 0;
  return static_cast<std::size_t>(std::floor(x + kCountTolerance));
}

void ReplayConfig::validate() const {
  if (capacity < 1) throw ConfigError("replay.capacity must be at least 1");
  if (!(priority_percentile > 0.0 && priority_percentile < 100.0)) {
    throw ConfigError("replay.priority_percentile must lie in (0, 100)");
  }
  if (!(priority_split > 0.0 && priority_split < 1.0)) {
    throw ConfigError("replay.priority_split must lie in (0, 1)");
  }
}

ReplayBuffer::ReplayBuffer(ReplayConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  entries_.reserve(cfg_.capacity);
}

InsertResult ReplayBuffer::insert(const Trajectory& traj) {
  InsertResult result;
  if (entries_.size() < cfg_.capacity) {
    entries_.push_back({traj, traj.reward, next_seq_++});
    result.stored = true;
    return result;
  }
  std::size_t worst = 0;
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    const ReplayEntry& e = entries_[i];
    const ReplayEntry& w = entries_[worst];
    if (e.reward < w.reward || (e.reward == w.reward && e.insert_seq < w.insert_seq)) worst = i;
  }
  if (!(traj.reward > entries_[worst].reward)) return result;
  result.evicted = std::move(entries_[worst]);
  entries_[worst] = {traj, traj.reward, next_seq_++};
  result.stored = true;
  return result;
}

double ReplayBuffer::priority_threshold() const {
  if (entries_.empty()) throw UsageError("percentile of an empty replay buffer");
  std::vector<double> rewards;
  rewards.reserve(entries_.size());
  for (const ReplayEntry& e : entries_) rewards.push_back(e.reward);
  std::sort(rewards.begin(), rewards.end());
  std::size_t rank = ceil_count(cfg_.priority_percentile / 100.0 * static_cast<double>(rewards.size()));
  rank = std::clamp<std::size_t>(rank, 1, rewards.size());
  return rewards[rank - 1];
}

std::vector<std::size_t> ReplayBuffer::priority_members() const {
  const double t = priority_threshold();
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].reward > t) out.push_back(i);
  }
  return out;
}

StratifiedDraw ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (entries_.empty()) throw UsageError("cannot sample from an empty replay buffer");
  StratifiedDraw draw;
  draw.threshold = priority_threshold();
  std::vector<std::size_t> top, rest;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    (entries_[i].reward > draw.threshold ? top : rest).push_back(i);
  }
  std::size_t from_top = ceil_count(cfg_.priority_split * static_cast<double>(n));
  if (top.empty()) from_top = 0;
  if (rest.empty()) from_top = n;
  draw.priority_count = from_top;
  draw.indices.reserve(n);
  for (std::size_t i = 0; i < from_top; ++i) draw.indices.push_back(top[uniform_index(rng, top.size())]);
  for (std::size_t i = from_top; i < n; ++i) draw.indices.push_back(rest[uniform_index(rng, rest.size())]);
  return draw;
}

std::vector<Trajectory> ReplayBuffer::sample_batch(std::size_t n, Rng& rng) const {
  std::vector<Trajectory> out;
  out.reserve(n);
  for (std::size_t i : sample_indices(n, rng).indices) out.push_back(entries_[i].trajectory);
  return out;
}

double ReplayBuffer::min_reward() const {
  if (entries_.empty()) return 0.0;
  double m = entries_.front().reward;
  for (const ReplayEntry& e : entries_) m = std::min(m, e.reward);
  return m;
}

double ReplayBuffer::max_reward() const {
  if (entries_.empty()) return 0.0;
  double m = entries_.front().reward;
  for (const ReplayEntry& e : entries_) m = std::max(m, e.reward);
  return m;
}

double ReplayBuffer::mean_reward() const {
  if (entries_.empty()) return 0.0;
  double s = 0.0;
  for (const ReplayEntry& e : entries_) s += e.reward;
  return s / static_cast<double>(entries_.size());
}

void write_snapshot(std::ostream& out, const ReplayBuffer& buffer) {
  std::vector<const ReplayEntry*> order;
  for (const ReplayEntry& e : buffer.entries()) order.push_back(&e);
  std::sort(order.begin(), order.end(),
            [](const ReplayEntry* a, const ReplayEntry* b) { return a->insert_seq < b->insert_seq; });
  out << "# egfn buffer snapshot v1\n";
  out << "insert_seq,reward,length,actions\n";
  char buf[64];
  for (const ReplayEntry* e : order) {
    std::snprintf(buf, sizeof buf, "%.17g", e->reward);
    out << e->insert_seq << ',' << buf << ',' << e->trajectory.actions.size() << ',';
    for (std::size_t i = 0; i < e->trajectory.actions.size(); ++i) {
      if (i) out << ' ';
      out << e->trajectory.actions[i];
    }
    out << '\n';
  }
}

std::vector<SnapshotRecord> parse_snapshot(std::istream& in) {
  std::vector<SnapshotRecord> records;
  std::string line;
  std::size_t line_no = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!seen_header) {
      if (line != "insert_seq,reward,length,actions") throw ParseError("unexpected header", line_no);
      seen_header = true;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() == 3 && line.back() == ',') fields.emplace_back();
    if (fields.size() != 4) throw ParseError("expected 4 fields", line_no);
    SnapshotRecord r;
    std::size_t length = 0;
    try {
      std::size_t pos = 0;
      r.insert_seq = std::stoull(fields[0], &pos);
      if (pos != fields[0].size()) throw std::invalid_argument("seq");
      r.reward = std::stod(fields[1], &pos);
      if (pos != fields[1].size()) throw std::invalid_argument("reward");
      length = std::stoul(fields[2], &pos);
      if (pos != fields[2].size()) throw std::invalid_argument("length");
    } catch (const std::exception&) {
      throw ParseError("malformed numeric field", line_no);
    }
    std::stringstream as(fields[3]);
    std::string tok;
    while (as >> tok) {
      try {
        std::size_t pos = 0;
        r.actions.push_back(std::stoi(tok, &pos));
        if (pos != tok.size()) throw std::invalid_argument("action");
      } catch (const std::exception&) {
        throw ParseError("malformed action '" + tok + "'", line_no);
      }
    }
    if (r.actions.size() != length) throw ParseError("length does not match action count", line_no);
    records.push_back(std::move(r));
  }
  if (!seen_header) throw ParseError("missing header", line_no);
  return records;
}

}  // namespace egfn

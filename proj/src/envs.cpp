#include "egfn/envs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

#include "egfn/errors.hpp"

namespace egfn {

namespace {

void check_cap(double count, std::size_t cap, const std::string& what) {
  if (count > static_cast<double>(cap)) {
    std::ostringstream msg;
    msg << what << " enumeration of " << count << " states exceeds cap " << cap;
    throw OracleUnavailable(msg.str());
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

// ---------------------------------------------------------------- hypergrid

HypergridEnv::HypergridEnv(HypergridParams params) : params_(params) {
  if (params_.dims == 0) throw ConfigError("hypergrid: D must be positive");
  if (params_.horizon < 2) throw ConfigError("hypergrid: H must be at least 2");
  if (params_.r0 < 0.0 || params_.r1 < 0.0 || params_.r2 < 0.0) {
    throw ConfigError("hypergrid: rewards r0, r1, r2 must be nonnegative");
  }
}

// |x/(H-1) - 1/2| = |2x - (H-1)| / (2(H-1)); compare numerators as integers.
bool HypergridEnv::in_outer_band(int coord) const {
  const long span = static_cast<long>(params_.horizon) - 1;
  const long a = std::labs(2L * coord - span);
  const long den = 2 * span;
  return den < 4 * a && 4 * a <= 2 * den;  // (0.25, 0.5]
}

bool HypergridEnv::in_inner_band(int coord) const {
  const long span = static_cast<long>(params_.horizon) - 1;
  const long a = std::labs(2L * coord - span);
  const long den = 2 * span;
  return 3 * den < 10 * a && 10 * a <= 4 * den;  // (0.3, 0.4]
}

void HypergridEnv::check_state(const State& s) const {
  if (s.cells.size() != params_.dims) throw UsageError("hypergrid: state has wrong dimension");
  for (int c : s.cells) {
    if (c < 0 || c >= static_cast<int>(params_.horizon)) {
      throw UsageError("hypergrid: coordinate out of bounds in " + describe(s));
    }
  }
}

State HypergridEnv::initial_state() const {
  return State{std::vector<int>(params_.dims, 0), false};
}

std::vector<bool> HypergridEnv::allowed_actions(const State& s) const {
  check_state(s);
  if (s.terminal) throw UsageError("hypergrid: no actions at terminal " + describe(s));
  std::vector<bool> mask(action_count(), true);
  for (std::size_t d = 0; d < params_.dims; ++d) {
    mask[d] = s.cells[d] < static_cast<int>(params_.horizon) - 1;
  }
  return mask;
}

State HypergridEnv::step(const State& s, int action) const {
  const auto mask = allowed_actions(s);
  if (action < 0 || action >= static_cast<int>(action_count()) || !mask[action]) {
    throw UsageError("hypergrid: action " + std::to_string(action) + " not allowed at " +
                     describe(s));
  }
  State next = s;
  if (action == stop_action()) {
    next.terminal = true;
  } else {
    next.cells[action] += 1;
  }
  return next;
}

std::vector<ParentEdge> HypergridEnv::parents(const State& s) const {
  check_state(s);
  if (s.terminal) return {ParentEdge{State{s.cells, false}, stop_action()}};
  std::vector<ParentEdge> out;
  for (std::size_t d = 0; d < params_.dims; ++d) {
    if (s.cells[d] > 0) {
      State p = s;
      p.cells[d] -= 1;
      out.push_back(ParentEdge{std::move(p), static_cast<int>(d)});
    }
  }
  return out;
}

double HypergridEnv::reward(const State& x) const {
  check_state(x);
  bool outer = true;
  bool inner = true;
  for (int c : x.cells) {
    outer = outer && in_outer_band(c);
    inner = inner && in_inner_band(c);
  }
  return params_.r0 + (outer ? params_.r1 : 0.0) + (inner ? params_.r2 : 0.0);
}

void HypergridEnv::encode(const State& s, std::span<double> out) const {
  check_state(s);
  if (out.size() != encoding_dim()) throw ConfigError("hypergrid: encoding buffer size mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t d = 0; d < params_.dims; ++d) out[d * params_.horizon + s.cells[d]] = 1.0;
}

State HypergridEnv::decode(std::span<const double> enc) const {
  if (enc.size() != encoding_dim()) throw ConfigError("hypergrid: encoding size mismatch");
  State s{std::vector<int>(params_.dims, 0), false};
  for (std::size_t d = 0; d < params_.dims; ++d) {
    auto block = enc.subspan(d * params_.horizon, params_.horizon);
    s.cells[d] = static_cast<int>(std::max_element(block.begin(), block.end()) - block.begin());
  }
  return s;
}

std::size_t HypergridEnv::max_trajectory_length() const {
  return params_.dims * (params_.horizon - 1) + 1;
}

double HypergridEnv::terminal_count() const {
  return std::pow(static_cast<double>(params_.horizon), static_cast<double>(params_.dims));
}

std::vector<std::vector<int>> HypergridEnv::all_coords(std::size_t cap) const {
  check_cap(terminal_count(), cap, "hypergrid");
  const std::size_t n = static_cast<std::size_t>(terminal_count());
  const int h = static_cast<int>(params_.horizon);
  std::vector<std::vector<int>> out;
  out.reserve(n);
  std::vector<int> c(params_.dims, 0);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(c);
    for (std::size_t d = params_.dims; d-- > 0;) {
      if (++c[d] < h) break;
      c[d] = 0;
    }
  }
  return out;
}

std::vector<State> HypergridEnv::enumerate_terminals(std::size_t cap) const {
  std::vector<State> out;
  for (auto& c : all_coords(cap)) out.push_back(State{std::move(c), true});
  return out;
}

std::vector<State> HypergridEnv::enumerate_states(std::size_t cap) const {
  check_cap(state_count(), cap, "hypergrid");
  auto coords = all_coords(cap);
  std::vector<State> interior;
  interior.reserve(coords.size());
  for (const auto& c : coords) interior.push_back(State{c, false});
  // Stable sort keeps lexicographic order within each level.
  std::stable_sort(interior.begin(), interior.end(), [](const State& a, const State& b) {
    long sa = 0, sb = 0;
    for (int v : a.cells) sa += v;
    for (int v : b.cells) sb += v;
    return sa < sb;
  });
  std::vector<State> out = std::move(interior);
  for (auto& c : coords) out.push_back(State{std::move(c), true});
  return out;
}

std::vector<State> HypergridEnv::mode_set(std::size_t cap) const {
  auto terminals = enumerate_terminals(cap);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& x : terminals) best = std::max(best, reward(x));
  std::vector<State> modes;
  for (auto& x : terminals) {
    if (reward(x) == best) modes.push_back(std::move(x));
  }
  return modes;
}

int HypergridEnv::mode_region(const State& x) const {
  check_state(x);
  int region = 0;
  const int span = static_cast<int>(params_.horizon) - 1;
  for (std::size_t d = 0; d < params_.dims; ++d) {
    if (2 * x.cells[d] > span) region |= 1 << d;
  }
  return region;
}

std::string HypergridEnv::describe(const State& s) const {
  std::ostringstream out;
  out << (s.terminal ? "x(" : "s(");
  for (std::size_t i = 0; i < s.cells.size(); ++i) out << (i ? " " : "") << s.cells[i];
  out << ')';
  return out.str();
}

// ---------------------------------------------------------------- sequences

SeqEnv::SeqEnv(SeqParams params, std::unordered_map<std::string, double> reward_table)
    : params_(std::move(params)), table_(std::move(reward_table)) {
  if (params_.alphabet.empty()) throw ConfigError("sequence: alphabet must not be empty");
  if (params_.length == 0) throw ConfigError("sequence: length must be positive");
  if (params_.beta < 0.0) throw ConfigError("sequence: reward exponent must be nonnegative");
  if (params_.mode_tol < 0.0 || params_.mode_tol >= 1.0) {
    throw ConfigError("sequence: mode tolerance must lie in [0, 1)");
  }
  for (std::size_t i = 0; i < params_.alphabet.size(); ++i) {
    if (params_.alphabet.find(params_.alphabet[i]) != i) {
      throw ConfigError("sequence: alphabet has repeated token");
    }
  }
  for (const auto& [key, value] : table_) {
    if (key.size() != params_.length) {
      throw DataError("sequence: reward table key '" + key + "' does not have length " +
                      std::to_string(params_.length));
    }
    for (char ch : key) {
      if (params_.alphabet.find(ch) == std::string::npos) {
        throw DataError("sequence: reward table key '" + key + "' uses a token outside the alphabet");
      }
    }
    if (!std::isfinite(value)) throw DataError("sequence: non-finite reward for '" + key + "'");
  }
}

std::string SeqEnv::to_string(const State& s) const {
  std::string out;
  for (int t : s.cells) out.push_back(params_.alphabet.at(static_cast<std::size_t>(t)));
  return out;
}

State SeqEnv::from_string(const std::string& text) const {
  State s;
  for (char ch : text) {
    const auto pos = params_.alphabet.find(ch);
    if (pos == std::string::npos) throw DataError(std::string("sequence: unknown token '") + ch + "'");
    s.cells.push_back(static_cast<int>(pos));
  }
  s.terminal = s.cells.size() == params_.length;
  check_state(s);
  return s;
}

void SeqEnv::check_state(const State& s) const {
  if (s.cells.size() > params_.length) throw UsageError("sequence: state longer than L");
  for (int t : s.cells) {
    if (t < 0 || t >= static_cast<int>(alphabet_size())) throw UsageError("sequence: bad token index");
  }
  if (s.terminal != (s.cells.size() == params_.length)) {
    throw UsageError("sequence: terminal flag inconsistent with length");
  }
}

std::vector<bool> SeqEnv::allowed_actions(const State& s) const {
  check_state(s);
  if (s.terminal) throw UsageError("sequence: no actions at terminal " + to_string(s));
  return std::vector<bool>(action_count(), true);
}

State SeqEnv::step(const State& s, int action) const {
  allowed_actions(s);
  if (action < 0 || action >= static_cast<int>(action_count())) {
    throw UsageError("sequence: action " + std::to_string(action) + " out of range");
  }
  const int a = static_cast<int>(alphabet_size());
  State next = s;
  if (action < a) {
    next.cells.insert(next.cells.begin(), action);
  } else {
    next.cells.push_back(action - a);
  }
  next.terminal = next.cells.size() == params_.length;
  return next;
}

std::vector<ParentEdge> SeqEnv::parents(const State& s) const {
  check_state(s);
  if (s.cells.empty()) return {};
  const int a = static_cast<int>(alphabet_size());
  State drop_first{std::vector<int>(s.cells.begin() + 1, s.cells.end()), false};
  State drop_last{std::vector<int>(s.cells.begin(), s.cells.end() - 1), false};
  return {ParentEdge{std::move(drop_first), s.cells.front()},
          ParentEdge{std::move(drop_last), a + s.cells.back()}};
}

double SeqEnv::table_reward(const State& x) const {
  const std::string key = to_string(x);
  const auto it = table_.find(key);
  if (it == table_.end()) throw DataError("sequence: no reward for '" + key + "'");
  return it->second;
}

double SeqEnv::reward(const State& x) const {
  check_state(x);
  if (!x.terminal) throw UsageError("sequence: reward of non-terminal " + to_string(x));
  return std::pow(std::max(table_reward(x), kSeqRewardFloor), params_.beta);
}

void SeqEnv::encode(const State& s, std::span<double> out) const {
  check_state(s);
  if (out.size() != encoding_dim()) throw ConfigError("sequence: encoding buffer size mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t width = alphabet_size() + 1;
  for (std::size_t i = 0; i < params_.length; ++i) {
    const std::size_t token = i < s.cells.size() ? static_cast<std::size_t>(s.cells[i]) : alphabet_size();
    out[i * width + token] = 1.0;
  }
}

double SeqEnv::terminal_count() const {
  return std::pow(static_cast<double>(alphabet_size()), static_cast<double>(params_.length));
}

double SeqEnv::state_count() const {
  double n = 0.0;
  for (std::size_t l = 0; l <= params_.length; ++l) {
    n += std::pow(static_cast<double>(alphabet_size()), static_cast<double>(l));
  }
  return n;
}

std::vector<State> SeqEnv::strings_of_length(std::size_t len) const {
  const std::size_t a = alphabet_size();
  std::size_t n = 1;
  for (std::size_t i = 0; i < len; ++i) n *= a;
  std::vector<State> out;
  out.reserve(n);
  std::vector<int> c(len, 0);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(State{c, len == params_.length});
    for (std::size_t d = len; d-- > 0;) {
      if (++c[d] < static_cast<int>(a)) break;
      c[d] = 0;
    }
  }
  return out;
}

std::vector<State> SeqEnv::enumerate_terminals(std::size_t cap) const {
  check_cap(terminal_count(), cap, "sequence");
  return strings_of_length(params_.length);
}

std::vector<State> SeqEnv::enumerate_states(std::size_t cap) const {
  check_cap(state_count(), cap, "sequence");
  std::vector<State> out;
  for (std::size_t l = 0; l <= params_.length; ++l) {
    auto level = strings_of_length(l);
    out.insert(out.end(), std::make_move_iterator(level.begin()), std::make_move_iterator(level.end()));
  }
  return out;
}

std::vector<State> SeqEnv::mode_set(std::size_t cap) const {
  auto terminals = enumerate_terminals(cap);
  std::vector<double> raw;
  raw.reserve(terminals.size());
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& x : terminals) {
    raw.push_back(std::max(table_reward(x), kSeqRewardFloor));
    best = std::max(best, raw.back());
  }
  const double threshold = params_.mode_tol == 0.0 ? best : (1.0 - params_.mode_tol) * best;
  std::vector<State> modes;
  for (std::size_t i = 0; i < terminals.size(); ++i) {
    if (raw[i] >= threshold) modes.push_back(std::move(terminals[i]));
  }
  return modes;
}

// ------------------------------------------------------------- reward table

std::unordered_map<std::string, double> parse_reward_table(const std::string& text) {
  std::unordered_map<std::string, double> table;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  bool seen_content = false;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const bool first = !seen_content;
    seen_content = true;
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw ParseError("expected 'sequence,reward'", line_no);
    }
    const std::string key = trim(line.substr(0, comma));
    const std::string value_text = trim(line.substr(comma + 1));
    char* end = nullptr;
    const double value = std::strtod(value_text.c_str(), &end);
    const bool numeric = !value_text.empty() && end == value_text.c_str() + value_text.size();
    if (!numeric) {
      if (first) continue;  // header row
      throw ParseError("reward '" + value_text + "' is not a number", line_no);
    }
    if (key.empty()) throw ParseError("empty sequence", line_no);
    if (!std::isfinite(value)) throw ParseError("reward is not finite", line_no);
    if (table.contains(key)) {
      log_warning("reward table line " + std::to_string(line_no) + ": duplicate sequence '" + key +
                  "', keeping the last value");
    }
    table[key] = value;
  }
  return table;
}

std::unordered_map<std::string, double> load_reward_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open reward table " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_reward_table(buf.str());
}

}  // namespace egfn

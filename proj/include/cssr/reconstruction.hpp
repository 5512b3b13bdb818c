#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "cssr/alphabet.hpp"
#include "cssr/machine.hpp"
#include "cssr/parse_tree.hpp"
#include "cssr/stat_tests.hpp"

namespace cssr {

struct CssrConfig {
  int max_history = 1;
  double alpha = 1e-3;
  TestKind test = TestKind::KS;
  std::uint64_t min_count = 1;
};

struct CssrDiagnostics {
  std::vector<std::string> warnings;
  double seconds_parse = 0, seconds_sufficiency = 0, seconds_recursion = 0;
  std::size_t sufficiency_tests = 0;       // null-hypothesis tests actually run
  std::size_t null_rejections = 0;         // null rejected (split away from parent)
  std::size_t reassigned = 0;              // placed with an existing non-parent state
  std::size_t new_states = 0;              // both hypotheses rejected everywhere
  std::size_t skipped_suffixes = 0;        // below min_count, never assigned
  std::size_t determinize_splits = 0;
  std::size_t vote_sync_failures = 0;      // extension had no mapped suffix
  std::size_t dropped_emission_symbols = 0;  // observed symbol lost all successor votes
  std::size_t pruned_sink_components = 0;  // extra recurrent components discarded
};

/// Working partition of history suffixes during reconstruction.  Each state
/// aggregates member-suffix continuation counts; its next-symbol estimate is
/// the count-weighted average of the members' conditionals, which is exactly
/// the normalized aggregate.
class StateSet {
 public:
  struct State {
    std::uint32_t id = 0;
    bool alive = true;
    std::vector<Word> suffixes;  // insertion order
    std::vector<std::uint64_t> counts;
    std::uint64_t total = 0;
  };

  explicit StateSet(std::size_t alphabet_size) : k_(alphabet_size) {}

  std::size_t alphabet_size() const { return k_; }
  std::size_t alive_count() const {
    std::size_t n = 0;
    for (const auto& s : states_)
      if (s.alive) ++n;
    return n;
  }
  const std::vector<State>& states() const { return states_; }
  const State& state(std::uint32_t id) const { return states_.at(id); }
  std::size_t suffix_count() const { return index_.size(); }

  std::uint32_t create_state() {
    State s;
    s.id = static_cast<std::uint32_t>(states_.size());
    s.counts.assign(k_, 0);
    states_.push_back(std::move(s));
    return states_.back().id;
  }

  std::optional<std::uint32_t> state_of(const Word& w) const {
    auto it = index_.find(w);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Longest-suffix state lookup (the working epsilon-map).
  std::optional<std::uint32_t> synchronize(const Word& history) const {
    std::size_t max_len = std::min(history.size(), max_suffix_length_);
    for (std::size_t len = max_len + 1; len-- > 0;) {
      auto it = index_.find(history.substr(history.size() - len));
      if (it != index_.end()) return it->second;
    }
    return std::nullopt;
  }

  void add_suffix(std::uint32_t sid, const Word& w, std::span<const std::uint64_t> counts) {
    State& s = states_.at(sid);
    if (!s.alive) throw std::logic_error("state_set: adding to dead state");
    if (!index_.emplace(w, sid).second) throw std::logic_error("state_set: suffix already assigned");
    s.suffixes.push_back(w);
    for (std::size_t a = 0; a < k_; ++a) {
      s.counts[a] += counts[a];
      s.total += counts[a];
    }
    max_suffix_length_ = std::max(max_suffix_length_, w.size());
  }

  /// Reassigns one suffix between states, keeping aggregates current.
  /// A state emptied by the move is deleted; ids are never reused.
  void move_suffix(const Word& w, std::uint32_t to, const ParseTree& tree) {
    auto it = index_.find(w);
    if (it == index_.end()) throw std::logic_error("state_set: moving unknown suffix");
    std::uint32_t from = it->second;
    if (from == to) return;
    State& src = states_.at(from);
    State& dst = states_.at(to);
    auto pos = std::find(src.suffixes.begin(), src.suffixes.end(), w);
    src.suffixes.erase(pos);
    auto counts = tree.next_symbol_counts(w);
    if (counts) {
      for (std::size_t a = 0; a < k_; ++a) {
        src.counts[a] -= (*counts)[a];
        src.total -= (*counts)[a];
        dst.counts[a] += (*counts)[a];
        dst.total += (*counts)[a];
      }
    }
    dst.suffixes.push_back(w);
    it->second = to;
    if (src.suffixes.empty()) src.alive = false;
  }

  /// Removes a state and all of its suffixes from the index.
  void kill_state(std::uint32_t sid) {
    State& s = states_.at(sid);
    for (const Word& w : s.suffixes) index_.erase(w);
    s.suffixes.clear();
    s.counts.assign(k_, 0);
    s.total = 0;
    s.alive = false;
  }

  /// Aggregate-count consistency check against the parse tree.
  bool counts_consistent(const ParseTree& tree) const {
    for (const auto& s : states_) {
      if (!s.alive) continue;
      std::vector<std::uint64_t> sum(k_, 0);
      for (const Word& w : s.suffixes) {
        auto c = tree.next_symbol_counts(w);
        if (!c) continue;
        for (std::size_t a = 0; a < k_; ++a) sum[a] += (*c)[a];
      }
      if (sum != s.counts) return false;
    }
    return true;
  }

 private:
  std::size_t k_;
  std::vector<State> states_;
  std::unordered_map<Word, std::uint32_t> index_;
  std::size_t max_suffix_length_ = 0;
};

/// Phase I: a single state holding only the empty suffix, whose estimate is
/// the unconditional symbol distribution.
inline StateSet initialize_states(const ParseTree& tree) {
  StateSet set(tree.alphabet_size());
  std::uint32_t root = set.create_state();
  auto counts = tree.next_symbol_counts(Word{});
  set.add_suffix(root, Word{}, *counts);
  return set;
}

/// The Test subroutine: places one candidate suffix.  Order of preference:
/// keep it with the parent state unless the null hypothesis is rejected;
/// otherwise the closest (total-variation) existing state that passes the
/// restricted alternative; otherwise a fresh singleton state.
inline void test_and_assign(StateSet& set, const std::vector<std::uint64_t>& child_counts,
                            const Word& child, std::uint32_t parent_state,
                            const CssrConfig& config, CssrDiagnostics* diag = nullptr) {
  const std::uint64_t child_total =
      std::accumulate(child_counts.begin(), child_counts.end(), std::uint64_t{0});
  const auto& parent = set.state(parent_state);
  if (child_total > 0 && parent.total > 0) {
    if (diag) ++diag->sufficiency_tests;
    TestDecision null_dec = two_sample_test(config.test, child_counts, parent.counts, config.alpha);
    if (null_dec.reject) {
      if (diag) ++diag->null_rejections;
      Distribution child_dist = Distribution::from_counts(child_counts);
      std::optional<std::uint32_t> best;
      double best_tv = 0;
      for (const auto& s : set.states()) {
        if (!s.alive || s.id == parent_state || s.total == 0) continue;
        TestDecision alt = two_sample_test(config.test, child_counts, s.counts, config.alpha);
        if (alt.reject || alt.no_data) continue;
        double tv = tv_distance(child_dist, Distribution::from_counts(s.counts));
        if (!best || tv < best_tv) {
          best = s.id;
          best_tv = tv;
        }
      }
      if (best) {
        set.add_suffix(*best, child, child_counts);
        if (diag) ++diag->reassigned;
      } else {
        std::uint32_t fresh = set.create_state();
        set.add_suffix(fresh, child, child_counts);
        if (diag) ++diag->new_states;
      }
      return;
    }
  }
  // Null hypothesis stands (or there is no data to reject it with).
  set.add_suffix(parent_state, child, child_counts);
}

/// Phase II: grow suffixes level by level up to max_history, testing each
/// one-symbol-longer history against its parent's state.
inline void sufficiency_pass(StateSet& set, const ParseTree& tree, const CssrConfig& config,
                             CssrDiagnostics* diag = nullptr) {
  const std::size_t k = tree.alphabet_size();
  for (int level = 0; level < config.max_history; ++level) {
    // Snapshot: length-`level` suffixes per state, lexically sorted.  Only
    // longer children move during this pass, so the snapshot stays valid.
    std::vector<std::pair<std::uint32_t, Word>> work;
    for (const auto& s : set.states()) {
      if (!s.alive) continue;
      std::vector<Word> members;
      for (const Word& w : s.suffixes)
        if (static_cast<int>(w.size()) == level) members.push_back(w);
      std::sort(members.begin(), members.end());
      for (auto& w : members) work.emplace_back(s.id, std::move(w));
    }
    for (const auto& [sid, suffix] : work) {
      for (std::size_t a = 0; a < k; ++a) {
        Word child;
        child.reserve(suffix.size() + 1);
        child.push_back(static_cast<char32_t>(a));  // older symbol goes in front
        child.append(suffix);
        if (tree.count(child) < config.min_count) {
          if (diag) ++diag->skipped_suffixes;
          continue;
        }
        auto child_counts = tree.next_symbol_counts(child);
        test_and_assign(set, *child_counts, child, sid, config, diag);
      }
    }
  }
}

namespace detail {

/// Successor-state votes for one state-symbol pair: the longest-suffix state
/// of every member's observed extension, in member order, deduplicated.
inline std::vector<std::uint32_t> successor_votes(const StateSet& set, const StateSet::State& s,
                                                  Symbol b, const ParseTree& tree,
                                                  CssrDiagnostics* diag = nullptr) {
  std::vector<std::uint32_t> votes;
  for (const Word& x : s.suffixes) {
    Word ext = x;
    ext.push_back(static_cast<char32_t>(b));
    if (tree.count(ext) == 0) continue;
    auto target = set.synchronize(ext);
    if (!target) {
      if (diag) ++diag->vote_sync_failures;
      continue;
    }
    if (std::find(votes.begin(), votes.end(), *target) == votes.end()) votes.push_back(*target);
  }
  return votes;
}

struct ComponentAnalysis {
  std::vector<int> component;            // per alive-state slot; -1 for dead states
  std::vector<std::vector<int>> sinks;   // member state ids per sink component
};

/// SCC analysis of the provisional transition graph (union of votes).
inline ComponentAnalysis analyze_components(const StateSet& set, const ParseTree& tree) {
  const auto& states = set.states();
  std::vector<int> slot(states.size(), -1);
  std::vector<std::uint32_t> ids;
  for (const auto& s : states) {
    if (!s.alive) continue;
    slot[s.id] = static_cast<int>(ids.size());
    ids.push_back(s.id);
  }
  std::vector<std::vector<int>> adj(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& s = set.state(ids[i]);
    for (Symbol b = 0; b < set.alphabet_size(); ++b)
      for (std::uint32_t t : successor_votes(set, s, static_cast<Symbol>(b), tree)) {
        int ts = slot[t];
        if (std::find(adj[i].begin(), adj[i].end(), ts) == adj[i].end()) adj[i].push_back(ts);
      }
  }
  int comp_count = 0;
  std::vector<int> comp = tarjan_scc(adj, comp_count);

  std::vector<bool> has_out_edge_to_other(comp_count, false);
  std::vector<bool> has_any_edge(comp_count, false);
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (int t : adj[i]) {
      has_any_edge[comp[i]] = true;
      if (comp[t] != comp[i]) has_out_edge_to_other[comp[i]] = true;
    }

  ComponentAnalysis out;
  out.component.assign(states.size(), -1);
  std::vector<std::vector<int>> members(comp_count);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.component[ids[i]] = comp[i];
    members[comp[i]].push_back(static_cast<int>(ids[i]));
  }
  // A recurrent component has no edges leaving it and at least one edge
  // inside it (an isolated edge-free state cannot re-enter itself).
  for (int c = 0; c < comp_count; ++c)
    if (!has_out_edge_to_other[c] && has_any_edge[c]) out.sinks.push_back(members[c]);
  return out;
}

}  // namespace detail

/// Removes every state outside the recurrent part of the provisional
/// transition graph.  Returns true when any state was removed.
inline bool remove_transients(StateSet& set, const ParseTree& tree) {
  auto analysis = detail::analyze_components(set, tree);
  std::vector<bool> keep(set.states().size(), false);
  std::size_t kept = 0;
  for (const auto& sink : analysis.sinks)
    for (int id : sink) {
      keep[static_cast<std::size_t>(id)] = true;
      ++kept;
    }
  if (kept == 0) throw std::runtime_error("remove_transients: no recurrent states (malformed transition map)");
  bool removed = false;
  for (const auto& s : set.states())
    if (s.alive && !keep[s.id]) {
      set.kill_state(s.id);
      removed = true;
    }
  return removed;
}

/// Phase III refinement: split states until, for every state and symbol, all
/// member suffixes with an observed extension agree on the successor state.
/// Rescans from the top after every split.  Returns true when any split
/// happened.
inline bool determinize(StateSet& set, const ParseTree& tree, CssrDiagnostics* diag = nullptr) {
  const std::size_t k = set.alphabet_size();
  bool changed = false;
  bool rescan = true;
  while (rescan) {
    rescan = false;
    for (const auto& s : set.states()) {
      if (!s.alive) continue;
      for (std::size_t b = 0; b < k && !rescan; ++b) {
        auto votes = detail::successor_votes(set, s, static_cast<Symbol>(b), tree, diag);
        if (votes.size() <= 1) continue;
        // First vote anchors the state; peel off the members following the
        // second distinct successor into a fresh state.
        std::uint32_t offending = votes[1];
        std::vector<Word> movers;
        for (const Word& x : s.suffixes) {
          Word ext = x;
          ext.push_back(static_cast<char32_t>(b));
          if (tree.count(ext) == 0) continue;
          auto target = set.synchronize(ext);
          if (target && *target == offending) movers.push_back(x);
        }
        std::uint32_t fresh = set.create_state();
        for (const Word& x : movers) set.move_suffix(x, fresh, tree);
        if (diag) ++diag->determinize_splits;
        changed = true;
        rescan = true;
      }
      if (rescan) break;
    }
  }
  return changed;
}

namespace detail {

/// Total observation mass of a component (for choosing among multiple
/// recurrent components).
inline std::uint64_t component_mass(const StateSet& set, const std::vector<int>& ids) {
  std::uint64_t m = 0;
  for (int id : ids) m += set.state(static_cast<std::uint32_t>(id)).total;
  return m;
}

}  // namespace detail

/// Phase III driver: transient removal and determinizing refinement,
/// iterated until the surviving states form a single recurrent, unifilar
/// machine.  Suffix removal changes longest-suffix lookups, so each pruning
/// round is followed by a fresh determinization pass.
inline void make_recursive(StateSet& set, const ParseTree& tree, CssrDiagnostics* diag = nullptr) {
  remove_transients(set, tree);
  const std::size_t iteration_cap = 2 * set.suffix_count() + 4;
  for (std::size_t iter = 0; iter < iteration_cap; ++iter) {
    determinize(set, tree, diag);
    auto analysis = detail::analyze_components(set, tree);
    if (analysis.sinks.empty())
      throw std::runtime_error("cssr: recurrent part vanished during refinement");
    std::size_t sink_states = 0;
    for (const auto& sink : analysis.sinks) sink_states += sink.size();
    if (analysis.sinks.size() == 1 && sink_states == set.alive_count()) return;
    if (sink_states < set.alive_count()) {
      // Splitting re-created transients; prune and refine again.
      std::vector<bool> keep(set.states().size(), false);
      for (const auto& sink : analysis.sinks)
        for (int id : sink) keep[static_cast<std::size_t>(id)] = true;
      for (const auto& s : set.states())
        if (s.alive && !keep[s.id]) set.kill_state(s.id);
      continue;
    }
    // Several disjoint recurrent components: keep the best-supported one.
    const std::vector<int>* best = nullptr;
    std::uint64_t best_mass = 0;
    for (const auto& sink : analysis.sinks) {
      std::uint64_t m = detail::component_mass(set, sink);
      if (!best || m > best_mass) {
        best = &sink;
        best_mass = m;
      }
    }
    if (diag) diag->pruned_sink_components += analysis.sinks.size() - 1;
    std::vector<bool> keep(set.states().size(), false);
    for (int id : *best) keep[static_cast<std::size_t>(id)] = true;
    for (const auto& s : set.states())
      if (s.alive && !keep[s.id]) set.kill_state(s.id);
  }
  throw std::runtime_error("cssr: phase III failed to stabilize");
}

/// Converts the final partition into an immutable machine.  Emission
/// probabilities are the normalized aggregate counts; successor states are
/// the (now unanimous) longest-suffix votes.
inline CausalStateMachine build_machine(const StateSet& set, const ParseTree& tree,
                                        const Alphabet& alphabet,
                                        CssrDiagnostics* diag = nullptr) {
  const std::size_t k = set.alphabet_size();
  std::vector<std::uint32_t> ids;
  for (const auto& s : set.states())
    if (s.alive) ids.push_back(s.id);
  std::vector<std::int32_t> renumber(set.states().size(), -1);
  for (std::size_t i = 0; i < ids.size(); ++i) renumber[ids[i]] = static_cast<std::int32_t>(i);

  std::vector<MachineState> states(ids.size());
  std::vector<std::vector<std::int32_t>> transitions(ids.size(),
                                                     std::vector<std::int32_t>(k, kNoTransition));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& src = set.state(ids[i]);
    states[i].suffixes = src.suffixes;
    std::vector<double> weight(k, 0.0);
    for (std::size_t b = 0; b < k; ++b) weight[b] = static_cast<double>(src.counts[b]);
    for (std::size_t b = 0; b < k; ++b) {
      if (src.counts[b] == 0) continue;
      auto votes = detail::successor_votes(set, src, static_cast<Symbol>(b), tree);
      if (votes.empty()) {
        // Observed continuations whose successor fell outside the recurrent
        // part; drop the symbol and renormalize.
        weight[b] = 0;
        if (diag) ++diag->dropped_emission_symbols;
        continue;
      }
      transitions[i][b] = renumber[votes.front()];
    }
    double total = std::accumulate(weight.begin(), weight.end(), 0.0);
    if (total <= 0) throw std::runtime_error("cssr: state left with no observed emissions");
    states[i].emission.resize(k);
    for (std::size_t b = 0; b < k; ++b) states[i].emission[b] = weight[b] / total;
  }
  return CausalStateMachine(alphabet, std::move(states), std::move(transitions));
}

struct CssrResult {
  CausalStateMachine machine;
  CssrDiagnostics diagnostics;
};

/// Full reconstruction from a prebuilt parse tree.
inline CssrResult run_cssr(const ParseTree& tree, const Alphabet& alphabet,
                           const CssrConfig& config) {
  using clock = std::chrono::steady_clock;
  if (alphabet.size() < 2) throw std::invalid_argument("cssr: alphabet size must be at least 2");
  if (alphabet.size() != tree.alphabet_size())
    throw std::invalid_argument("cssr: alphabet does not match parse tree");
  if (config.max_history < 1) throw std::invalid_argument("cssr: max_history must be >= 1");
  if (tree.max_depth() < config.max_history + 1)
    throw std::invalid_argument("cssr: parse tree too shallow for requested history length");
  if (!(config.alpha > 0 && config.alpha < 1))
    throw std::invalid_argument("cssr: alpha must be in (0,1)");

  CssrDiagnostics diag;
  const std::uint64_t n = tree.total();
  if (config.max_history > max_safe_history(n, alphabet.size()))
    diag.warnings.push_back("history length " + std::to_string(config.max_history) +
                            " exceeds the safe bound " +
                            std::to_string(max_safe_history(n, alphabet.size())) +
                            " for this sample size; estimates may not converge");
  double needed = 10.0;
  for (int i = 0; i < config.max_history; ++i) needed *= static_cast<double>(alphabet.size());
  if (static_cast<double>(n) < needed)
    diag.warnings.push_back("sample size " + std::to_string(n) +
                            " is small for this alphabet and history length");

  auto t0 = clock::now();
  StateSet set = initialize_states(tree);
  sufficiency_pass(set, tree, config, &diag);
  auto t1 = clock::now();
  make_recursive(set, tree, &diag);
  CausalStateMachine machine = build_machine(set, tree, alphabet, &diag);
  auto t2 = clock::now();
  diag.seconds_sufficiency = std::chrono::duration<double>(t1 - t0).count();
  diag.seconds_recursion = std::chrono::duration<double>(t2 - t1).count();
  return CssrResult{std::move(machine), std::move(diag)};
}

/// Full reconstruction from raw sequences (builds the parse tree first).
inline CssrResult run_cssr(std::span<const SymbolSequence> sequences, const Alphabet& alphabet,
                           const CssrConfig& config) {
  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  ParseTree tree = ParseTree::build(sequences, alphabet.size(), config.max_history);
  auto t1 = clock::now();
  CssrResult result = run_cssr(tree, alphabet, config);
  result.diagnostics.seconds_parse = std::chrono::duration<double>(t1 - t0).count();
  return result;
}

inline CssrResult run_cssr(const SymbolSequence& seq, const Alphabet& alphabet,
                           const CssrConfig& config) {
  return run_cssr(std::span<const SymbolSequence>(&seq, 1), alphabet, config);
}

}  // namespace cssr

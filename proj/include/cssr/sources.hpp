#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cssr/machine.hpp"

namespace cssr {

/// The even process: blocks of B between A's always have even length.
/// State 0 emits A or B with equal probability (A stays, B advances);
/// state 1 always emits B and returns.  Sofic: not Markov of any order.
inline CausalStateMachine even_process() {
  Alphabet alphabet = Alphabet::from_chars("AB");
  std::vector<MachineState> states(2);
  states[0].emission = {0.5, 0.5};
  states[0].suffixes = {alphabet.parse_word("A")};
  states[1].emission = {0.0, 1.0};
  states[1].suffixes = {alphabet.parse_word("AB")};
  std::vector<std::vector<std::int32_t>> transitions = {{0, 1}, {kNoTransition, 0}};
  return CausalStateMachine(std::move(alphabet), std::move(states), std::move(transitions));
}

/// One-state machine emitting IID symbols.
inline CausalStateMachine iid_process(const Alphabet& alphabet, const Distribution& dist) {
  if (dist.size() != alphabet.size()) throw std::invalid_argument("iid_process: size mismatch");
  if (!dist.valid()) throw std::invalid_argument("iid_process: invalid distribution");
  std::vector<MachineState> states(1);
  states[0].emission = dist.p;
  states[0].suffixes = {Word{}};
  std::vector<std::vector<std::int32_t>> transitions(1,
                                                     std::vector<std::int32_t>(alphabet.size()));
  for (std::size_t b = 0; b < alphabet.size(); ++b)
    transitions[0][b] = dist.p[b] > 0 ? 0 : kNoTransition;
  return CausalStateMachine(alphabet, std::move(states), std::move(transitions));
}

namespace detail {

inline std::vector<Word> words_of_length(std::size_t k, int len) {
  std::vector<Word> out;
  Word w;
  struct Rec {
    std::size_t k;
    int len;
    std::vector<Word>& out;
    void go(Word& w) {
      if (static_cast<int>(w.size()) == len) {
        out.push_back(w);
        return;
      }
      for (std::size_t a = 0; a < k; ++a) {
        w.push_back(static_cast<char32_t>(a));
        go(w);
        w.pop_back();
      }
    }
  } rec{k, len, out};
  rec.go(w);
  return out;
}

}  // namespace detail

/// Finite-order Markov chain as a suffix-defined machine, minimized by
/// merging states with identical emission rows and successor assignments
/// (iterated to a fixed point), which yields the causal states.
inline CausalStateMachine markov_process(const Alphabet& alphabet, int order,
                                         const std::vector<Distribution>& kernel) {
  const std::size_t k = alphabet.size();
  if (order < 1) throw std::invalid_argument("markov_process: order must be >= 1");
  std::size_t rows = 1;
  for (int i = 0; i < order; ++i) rows *= k;
  if (kernel.size() != rows) throw std::invalid_argument("markov_process: kernel has wrong row count");
  for (const auto& d : kernel)
    if (d.size() != k || !d.valid()) throw std::invalid_argument("markov_process: non-stochastic kernel row");

  std::vector<Word> words = detail::words_of_length(k, order);
  auto rank = [&](const Word& w) {
    std::size_t r = 0;
    for (char32_t c : w) r = r * k + static_cast<std::size_t>(c);
    return r;
  };
  // successor of word w under symbol b: last `order` symbols of w·b
  auto successor = [&](std::size_t row, Symbol b) {
    Word w = words[row];
    w.push_back(static_cast<char32_t>(b));
    return rank(w.substr(1));
  };

  // Partition refinement on (emission row, successor blocks).
  std::vector<int> block(rows, 0);
  {
    std::map<std::vector<double>, int> by_row;
    for (std::size_t r = 0; r < rows; ++r)
      block[r] = by_row.emplace(kernel[r].p, static_cast<int>(by_row.size())).first->second;
  }
  while (true) {
    std::map<std::vector<int>, int> signature_block;
    std::vector<int> next(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<int> sig{block[r]};
      for (std::size_t b = 0; b < k; ++b)
        sig.push_back(kernel[r].p[b] > 0 ? block[successor(r, static_cast<Symbol>(b))] : -1);
      next[r] = signature_block.emplace(std::move(sig), static_cast<int>(signature_block.size()))
                    .first->second;
    }
    if (next == block) break;
    block = std::move(next);
  }

  int blocks = 1 + *std::max_element(block.begin(), block.end());
  std::vector<MachineState> states(blocks);
  std::vector<std::vector<std::int32_t>> transitions(blocks,
                                                     std::vector<std::int32_t>(k, kNoTransition));
  for (std::size_t r = 0; r < rows; ++r) {
    auto& st = states[block[r]];
    st.suffixes.push_back(words[r]);
    st.emission = kernel[r].p;
    for (std::size_t b = 0; b < k; ++b)
      if (kernel[r].p[b] > 0) transitions[block[r]][b] = block[successor(r, static_cast<Symbol>(b))];
  }
  return CausalStateMachine(alphabet, std::move(states), std::move(transitions));
}

/// Declarative generator description parsed from a spec file:
///   alphabet: A B
///   <from> <symbol> <prob> <to>     (prob decimal or rational p/q)
/// State names appearing as words over the alphabet double as defining
/// suffixes (used by the suffix-defined validator and history mapping).
struct ProcessSpec {
  Alphabet alphabet;
  std::vector<std::string> state_names;  // first-appearance order
  CausalStateMachine machine;
};

namespace detail {

inline double parse_probability(const std::string& text) {
  auto slash = text.find('/');
  try {
    if (slash == std::string::npos) {
      std::size_t used = 0;
      double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument("");
      return v;
    }
    double num = std::stod(text.substr(0, slash));
    double den = std::stod(text.substr(slash + 1));
    if (den == 0) throw std::invalid_argument("");
    return num / den;
  } catch (const std::exception&) {
    throw std::invalid_argument("process spec: bad probability '" + text + "'");
  }
}

}  // namespace detail

inline ProcessSpec parse_process_spec(std::istream& in) {
  std::string line;
  std::optional<Alphabet> alphabet;
  struct Row {
    std::string from, symbol, to;
    double prob;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    if (first == "alphabet:") {
      std::vector<std::string> tokens;
      for (std::string t; ls >> t;) tokens.push_back(t);
      alphabet.emplace(tokens);
      continue;
    }
    if (!alphabet) throw std::invalid_argument("process spec: transition before 'alphabet:' line");
    Row r;
    r.from = first;
    std::string prob;
    if (!(ls >> r.symbol >> prob >> r.to))
      throw std::invalid_argument("process spec: malformed row '" + line + "'");
    std::string extra;
    if (ls >> extra) throw std::invalid_argument("process spec: trailing tokens in '" + line + "'");
    r.prob = detail::parse_probability(prob);
    if (r.prob < 0 || r.prob > 1)
      throw std::invalid_argument("process spec: probability out of range in '" + line + "'");
    rows.push_back(std::move(r));
  }
  if (!alphabet) throw std::invalid_argument("process spec: missing 'alphabet:' line");
  if (rows.empty()) throw std::invalid_argument("process spec: no transitions");

  std::vector<std::string> names;
  std::map<std::string, std::size_t> name_index;
  auto intern = [&](const std::string& name) {
    auto it = name_index.find(name);
    if (it != name_index.end()) return it->second;
    names.push_back(name);
    return name_index.emplace(name, names.size() - 1).first->second;
  };
  for (const auto& r : rows) {
    intern(r.from);
    intern(r.to);
  }

  const std::size_t n = names.size();
  const std::size_t k = alphabet->size();
  std::vector<MachineState> states(n);
  std::vector<std::vector<std::int32_t>> transitions(n, std::vector<std::int32_t>(k, kNoTransition));
  for (auto& st : states) st.emission.assign(k, 0.0);
  for (const auto& r : rows) {
    auto b = alphabet->index_of(r.symbol);
    if (!b) throw std::invalid_argument("process spec: symbol '" + r.symbol + "' not in alphabet");
    std::size_t from = name_index[r.from];
    if (r.prob == 0) continue;
    if (states[from].emission[*b] != 0)
      throw std::invalid_argument("process spec: duplicate transition for state '" + r.from +
                                  "' symbol '" + r.symbol + "'");
    states[from].emission[*b] = r.prob;
    transitions[from][*b] = static_cast<std::int32_t>(name_index[r.to]);
  }
  for (std::size_t s = 0; s < n; ++s) {
    double sum = std::accumulate(states[s].emission.begin(), states[s].emission.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("process spec: emissions of state '" + names[s] +
                                  "' sum to " + std::to_string(sum));
    for (double& p : states[s].emission) p /= sum;
    // State names that parse as words over the alphabet double as suffixes.
    try {
      states[s].suffixes = {alphabet->parse_word(names[s])};
    } catch (const std::invalid_argument&) {
      states[s].suffixes = {};
    }
  }
  return ProcessSpec{*alphabet,
                     std::move(names),
                     CausalStateMachine(*alphabet, std::move(states), std::move(transitions))};
}

inline ProcessSpec load_process_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open process spec: " + path);
  return parse_process_spec(in);
}

/// Validates that a machine is suffix-defined: every state carries exactly
/// one nonempty defining suffix, and each positive-probability transition
/// goes to the state owning the longest defining suffix of suffix(s)+b.
/// Throws std::invalid_argument with a reason when the structure does not
/// hold (the even process fails here: its states need infinite suffix sets).
inline void validate_suffix_defined(const CausalStateMachine& m) {
  std::map<Word, std::size_t> by_suffix;
  for (std::size_t s = 0; s < m.state_count(); ++s) {
    const auto& suffixes = m.state(s).suffixes;
    if (suffixes.size() != 1 || suffixes[0].empty())
      throw std::invalid_argument("suffix-defined: state " + std::to_string(s) +
                                  " does not have exactly one nonempty defining suffix");
    by_suffix[suffixes[0]] = s;
  }
  for (std::size_t s = 0; s < m.state_count(); ++s) {
    Word base = m.state(s).suffixes[0];
    for (std::size_t b = 0; b < m.alphabet().size(); ++b) {
      if (m.state(s).emission[b] <= 0) continue;
      Word ext = base;
      ext.push_back(static_cast<char32_t>(b));
      std::int32_t expected = kNoTransition;
      for (std::size_t len = ext.size(); len > 0; --len) {
        auto it = by_suffix.find(ext.substr(ext.size() - len));
        if (it != by_suffix.end()) {
          expected = static_cast<std::int32_t>(it->second);
          break;
        }
      }
      if (expected == kNoTransition)
        throw std::invalid_argument("suffix-defined: no state suffix matches '" +
                                    m.alphabet().render(ext) + "'");
      if (expected != m.transition(s, static_cast<Symbol>(b)))
        throw std::invalid_argument("suffix-defined: transition on '" + m.alphabet().render(ext) +
                                    "' does not follow the longest-suffix rule");
    }
  }
}

/// The shipped seven-state binary benchmark: a complete, shift-closed suffix
/// frontier {AAA, BAA, ABA, BBA, AB, ABB, BBB} with all emission
/// probabilities multiples of 1/16.
inline CausalStateMachine seven_state_process() {
  Alphabet alphabet = Alphabet::from_chars("AB");
  struct Def {
    const char* suffix;
    double p_a;  // sixteenths
  };
  // Pairwise-distinct emission rows keep all seven states statistically
  // distinguishable.
  const Def defs[] = {{"AAA", 2}, {"BAA", 4}, {"ABA", 6}, {"BBA", 8},
                      {"AB", 10}, {"ABB", 12}, {"BBB", 14}};
  std::map<Word, std::size_t> by_suffix;
  std::vector<MachineState> states(7);
  for (std::size_t s = 0; s < 7; ++s) {
    Word w = alphabet.parse_word(defs[s].suffix);
    states[s].suffixes = {w};
    states[s].emission = {defs[s].p_a / 16.0, 1.0 - defs[s].p_a / 16.0};
    by_suffix[w] = s;
  }
  std::vector<std::vector<std::int32_t>> transitions(7, std::vector<std::int32_t>(2, kNoTransition));
  for (std::size_t s = 0; s < 7; ++s) {
    for (Symbol b = 0; b < 2; ++b) {
      Word ext = states[s].suffixes[0];
      ext.push_back(static_cast<char32_t>(b));
      for (std::size_t len = ext.size(); len > 0; --len) {
        auto it = by_suffix.find(ext.substr(ext.size() - len));
        if (it != by_suffix.end()) {
          transitions[s][b] = static_cast<std::int32_t>(it->second);
          break;
        }
      }
    }
  }
  CausalStateMachine m(std::move(alphabet), std::move(states), std::move(transitions));
  validate_suffix_defined(m);
  return m;
}

/// Resolves a source by builtin name ("even", "seven_state") or spec path.
inline CausalStateMachine load_source(const std::string& name_or_path) {
  if (name_or_path == "even") return even_process();
  if (name_or_path == "seven_state") return seven_state_process();
  return load_process_spec(name_or_path).machine;
}

}  // namespace cssr

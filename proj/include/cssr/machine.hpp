#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "cssr/alphabet.hpp"
#include "cssr/distribution.hpp"

namespace cssr {

namespace detail {

/// Tarjan strongly-connected components over an adjacency list.
/// Returns component id per node; ids are assigned in reverse topological
/// order (a component's successors always have smaller ids).
inline std::vector<int> tarjan_scc(const std::vector<std::vector<int>>& adj, int& comp_count) {
  const int n = static_cast<int>(adj.size());
  std::vector<int> index(n, -1), low(n, 0), comp(n, -1);
  std::vector<bool> on_stack(n, false);
  std::vector<int> stack;
  comp_count = 0;
  int next_index = 0;

  // Iterative DFS; frames carry the next adjacency offset.
  struct Frame {
    int node;
    std::size_t edge;
  };
  for (int root = 0; root < n; ++root) {
    if (index[root] != -1) continue;
    std::vector<Frame> frames{{root, 0}};
    while (!frames.empty()) {
      Frame& f = frames.back();
      int v = f.node;
      if (f.edge == 0) {
        index[v] = low[v] = next_index++;
        stack.push_back(v);
        on_stack[v] = true;
      }
      bool descended = false;
      while (f.edge < adj[v].size()) {
        int w = adj[v][f.edge++];
        if (index[w] == -1) {
          frames.push_back({w, 0});
          descended = true;
          break;
        }
        if (on_stack[w]) low[v] = std::min(low[v], index[w]);
      }
      if (descended) continue;
      if (low[v] == index[v]) {
        while (true) {
          int w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp[w] = comp_count;
          if (w == v) break;
        }
        ++comp_count;
      }
      frames.pop_back();
      if (!frames.empty()) {
        int parent = frames.back().node;
        low[parent] = std::min(low[parent], low[v]);
      }
    }
  }
  return comp;
}

/// Uniform double in [0,1) with 53 random bits, independent of library
/// distribution implementations so that streams are reproducible.
inline double uniform53(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::size_t sample_index(const std::vector<double>& weights, std::mt19937_64& rng) {
  double u = uniform53(rng);
  double acc = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  // Rounding left u >= acc; return the last positive-weight index.
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0) return i;
  throw std::logic_error("sample_index: all weights zero");
}

inline void format_probability(std::ostream& os, double p) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, p, std::chars_format::general, 17);
  os.write(buf, res.ptr - buf);
}

}  // namespace detail

struct MachineState {
  std::vector<Word> suffixes;    // sorted shortlex; may be empty for analytic machines
  std::vector<double> emission;  // P(symbol | state), sums to 1
};

constexpr std::int32_t kNoTransition = -1;

/// A recurrent, unifilar hidden-Markov predictor: every state carries a
/// next-symbol distribution, and state plus emitted symbol determines the
/// successor state.  Histories map to states through their longest suffix
/// found in any state's suffix set.  Immutable; all queries are const.
class CausalStateMachine {
 public:
  CausalStateMachine(Alphabet alphabet, std::vector<MachineState> states,
                     std::vector<std::vector<std::int32_t>> transitions)
      : alphabet_(std::move(alphabet)),
        states_(std::move(states)),
        transitions_(std::move(transitions)) {
    validate_structure();
    for (std::size_t s = 0; s < states_.size(); ++s) {
      std::sort(states_[s].suffixes.begin(), states_[s].suffixes.end(), shortlex_less);
      for (const Word& w : states_[s].suffixes) {
        if (!suffix_index_.emplace(w, s).second)
          throw std::invalid_argument("machine: suffix in two states");
        max_suffix_length_ = std::max(max_suffix_length_, w.size());
      }
    }
    compute_stationary();
  }

  const Alphabet& alphabet() const { return alphabet_; }
  std::size_t state_count() const { return states_.size(); }
  const MachineState& state(std::size_t s) const { return states_.at(s); }
  std::int32_t transition(std::size_t s, Symbol b) const { return transitions_[s][b]; }
  std::size_t max_suffix_length() const { return max_suffix_length_; }

  /// Stationary distribution over states: the unique pi with pi M = pi for
  /// the state-to-state chain.
  const std::vector<double>& stationary() const { return stationary_; }

  Distribution emission_distribution(std::size_t s) const {
    return Distribution(states_[s].emission);
  }

  /// Stationary per-symbol marginal.
  Distribution symbol_marginal() const {
    std::vector<double> m(alphabet_.size(), 0.0);
    for (std::size_t s = 0; s < states_.size(); ++s)
      for (std::size_t b = 0; b < m.size(); ++b) m[b] += stationary_[s] * states_[s].emission[b];
    return Distribution(std::move(m));
  }

  /// Exact stationary distribution over words of a given length.  Words
  /// with probability 0 are omitted.
  std::map<Word, double> word_distribution(int length) const {
    if (length < 1) throw std::invalid_argument("word_distribution: length must be >= 1");
    std::map<Word, double> out;
    Word w;
    for (std::size_t s = 0; s < states_.size(); ++s)
      if (stationary_[s] > 0) extend_paths(s, stationary_[s], length, w, out);
    return out;
  }

  /// Maps a history to the state owning its longest suffix present in any
  /// suffix set; nullopt when no suffix (not even the empty one) is known.
  std::optional<std::size_t> synchronize(const Word& history) const {
    std::size_t max_len = std::min(history.size(), max_suffix_length_);
    for (std::size_t len = max_len + 1; len-- > 0;) {
      auto it = suffix_index_.find(history.substr(history.size() - len));
      if (it != suffix_index_.end()) return it->second;
    }
    return std::nullopt;
  }

  struct Prediction {
    bool synchronized = false;
    Distribution dist;  // state emission when synchronized, else the stationary marginal
    std::optional<std::size_t> state;
  };

  Prediction predict_next(const Word& history) const {
    auto s = synchronize(history);
    if (!s) return {false, symbol_marginal(), std::nullopt};
    return {true, emission_distribution(*s), s};
  }

  /// Generates n symbols starting from a stationary-sampled state.
  /// Deterministic given the seed.
  SymbolSequence simulate(std::size_t n, std::uint64_t seed) const {
    SymbolSequence out;
    out.reserve(n);
    if (n == 0) return out;
    std::mt19937_64 rng(seed);
    std::size_t s = detail::sample_index(stationary_, rng);
    for (std::size_t i = 0; i < n; ++i) {
      Symbol b = static_cast<Symbol>(detail::sample_index(states_[s].emission, rng));
      out.push_back(b);
      s = static_cast<std::size_t>(transitions_[s][b]);
    }
    return out;
  }

  /// Entropy rate in bits per symbol; exact for unifilar machines.
  double entropy_rate_bits() const {
    double h = 0;
    for (std::size_t s = 0; s < states_.size(); ++s)
      h += stationary_[s] * entropy_bits(emission_distribution(s));
    return h;
  }

  static bool shortlex_less(const Word& a, const Word& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  }

  /// Text serialization.  Suffixes are double-quoted rendered words (the
  /// empty suffix is ""); probabilities carry 17 significant digits so the
  /// round trip is exact.
  void save(std::ostream& os) const {
    os << "alphabet:";
    for (std::size_t a = 0; a < alphabet_.size(); ++a) os << ' ' << alphabet_.token(a);
    os << '\n' << "states: " << states_.size() << '\n';
    for (std::size_t s = 0; s < states_.size(); ++s) {
      os << "state: " << s << " suffixes:";
      for (const Word& w : states_[s].suffixes) os << " \"" << alphabet_.render(w) << '"';
      os << '\n';
    }
    for (std::size_t s = 0; s < states_.size(); ++s) {
      for (std::size_t b = 0; b < alphabet_.size(); ++b) {
        if (states_[s].emission[b] <= 0) continue;
        os << s << ' ' << alphabet_.token(b) << ' ';
        detail::format_probability(os, states_[s].emission[b]);
        os << ' ' << transitions_[s][b] << '\n';
      }
    }
  }

  std::string save_string() const {
    std::ostringstream os;
    save(os);
    return os.str();
  }

  static CausalStateMachine load(std::istream& in) {
    std::string line;
    auto next_line = [&](const char* what) {
      while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line[0] != '#') return;
      }
      throw std::invalid_argument(std::string("machine file: missing ") + what);
    };
    next_line("alphabet");
    if (line.rfind("alphabet:", 0) != 0) throw std::invalid_argument("machine file: expected 'alphabet:'");
    std::istringstream as(line.substr(9));
    std::vector<std::string> tokens;
    for (std::string t; as >> t;) tokens.push_back(t);
    Alphabet alphabet(tokens);

    next_line("state count");
    if (line.rfind("states:", 0) != 0) throw std::invalid_argument("machine file: expected 'states:'");
    std::size_t n = std::stoul(line.substr(7));
    if (n == 0) throw std::invalid_argument("machine file: zero states");

    std::vector<MachineState> states(n);
    for (auto& st : states) st.emission.assign(alphabet.size(), 0.0);
    std::vector<std::vector<std::int32_t>> transitions(
        n, std::vector<std::int32_t>(alphabet.size(), kNoTransition));

    for (std::size_t i = 0; i < n; ++i) {
      next_line("state line");
      std::istringstream ls(line);
      std::string kw;
      std::size_t id;
      std::string sfx;
      ls >> kw >> id >> sfx;
      if (kw != "state:" || sfx != "suffixes:" || id >= n)
        throw std::invalid_argument("machine file: malformed state line: " + line);
      std::string rest;
      std::getline(ls, rest);
      std::size_t pos = 0;
      while ((pos = rest.find('"', pos)) != std::string::npos) {
        std::size_t end = rest.find('"', pos + 1);
        if (end == std::string::npos) throw std::invalid_argument("machine file: unbalanced quote");
        states[id].suffixes.push_back(alphabet.parse_word(rest.substr(pos + 1, end - pos - 1)));
        pos = end + 1;
      }
    }
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ts(line);
      std::size_t from;
      std::string sym;
      double p;
      std::int32_t to;
      if (!(ts >> from >> sym >> p >> to))
        throw std::invalid_argument("machine file: malformed transition: " + line);
      auto b = alphabet.index_of(sym);
      if (!b || from >= n || to < 0 || static_cast<std::size_t>(to) >= n)
        throw std::invalid_argument("machine file: bad transition ids: " + line);
      states[from].emission[*b] = p;
      transitions[from][*b] = to;
    }
    return CausalStateMachine(std::move(alphabet), std::move(states), std::move(transitions));
  }

  static CausalStateMachine load_string(const std::string& text) {
    std::istringstream is(text);
    return load(is);
  }

 private:
  void validate_structure() const {
    const std::size_t k = alphabet_.size();
    if (states_.empty()) throw std::invalid_argument("machine: no states");
    if (transitions_.size() != states_.size())
      throw std::invalid_argument("machine: transition table size mismatch");
    for (std::size_t s = 0; s < states_.size(); ++s) {
      if (states_[s].emission.size() != k || transitions_[s].size() != k)
        throw std::invalid_argument("machine: row size mismatch");
      double sum = 0;
      for (std::size_t b = 0; b < k; ++b) {
        double p = states_[s].emission[b];
        if (p < 0) throw std::invalid_argument("machine: negative emission probability");
        sum += p;
        const bool has_t = transitions_[s][b] != kNoTransition;
        if (has_t != (p > 0))
          throw std::invalid_argument("machine: transition must exist exactly for positive emissions");
        if (has_t && static_cast<std::size_t>(transitions_[s][b]) >= states_.size())
          throw std::invalid_argument("machine: transition target out of range");
      }
      if (std::abs(sum - 1.0) > 1e-12)
        throw std::invalid_argument("machine: emission probabilities must sum to 1");
    }
    if (!strongly_connected())
      throw std::invalid_argument("machine: transition graph is not strongly connected");
  }

  bool strongly_connected() const {
    std::vector<std::vector<int>> adj(states_.size());
    for (std::size_t s = 0; s < states_.size(); ++s)
      for (std::size_t b = 0; b < alphabet_.size(); ++b)
        if (transitions_[s][b] != kNoTransition) adj[s].push_back(transitions_[s][b]);
    int comps = 0;
    detail::tarjan_scc(adj, comps);
    return comps == 1;
  }

  void compute_stationary() {
    const std::size_t n = states_.size();
    stationary_.assign(n, 0.0);
    if (n == 1) {
      stationary_[0] = 1.0;
      return;
    }
    if (n <= 1000) {
      // Solve pi (M - I) = 0 with one column replaced by the normalization.
      Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t b = 0; b < alphabet_.size(); ++b) {
          std::int32_t t = transitions_[s][b];
          if (t != kNoTransition) a(t, s) += states_[s].emission[b];
        }
        a(s, s) -= 1.0;
      }
      a.row(n - 1).setOnes();
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
      rhs(n - 1) = 1.0;
      Eigen::VectorXd pi = a.colPivHouseholderQr().solve(rhs);
      double residual = (a * pi - rhs).lpNorm<Eigen::Infinity>();
      if (residual > 1e-10) throw std::runtime_error("stationary solve failed to converge");
      for (std::size_t s = 0; s < n; ++s) stationary_[s] = std::max(0.0, pi(s));
    } else {
      power_iteration();
    }
    double sum = std::accumulate(stationary_.begin(), stationary_.end(), 0.0);
    for (double& x : stationary_) x /= sum;
  }

  void power_iteration() {
    const std::size_t n = states_.size();
    std::vector<double> cur(n, 1.0 / static_cast<double>(n)), next(n);
    for (int iter = 0; iter < 100000; ++iter) {
      std::fill(next.begin(), next.end(), 0.0);
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t b = 0; b < alphabet_.size(); ++b) {
          std::int32_t t = transitions_[s][b];
          if (t != kNoTransition) next[t] += cur[s] * states_[s].emission[b];
        }
      double diff = 0;
      for (std::size_t s = 0; s < n; ++s) diff = std::max(diff, std::abs(next[s] - cur[s]));
      cur.swap(next);
      if (diff < 1e-12) {
        stationary_ = cur;
        return;
      }
    }
    throw std::runtime_error("stationary power iteration failed to converge");
  }

  void extend_paths(std::size_t s, double prob, int remaining, Word& w,
                    std::map<Word, double>& out) const {
    if (remaining == 0) {
      out[w] += prob;
      return;
    }
    for (std::size_t b = 0; b < alphabet_.size(); ++b) {
      double p = states_[s].emission[b];
      if (p <= 0) continue;
      w.push_back(static_cast<char32_t>(b));
      extend_paths(static_cast<std::size_t>(transitions_[s][b]), prob * p, remaining - 1, w, out);
      w.pop_back();
    }
  }

  Alphabet alphabet_;
  std::vector<MachineState> states_;
  std::vector<std::vector<std::int32_t>> transitions_;
  std::unordered_map<Word, std::size_t> suffix_index_;
  std::vector<double> stationary_;
  std::size_t max_suffix_length_ = 0;
};

/// TV distance between two word distributions (maps word -> probability).
inline double tv_distance(const std::map<Word, double>& p, const std::map<Word, double>& q) {
  double d = 0;
  auto it = p.begin();
  auto jt = q.begin();
  while (it != p.end() || jt != q.end()) {
    if (jt == q.end() || (it != p.end() && it->first < jt->first)) {
      d += std::abs(it->second);
      ++it;
    } else if (it == p.end() || jt->first < it->first) {
      d += std::abs(jt->second);
      ++jt;
    } else {
      d += std::abs(it->second - jt->second);
      ++it;
      ++jt;
    }
  }
  return d;
}

}  // namespace cssr

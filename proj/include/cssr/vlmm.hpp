#pragma once

#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "cssr/parse_tree.hpp"
#include "cssr/stat_tests.hpp"

namespace cssr {

/// Variable-length Markov model: a suffix tree of contexts, each a single
/// history suffix with its own next-symbol counts.  The leaves are the
/// model's contexts; internal nodes are kept for short-prefix prediction.
class ContextTree {
 public:
  struct Node {
    std::vector<std::uint64_t> counts;
    std::uint64_t total = 0;
    bool leaf = true;
  };

  explicit ContextTree(std::size_t alphabet_size) : k_(alphabet_size) {}

  std::size_t alphabet_size() const { return k_; }

  const std::map<Word, Node>& nodes() const { return nodes_; }

  std::size_t context_count() const {
    std::size_t n = 0;
    for (const auto& [w, node] : nodes_)
      if (node.leaf) ++n;
    return n;
  }

  std::vector<Word> contexts() const {
    std::vector<Word> out;
    for (const auto& [w, node] : nodes_)
      if (node.leaf) out.push_back(w);
    return out;
  }

  void insert(const Word& w, std::vector<std::uint64_t> counts, bool leaf) {
    Node node;
    node.total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
    node.counts = std::move(counts);
    node.leaf = leaf;
    nodes_[w] = std::move(node);
  }

  /// Deepest stored suffix of the history that carries data.
  const Node* match(const Word& history) const {
    for (std::size_t len = history.size() + 1; len-- > 0;) {
      auto it = nodes_.find(history.substr(history.size() - len));
      if (it != nodes_.end() && it->second.total > 0) return &it->second;
    }
    return nullptr;
  }

 private:
  std::size_t k_;
  std::map<Word, Node> nodes_;
};

/// Context-splitting VLMM learner.  A context splits into its one-symbol
/// longer extensions when any extension's next-symbol distribution differs
/// from the context's own at level alpha; each extension is tested against
/// its parent context only.
inline ContextTree vlmm_learn(const ParseTree& tree, int max_history, double alpha,
                              TestKind test = TestKind::KS, std::uint64_t min_count = 1) {
  if (max_history < 0) throw std::invalid_argument("vlmm_learn: negative history length");
  if (tree.max_depth() < max_history + 1)
    throw std::invalid_argument("vlmm_learn: parse tree too shallow");
  const std::size_t k = tree.alphabet_size();
  ContextTree out(k);

  struct Rec {
    const ParseTree& tree;
    ContextTree& out;
    int max_history;
    double alpha;
    TestKind test;
    std::uint64_t min_count;
    std::size_t k;

    void grow(const Word& w, const std::vector<std::uint64_t>& counts) {
      bool split = false;
      std::vector<std::pair<Word, std::vector<std::uint64_t>>> children;
      if (static_cast<int>(w.size()) < max_history) {
        for (std::size_t a = 0; a < k; ++a) {
          Word child;
          child.reserve(w.size() + 1);
          child.push_back(static_cast<char32_t>(a));
          child.append(w);
          if (tree.count(child) < min_count) continue;
          auto child_counts = tree.next_symbol_counts(child);
          TestDecision dec = two_sample_test(test, *child_counts, counts, alpha);
          if (dec.reject) split = true;
          children.emplace_back(std::move(child), std::move(*child_counts));
        }
      }
      out.insert(w, counts, !split);
      if (!split) return;
      for (auto& [child, child_counts] : children) grow(child, child_counts);
    }
  } rec{tree, out, max_history, alpha, test, min_count, k};

  rec.grow(Word{}, *tree.next_symbol_counts(Word{}));
  return out;
}

/// Distribution over words of the given length as predicted from a cold
/// start: each symbol's probability comes from the deepest stored context
/// matching the prefix so far.  Zero-probability words are omitted.
inline std::map<Word, double> vlmm_word_distribution(const ContextTree& ctx, int length) {
  if (length < 1) throw std::invalid_argument("vlmm_word_distribution: length must be >= 1");
  std::map<Word, double> out;
  Word w;
  struct Rec {
    const ContextTree& ctx;
    int length;
    std::map<Word, double>& out;
    void go(double prob, Word& w) {
      const ContextTree::Node* node = ctx.match(w);
      if (!node) return;
      for (std::size_t a = 0; a < node->counts.size(); ++a) {
        if (node->counts[a] == 0) continue;
        double p = prob * static_cast<double>(node->counts[a]) / static_cast<double>(node->total);
        w.push_back(static_cast<char32_t>(a));
        if (static_cast<int>(w.size()) == length)
          out[w] += p;
        else
          go(p, w);
        w.pop_back();
      }
    }
  } rec{ctx, length, out};
  rec.go(1.0, w);
  return out;
}

}  // namespace cssr

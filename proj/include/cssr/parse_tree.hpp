#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "cssr/alphabet.hpp"

namespace cssr {

/// Depth-bounded trie of subword occurrence counts, built in one pass over
/// the data.  Node counts use overlapping windows: count(w) is the number of
/// start positions at which w occurs as a contiguous subword.  Words that
/// never occur have no node.  Immutable after build.
class ParseTree {
 public:
  /// Builds the tree counting all words of length <= max_history + 1.
  static ParseTree build(std::span<const SymbolSequence> sequences, std::size_t alphabet_size,
                         int max_history) {
    if (max_history < 0) throw std::invalid_argument("parse tree: negative history length");
    if (alphabet_size == 0) throw std::invalid_argument("parse tree: empty alphabet");
    ParseTree t(alphabet_size, max_history + 1);
    std::uint64_t total = 0;
    for (const auto& seq : sequences) total += seq.size();
    if (total == 0) throw std::invalid_argument("parse tree: empty sequence");
    t.counts_[0] = total;
    const std::size_t depth = static_cast<std::size_t>(max_history) + 1;
    for (const auto& seq : sequences) {
      for (std::size_t i = 0; i < seq.size(); ++i) {
        std::int32_t node = 0;
        const std::size_t end = std::min(seq.size(), i + depth);
        for (std::size_t j = i; j < end; ++j) {
          node = t.child_or_create(node, seq[j]);
          ++t.counts_[static_cast<std::size_t>(node)];
        }
      }
    }
    return t;
  }

  static ParseTree build(const SymbolSequence& seq, std::size_t alphabet_size, int max_history) {
    return build(std::span<const SymbolSequence>(&seq, 1), alphabet_size, max_history);
  }

  std::size_t alphabet_size() const { return k_; }
  /// Maximum stored word length (max_history + 1).
  int max_depth() const { return depth_; }
  /// Total number of symbols ingested; equals count of the empty word.
  std::uint64_t total() const { return counts_[0]; }
  std::size_t node_count() const { return counts_.size(); }

  /// Occurrence count of a word; 0 when the word was never seen.
  std::uint64_t count(const Word& w) const {
    std::int32_t node = find(w);
    return node < 0 ? 0 : counts_[static_cast<std::size_t>(node)];
  }

  /// Counts of one-symbol continuations (w followed by each symbol).
  /// Returns nullopt when w itself was never observed.
  std::optional<std::vector<std::uint64_t>> next_symbol_counts(const Word& w) const {
    std::int32_t node = find(w);
    if (node < 0) return std::nullopt;
    std::vector<std::uint64_t> out(k_, 0);
    const std::size_t base = static_cast<std::size_t>(node) * k_;
    for (std::size_t a = 0; a < k_; ++a) {
      std::int32_t c = children_[base + a];
      if (c >= 0) out[a] = counts_[static_cast<std::size_t>(c)];
    }
    return out;
  }

  /// Visits every stored word in shortlex order within each branch
  /// (depth-first, symbols ascending).  Callback receives (word, count).
  void for_each_word(const std::function<void(const Word&, std::uint64_t)>& fn) const {
    Word w;
    walk(0, w, fn);
  }

 private:
  ParseTree(std::size_t k, int depth) : k_(k), depth_(depth) {
    counts_.push_back(0);
    children_.assign(k_, -1);
  }

  std::int32_t child_or_create(std::int32_t node, Symbol a) {
    std::size_t slot = static_cast<std::size_t>(node) * k_ + a;
    std::int32_t c = children_[slot];
    if (c >= 0) return c;
    c = static_cast<std::int32_t>(counts_.size());
    counts_.push_back(0);
    children_.resize(children_.size() + k_, -1);
    children_[slot] = c;
    return c;
  }

  std::int32_t find(const Word& w) const {
    std::int32_t node = 0;
    for (char32_t ch : w) {
      Symbol a = static_cast<Symbol>(ch);
      if (a >= k_) return -1;
      node = children_[static_cast<std::size_t>(node) * k_ + a];
      if (node < 0) return -1;
    }
    return node;
  }

  void walk(std::int32_t node, Word& w,
            const std::function<void(const Word&, std::uint64_t)>& fn) const {
    fn(w, counts_[static_cast<std::size_t>(node)]);
    if (static_cast<int>(w.size()) >= depth_) return;
    const std::size_t base = static_cast<std::size_t>(node) * k_;
    for (std::size_t a = 0; a < k_; ++a) {
      std::int32_t c = children_[base + a];
      if (c < 0) continue;
      w.push_back(static_cast<char32_t>(a));
      walk(c, w, fn);
      w.pop_back();
    }
  }

  std::size_t k_;
  int depth_;
  std::vector<std::uint64_t> counts_;
  std::vector<std::int32_t> children_;
};

/// Largest history length safe for probability estimation at sample size n:
/// the biggest L with k^L <= n.  Uses log k as a stand-in for the entropy
/// rate, which errs on the conservative side.
inline int max_safe_history(std::uint64_t n, std::size_t k) {
  if (n < 1 || k < 2) throw std::invalid_argument("max_safe_history: need n >= 1, k >= 2");
  int l = 0;
  std::uint64_t power = 1;
  while (power <= n / k) {  // k^(l+1) <= n, no overflow
    power *= k;
    ++l;
  }
  return l;
}

}  // namespace cssr

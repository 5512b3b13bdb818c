#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cssr {

/// Index of a symbol within an Alphabet.
using Symbol = std::uint32_t;

/// A word over an alphabet, stored as symbol indices.  When a word is used
/// as a history suffix, the most recent symbol is the last element.
using Word = std::u32string;

/// A sequence of observations, already mapped to alphabet indices.
using SymbolSequence = std::vector<Symbol>;

inline Word word_of(std::initializer_list<Symbol> syms) {
  Word w;
  for (Symbol s : syms) w.push_back(static_cast<char32_t>(s));
  return w;
}

/// Fixed, ordered set of distinct symbol tokens.  The ordering is set at
/// construction and used everywhere a symbol ordering matters (CDFs in the
/// KS test, serialized output, iteration order).
class Alphabet {
 public:
  explicit Alphabet(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.empty()) throw std::invalid_argument("alphabet: no symbols");
    single_char_ = true;
    for (Symbol i = 0; i < tokens_.size(); ++i) {
      const std::string& t = tokens_[i];
      if (t.empty()) throw std::invalid_argument("alphabet: empty token");
      if (t.find_first_of(" \t\r\n\"") != std::string::npos)
        throw std::invalid_argument("alphabet: token contains whitespace or quote: '" + t + "'");
      if (!index_.emplace(t, i).second)
        throw std::invalid_argument("alphabet: duplicate token '" + t + "'");
      if (t.size() != 1) single_char_ = false;
    }
  }

  /// Alphabet from one token per character, e.g. "AB".
  static Alphabet from_chars(std::string_view chars) {
    std::vector<std::string> tokens;
    for (char c : chars) tokens.emplace_back(1, c);
    return Alphabet(std::move(tokens));
  }

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(Symbol s) const { return tokens_.at(s); }
  bool single_char() const { return single_char_; }

  std::optional<Symbol> index_of(std::string_view token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool operator==(const Alphabet& o) const { return tokens_ == o.tokens_; }

  /// Renders a word for output: tokens joined directly when every token is
  /// a single character, otherwise joined with commas.
  std::string render(const Word& w) const {
    std::string out;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (i > 0 && !single_char_) out += ',';
      out += token(static_cast<Symbol>(w[i]));
    }
    return out;
  }

  /// Inverse of render.  Throws on unknown tokens.
  Word parse_word(std::string_view text) const {
    Word w;
    if (text.empty()) return w;
    if (single_char_) {
      for (char c : text) {
        auto s = index_of(std::string_view(&c, 1));
        if (!s) throw std::invalid_argument(std::string("unknown symbol '") + c + "'");
        w.push_back(static_cast<char32_t>(*s));
      }
    } else {
      std::size_t pos = 0;
      while (pos <= text.size()) {
        std::size_t comma = text.find(',', pos);
        std::string_view tok = text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
        auto s = index_of(tok);
        if (!s) throw std::invalid_argument("unknown symbol '" + std::string(tok) + "'");
        w.push_back(static_cast<char32_t>(*s));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
      }
    }
    return w;
  }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, Symbol, std::less<>> index_;
  bool single_char_ = true;
};

struct IngestOptions {
  /// When true, symbols are whitespace-separated tokens; otherwise each
  /// non-whitespace character is one symbol.
  bool token_mode = false;
  /// Declared alphabet; when absent the alphabet is inferred from the data
  /// (distinct tokens, sorted lexically).
  std::optional<Alphabet> alphabet;
};

struct IngestResult {
  Alphabet alphabet;
  /// One sequence per input line; counting windows never cross lines.
  std::vector<SymbolSequence> sequences;
  std::size_t total_symbols = 0;
};

/// Reads plain-text sequence data.  Each line is an independent sequence;
/// empty lines are skipped.  Throws std::invalid_argument on symbols not in
/// a declared alphabet, on embedded whitespace in character mode, and on
/// inputs with no symbols at all.
inline IngestResult read_sequences(std::istream& in, const IngestOptions& opts = {}) {
  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> toks;
    if (opts.token_mode) {
      std::istringstream ls(line);
      std::string t;
      while (ls >> t) toks.push_back(t);
    } else {
      for (char c : line) {
        if (c == ' ' || c == '\t')
          throw std::invalid_argument("whitespace inside a sequence line (use token mode for token data)");
        toks.emplace_back(1, c);
      }
    }
    if (!toks.empty()) lines.push_back(std::move(toks));
  }
  if (lines.empty()) throw std::invalid_argument("input contains no symbols");

  Alphabet alphabet = [&] {
    if (opts.alphabet) return *opts.alphabet;
    std::set<std::string> distinct;
    for (const auto& l : lines) distinct.insert(l.begin(), l.end());
    return Alphabet(std::vector<std::string>(distinct.begin(), distinct.end()));
  }();

  IngestResult out{alphabet, {}, 0};
  for (const auto& l : lines) {
    SymbolSequence seq;
    seq.reserve(l.size());
    for (const auto& t : l) {
      auto s = alphabet.index_of(t);
      if (!s) throw std::invalid_argument("symbol '" + t + "' not in declared alphabet");
      seq.push_back(*s);
    }
    out.total_symbols += seq.size();
    out.sequences.push_back(std::move(seq));
  }
  return out;
}

}  // namespace cssr

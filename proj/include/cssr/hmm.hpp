#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "cssr/alphabet.hpp"
#include "cssr/machine.hpp"

namespace cssr {

/// Fully-connected hidden Markov model with per-state emissions.
/// Rows of trans and emit are stochastic.
struct DenseHmm {
  std::size_t num_states = 0;
  std::size_t num_symbols = 0;
  std::vector<double> trans;  // num_states x num_states, row-major
  std::vector<double> emit;   // num_states x num_symbols, row-major
  std::vector<double> init;   // num_states

  double a(std::size_t i, std::size_t j) const { return trans[i * num_states + j]; }
  double b(std::size_t i, std::size_t sym) const { return emit[i * num_symbols + sym]; }

  /// Uniform rows with +-10% relative perturbation, renormalized.
  static DenseHmm random_init(std::size_t states, std::size_t symbols, std::uint64_t seed) {
    DenseHmm h;
    h.num_states = states;
    h.num_symbols = symbols;
    std::mt19937_64 rng(seed);
    auto fill_rows = [&](std::vector<double>& m, std::size_t rows, std::size_t cols) {
      m.resize(rows * cols);
      for (std::size_t r = 0; r < rows; ++r) {
        double sum = 0;
        for (std::size_t c = 0; c < cols; ++c) {
          double u = detail::uniform53(rng);  // in [0,1)
          m[r * cols + c] = 1.0 + 0.1 * (2 * u - 1);
          sum += m[r * cols + c];
        }
        for (std::size_t c = 0; c < cols; ++c) m[r * cols + c] /= sum;
      }
    };
    fill_rows(h.trans, states, states);
    fill_rows(h.emit, states, symbols);
    fill_rows(h.init, 1, states);
    return h;
  }

  /// Stationary distribution of the hidden chain (used when scoring and
  /// when expanding word distributions).
  std::vector<double> stationary() const {
    const std::size_t n = num_states;
    if (n == 1) return {1.0};
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) m(j, i) = a(i, j);
    for (std::size_t i = 0; i < n; ++i) m(i, i) -= 1.0;
    m.row(n - 1).setOnes();
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs(n - 1) = 1.0;
    Eigen::VectorXd pi = m.colPivHouseholderQr().solve(rhs);
    std::vector<double> out(n);
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = std::max(0.0, pi(i));
      sum += out[i];
    }
    if (sum <= 0) return std::vector<double>(n, 1.0 / static_cast<double>(n));
    for (double& x : out) x /= sum;
    return out;
  }
};

/// Log-likelihood of a sequence under the model via the scaled forward
/// recursion, starting from the given distribution.
inline double hmm_log_likelihood(const DenseHmm& h, const SymbolSequence& seq,
                                 const std::vector<double>& start) {
  const std::size_t n = h.num_states;
  std::vector<double> cur(n), next(n);
  double ll = 0;
  for (std::size_t i = 0; i < n; ++i) cur[i] = start[i] * h.b(i, seq[0]);
  for (std::size_t t = 0;; ++t) {
    double scale = std::accumulate(cur.begin(), cur.end(), 0.0);
    if (scale <= 0) return -std::numeric_limits<double>::infinity();
    ll += std::log(scale);
    for (double& x : cur) x /= scale;
    if (t + 1 == seq.size()) break;
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0;
      for (std::size_t i = 0; i < n; ++i) acc += cur[i] * h.a(i, j);
      next[j] = acc * h.b(j, seq[t + 1]);
    }
    cur.swap(next);
  }
  return ll;
}

struct EmResult {
  DenseHmm model;
  std::vector<double> log_likelihoods;  // training LL after each iteration
  int iterations = 0;
  bool converged = false;
};

/// Baum-Welch with per-step scaling.  Stops when the per-symbol training
/// log-likelihood improves by less than tol, or at max_iters.  Throws on
/// numerical failure (a zero forward scale) and on a decreasing
/// log-likelihood, which would indicate a broken update.
inline EmResult em_train(const DenseHmm& start, const SymbolSequence& seq, int max_iters = 500,
                         double tol = 1e-6) {
  if (start.num_states < 1) throw std::invalid_argument("em_train: need at least one state");
  if (seq.empty()) throw std::invalid_argument("em_train: empty sequence");
  const std::size_t n = start.num_states;
  const std::size_t k = start.num_symbols;
  const std::size_t len = seq.size();
  DenseHmm h = start;
  EmResult result;

  std::vector<double> alpha(len * n), beta(len * n), scale(len);
  for (int iter = 0; iter < max_iters; ++iter) {
    // Forward pass, scaled so each time slice sums to 1.
    for (std::size_t i = 0; i < n; ++i) alpha[i] = h.init[i] * h.b(i, seq[0]);
    double ll = 0;
    for (std::size_t t = 0; t < len; ++t) {
      if (t > 0) {
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0;
          for (std::size_t i = 0; i < n; ++i) acc += alpha[(t - 1) * n + i] * h.a(i, j);
          alpha[t * n + j] = acc * h.b(j, seq[t]);
        }
      }
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += alpha[t * n + i];
      if (s <= 0 || !std::isfinite(s))
        throw std::runtime_error("em_train: forward underflow at iteration " +
                                 std::to_string(iter));
      scale[t] = s;
      for (std::size_t i = 0; i < n; ++i) alpha[t * n + i] /= s;
      ll += std::log(s);
    }
    if (!result.log_likelihoods.empty() &&
        ll < result.log_likelihoods.back() - 1e-9 * (1.0 + std::abs(ll)))
      throw std::logic_error("em_train: log-likelihood decreased at iteration " +
                             std::to_string(iter));
    bool done = !result.log_likelihoods.empty() &&
                (ll - result.log_likelihoods.back()) / static_cast<double>(len) < tol;
    result.log_likelihoods.push_back(ll);
    result.iterations = iter + 1;
    if (done) {
      result.converged = true;
      break;
    }

    // Backward pass with the same scales.
    for (std::size_t i = 0; i < n; ++i) beta[(len - 1) * n + i] = 1.0;
    for (std::size_t t = len - 1; t-- > 0;) {
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0;
        for (std::size_t j = 0; j < n; ++j)
          acc += h.a(i, j) * h.b(j, seq[t + 1]) * beta[(t + 1) * n + j];
        beta[t * n + i] = acc / scale[t + 1];
      }
    }

    // Accumulators.
    std::vector<double> trans_num(n * n, 0.0), gamma_sum(n, 0.0), emit_num(n * k, 0.0),
        gamma_last(n, 0.0);
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t i = 0; i < n; ++i) {
        double g = alpha[t * n + i] * beta[t * n + i];
        emit_num[i * k + seq[t]] += g;
        if (t + 1 < len)
          gamma_sum[i] += g;
        else
          gamma_last[i] = g;
      }
      if (t + 1 < len) {
        for (std::size_t i = 0; i < n; ++i) {
          double ai = alpha[t * n + i];
          if (ai == 0) continue;
          for (std::size_t j = 0; j < n; ++j)
            trans_num[i * n + j] +=
                ai * h.a(i, j) * h.b(j, seq[t + 1]) * beta[(t + 1) * n + j] / scale[t + 1];
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (gamma_sum[i] > 0)
        for (std::size_t j = 0; j < n; ++j) h.trans[i * n + j] = trans_num[i * n + j] / gamma_sum[i];
      double tot = gamma_sum[i] + gamma_last[i];
      if (tot > 0)
        for (std::size_t c = 0; c < k; ++c) h.emit[i * k + c] = emit_num[i * k + c] / tot;
      h.init[i] = alpha[i] * beta[i];
    }
    double init_sum = std::accumulate(h.init.begin(), h.init.end(), 0.0);
    for (double& x : h.init) x /= init_sum;
  }
  result.model = std::move(h);
  return result;
}

struct CrossValidationResult {
  DenseHmm best_model;
  std::size_t selected_states = 0;
  std::vector<double> test_ll_per_size;   // indexed as state_counts
  std::vector<double> train_ll_per_size;
  std::vector<std::size_t> state_counts;
};

/// Architecture selection by out-of-sample likelihood: trains fully
/// connected models of each size on the training half (best of `restarts`
/// seeded initializations by training likelihood), scores each on held-out
/// data from its stationary distribution, and keeps the best scorer (ties
/// to fewer states).
inline CrossValidationResult cross_validate(const SymbolSequence& train,
                                            const SymbolSequence& test, std::size_t num_symbols,
                                            const std::vector<std::size_t>& state_counts,
                                            int restarts, std::uint64_t seed, int max_iters = 500,
                                            double tol = 1e-6) {
  if (state_counts.empty()) throw std::invalid_argument("cross_validate: no architectures");
  CrossValidationResult out;
  out.state_counts = state_counts;
  bool have_best = false;
  double best_test_ll = 0;
  std::uint64_t stream = seed;
  for (std::size_t m : state_counts) {
    bool have_m = false;
    double best_train_ll = 0;
    DenseHmm best_for_m;
    for (int r = 0; r < restarts; ++r) {
      stream = stream * 6364136223846793005ULL + 1442695040888963407ULL;
      EmResult em = em_train(DenseHmm::random_init(m, num_symbols, stream), train, max_iters, tol);
      if (!have_m || em.log_likelihoods.back() > best_train_ll) {
        have_m = true;
        best_train_ll = em.log_likelihoods.back();
        best_for_m = std::move(em.model);
      }
    }
    double test_ll = hmm_log_likelihood(best_for_m, test, best_for_m.stationary());
    out.train_ll_per_size.push_back(best_train_ll);
    out.test_ll_per_size.push_back(test_ll);
    if (!have_best || test_ll > best_test_ll) {
      have_best = true;
      best_test_ll = test_ll;
      out.best_model = std::move(best_for_m);
      out.selected_states = m;
    }
  }
  return out;
}

/// Exact distribution over words of the given length, starting the hidden
/// chain from its stationary distribution.  Zero-probability words are
/// omitted.
inline std::map<Word, double> hmm_word_distribution(const DenseHmm& h, int length) {
  if (length < 1) throw std::invalid_argument("hmm_word_distribution: length must be >= 1");
  std::map<Word, double> out;
  std::vector<double> start = h.stationary();
  Word w;
  // v[s] carries P(prefix, hidden state after prefix = s) unnormalized.
  struct Rec {
    const DenseHmm& h;
    int length;
    std::map<Word, double>& out;
    void go(const std::vector<double>& v, Word& w) {
      const std::size_t n = h.num_states;
      for (std::size_t sym = 0; sym < h.num_symbols; ++sym) {
        std::vector<double> u(n);
        double p = 0;
        for (std::size_t i = 0; i < n; ++i) {
          u[i] = v[i] * h.b(i, sym);
          p += u[i];
        }
        if (p <= 0) continue;
        w.push_back(static_cast<char32_t>(sym));
        if (static_cast<int>(w.size()) == length) {
          out[w] += p;
        } else {
          std::vector<double> next(n, 0.0);
          for (std::size_t i = 0; i < n; ++i) {
            if (u[i] == 0) continue;
            for (std::size_t j = 0; j < n; ++j) next[j] += u[i] * h.a(i, j);
          }
          go(next, w);
        }
        w.pop_back();
      }
    }
  } rec{h, length, out};
  rec.go(start, w);
  return out;
}

/// Expands an edge-emitting machine into the equivalent state-emitting HMM:
/// one hidden state per (machine state, emitted symbol) pair.
inline DenseHmm machine_to_hmm(const CausalStateMachine& m) {
  struct Pair {
    std::size_t state;
    Symbol symbol;
  };
  std::vector<Pair> pairs;
  std::vector<std::vector<int>> pair_id(m.state_count(),
                                        std::vector<int>(m.alphabet().size(), -1));
  for (std::size_t s = 0; s < m.state_count(); ++s)
    for (std::size_t b = 0; b < m.alphabet().size(); ++b)
      if (m.state(s).emission[b] > 0) {
        pair_id[s][b] = static_cast<int>(pairs.size());
        pairs.push_back({s, static_cast<Symbol>(b)});
      }
  DenseHmm h;
  h.num_states = pairs.size();
  h.num_symbols = m.alphabet().size();
  h.trans.assign(pairs.size() * pairs.size(), 0.0);
  h.emit.assign(pairs.size() * h.num_symbols, 0.0);
  h.init.assign(pairs.size(), 0.0);
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [s, b] = pairs[p];
    h.emit[p * h.num_symbols + b] = 1.0;
    h.init[p] = m.stationary()[s] * m.state(s).emission[b];
    std::size_t succ = static_cast<std::size_t>(m.transition(s, b));
    for (std::size_t b2 = 0; b2 < h.num_symbols; ++b2) {
      int q = pair_id[succ][b2];
      if (q >= 0) h.trans[p * pairs.size() + static_cast<std::size_t>(q)] = m.state(succ).emission[b2];
    }
  }
  return h;
}

}  // namespace cssr

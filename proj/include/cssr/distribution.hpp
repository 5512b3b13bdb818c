#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace cssr {

/// Probability distribution over a fixed alphabet ordering.
/// support_count records how many observations back the estimate; it is 0
/// for exact (analytic) distributions.
struct Distribution {
  std::vector<double> p;
  std::uint64_t support_count = 0;

  Distribution() = default;
  explicit Distribution(std::vector<double> probs, std::uint64_t support = 0)
      : p(std::move(probs)), support_count(support) {}

  static Distribution from_counts(const std::vector<std::uint64_t>& counts) {
    std::uint64_t total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
    if (total == 0) throw std::invalid_argument("distribution: no observations");
    std::vector<double> probs(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i)
      probs[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
    return Distribution(std::move(probs), total);
  }

  std::size_t size() const { return p.size(); }

  bool valid(double tol = 1e-12) const {
    double sum = 0;
    for (double x : p) {
      if (!(x >= 0.0)) return false;
      sum += x;
    }
    return std::abs(sum - 1.0) <= tol;
  }
};

/// L1 (total variation) distance: sum of |P(a)-Q(a)|, in [0, 2].
inline double tv_distance(const Distribution& a, const Distribution& b) {
  if (a.size() != b.size()) throw std::invalid_argument("tv_distance: mismatched alphabets");
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a.p[i] - b.p[i]);
  return d;
}

/// Shannon entropy in bits.
inline double entropy_bits(const Distribution& d) {
  double h = 0;
  for (double x : d.p)
    if (x > 0) h -= x * std::log2(x);
  return h;
}

}  // namespace cssr

#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>

#include <boost/math/special_functions/gamma.hpp>

#include "cssr/distribution.hpp"

namespace cssr {

enum class TestKind { KS, ChiSquared };

inline const char* test_kind_name(TestKind t) { return t == TestKind::KS ? "ks" : "chi2"; }

/// Outcome of a two-sample test.  For KS, threshold_or_p holds the critical
/// value the statistic was compared against; for chi-squared it holds the
/// p-value.  no_data marks the degenerate case of an empty sample, which
/// never rejects.
struct TestDecision {
  double statistic = 0.0;
  double threshold_or_p = 1.0;
  bool reject = false;
  TestKind kind = TestKind::KS;
  bool no_data = false;
};

/// Asymptotic two-sample KS critical coefficient: c(alpha) = sqrt(-ln(alpha/2)/2).
inline double ks_critical_coefficient(double alpha) {
  return std::sqrt(-std::log(alpha / 2.0) / 2.0);
}

/// Two-sample Kolmogorov-Smirnov test on count vectors over a fixed symbol
/// ordering.  D is the max CDF gap over alphabet prefixes; the rejection
/// threshold is c(alpha) * sqrt((n1+n2)/(n1*n2)).  On a discrete alphabet
/// this is conservative.
inline TestDecision ks_two_sample(std::span<const std::uint64_t> counts1,
                                  std::span<const std::uint64_t> counts2, double alpha) {
  if (counts1.size() != counts2.size())
    throw std::invalid_argument("ks_two_sample: mismatched alphabets");
  TestDecision dec;
  dec.kind = TestKind::KS;
  const double n1 = static_cast<double>(
      std::accumulate(counts1.begin(), counts1.end(), std::uint64_t{0}));
  const double n2 = static_cast<double>(
      std::accumulate(counts2.begin(), counts2.end(), std::uint64_t{0}));
  if (n1 == 0 || n2 == 0) {
    dec.no_data = true;
    return dec;
  }
  double f1 = 0, f2 = 0, d = 0;
  for (std::size_t i = 0; i < counts1.size(); ++i) {
    f1 += static_cast<double>(counts1[i]) / n1;
    f2 += static_cast<double>(counts2[i]) / n2;
    d = std::max(d, std::abs(f1 - f2));
  }
  dec.statistic = d;
  dec.threshold_or_p = ks_critical_coefficient(alpha) * std::sqrt((n1 + n2) / (n1 * n2));
  dec.reject = dec.statistic > dec.threshold_or_p;
  return dec;
}

/// Two-sample Pearson chi-squared test.  Cells empty in both samples are
/// dropped; dof = surviving cells - 1.  dof == 0 never rejects.
inline TestDecision chi2_two_sample(std::span<const std::uint64_t> counts1,
                                    std::span<const std::uint64_t> counts2, double alpha) {
  if (counts1.size() != counts2.size())
    throw std::invalid_argument("chi2_two_sample: mismatched alphabets");
  TestDecision dec;
  dec.kind = TestKind::ChiSquared;
  const double n1 = static_cast<double>(
      std::accumulate(counts1.begin(), counts1.end(), std::uint64_t{0}));
  const double n2 = static_cast<double>(
      std::accumulate(counts2.begin(), counts2.end(), std::uint64_t{0}));
  if (n1 == 0 || n2 == 0) {
    dec.no_data = true;
    return dec;
  }
  const double k1 = std::sqrt(n2 / n1);
  const double k2 = std::sqrt(n1 / n2);
  double stat = 0;
  int cells = 0;
  for (std::size_t i = 0; i < counts1.size(); ++i) {
    const double c1 = static_cast<double>(counts1[i]);
    const double c2 = static_cast<double>(counts2[i]);
    if (c1 + c2 == 0) continue;
    ++cells;
    const double diff = k1 * c1 - k2 * c2;
    stat += diff * diff / (c1 + c2);
  }
  const int dof = cells - 1;
  dec.statistic = stat;
  if (dof <= 0) {
    dec.threshold_or_p = 1.0;
    dec.reject = false;
    return dec;
  }
  dec.threshold_or_p = boost::math::gamma_q(dof / 2.0, stat / 2.0);
  dec.reject = dec.threshold_or_p < alpha;
  return dec;
}

inline TestDecision two_sample_test(TestKind kind, std::span<const std::uint64_t> counts1,
                                    std::span<const std::uint64_t> counts2, double alpha) {
  return kind == TestKind::KS ? ks_two_sample(counts1, counts2, alpha)
                              : chi2_two_sample(counts1, counts2, alpha);
}

}  // namespace cssr

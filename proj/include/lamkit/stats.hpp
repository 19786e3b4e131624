#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lamkit/matrix.hpp"

namespace lamkit::stats {

enum class Orientation { HigherIsBetter, LowerIsBetter };

/// k classifiers (rows) by N datasets (columns) of mean CV scores.
struct ScoreMatrix {
  std::vector<std::string> classifiers;
  std::vector<std::string> datasets;
  Matrix scores;
  Orientation orientation = Orientation::HigherIsBetter;

  /// Throws DataError on shape mismatch or a missing (non-finite) cell.
  void validate() const;
};

/// Per-dataset ranks, best = 1, ties get the mean of their ranks.
Matrix rank_matrix(const ScoreMatrix& sm);

std::vector<double> mean_ranks(const Matrix& ranks);

/// chi2_F = 12N / (k(k+1)) * [sum_i R_i^2 - k(k+1)^2 / 4].
double friedman(const Matrix& ranks);
double friedman_from_mean_ranks(std::span<const double> mean_ranks, std::size_t datasets);

struct FTest {
  double statistic = 0.0;
  double p_value = 1.0;
  double df1 = 0.0;
  double df2 = 0.0;
};

/// F_F = (N-1) chi2 / (N(k-1) - chi2) with an F(k-1, (k-1)(N-1)) upper tail.
/// Throws std::domain_error when the denominator is not positive.
FTest iman_davenport(double chi2, std::size_t datasets, std::size_t classifiers);

/// P(F > x) for the F distribution with (d1, d2) degrees of freedom.
double f_distribution_sf(double x, double d1, double d2);

struct WilcoxonResult {
  double r_plus = 0.0;
  double r_minus = 0.0;
  double t = 0.0;  // min(R+, R-)
  double p_value = 1.0;
  std::size_t n_used = 0;
  // Set when an odd number of zero differences forced one to be dropped.
  std::optional<std::size_t> dropped_zero_index;
};

/// Exact signed-rank test. Zero differences split their ranks evenly
/// between R+ and R-; with an odd count of zeros the last one (by input
/// order) is dropped. The null distribution is enumerated by dynamic
/// programming over the realised mid-ranks, and the two-sided p-value is
/// 2 min(P(W <= R+), P(W >= R+)) capped at 1. Throws std::domain_error if
/// every difference is zero.
WilcoxonResult wilcoxon_exact(std::span<const double> d);

inline constexpr std::size_t kWilcoxonMaxN = 1000;

/// Largest T whose exact two-sided p-value (untied ranks) is at most alpha;
/// -1 when even T = 0 is not significant.
int wilcoxon_critical_value(std::size_t n, double alpha);

/// Holm step-down. Returns reject flags in input order.
std::vector<bool> holm(std::span<const double> p_values, double alpha);

/// Median of the Walsh averages (d_i + d_j) / 2, i <= j.
double hodges_lehmann(std::span<const double> d);

struct PairwiseComparison {
  std::size_t first = 0;
  std::size_t second = 0;
  WilcoxonResult test;
  bool all_zero = false;   // no test possible; p = 1
  double pseudomedian = 0.0;  // of score[first] - score[second]
  bool rejected = false;
};

struct CdGraph {
  std::vector<double> mean_ranks;
  // Pairs that cannot be told apart, sorted, first < second.
  std::vector<std::pair<std::size_t, std::size_t>> edges;
};

CdGraph cd_graph(std::span<const double> mean_ranks, std::span<const PairwiseComparison> pairs);

struct ComparisonResult {
  std::vector<double> mean_ranks;
  double chi2 = 0.0;
  FTest omnibus;
  bool omnibus_degenerate = false;  // Iman-Davenport denominator <= 0
  bool omnibus_rejected = false;
  double alpha = 0.05;
  std::vector<PairwiseComparison> pairs;
  CdGraph graph;
};

/// Omnibus test, then pairwise Wilcoxon tests with Holm correction. When the
/// omnibus test does not reject, every pairwise null is retained.
ComparisonResult compare(const ScoreMatrix& sm, double alpha = 0.05);

}  // namespace lamkit::stats

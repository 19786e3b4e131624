#include "lamkit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <boost/math/distributions/fisher_f.hpp>

#include "lamkit/errors.hpp"

namespace lamkit::stats {

void ScoreMatrix::validate() const {
  if (classifiers.size() < 2) throw DataError("score matrix needs at least 2 classifiers");
  if (datasets.empty()) throw DataError("score matrix needs at least 1 dataset");
  if (static_cast<std::size_t>(scores.rows()) != classifiers.size() ||
      static_cast<std::size_t>(scores.cols()) != datasets.size()) {
    throw DataError("score matrix shape does not match its labels");
  }
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (!std::isfinite(scores(i, j))) {
        throw DataError("score matrix cell (" + classifiers[static_cast<std::size_t>(i)] + ", " +
                        datasets[static_cast<std::size_t>(j)] + ") is missing");
      }
    }
  }
}

Matrix rank_matrix(const ScoreMatrix& sm) {
  sm.validate();
  const Eigen::Index k = sm.scores.rows();
  Matrix ranks(k, sm.scores.cols());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  for (Eigen::Index j = 0; j < sm.scores.cols(); ++j) {
    auto better = [&](Eigen::Index a, Eigen::Index b) {
      return sm.orientation == Orientation::HigherIsBetter ? sm.scores(a, j) > sm.scores(b, j)
                                                           : sm.scores(a, j) < sm.scores(b, j);
    };
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), better);
    std::size_t start = 0;
    while (start < order.size()) {
      std::size_t end = start + 1;
      while (end < order.size() && sm.scores(order[end], j) == sm.scores(order[start], j)) ++end;
      const double mid = (static_cast<double>(start + 1) + static_cast<double>(end)) / 2.0;
      for (std::size_t t = start; t < end; ++t) ranks(order[t], j) = mid;
      start = end;
    }
  }
  return ranks;
}

std::vector<double> mean_ranks(const Matrix& ranks) {
  std::vector<double> out(static_cast<std::size_t>(ranks.rows()));
  for (Eigen::Index i = 0; i < ranks.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = ranks.row(i).sum() / static_cast<double>(ranks.cols());
  }
  return out;
}

double friedman_from_mean_ranks(std::span<const double> r, std::size_t datasets) {
  const double k = static_cast<double>(r.size());
  const double n = static_cast<double>(datasets);
  double sum_sq = 0.0;
  for (double v : r) sum_sq += v * v;
  const double chi2 = 12.0 * n / (k * (k + 1.0)) * (sum_sq - k * (k + 1.0) * (k + 1.0) / 4.0);
  // Rounding can leave a tiny negative value when all ranks are equal.
  return std::max(chi2, 0.0);
}

double friedman(const Matrix& ranks) {
  if (ranks.rows() < 2 || ranks.cols() < 2) {
    throw std::invalid_argument("friedman needs k >= 2 and N >= 2");
  }
  const auto r = mean_ranks(ranks);
  return friedman_from_mean_ranks(r, static_cast<std::size_t>(ranks.cols()));
}

double f_distribution_sf(double x, double d1, double d2) {
  if (!(d1 > 0.0) || !(d2 > 0.0)) throw std::invalid_argument("F degrees of freedom must be positive");
  if (std::isnan(x)) throw std::invalid_argument("F statistic is NaN");
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  boost::math::fisher_f_distribution<double> dist(d1, d2);
  return boost::math::cdf(boost::math::complement(dist, x));
}

FTest iman_davenport(double chi2, std::size_t datasets, std::size_t classifiers) {
  if (datasets < 2 || classifiers < 2) throw std::invalid_argument("iman_davenport needs k >= 2 and N >= 2");
  const double n = static_cast<double>(datasets);
  const double k = static_cast<double>(classifiers);
  const double denom = n * (k - 1.0) - chi2;
  if (!(denom > 0.0)) {
    throw std::domain_error("Iman-Davenport statistic undefined: N(k-1) - chi2 <= 0");
  }
  FTest out;
  out.df1 = k - 1.0;
  out.df2 = (k - 1.0) * (n - 1.0);
  out.statistic = (n - 1.0) * chi2 / denom;
  out.p_value = f_distribution_sf(out.statistic, out.df1, out.df2);
  return out;
}

namespace {

// Doubled mid-ranks of |d| (integers), by input position.
std::vector<long> doubled_midranks(std::span<const double> abs_d) {
  const std::size_t n = abs_d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return abs_d[a] < abs_d[b]; });
  std::vector<long> ranks(n);
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = start + 1;
    while (end < n && abs_d[order[end]] == abs_d[order[start]]) ++end;
    const long twice_mid = static_cast<long>(start + 1) + static_cast<long>(end);
    for (std::size_t t = start; t < end; ++t) ranks[order[t]] = twice_mid;
    start = end;
  }
  return ranks;
}

// Distribution of sum of a random subset of `weights` (each in with prob 1/2),
// indexed by the sum.
std::vector<long double> subset_sum_distribution(std::span<const long> weights) {
  long total = 0;
  for (long w : weights) total += w;
  std::vector<long double> dist(static_cast<std::size_t>(total) + 1, 0.0L);
  dist[0] = 1.0L;
  long reach = 0;
  for (long w : weights) {
    for (long s = reach; s >= 0; --s) {
      const long double mass = dist[static_cast<std::size_t>(s)] * 0.5L;
      dist[static_cast<std::size_t>(s)] = mass;
      dist[static_cast<std::size_t>(s + w)] += mass;
    }
    reach += w;
  }
  return dist;
}

}  // namespace

WilcoxonResult wilcoxon_exact(std::span<const double> d) {
  if (d.empty()) throw std::invalid_argument("wilcoxon_exact needs at least one difference");
  if (d.size() > kWilcoxonMaxN) throw std::invalid_argument("wilcoxon_exact: too many differences");
  for (double v : d) {
    if (!std::isfinite(v)) throw std::invalid_argument("wilcoxon_exact: non-finite difference");
  }
  WilcoxonResult out;
  std::vector<std::size_t> keep;
  std::size_t zeros = 0;
  std::size_t last_zero = 0;
  for (std::size_t j = 0; j < d.size(); ++j) {
    if (d[j] == 0.0) {
      ++zeros;
      last_zero = j;
    }
  }
  if (zeros == d.size()) throw std::domain_error("wilcoxon_exact: all differences are zero");
  if (zeros % 2 == 1) out.dropped_zero_index = last_zero;
  std::vector<double> abs_d;
  std::vector<double> used;
  for (std::size_t j = 0; j < d.size(); ++j) {
    if (out.dropped_zero_index && j == *out.dropped_zero_index) continue;
    used.push_back(d[j]);
    abs_d.push_back(std::fabs(d[j]));
  }
  out.n_used = used.size();
  const auto ranks = doubled_midranks(abs_d);

  long plus2 = 0;   // 2 R+
  long minus2 = 0;  // 2 R-
  long zero2 = 0;   // 2 * (sum of zero ranks)
  std::vector<long> free_ranks;
  for (std::size_t j = 0; j < used.size(); ++j) {
    if (used[j] > 0.0) {
      plus2 += ranks[j];
      free_ranks.push_back(ranks[j]);
    } else if (used[j] < 0.0) {
      minus2 += ranks[j];
      free_ranks.push_back(ranks[j]);
    } else {
      zero2 += ranks[j];
    }
  }
  // Each side gets half the zero ranks; in doubled units that is zero2 / 2.
  const long share2 = zero2 / 2;
  out.r_plus = static_cast<double>(plus2 + share2) / 2.0;
  out.r_minus = static_cast<double>(minus2 + share2) / 2.0;
  out.t = std::min(out.r_plus, out.r_minus);

  // Under the null the non-zero ranks carry independent fair signs; the zero
  // share is a constant offset, so work with plus2 directly.
  const auto dist = subset_sum_distribution(free_ranks);
  long double lower = 0.0L;
  long double upper = 0.0L;
  for (std::size_t s = 0; s < dist.size(); ++s) {
    const long sum = static_cast<long>(s);
    if (sum <= plus2) lower += dist[s];
    if (sum >= plus2) upper += dist[s];
  }
  out.p_value = static_cast<double>(std::min(1.0L, 2.0L * std::min(lower, upper)));
  return out;
}

int wilcoxon_critical_value(std::size_t n, double alpha) {
  if (n == 0 || n > kWilcoxonMaxN) throw std::invalid_argument("wilcoxon_critical_value: bad n");
  std::vector<long> weights(n);
  for (std::size_t i = 0; i < n; ++i) weights[i] = static_cast<long>(i + 1);
  const auto dist = subset_sum_distribution(weights);
  const long total = static_cast<long>(n * (n + 1) / 2);
  int critical = -1;
  long double cumulative = 0.0L;
  for (long t = 0; 2 * t <= total; ++t) {
    cumulative += dist[static_cast<std::size_t>(t)];
    const long double p = std::min(1.0L, 2.0L * cumulative);
    if (p <= static_cast<long double>(alpha)) critical = static_cast<int>(t);
    else break;
  }
  return critical;
}

std::vector<bool> holm(std::span<const double> p, double alpha) {
  if (p.empty()) throw std::invalid_argument("holm needs at least one p-value");
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("holm: p-value outside [0, 1]");
  }
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<bool> reject(m, false);
  for (std::size_t i = 0; i < m; ++i) {
    if (p[order[i]] < alpha / static_cast<double>(m - i)) reject[order[i]] = true;
    else break;
  }
  return reject;
}

double hodges_lehmann(std::span<const double> d) {
  if (d.empty()) throw std::invalid_argument("hodges_lehmann needs at least one value");
  std::vector<double> walsh;
  walsh.reserve(d.size() * (d.size() + 1) / 2);
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = i; j < d.size(); ++j) walsh.push_back((d[i] + d[j]) / 2.0);
  }
  std::sort(walsh.begin(), walsh.end());
  const std::size_t n = walsh.size();
  if (n % 2 == 1) return walsh[n / 2];
  return (walsh[n / 2 - 1] + walsh[n / 2]) / 2.0;
}

CdGraph cd_graph(std::span<const double> r, std::span<const PairwiseComparison> pairs) {
  CdGraph g;
  g.mean_ranks.assign(r.begin(), r.end());
  for (const auto& pc : pairs) {
    if (pc.first >= r.size() || pc.second >= r.size() || pc.first == pc.second) {
      throw std::invalid_argument("cd_graph: pair index out of range");
    }
    if (!pc.rejected) g.edges.emplace_back(std::min(pc.first, pc.second), std::max(pc.first, pc.second));
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  return g;
}

ComparisonResult compare(const ScoreMatrix& sm, double alpha) {
  sm.validate();
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  const std::size_t k = sm.classifiers.size();
  const std::size_t n = sm.datasets.size();
  if (n < 2) throw DataError("comparison needs at least 2 datasets");

  ComparisonResult out;
  out.alpha = alpha;
  const Matrix ranks = rank_matrix(sm);
  out.mean_ranks = mean_ranks(ranks);
  out.chi2 = friedman(ranks);
  out.omnibus.df1 = static_cast<double>(k - 1);
  out.omnibus.df2 = static_cast<double>((k - 1) * (n - 1));
  try {
    out.omnibus = iman_davenport(out.chi2, n, k);
  } catch (const std::domain_error&) {
    // Perfect agreement of ranks across every dataset.
    out.omnibus_degenerate = true;
    out.omnibus.statistic = std::numeric_limits<double>::infinity();
    out.omnibus.p_value = 0.0;
  }
  out.omnibus_rejected = out.omnibus.p_value < alpha;

  std::vector<double> diffs(n);
  std::vector<double> pvals;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      PairwiseComparison pc;
      pc.first = a;
      pc.second = b;
      for (std::size_t j = 0; j < n; ++j) {
        diffs[j] = sm.scores(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(j)) -
                   sm.scores(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j));
      }
      pc.pseudomedian = hodges_lehmann(diffs);
      if (std::all_of(diffs.begin(), diffs.end(), [](double v) { return v == 0.0; })) {
        pc.all_zero = true;
        pc.test.p_value = 1.0;
        pc.test.n_used = 0;
      } else {
        pc.test = wilcoxon_exact(diffs);
      }
      pvals.push_back(pc.test.p_value);
      out.pairs.push_back(pc);
    }
  }
  if (out.omnibus_rejected) {
    const auto reject = holm(pvals, alpha);
    for (std::size_t i = 0; i < out.pairs.size(); ++i) out.pairs[i].rejected = reject[i];
  }
  out.graph = cd_graph(out.mean_ranks, out.pairs);
  return out;
}

}  // namespace lamkit::stats

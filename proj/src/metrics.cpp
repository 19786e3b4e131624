#include "lamkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "lamkit/data.hpp"

namespace lamkit::metrics {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auc: size mismatch");
  const auto n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1) {
        positive_rank_sum += mid_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw std::domain_error("auc: both classes required");
  const double np = static_cast<double>(positives);
  const double u = positive_rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(negatives));
}

CalibrationTable calibration_table(std::span<const double> scores, std::span<const int> labels,
                                   int bins) {
  if (bins < 1) throw std::invalid_argument("calibration_table: need at least one bin");
  if (scores.size() != labels.size()) throw std::invalid_argument("calibration_table: size mismatch");
  CalibrationTable table;
  table.bins.resize(static_cast<std::size_t>(bins));
  std::vector<double> positives(table.bins.size(), 0.0);
  std::vector<double> sums(table.bins.size(), 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = scores[i];
    if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("calibration_table: score outside [0,1]");
    const auto idx = std::min(static_cast<std::size_t>(s * bins), table.bins.size() - 1);
    ++table.bins[idx].count;
    positives[idx] += labels[i] == 1 ? 1.0 : 0.0;
    sums[idx] += s;
  }
  table.total = scores.size();
  for (std::size_t b = 0; b < table.bins.size(); ++b) {
    auto& bin = table.bins[b];
    if (bin.count == 0) continue;
    const double c = static_cast<double>(bin.count);
    bin.observed = positives[b] / c;
    bin.expected = sums[b] / c;
    bin.mass = c / static_cast<double>(table.total);
  }
  return table;
}

double ece(const CalibrationTable& table) {
  double total = 0.0;
  for (const auto& bin : table.bins) {
    if (bin.count > 0) total += bin.mass * std::abs(bin.observed - bin.expected);
  }
  return total;
}

double mce(const CalibrationTable& table) {
  double worst = 0.0;
  bool any = false;
  for (const auto& bin : table.bins) {
    if (bin.count == 0) continue;
    any = true;
    worst = std::max(worst, std::abs(bin.observed - bin.expected));
  }
  if (!any) throw std::domain_error("mce: every bin is empty");
  return worst;
}

double certainty_fraction(std::span<const double> scores) {
  if (scores.empty()) return 0.0;
  const auto certain = std::count_if(scores.begin(), scores.end(),
                                     [](double s) { return s == 0.0 || s == 1.0; });
  return static_cast<double>(certain) / static_cast<double>(scores.size());
}

void write_calibration_csv(const CalibrationTable& table, std::ostream& out) {
  out << "bin,lower,upper,count,observed,expected,mass\n";
  const double k = static_cast<double>(table.bins.size());
  for (std::size_t b = 0; b < table.bins.size(); ++b) {
    const auto& bin = table.bins[b];
    out << b + 1 << ',' << format_double(static_cast<double>(b) / k) << ','
        << format_double(static_cast<double>(b + 1) / k) << ',' << bin.count << ','
        << format_double(bin.observed) << ',' << format_double(bin.expected) << ','
        << format_double(bin.mass) << '\n';
  }
}

}  // namespace lamkit::metrics

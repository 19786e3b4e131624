#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace lamkit::metrics {

/// Mann-Whitney form: P(score+ > score-) + P(tie) / 2, via mid-ranks.
double auc(std::span<const double> scores, std::span<const int> labels);

struct CalibrationBin {
  std::size_t count = 0;
  double observed = 0.0;  // o_i, fraction of positives
  double expected = 0.0;  // e_i, mean predicted probability
  double mass = 0.0;      // P(i)
};

/// Equal-width bins [(i-1)/K, i/K), the last bin closed at 1.
struct CalibrationTable {
  std::vector<CalibrationBin> bins;
  std::size_t total = 0;
};

inline constexpr int kDefaultCalibrationBins = 15;

CalibrationTable calibration_table(std::span<const double> scores, std::span<const int> labels,
                                   int bins = kDefaultCalibrationBins);

double ece(const CalibrationTable& table);

/// Max gap over non-empty bins. Throws std::domain_error if every bin is empty.
double mce(const CalibrationTable& table);

/// Fraction of scores exactly 0 or 1.
double certainty_fraction(std::span<const double> scores);

void write_calibration_csv(const CalibrationTable& table, std::ostream& out);

}  // namespace lamkit::metrics

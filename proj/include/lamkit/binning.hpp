#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lamkit/data.hpp"
#include "lamkit/matrix.hpp"
#include "lamkit/model.hpp"

namespace lamkit::binning {

enum class EncodingMode {
  Raw,                 // value passed through, specials zeroed
  LeftHalfIntervals,   // decreasing: 1{v <= theta_j}, last boundary +inf
  RightHalfIntervals,  // increasing: 1{v >= theta_j}, last boundary phi_u
  TwoSided,            // unconstrained: one-hot over (theta_j, theta_{j+1}]
  Categorical,         // one-hot over training levels
};

std::string to_string(EncodingMode mode);

/// Fitted encoding of one raw feature. `edges` holds the finite interior
/// thresholds in the order the mode uses them: ascending for
/// LeftHalfIntervals and TwoSided, descending for RightHalfIntervals. The
/// outer boundary (+inf or phi_u) is implicit and always emits a column
/// that is 1 for every non-special value.
struct FeatureEncoding {
  std::string name;
  std::size_t source_index = 0;
  EncodingMode mode = EncodingMode::TwoSided;
  Monotone monotone = Monotone::Unconstrained;
  std::vector<double> edges;
  std::vector<double> special_values;
  bool other_special = false;  // column for sub-threshold values not listed
  std::vector<double> levels;  // categorical codes, ascending
  std::vector<std::string> level_names;
  double lower_bound = 0.0;

  std::size_t first_column = 0;
  std::size_t width = 0;
};

class BinningTransform {
 public:
  BinningTransform() = default;
  BinningTransform(std::vector<FeatureEncoding> features, double special_value_threshold,
                   std::size_t input_dim);

  std::size_t output_dim() const { return columns_.size(); }
  std::size_t input_dim() const { return input_dim_; }
  const std::vector<FeatureEncoding>& features() const { return features_; }
  const std::vector<ColumnInfo>& columns() const { return columns_; }
  double special_value_threshold() const { return special_value_threshold_; }

  bool is_special(const FeatureEncoding& f, double value) const;

  /// Indicator block of one feature, special columns last.
  std::vector<double> encode(double value, const FeatureEncoding& f) const;

  void encode_row(std::span<const double> raw, std::span<double> out) const;
  std::vector<double> encode_row(std::span<const double> raw) const;
  Matrix transform(const Dataset& ds) const;

  nlohmann::ordered_json to_json() const;
  static BinningTransform from_json(const nlohmann::ordered_json& doc);

 private:
  void build_columns();

  std::vector<FeatureEncoding> features_;
  std::vector<ColumnInfo> columns_;
  double special_value_threshold_ = 0.0;
  std::size_t input_dim_ = 0;
};

/// Interior thresholds (ascending) from greedy best-first binary splits
/// maximising information gain, at most max_leaves - 1 of them. Each split
/// sits at the midpoint of adjacent distinct values; ties break toward the
/// smaller threshold. Callers exclude special values beforehand.
std::vector<double> fit_edges(std::span<const double> values, std::span<const int> labels,
                              int max_leaves);

/// Information gain (in nats, weighted by node size) of splitting at
/// `threshold`, left side v <= threshold. Exposed for tests.
double split_gain(std::span<const double> values, std::span<const int> labels, double threshold);

enum class Style {
  Binned,  // ARM1 indicator encoding
  Raw,     // unprocessed numeric features (NNLR)
};

struct FitResult {
  BinningTransform transform;
  Matrix encoded;
};

/// Fits one encoding per feature in `feature_subset` (all features when
/// empty) and encodes the training matrix.
FitResult fit_transform(const Dataset& ds, const DatasetConfig& config, Style style = Style::Binned,
                        std::span<const std::string> feature_subset = {});

}  // namespace lamkit::binning

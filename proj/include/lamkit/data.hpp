#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lamkit/matrix.hpp"

namespace lamkit {

enum class Monotone : int { Decreasing = -1, Unconstrained = 0, Increasing = 1 };

std::string to_string(Monotone m);

struct FeatureSpec {
  std::string name;
  Monotone monotone = Monotone::Unconstrained;
  std::vector<double> special_values;
  int max_leaves = 5;
  bool categorical = false;
  // Falls back to the dataset-level special_value_threshold when unset.
  std::optional<double> lower_bound;
};

/// Named feature groups. Order is significant: it fixes the order of
/// subscale inputs to a second-layer model and of mixture weights.
struct SubscaleSpec {
  std::vector<std::pair<std::string, std::vector<std::string>>> groups;

  bool empty() const { return groups.empty(); }
  std::size_t size() const { return groups.size(); }

  /// Throws DataError unless the groups partition `feature_names`.
  void validate_partition(std::span<const std::string> feature_names) const;
};

struct DatasetConfig {
  std::vector<FeatureSpec> features;
  SubscaleSpec subscales;
  double special_value_threshold = -std::numeric_limits<double>::infinity();
  std::string label_column = "target";

  const FeatureSpec* find(const std::string& name) const;
  std::vector<std::string> feature_names() const;
  bool is_special(const FeatureSpec& spec, double value) const;
  double lower_bound(const FeatureSpec& spec) const;
};

DatasetConfig parse_config(const nlohmann::ordered_json& doc);
DatasetConfig load_config(const std::filesystem::path& path);
nlohmann::ordered_json config_to_json(const DatasetConfig& config);

/// Per-feature string level dictionaries for categorical columns whose cells
/// are not numeric. Cell text maps to its index in the list.
using LevelDictionary = std::map<std::string, std::vector<std::string>>;

class Dataset {
 public:
  Dataset() = default;

  /// Validates shapes, labels in {0,1}, unique names and finite values.
  Dataset(Matrix features, std::vector<int> labels, std::vector<std::string> feature_names,
          std::vector<bool> categorical_mask, LevelDictionary levels = {});

  std::size_t rows() const { return static_cast<std::size_t>(features_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(features_.cols()); }

  const Matrix& features() const { return features_; }
  std::span<const double> row(std::size_t i) const {
    return row_span(features_, static_cast<Eigen::Index>(i));
  }
  double at(std::size_t i, std::size_t j) const {
    return features_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<std::string>& feature_names() const { return names_; }
  const std::vector<bool>& categorical_mask() const { return categorical_; }
  const LevelDictionary& levels() const { return levels_; }

  std::optional<std::size_t> column_index(const std::string& name) const;
  std::size_t positives() const;
  bool has_both_classes() const;

  Dataset subset(std::span<const std::size_t> row_indices) const;

 private:
  Matrix features_;
  std::vector<int> labels_;
  std::vector<std::string> names_;
  std::vector<bool> categorical_;
  LevelDictionary levels_;
};

struct CsvOptions {
  // When true the label column may be absent; labels are then all zero.
  bool labels_optional = false;
  // Level dictionary from a fitted model, so codes match training.
  const LevelDictionary* known_levels = nullptr;
};

Dataset read_csv(std::istream& in, const DatasetConfig& config, const CsvOptions& options = {});
Dataset load_csv(const std::filesystem::path& path, const DatasetConfig& config,
                 const CsvOptions& options = {});

/// Shortest round-trip formatting, so a reload reproduces every bit.
void write_csv(const Dataset& ds, std::ostream& out, const std::string& label_column = "target");

std::string format_double(double value);

/// One RFC 4180 record; false at end of input.
bool read_csv_record(std::istream& in, std::vector<std::string>& fields);
/// Quotes a field only when it needs quoting.
std::string csv_quote(const std::string& field);

struct FoldPlan {
  int k = 0;
  std::vector<int> assignments;
  std::uint64_t seed = 0;

  std::vector<std::size_t> test_rows(int fold) const;
  std::vector<std::size_t> train_rows(int fold) const;
};

/// Shuffles each class by seed and deals indices round-robin into k folds,
/// continuing the deal position across classes so fold sizes also balance.
FoldPlan stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed);
FoldPlan stratified_kfold(const Dataset& ds, int k, std::uint64_t seed);

/// Contiguous row ranges of at most `rows_per_part` rows, in input order.
std::vector<std::pair<std::size_t, std::size_t>> contiguous_splits(std::size_t rows,
                                                                   std::size_t rows_per_part);

}  // namespace lamkit

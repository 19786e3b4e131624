#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lamkit/data.hpp"

namespace lamkit {

/// Provenance of one model input column.
struct ColumnInfo {
  std::string name;
  std::string source_feature;
  // Increasing => coefficient >= 0, Decreasing => coefficient <= 0.
  Monotone direction = Monotone::Unconstrained;
};

enum class Link { Logistic, Linearised };

/// beta_0 + sum_i beta_i x_i, mapped to a probability through `link`.
struct AdditiveModel {
  double bias = 0.0;
  std::vector<double> coefficients;
  std::vector<ColumnInfo> columns;
  Link link = Link::Logistic;
  // Only meaningful when link == Linearised.
  double alpha_star = 0.0;

  std::size_t dim() const { return coefficients.size(); }
};

nlohmann::ordered_json to_json(const AdditiveModel& m);
AdditiveModel additive_model_from_json(const nlohmann::ordered_json& doc);

std::vector<Monotone> directions_of(std::span<const ColumnInfo> columns);

}  // namespace lamkit

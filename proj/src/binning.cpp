#include "lamkit/binning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "lamkit/errors.hpp"

namespace lamkit::binning {

using nlohmann::ordered_json;

std::string to_string(EncodingMode mode) {
  switch (mode) {
    case EncodingMode::Raw: return "raw";
    case EncodingMode::LeftHalfIntervals: return "left_half_intervals";
    case EncodingMode::RightHalfIntervals: return "right_half_intervals";
    case EncodingMode::TwoSided: return "two_sided";
    case EncodingMode::Categorical: return "categorical";
  }
  return "two_sided";
}

namespace {

EncodingMode mode_from_string(const std::string& s) {
  for (auto m : {EncodingMode::Raw, EncodingMode::LeftHalfIntervals, EncodingMode::RightHalfIntervals,
                 EncodingMode::TwoSided, EncodingMode::Categorical}) {
    if (to_string(m) == s) return m;
  }
  throw DataError("binning: unknown encoding mode '" + s + "'");
}

// ---------------------------------------------------------------------------
// Entropy splitting over sorted distinct values.

struct ValueCounts {
  std::vector<double> values;      // distinct, ascending
  std::vector<double> cum_total;   // prefix counts, size n + 1
  std::vector<double> cum_pos;
};

ValueCounts tabulate(std::span<const double> values, std::span<const int> labels) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  ValueCounts vc;
  vc.cum_total.push_back(0.0);
  vc.cum_pos.push_back(0.0);
  for (std::size_t idx : order) {
    if (vc.values.empty() || values[idx] != vc.values.back()) {
      vc.values.push_back(values[idx]);
      vc.cum_total.push_back(vc.cum_total.back());
      vc.cum_pos.push_back(vc.cum_pos.back());
    }
    vc.cum_total.back() += 1.0;
    vc.cum_pos.back() += labels[idx] == 1 ? 1.0 : 0.0;
  }
  return vc;
}

// n * H(p) in nats for a node with n samples and `pos` positives.
double weighted_entropy(double n, double pos) {
  if (n <= 0.0) return 0.0;
  double h = 0.0;
  for (double k : {pos, n - pos}) {
    if (k > 0.0) h -= k * std::log(k / n);
  }
  return h;
}

struct Candidate {
  std::size_t lo = 0, hi = 0;  // leaf covers distinct values [lo, hi)
  std::size_t split = 0;       // left = [lo, split)
  double gain = -1.0;
  double threshold = 0.0;
  bool valid = false;
};

Candidate best_split(const ValueCounts& vc, std::size_t lo, std::size_t hi) {
  Candidate best;
  best.lo = lo;
  best.hi = hi;
  const double n = vc.cum_total[hi] - vc.cum_total[lo];
  const double pos = vc.cum_pos[hi] - vc.cum_pos[lo];
  const double parent = weighted_entropy(n, pos);
  if (hi - lo < 2 || parent <= 1e-12) return best;
  for (std::size_t s = lo + 1; s < hi; ++s) {
    const double nl = vc.cum_total[s] - vc.cum_total[lo];
    const double pl = vc.cum_pos[s] - vc.cum_pos[lo];
    const double gain = parent - weighted_entropy(nl, pl) - weighted_entropy(n - nl, pos - pl);
    // Strict comparison keeps the smallest threshold among equal gains.
    if (!best.valid || gain > best.gain + 1e-12) {
      best.valid = true;
      best.gain = gain;
      best.split = s;
      best.threshold = 0.5 * (vc.values[s - 1] + vc.values[s]);
    }
  }
  return best;
}

std::string num(double v) {
  if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
  return format_double(v);
}

}  // namespace

std::vector<double> fit_edges(std::span<const double> values, std::span<const int> labels,
                              int max_leaves) {
  if (values.size() != labels.size()) throw std::invalid_argument("fit_edges: size mismatch");
  if (max_leaves < 2) throw std::invalid_argument("fit_edges: max_leaves must be at least 2");
  const ValueCounts vc = tabulate(values, labels);
  if (vc.values.size() < 2) return {};

  std::vector<Candidate> frontier{best_split(vc, 0, vc.values.size())};
  std::vector<double> edges;
  int leaves = 1;
  while (leaves < max_leaves) {
    auto pick = frontier.end();
    for (auto it = frontier.begin(); it != frontier.end(); ++it) {
      if (!it->valid) continue;
      if (pick == frontier.end() || it->gain > pick->gain + 1e-12 ||
          (std::abs(it->gain - pick->gain) <= 1e-12 && it->threshold < pick->threshold)) {
        pick = it;
      }
    }
    if (pick == frontier.end()) break;
    const Candidate chosen = *pick;
    frontier.erase(pick);
    edges.push_back(chosen.threshold);
    frontier.push_back(best_split(vc, chosen.lo, chosen.split));
    frontier.push_back(best_split(vc, chosen.split, chosen.hi));
    ++leaves;
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

double split_gain(std::span<const double> values, std::span<const int> labels, double threshold) {
  double n = 0, pos = 0, nl = 0, pl = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    n += 1;
    pos += labels[i];
    if (values[i] <= threshold) {
      nl += 1;
      pl += labels[i];
    }
  }
  return weighted_entropy(n, pos) - weighted_entropy(nl, pl) - weighted_entropy(n - nl, pos - pl);
}

// ---------------------------------------------------------------------------
// Transform

BinningTransform::BinningTransform(std::vector<FeatureEncoding> features,
                                   double special_value_threshold, std::size_t input_dim)
    : features_(std::move(features)),
      special_value_threshold_(special_value_threshold),
      input_dim_(input_dim) {
  build_columns();
}

void BinningTransform::build_columns() {
  columns_.clear();
  auto add = [&](const FeatureEncoding& f, std::string name, Monotone dir) {
    columns_.push_back({f.name + name, f.name, dir});
  };
  for (auto& f : features_) {
    if (f.source_index >= input_dim_) throw DataError("binning: feature index out of range");
    f.first_column = columns_.size();
    switch (f.mode) {
      case EncodingMode::Raw:
        add(f, "", f.monotone);
        break;
      case EncodingMode::LeftHalfIntervals:
        for (double e : f.edges) add(f, "<=" + num(e), Monotone::Increasing);
        add(f, "<=+inf", Monotone::Increasing);
        break;
      case EncodingMode::RightHalfIntervals:
        for (double e : f.edges) add(f, ">=" + num(e), Monotone::Increasing);
        add(f, ">=" + num(f.lower_bound), Monotone::Increasing);
        break;
      case EncodingMode::TwoSided: {
        double lo = -std::numeric_limits<double>::infinity();
        for (double e : f.edges) {
          add(f, " in (" + num(lo) + "," + num(e) + "]", Monotone::Unconstrained);
          lo = e;
        }
        add(f, " in (" + num(lo) + ",+inf)", Monotone::Unconstrained);
        break;
      }
      case EncodingMode::Categorical:
        for (std::size_t k = 0; k < f.levels.size(); ++k) {
          const std::string label = k < f.level_names.size() ? f.level_names[k] : num(f.levels[k]);
          add(f, "=" + label, Monotone::Unconstrained);
        }
        break;
    }
    if (f.mode != EncodingMode::Categorical) {
      for (double s : f.special_values) add(f, "==" + num(s), Monotone::Unconstrained);
      if (f.other_special) add(f, ":other_special", Monotone::Unconstrained);
    }
    f.width = columns_.size() - f.first_column;
  }
}

bool BinningTransform::is_special(const FeatureEncoding& f, double value) const {
  if (f.mode == EncodingMode::Categorical) return false;
  if (value < special_value_threshold_) return true;
  return std::find(f.special_values.begin(), f.special_values.end(), value) != f.special_values.end();
}

std::vector<double> BinningTransform::encode(double value, const FeatureEncoding& f) const {
  std::vector<double> out;
  out.reserve(f.width);
  const bool special = is_special(f, value);
  const auto on = [](bool b) { return b ? 1.0 : 0.0; };
  switch (f.mode) {
    case EncodingMode::Raw:
      out.push_back(special ? 0.0 : value);
      break;
    case EncodingMode::LeftHalfIntervals:
      for (double e : f.edges) out.push_back(on(!special && value <= e));
      out.push_back(on(!special));
      break;
    case EncodingMode::RightHalfIntervals:
      for (double e : f.edges) out.push_back(on(!special && value >= e));
      out.push_back(on(!special));
      break;
    case EncodingMode::TwoSided: {
      // Bin index = number of edges strictly below the value.
      const auto bin = static_cast<std::size_t>(
          std::lower_bound(f.edges.begin(), f.edges.end(), value) - f.edges.begin());
      for (std::size_t k = 0; k <= f.edges.size(); ++k) out.push_back(on(!special && k == bin));
      break;
    }
    case EncodingMode::Categorical:
      for (double level : f.levels) out.push_back(on(value == level));
      return out;
  }
  bool listed = false;
  for (double s : f.special_values) {
    const bool hit = special && value == s;
    listed = listed || hit;
    out.push_back(on(hit));
  }
  if (f.other_special) out.push_back(on(special && !listed));
  return out;
}

void BinningTransform::encode_row(std::span<const double> raw, std::span<double> out) const {
  if (raw.size() != input_dim_) {
    throw std::invalid_argument("encode_row: row has " + std::to_string(raw.size()) +
                                " features, transform expects " + std::to_string(input_dim_));
  }
  if (out.size() != columns_.size()) throw std::invalid_argument("encode_row: output size mismatch");
  for (const auto& f : features_) {
    const auto block = encode(raw[f.source_index], f);
    std::copy(block.begin(), block.end(), out.begin() + static_cast<std::ptrdiff_t>(f.first_column));
  }
}

std::vector<double> BinningTransform::encode_row(std::span<const double> raw) const {
  std::vector<double> out(columns_.size());
  encode_row(raw, out);
  return out;
}

Matrix BinningTransform::transform(const Dataset& ds) const {
  Matrix out(static_cast<Eigen::Index>(ds.rows()), static_cast<Eigen::Index>(columns_.size()));
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    encode_row(ds.row(i), row_span(out, static_cast<Eigen::Index>(i)));
  }
  return out;
}

ordered_json BinningTransform::to_json() const {
  ordered_json doc;
  if (std::isfinite(special_value_threshold_)) {
    doc["special_value_threshold"] = special_value_threshold_;
  } else {
    doc["special_value_threshold"] = nullptr;
  }
  doc["input_dim"] = input_dim_;
  ordered_json feats = ordered_json::array();
  for (const auto& f : features_) {
    ordered_json node;
    node["name"] = f.name;
    node["source_index"] = f.source_index;
    node["mode"] = to_string(f.mode);
    node["monotone"] = static_cast<int>(f.monotone);
    node["edges"] = f.edges;
    node["special_values"] = f.special_values;
    node["other_special"] = f.other_special;
    if (f.mode == EncodingMode::Categorical) {
      node["levels"] = f.levels;
      node["level_names"] = f.level_names;
    }
    if (std::isfinite(f.lower_bound)) node["lower_bound"] = f.lower_bound;
    feats.push_back(std::move(node));
  }
  doc["features"] = std::move(feats);
  ordered_json cols = ordered_json::array();
  for (const auto& c : columns_) cols.push_back(c.name);
  doc["columns"] = std::move(cols);
  return doc;
}

BinningTransform BinningTransform::from_json(const ordered_json& doc) {
  try {
    const double threshold = doc.at("special_value_threshold").is_null()
                                 ? -std::numeric_limits<double>::infinity()
                                 : doc.at("special_value_threshold").get<double>();
    std::vector<FeatureEncoding> feats;
    for (const auto& node : doc.at("features")) {
      FeatureEncoding f;
      f.name = node.at("name").get<std::string>();
      f.source_index = node.at("source_index").get<std::size_t>();
      f.mode = mode_from_string(node.at("mode").get<std::string>());
      f.monotone = static_cast<Monotone>(node.value("monotone", 0));
      f.edges = node.at("edges").get<std::vector<double>>();
      f.special_values = node.value("special_values", std::vector<double>{});
      f.other_special = node.value("other_special", false);
      f.levels = node.value("levels", std::vector<double>{});
      f.level_names = node.value("level_names", std::vector<std::string>{});
      f.lower_bound = node.contains("lower_bound") ? node.at("lower_bound").get<double>()
                                                   : -std::numeric_limits<double>::infinity();
      feats.push_back(std::move(f));
    }
    return BinningTransform(std::move(feats), threshold, doc.at("input_dim").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("binning transform: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

FitResult fit_transform(const Dataset& ds, const DatasetConfig& config, Style style,
                        std::span<const std::string> feature_subset) {
  std::vector<std::string> wanted(feature_subset.begin(), feature_subset.end());
  if (wanted.empty()) wanted = ds.feature_names();

  std::vector<FeatureEncoding> feats;
  feats.reserve(wanted.size());
  for (const auto& name : wanted) {
    const FeatureSpec* spec = config.find(name);
    if (!spec) throw DataError("binning: no configuration for feature '" + name + "'");
    const auto idx = ds.column_index(name);
    if (!idx) throw DataError("binning: dataset has no feature '" + name + "'");

    FeatureEncoding f;
    f.name = name;
    f.source_index = *idx;
    f.monotone = spec->monotone;
    f.lower_bound = config.lower_bound(*spec);

    std::vector<double> values;
    std::vector<int> labels;
    bool saw_unlisted_special = false;
    for (std::size_t i = 0; i < ds.rows(); ++i) {
      const double v = ds.at(i, *idx);
      if (config.is_special(*spec, v)) {
        const bool listed = std::find(spec->special_values.begin(), spec->special_values.end(), v) !=
                            spec->special_values.end();
        saw_unlisted_special = saw_unlisted_special || !listed;
        continue;
      }
      values.push_back(v);
      labels.push_back(ds.labels()[i]);
    }

    if (spec->categorical) {
      f.mode = EncodingMode::Categorical;
      std::vector<double> levels = values;
      std::sort(levels.begin(), levels.end());
      levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
      // Code -1 marks a level unseen when the file was read.
      levels.erase(std::remove(levels.begin(), levels.end(), -1.0), levels.end());
      f.levels = levels;
      auto dict = ds.levels().find(name);
      if (dict != ds.levels().end()) {
        for (double code : f.levels) f.level_names.push_back(dict->second.at(static_cast<std::size_t>(code)));
      }
    } else {
      f.special_values = spec->special_values;
      f.other_special = saw_unlisted_special;
      if (style == Style::Raw) {
        f.mode = EncodingMode::Raw;
      } else {
        f.edges = fit_edges(values, labels, spec->max_leaves);
        switch (spec->monotone) {
          case Monotone::Decreasing: f.mode = EncodingMode::LeftHalfIntervals; break;
          case Monotone::Increasing:
            f.mode = EncodingMode::RightHalfIntervals;
            std::reverse(f.edges.begin(), f.edges.end());
            break;
          case Monotone::Unconstrained: f.mode = EncodingMode::TwoSided; break;
        }
      }
    }
    feats.push_back(std::move(f));
  }

  FitResult result{BinningTransform(std::move(feats), config.special_value_threshold, ds.cols()), {}};
  result.encoded = result.transform.transform(ds);
  return result;
}

}  // namespace lamkit::binning

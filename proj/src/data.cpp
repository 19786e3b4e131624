#include "lamkit/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "lamkit/errors.hpp"
#include "lamkit/random.hpp"

namespace lamkit {

using nlohmann::ordered_json;

std::string to_string(Monotone m) {
  switch (m) {
    case Monotone::Decreasing: return "decreasing";
    case Monotone::Increasing: return "increasing";
    case Monotone::Unconstrained: return "unconstrained";
  }
  return "unconstrained";
}

// ---------------------------------------------------------------------------
// Configuration

void SubscaleSpec::validate_partition(std::span<const std::string> feature_names) const {
  std::set<std::string> all(feature_names.begin(), feature_names.end());
  std::set<std::string> seen;
  std::set<std::string> group_names;
  for (const auto& [group, members] : groups) {
    if (!group_names.insert(group).second) {
      throw DataError("subscale partition violation: duplicate subscale '" + group + "'");
    }
    if (members.empty()) {
      throw DataError("subscale partition violation: subscale '" + group + "' is empty");
    }
    for (const auto& f : members) {
      if (!all.contains(f)) {
        throw DataError("subscale partition violation: subscale '" + group +
                        "' names unknown feature '" + f + "'");
      }
      if (!seen.insert(f).second) {
        throw DataError("subscale partition violation: feature '" + f +
                        "' appears in more than one subscale");
      }
    }
  }
  for (const auto& f : all) {
    if (!seen.contains(f)) {
      throw DataError("subscale partition violation: feature '" + f +
                      "' is not assigned to any subscale");
    }
  }
}

const FeatureSpec* DatasetConfig::find(const std::string& name) const {
  for (const auto& f : features) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

std::vector<std::string> DatasetConfig::feature_names() const {
  std::vector<std::string> names;
  names.reserve(features.size());
  for (const auto& f : features) names.push_back(f.name);
  return names;
}

bool DatasetConfig::is_special(const FeatureSpec& spec, double value) const {
  if (spec.categorical) return false;
  if (value < special_value_threshold) return true;
  return std::find(spec.special_values.begin(), spec.special_values.end(), value) !=
         spec.special_values.end();
}

double DatasetConfig::lower_bound(const FeatureSpec& spec) const {
  return spec.lower_bound.value_or(special_value_threshold);
}

namespace {

FeatureSpec parse_feature(const std::string& name, const ordered_json& node) {
  FeatureSpec spec;
  spec.name = name;
  if (!node.is_object()) throw DataError("config: feature '" + name + "' must be an object");
  const int monotone = node.value("monotone", 0);
  if (monotone < -1 || monotone > 1) {
    throw DataError("config: feature '" + name + "' has monotone outside {-1,0,1}");
  }
  spec.monotone = static_cast<Monotone>(monotone);
  if (node.contains("special_values")) {
    for (const auto& v : node.at("special_values")) spec.special_values.push_back(v.get<double>());
  }
  spec.max_leaves = node.value("max_leaves", 5);
  spec.categorical = node.value("categorical", false);
  if (node.contains("lower_bound")) spec.lower_bound = node.at("lower_bound").get<double>();

  if (spec.categorical && spec.monotone != Monotone::Unconstrained) {
    throw DataError("config: categorical feature '" + name + "' must be unconstrained");
  }
  if (!spec.categorical && spec.max_leaves < 2) {
    throw DataError("config: feature '" + name + "' needs max_leaves >= 2");
  }
  return spec;
}

}  // namespace

DatasetConfig parse_config(const ordered_json& doc) {
  try {
    DatasetConfig config;
    if (!doc.is_object()) throw DataError("config: top level must be an object");
    config.label_column = doc.value("label", std::string("target"));
    if (doc.contains("special_value_threshold") && !doc.at("special_value_threshold").is_null()) {
      config.special_value_threshold = doc.at("special_value_threshold").get<double>();
    }
    if (!doc.contains("features")) throw DataError("config: missing 'features'");
    const auto& features = doc.at("features");
    if (features.is_object()) {
      for (const auto& [name, node] : features.items()) {
        config.features.push_back(parse_feature(name, node));
      }
    } else if (features.is_array()) {
      for (const auto& node : features) {
        config.features.push_back(parse_feature(node.at("name").get<std::string>(), node));
      }
    } else {
      throw DataError("config: 'features' must be an object or an array");
    }
    if (config.features.empty()) throw DataError("config: no features");

    std::set<std::string> names;
    for (const auto& f : config.features) {
      if (!names.insert(f.name).second) throw DataError("config: duplicate feature '" + f.name + "'");
      if (f.name == config.label_column) {
        throw DataError("config: feature '" + f.name + "' collides with the label column");
      }
    }

    if (doc.contains("subscales")) {
      for (const auto& [group, members] : doc.at("subscales").items()) {
        std::vector<std::string> list;
        for (const auto& m : members) list.push_back(m.get<std::string>());
        config.subscales.groups.emplace_back(group, std::move(list));
      }
      const auto all = config.feature_names();
      config.subscales.validate_partition(all);
    }
    return config;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("config: ") + e.what());
  }
}

DatasetConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file '" + path.string() + "'");
  ordered_json doc;
  try {
    doc = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("config '" + path.string() + "': " + e.what());
  }
  return parse_config(doc);
}

ordered_json config_to_json(const DatasetConfig& config) {
  ordered_json doc;
  doc["label"] = config.label_column;
  if (std::isfinite(config.special_value_threshold)) {
    doc["special_value_threshold"] = config.special_value_threshold;
  }
  ordered_json features = ordered_json::object();
  for (const auto& f : config.features) {
    ordered_json node;
    node["monotone"] = static_cast<int>(f.monotone);
    node["special_values"] = f.special_values;
    node["max_leaves"] = f.max_leaves;
    node["categorical"] = f.categorical;
    if (f.lower_bound) node["lower_bound"] = *f.lower_bound;
    features[f.name] = std::move(node);
  }
  doc["features"] = std::move(features);
  if (!config.subscales.empty()) {
    ordered_json groups = ordered_json::object();
    for (const auto& [name, members] : config.subscales.groups) groups[name] = members;
    doc["subscales"] = std::move(groups);
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(Matrix features, std::vector<int> labels, std::vector<std::string> feature_names,
                 std::vector<bool> categorical_mask, LevelDictionary levels)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      names_(std::move(feature_names)),
      categorical_(std::move(categorical_mask)),
      levels_(std::move(levels)) {
  if (static_cast<std::size_t>(features_.rows()) != labels_.size()) {
    throw DataError("dataset: feature rows and label count differ");
  }
  if (static_cast<std::size_t>(features_.cols()) != names_.size() ||
      names_.size() != categorical_.size()) {
    throw DataError("dataset: feature names and mask must match the column count");
  }
  if (names_.empty()) throw DataError("dataset: at least one feature required");
  std::set<std::string> unique(names_.begin(), names_.end());
  if (unique.size() != names_.size()) throw DataError("dataset: feature names must be unique");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] != 0 && labels_[i] != 1) {
      throw DataError("label outside {0,1} at row " + std::to_string(i + 1));
    }
  }
  if (!features_.allFinite()) throw DataError("dataset: non-finite feature value");
}

std::optional<std::size_t> Dataset::column_index(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - names_.begin());
}

std::size_t Dataset::positives() const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), 1));
}

bool Dataset::has_both_classes() const {
  const auto pos = positives();
  return pos > 0 && pos < labels_.size();
}

Dataset Dataset::subset(std::span<const std::size_t> row_indices) const {
  Matrix sub(static_cast<Eigen::Index>(row_indices.size()), features_.cols());
  std::vector<int> labels;
  labels.reserve(row_indices.size());
  for (std::size_t r = 0; r < row_indices.size(); ++r) {
    sub.row(static_cast<Eigen::Index>(r)) = features_.row(static_cast<Eigen::Index>(row_indices[r]));
    labels.push_back(labels_[row_indices[r]]);
  }
  Dataset out;
  out.features_ = std::move(sub);
  out.labels_ = std::move(labels);
  out.names_ = names_;
  out.categorical_ = categorical_;
  out.levels_ = levels_;
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

// Minimal RFC 4180 record splitter: quoted fields, doubled quotes, CRLF.
bool read_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      fields.push_back(std::move(field));
      return true;
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

std::optional<double> parse_number(const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) return std::nullopt;
  double value = 0.0;
  const char* first = t.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::string quote_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

}  // namespace

bool read_csv_record(std::istream& in, std::vector<std::string>& fields) {
  return read_record(in, fields);
}

std::string csv_quote(const std::string& field) { return quote_field(field); }

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

Dataset read_csv(std::istream& in, const DatasetConfig& config, const CsvOptions& options) {
  std::vector<std::string> header;
  if (!read_record(in, header)) throw DataError("csv: empty input");
  for (auto& h : header) h = trim(h);
  if (!header.empty() && header.front().rfind("\xEF\xBB\xBF", 0) == 0) header.front().erase(0, 3);

  auto find_column = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t d = config.features.size();
  std::vector<std::size_t> source(d);
  for (std::size_t j = 0; j < d; ++j) {
    auto idx = find_column(config.features[j].name);
    if (!idx) throw DataError("missing column '" + config.features[j].name + "'");
    source[j] = *idx;
  }
  auto label_idx = find_column(config.label_column);
  if (!label_idx && !options.labels_optional) {
    throw DataError("missing column '" + config.label_column + "' (label)");
  }

  // Categorical columns may hold text; those are coded after all rows are read.
  std::vector<std::vector<double>> values(d);
  std::vector<std::vector<std::string>> raw_text(d);
  std::vector<bool> textual(d, false);
  std::vector<int> labels;
  std::vector<std::string> record;
  std::size_t line = 1;
  while (read_record(in, record)) {
    ++line;
    if (record.size() == 1 && trim(record[0]).empty()) continue;
    if (record.size() != header.size()) {
      throw DataError("csv: row " + std::to_string(line) + " has " + std::to_string(record.size()) +
                      " fields, header has " + std::to_string(header.size()));
    }
    for (std::size_t j = 0; j < d; ++j) {
      const FeatureSpec& spec = config.features[j];
      const std::string& cell = record[source[j]];
      if (trim(cell).empty()) {
        if (spec.special_values.empty()) {
          throw DataError("missing cell in column '" + spec.name + "' at row " +
                          std::to_string(line) + " and no special value configured");
        }
        values[j].push_back(spec.special_values.front());
        raw_text[j].emplace_back();
        continue;
      }
      auto number = parse_number(cell);
      if (!number) {
        if (!spec.categorical) {
          throw DataError("non-numeric cell '" + cell + "' in numeric column '" + spec.name +
                          "' at row " + std::to_string(line));
        }
        textual[j] = true;
      }
      values[j].push_back(number.value_or(0.0));
      raw_text[j].push_back(trim(cell));
    }
    if (label_idx) {
      auto y = parse_number(record[*label_idx]);
      if (!y || (*y != 0.0 && *y != 1.0)) {
        throw DataError("label outside {0,1}: '" + record[*label_idx] + "' at row " +
                        std::to_string(line));
      }
      labels.push_back(static_cast<int>(*y));
    } else {
      labels.push_back(0);
    }
  }
  if (labels.empty()) throw DataError("csv: no data rows");

  LevelDictionary levels;
  for (std::size_t j = 0; j < d; ++j) {
    const auto& name = config.features[j].name;
    const bool known = options.known_levels && options.known_levels->contains(name);
    if (!textual[j] && !known) continue;
    std::vector<std::string> dict;
    if (known) {
      dict = options.known_levels->at(name);
    } else {
      std::set<std::string> distinct(raw_text[j].begin(), raw_text[j].end());
      distinct.erase(std::string{});
      dict.assign(distinct.begin(), distinct.end());
    }
    for (std::size_t i = 0; i < values[j].size(); ++i) {
      auto it = std::find(dict.begin(), dict.end(), raw_text[j][i]);
      // Unseen levels code to -1, which encodes as an all-zero one-hot block.
      values[j][i] = it == dict.end() ? -1.0 : static_cast<double>(it - dict.begin());
    }
    levels.emplace(name, std::move(dict));
  }

  Matrix x(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(d));
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[j][i];
    }
  }
  std::vector<bool> mask(d);
  for (std::size_t j = 0; j < d; ++j) mask[j] = config.features[j].categorical;

  Dataset ds(std::move(x), std::move(labels), config.feature_names(), std::move(mask),
             std::move(levels));
  if (!config.subscales.empty()) config.subscales.validate_partition(ds.feature_names());
  if (!options.labels_optional && !ds.has_both_classes()) {
    throw DataError("dataset must contain both classes");
  }
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, const DatasetConfig& config,
                 const CsvOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open data file '" + path.string() + "'");
  return read_csv(in, config, options);
}

void write_csv(const Dataset& ds, std::ostream& out, const std::string& label_column) {
  for (const auto& name : ds.feature_names()) out << quote_field(name) << ',';
  out << quote_field(label_column) << '\n';
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (std::size_t j = 0; j < ds.cols(); ++j) {
      const auto& name = ds.feature_names()[j];
      auto lv = ds.levels().find(name);
      const double v = ds.at(i, j);
      if (lv != ds.levels().end() && v >= 0 && static_cast<std::size_t>(v) < lv->second.size()) {
        out << quote_field(lv->second[static_cast<std::size_t>(v)]);
      } else {
        out << format_double(v);
      }
      out << ',';
    }
    out << ds.labels()[i] << '\n';
  }
}

// ---------------------------------------------------------------------------
// Folds

std::vector<std::size_t> FoldPlan::test_rows(int fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] == fold) rows.push_back(i);
  }
  return rows;
}

std::vector<std::size_t> FoldPlan::train_rows(int fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] != fold) rows.push_back(i);
  }
  return rows;
}

FoldPlan stratified_kfold(std::span<const int> labels, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("stratified_kfold: k must be at least 2");
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    by_class[labels[i] == 1 ? 1 : 0].push_back(i);
  }
  for (int c = 0; c < 2; ++c) {
    if (by_class[c].size() < static_cast<std::size_t>(k)) {
      throw DataError("stratified_kfold: class " + std::to_string(c) + " has " +
                      std::to_string(by_class[c].size()) + " members, fewer than k = " +
                      std::to_string(k));
    }
  }

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.assignments.assign(labels.size(), -1);
  std::mt19937_64 rng(seed);
  std::size_t deal = 0;
  // Positives first, then negatives, sharing one deal counter.
  for (int c : {1, 0}) {
    seeded_shuffle(by_class[c], rng);
    for (std::size_t idx : by_class[c]) {
      plan.assignments[idx] = static_cast<int>(deal % static_cast<std::size_t>(k));
      ++deal;
    }
  }
  return plan;
}

FoldPlan stratified_kfold(const Dataset& ds, int k, std::uint64_t seed) {
  return stratified_kfold(std::span<const int>(ds.labels()), k, seed);
}

std::vector<std::pair<std::size_t, std::size_t>> contiguous_splits(std::size_t rows,
                                                                   std::size_t rows_per_part) {
  if (rows_per_part == 0) throw std::invalid_argument("contiguous_splits: rows_per_part must be positive");
  std::vector<std::pair<std::size_t, std::size_t>> parts;
  for (std::size_t begin = 0; begin < rows; begin += rows_per_part) {
    parts.emplace_back(begin, std::min(rows, begin + rows_per_part));
  }
  return parts;
}

}  // namespace lamkit

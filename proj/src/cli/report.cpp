#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "lamkit/cli.hpp"
#include "lamkit/errors.hpp"
#include "lamkit/glm.hpp"
#include "lamkit/lam.hpp"

namespace lamkit::cli {

using nlohmann::ordered_json;

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// NaN is not representable in JSON.
ordered_json number_or_null(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

}  // namespace

ordered_json report_to_json(const RunReport& report, bool timestamps) {
  ordered_json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["classifier"] = std::string(classifier_id(report.kind));
  doc["dataset"] = report.dataset;
  doc["k"] = report.k;
  doc["seed"] = report.seed;
  doc["config_digest"] = report.config_digest;
  doc["data_digest"] = report.data_digest;
  if (timestamps) doc["timestamp"] = utc_timestamp();
  doc["status"] = report.ok() ? "ok" : "failed";
  if (report.error) doc["error"] = *report.error;
  ordered_json folds = ordered_json::array();
  for (const auto& f : report.folds) {
    ordered_json diag = ordered_json::array();
    for (const auto& d : f.diagnostics) {
      diag.push_back({{"iterations", d.iterations},
                      {"projected_gradient_norm", d.projected_gradient_norm},
                      {"objective", d.objective},
                      {"converged", d.converged}});
    }
    folds.push_back({{"fold", f.fold},
                     {"train_rows", f.train_rows},
                     {"test_rows", f.test_rows},
                     {"auc", f.auc},
                     {"ece", f.ece},
                     {"mce", f.mce},
                     {"certainty", f.certainty},
                     {"solver", std::move(diag)}});
  }
  doc["folds"] = std::move(folds);
  if (report.ok()) {
    doc["means"] = {{"auc", report.mean_auc()},
                    {"ece", report.mean_ece()},
                    {"mce", report.mean_mce()},
                    {"certainty", report.mean_certainty()}};
  } else {
    doc["means"] = nullptr;
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Score matrices

void write_score_matrix(const stats::ScoreMatrix& sm, std::ostream& out) {
  out << "classifier";
  for (const auto& d : sm.datasets) out << ',' << csv_quote(d);
  out << '\n';
  for (std::size_t i = 0; i < sm.classifiers.size(); ++i) {
    out << csv_quote(sm.classifiers[i]);
    for (std::size_t j = 0; j < sm.datasets.size(); ++j) {
      const double v = sm.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      out << ',';
      if (std::isfinite(v)) out << format_double(v);
    }
    out << '\n';
  }
}

stats::ScoreMatrix read_score_matrix(std::istream& in) {
  std::vector<std::string> rec;
  if (!read_csv_record(in, rec) || rec.size() < 2) {
    throw DataError("score matrix: header needs a classifier column and at least one dataset");
  }
  stats::ScoreMatrix sm;
  sm.datasets.assign(rec.begin() + 1, rec.end());
  std::vector<std::vector<double>> rows;
  std::size_t line = 1;
  while (read_csv_record(in, rec)) {
    ++line;
    if (rec.size() == 1 && rec[0].empty()) continue;
    if (rec.size() != sm.datasets.size() + 1) {
      throw DataError("score matrix: line " + std::to_string(line) + " has wrong field count");
    }
    sm.classifiers.push_back(rec[0]);
    std::vector<double> row;
    for (std::size_t j = 1; j < rec.size(); ++j) {
      if (rec[j].empty() || rec[j] == "NA") {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(rec[j], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != rec[j].size() || used == 0) {
        throw DataError("score matrix: non-numeric cell '" + rec[j] + "' at line " + std::to_string(line));
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  sm.scores.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(sm.datasets.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      sm.scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return sm;
}

stats::ScoreMatrix load_score_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open score matrix '" + path.string() + "'");
  auto sm = read_score_matrix(in);
  if (auto o = orientation_from_name(path.stem().string())) sm.orientation = *o;
  return sm;
}

std::optional<stats::Orientation> orientation_from_name(std::string_view stem) {
  std::string lower(stem);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  auto has = [&](std::string_view key) { return lower.find(key) != std::string::npos; };
  if (has("auc")) return stats::Orientation::HigherIsBetter;
  if (has("ece") || has("mce")) return stats::Orientation::LowerIsBetter;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Comparison output

ordered_json comparison_to_json(const stats::ScoreMatrix& sm, const stats::ComparisonResult& r) {
  ordered_json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["orientation"] =
      sm.orientation == stats::Orientation::HigherIsBetter ? "higher_is_better" : "lower_is_better";
  doc["alpha"] = r.alpha;
  doc["classifiers"] = sm.classifiers;
  doc["datasets"] = sm.datasets;
  doc["mean_ranks"] = r.mean_ranks;
  doc["friedman_chi2"] = r.chi2;
  doc["iman_davenport"] = {{"statistic", number_or_null(r.omnibus.statistic)},
                           {"df1", r.omnibus.df1},
                           {"df2", r.omnibus.df2},
                           {"p_value", r.omnibus.p_value},
                           {"degenerate", r.omnibus_degenerate},
                           {"rejected", r.omnibus_rejected}};
  ordered_json pairs = ordered_json::array();
  for (const auto& pc : r.pairs) {
    ordered_json p = {{"first", sm.classifiers[pc.first]},
                      {"second", sm.classifiers[pc.second]},
                      {"r_plus", pc.test.r_plus},
                      {"r_minus", pc.test.r_minus},
                      {"t", pc.test.t},
                      {"p_value", pc.test.p_value},
                      {"n_used", pc.test.n_used},
                      {"all_zero", pc.all_zero},
                      {"pseudomedian", pc.pseudomedian},
                      {"rejected", pc.rejected}};
    if (pc.test.dropped_zero_index) {
      p["dropped_zero_dataset"] = sm.datasets[*pc.test.dropped_zero_index];
    }
    pairs.push_back(std::move(p));
  }
  doc["pairs"] = std::move(pairs);
  ordered_json edges = ordered_json::array();
  for (const auto& [a, b] : r.graph.edges) edges.push_back({sm.classifiers[a], sm.classifiers[b]});
  doc["cd_edges"] = std::move(edges);
  return doc;
}

void write_cd_edges(const stats::ScoreMatrix& sm, const stats::ComparisonResult& r, std::ostream& out) {
  out << "first,second,first_mean_rank,second_mean_rank\n";
  for (const auto& [a, b] : r.graph.edges) {
    out << csv_quote(sm.classifiers[a]) << ',' << csv_quote(sm.classifiers[b]) << ','
        << format_double(r.mean_ranks[a]) << ',' << format_double(r.mean_ranks[b]) << '\n';
  }
}

void write_pseudomedian_table(const stats::ScoreMatrix& sm, const stats::ComparisonResult& r,
                              std::ostream& out) {
  const std::size_t k = sm.classifiers.size();
  std::vector<std::vector<std::string>> cell(k, std::vector<std::string>(k, ""));
  for (const auto& pc : r.pairs) {
    const std::string flag = pc.rejected ? "*" : "";
    // HL(-d) = -HL(d), so the mirrored cell is the negation. Adding 0.0
    // turns a negative zero into a plain zero.
    cell[pc.first][pc.second] = format_double(pc.pseudomedian + 0.0) + flag;
    cell[pc.second][pc.first] = format_double(-pc.pseudomedian + 0.0) + flag;
  }
  out << "classifier";
  for (const auto& c : sm.classifiers) out << ',' << csv_quote(c);
  out << '\n';
  for (std::size_t i = 0; i < k; ++i) {
    out << csv_quote(sm.classifiers[i]);
    for (std::size_t j = 0; j < k; ++j) out << ',' << cell[i][j];
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Explanations

namespace {

struct FeatureTerm {
  std::string feature;
  double value = 0.0;
};

// Sums per-column terms by source feature, in first-appearance order.
std::vector<FeatureTerm> by_feature(std::span<const ColumnInfo> columns, std::span<const double> terms) {
  std::vector<FeatureTerm> out;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const FeatureTerm& t) { return t.feature == columns[i].source_feature; });
    if (it == out.end()) out.push_back({columns[i].source_feature, terms[i]});
    else it->value += terms[i];
  }
  return out;
}

ordered_json terms_json(const std::vector<FeatureTerm>& terms) {
  ordered_json arr = ordered_json::array();
  for (const auto& t : terms) arr.push_back({{"feature", t.feature}, {"contribution", t.value}});
  return arr;
}

// Largest strictly positive terms first; ties keep input order.
ordered_json reason_codes(std::vector<FeatureTerm> terms, std::size_t top_k, const char* key) {
  std::stable_sort(terms.begin(), terms.end(),
                   [](const FeatureTerm& a, const FeatureTerm& b) { return a.value > b.value; });
  ordered_json arr = ordered_json::array();
  for (const auto& t : terms) {
    if (arr.size() >= top_k || !(t.value > 0.0)) break;
    arr.push_back({{key, t.feature}, {"contribution", t.value}});
  }
  return arr;
}

// Explanation of an additive pipeline in its own units: probability for a
// linearised link, logit for a logistic one.
ordered_json explain_pipeline(const ensemble::AdditivePipeline& p, std::span<const double> raw,
                              std::size_t top_k, double scale = 1.0) {
  const auto x = p.transform.encode_row(raw);
  ordered_json doc;
  std::vector<double> terms(x.size());
  if (p.model.link == Link::Linearised) {
    const auto a = lam::attribute_lam(p.model, x);
    for (std::size_t i = 0; i < terms.size(); ++i) terms[i] = scale * a.contributions[i];
    doc["link"] = "linearised";
    doc["units"] = "probability";
    doc["base"] = scale * a.base;
    doc["score"] = scale * a.score;
    doc["prediction"] = a.prediction;
    doc["faithful"] = a.faithful;
  } else {
    for (std::size_t i = 0; i < terms.size(); ++i) terms[i] = scale * p.model.coefficients[i] * x[i];
    const double logit = glm::predict_logit(p.model, x);
    doc["link"] = "logistic";
    doc["units"] = "logit";
    doc["base"] = scale * p.model.bias;
    doc["score"] = scale * logit;
    doc["prediction"] = lam::sigmoid(logit);
  }
  if (scale != 1.0) doc["scale"] = scale;
  const auto features = by_feature(p.model.columns, terms);
  doc["contributions"] = terms_json(features);
  doc["reason_codes"] = reason_codes(features, top_k, "feature");
  return doc;
}

}  // namespace

ordered_json explain_row(const TrainedModel& model, std::span<const double> raw,
                         const ExplainOptions& options, std::span<const double> external) {
  ordered_json doc;
  doc["classifier"] = std::string(classifier_id(model.kind));
  if (!model.needs_external_scores() && raw.size() != model.config.features.size()) {
    throw DataError("row has " + std::to_string(raw.size()) + " features, model expects " +
                    std::to_string(model.config.features.size()));
  }

  if (const auto* p = std::get_if<ensemble::AdditivePipeline>(&model.body)) {
    auto e = explain_pipeline(*p, raw, options.top_k);
    for (auto& [k, v] : e.items()) doc[k] = v;
    return doc;
  }

  if (const auto* t = std::get_if<ensemble::TwoLayerModel>(&model.body)) {
    const auto r = t->subscale_scores(raw);
    std::vector<double> terms(r.size());
    std::vector<FeatureTerm> subs;
    if (t->outer.link == Link::Linearised) {
      const auto a = lam::attribute_lam(t->outer, r);
      terms = a.contributions;
      doc["link"] = "linearised";
      doc["units"] = "probability";
      doc["base"] = a.base;
      doc["score"] = a.score;
      doc["prediction"] = a.prediction;
      doc["faithful"] = a.faithful;
    } else {
      for (std::size_t s = 0; s < r.size(); ++s) terms[s] = t->outer.coefficients[s] * r[s];
      const double logit = glm::predict_logit(t->outer, r);
      doc["link"] = "logistic";
      doc["units"] = "logit";
      doc["base"] = t->outer.bias;
      doc["score"] = logit;
      doc["prediction"] = lam::sigmoid(logit);
    }
    ordered_json arr = ordered_json::array();
    for (std::size_t s = 0; s < r.size(); ++s) {
      subs.push_back({t->subscale_names[s], terms[s]});
      arr.push_back({{"subscale", t->subscale_names[s]},
                     {"subscale_score", r[s]},
                     {"contribution", terms[s]},
                     {"breakdown", explain_pipeline(t->submodels[s], raw, options.top_k)}});
    }
    doc["contributions"] = std::move(arr);
    doc["reason_codes"] = reason_codes(subs, options.top_k, "subscale");
    return doc;
  }

  const auto& m = std::get<ensemble::MixtureModel>(model.body);
  std::vector<double> r;
  if (model.needs_external_scores()) {
    if (external.size() != m.names.size()) {
      throw DataError("external mixture needs " + std::to_string(m.names.size()) +
                      " subscale scores per row");
    }
    r.assign(external.begin(), external.end());
  } else {
    r = m.subscale_scores(raw);
  }
  const auto contributions = ensemble::attribute_subscales(m, r);
  doc["link"] = "mixture";
  doc["units"] = "probability";
  doc["prediction"] = ensemble::predict_mixture(m, r);
  ordered_json arr = ordered_json::array();
  std::vector<FeatureTerm> subs;
  for (const auto& c : contributions) {
    ordered_json entry = {{"subscale", c.name},
                          {"weight", c.weight},
                          {"subscale_score", c.score},
                          {"contribution", c.contribution}};
    const auto idx = static_cast<std::size_t>(
        std::find(m.names.begin(), m.names.end(), c.name) - m.names.begin());
    const auto* p = dynamic_cast<const ensemble::AdditivePipeline*>(m.submodels[idx].get());
    if (p) {
      // Linearised submodels break down exactly in probability units, scaled
      // by the subscale weight.
      const double scale = p->model.link == Link::Linearised ? c.weight : 1.0;
      entry["breakdown"] = explain_pipeline(*p, raw, options.top_k, scale);
    }
    arr.push_back(std::move(entry));
    subs.push_back({c.name, c.contribution});
  }
  doc["contributions"] = std::move(arr);
  doc["reason_codes"] = reason_codes(subs, options.top_k, "subscale");
  return doc;
}

ordered_json approximation_report(double tolerance) {
  const auto rep = lam::find_alpha_star(tolerance);
  ordered_json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["alpha_star"] = rep.alpha_star;
  doc["newton_iterations"] = rep.newton_iterations;
  doc["squared_error_at_alpha_star"] = rep.se_at_min;
  doc["derivative_at_alpha_star"] = rep.derivative_at_min;
  doc["pinned_alpha"] = rep.pinned_alpha;
  doc["derivative_at_pinned"] = rep.derivative_at_pinned;
  doc["pinned_alpha_verified"] = lam::verify_pinned_alpha();
  doc["max_abs_error"] = rep.max_abs_error;
  doc["faithful_probability_interval"] = {lam::sigmoid(-lam::kAlphaStar), lam::sigmoid(lam::kAlphaStar)};
  ordered_json table = ordered_json::array();
  for (double a : {0.5, 1.0, 2.0, lam::kAlphaStar, 5.0, 10.0}) {
    table.push_back({{"alpha", a}, {"squared_error", lam::squared_error(a)}});
  }
  doc["squared_error_table"] = std::move(table);
  return doc;
}

}  // namespace lamkit::cli

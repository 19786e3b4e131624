#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <sstream>

#include "lamkit/cli.hpp"
#include "lamkit/errors.hpp"
#include "lamkit/lam.hpp"
#include "lamkit/metrics.hpp"
#include "lamkit/random.hpp"

namespace lamkit::cli {

using nlohmann::ordered_json;

namespace {

struct KindName {
  ModelKind kind;
  std::string_view token;
  std::string_view id;
};

constexpr std::array<KindName, 9> kKinds = {{
    {ModelKind::Nnlr, "nnlr", "NNLR"},
    {ModelKind::LinNnlr, "lin-nnlr", "LinNNLR"},
    {ModelKind::Arm1, "arm1", "ARM1"},
    {ModelKind::LinArm1, "lin-arm1", "LinARM1"},
    {ModelKind::Arm2, "arm2", "ARM2"},
    {ModelKind::LinArm2, "lin-arm2", "LinARM2"},
    {ModelKind::MixArm1, "mix-arm1", "MixARM1"},
    {ModelKind::MixLinArm1, "mix-lin-arm1", "MixLinARM1"},
    {ModelKind::MixExternal, "mix-external", "MixExternal"},
}};

const KindName& lookup(ModelKind kind) {
  for (const auto& k : kKinds) {
    if (k.kind == kind) return k;
  }
  throw std::logic_error("unknown model kind");
}

}  // namespace

ModelKind parse_model_kind(std::string_view token) {
  for (const auto& k : kKinds) {
    if (token == k.token || token == k.id) return k.kind;
  }
  std::string valid;
  for (const auto& k : kKinds) valid += (valid.empty() ? "" : ", ") + std::string(k.token);
  throw UsageError("unknown model kind '" + std::string(token) + "' (expected one of " + valid + ")");
}

std::string_view model_token(ModelKind kind) { return lookup(kind).token; }
std::string_view classifier_id(ModelKind kind) { return lookup(kind).id; }

std::vector<ModelKind> all_model_kinds() {
  std::vector<ModelKind> out;
  for (const auto& k : kKinds) out.push_back(k.kind);
  return out;
}

bool is_linearised(ModelKind kind) {
  return kind == ModelKind::LinNnlr || kind == ModelKind::LinArm1 || kind == ModelKind::LinArm2 ||
         kind == ModelKind::MixLinArm1;
}

// ---------------------------------------------------------------------------
// External scores

ExternalRows ExternalScores::select(std::span<const std::size_t> rows) const {
  ExternalRows out;
  out.subscales = subscales;
  out.scores.assign(subscales.size(), std::vector<double>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const std::size_t r = rows[j];
    if (r >= this->rows()) {
      throw DataError("external scores: no entry for row " + std::to_string(r));
    }
    for (std::size_t s = 0; s < subscales.size(); ++s) {
      const double v = scores[s][r];
      if (std::isnan(v)) {
        throw DataError("external scores: row " + std::to_string(r) + " lacks subscale '" +
                        subscales[s] + "'");
      }
      out.scores[s][j] = v;
    }
  }
  return out;
}

ExternalRows ExternalScores::all() const {
  std::vector<std::size_t> rows_all(rows());
  for (std::size_t i = 0; i < rows_all.size(); ++i) rows_all[i] = i;
  return select(rows_all);
}

void ExternalScores::check_folds(const FoldPlan& plan) const {
  if (rows() != plan.assignments.size()) {
    throw DataError("external scores cover " + std::to_string(rows()) + " rows, dataset has " +
                    std::to_string(plan.assignments.size()));
  }
  for (std::size_t i = 0; i < rows(); ++i) {
    if (fold_of_row[i] != plan.assignments[i]) {
      throw DataError("external scores: row " + std::to_string(i) + " is in fold " +
                      std::to_string(fold_of_row[i]) + ", fold plan says " +
                      std::to_string(plan.assignments[i]));
    }
  }
}

ExternalScores read_external_scores(std::istream& in) {
  std::vector<std::string> rec;
  if (!read_csv_record(in, rec)) throw DataError("external scores: empty input");
  const std::array<std::string, 4> expected = {"row_id", "fold_id", "subscale", "score"};
  std::array<std::size_t, 4> col{};
  for (std::size_t c = 0; c < expected.size(); ++c) {
    auto it = std::find(rec.begin(), rec.end(), expected[c]);
    if (it == rec.end()) throw DataError("external scores: missing column '" + expected[c] + "'");
    col[c] = static_cast<std::size_t>(it - rec.begin());
  }
  const std::size_t width = rec.size();

  ExternalScores out;
  std::map<std::string, std::size_t> subscale_index;
  auto parse = [](const std::string& cell, const char* what, std::size_t line) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != cell.size() || !std::isfinite(v)) {
      throw DataError(std::string("external scores: bad ") + what + " '" + cell + "' at line " +
                      std::to_string(line));
    }
    return v;
  };
  std::size_t line = 1;
  while (read_csv_record(in, rec)) {
    ++line;
    if (rec.size() == 1 && rec[0].empty()) continue;
    if (rec.size() != width) {
      throw DataError("external scores: line " + std::to_string(line) + " has wrong field count");
    }
    const double row_d = parse(rec[col[0]], "row_id", line);
    const double fold_d = parse(rec[col[1]], "fold_id", line);
    const double score = parse(rec[col[3]], "score", line);
    if (row_d < 0 || row_d != std::floor(row_d) || fold_d < 0 || fold_d != std::floor(fold_d)) {
      throw DataError("external scores: ids must be non-negative integers at line " +
                      std::to_string(line));
    }
    if (score < 0.0 || score > 1.0) {
      throw DataError("external scores: score outside [0, 1] at line " + std::to_string(line));
    }
    const auto row = static_cast<std::size_t>(row_d);
    const int fold = static_cast<int>(fold_d);
    auto [it, inserted] = subscale_index.emplace(rec[col[2]], out.subscales.size());
    if (inserted) {
      out.subscales.push_back(rec[col[2]]);
      out.scores.emplace_back(out.rows(), std::numeric_limits<double>::quiet_NaN());
    }
    if (row >= out.rows()) {
      out.fold_of_row.resize(row + 1, -1);
      for (auto& s : out.scores) s.resize(row + 1, std::numeric_limits<double>::quiet_NaN());
    }
    if (out.fold_of_row[row] != -1 && out.fold_of_row[row] != fold) {
      throw DataError("external scores: row " + std::to_string(row) + " listed in two folds");
    }
    out.fold_of_row[row] = fold;
    double& cell = out.scores[it->second][row];
    if (!std::isnan(cell)) {
      throw DataError("external scores: duplicate entry for row " + std::to_string(row) +
                      ", subscale '" + rec[col[2]] + "'");
    }
    cell = score;
  }
  if (out.subscales.empty()) throw DataError("external scores: no data rows");
  return out;
}

ExternalScores load_external_scores(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open external scores '" + path.string() + "'");
  return read_external_scores(in);
}

// ---------------------------------------------------------------------------
// Training and scoring

double TrainedModel::score(std::span<const double> raw_row, std::span<const double> external) const {
  if (const auto* p = std::get_if<ensemble::AdditivePipeline>(&body)) return p->score(raw_row);
  if (const auto* t = std::get_if<ensemble::TwoLayerModel>(&body)) return t->score(raw_row);
  const auto& m = std::get<ensemble::MixtureModel>(body);
  if (kind == ModelKind::MixExternal) {
    if (external.size() != m.names.size()) {
      throw DataError("external mixture needs " + std::to_string(m.names.size()) +
                      " subscale scores per row, got " + std::to_string(external.size()));
    }
    return ensemble::predict_mixture(m, external);
  }
  return m.score(raw_row);
}

TrainedModel train_model(ModelKind kind, const Dataset& ds, const DatasetConfig& config,
                         const TrainOptions& options, const ExternalRows* external) {
  TrainedModel out;
  out.kind = kind;
  out.config = config;
  out.levels = ds.levels();
  switch (kind) {
    case ModelKind::Nnlr:
    case ModelKind::LinNnlr: {
      auto fit = ensemble::train_nnlr(ds, config, options.c, options.solver);
      out.diagnostics.push_back(fit.diagnostics);
      out.body = kind == ModelKind::LinNnlr ? ensemble::linearise(fit.pipeline) : std::move(fit.pipeline);
      break;
    }
    case ModelKind::Arm1:
    case ModelKind::LinArm1: {
      auto fit = ensemble::train_arm1(ds, config, options.c, options.solver);
      out.diagnostics.push_back(fit.diagnostics);
      out.body = kind == ModelKind::LinArm1 ? ensemble::linearise(fit.pipeline) : std::move(fit.pipeline);
      break;
    }
    case ModelKind::Arm2:
    case ModelKind::LinArm2: {
      auto fit = ensemble::train_arm2(ds, config, options.c, options.solver);
      out.diagnostics = fit.diagnostics;
      out.body = kind == ModelKind::LinArm2 ? ensemble::linearise(fit.model) : std::move(fit.model);
      break;
    }
    case ModelKind::MixArm1:
    case ModelKind::MixLinArm1: {
      ensemble::MixtureOptions mo;
      mo.linearised = kind == ModelKind::MixLinArm1;
      mo.c = options.c;
      mo.seed = options.seed;
      mo.hedge_holdout = options.hedge_holdout;
      mo.solver = options.solver;
      auto fit = ensemble::train_mixture(ds, config, mo);
      out.diagnostics = fit.diagnostics;
      out.body = std::move(fit.model);
      break;
    }
    case ModelKind::MixExternal: {
      if (external == nullptr) throw UsageError("mix-external needs external subscale scores");
      if (external->scores.empty() || external->scores.front().size() != ds.rows()) {
        throw DataError("external scores do not cover the training rows");
      }
      ensemble::MixtureModel m;
      m.names = external->subscales;
      m.seed = options.seed;
      m.submodels.assign(m.names.size(), nullptr);
      m.weights = m.names.size() == 1
                      ? std::vector<double>{1.0}
                      : ensemble::subscale_hedge(external->scores, ds.labels(), options.seed);
      out.body = std::move(m);
      break;
    }
  }
  return out;
}

std::vector<double> predict_rows(const TrainedModel& model, const Dataset& ds,
                                 const ExternalRows* external) {
  std::vector<double> out(ds.rows());
  if (model.needs_external_scores()) {
    if (external == nullptr) throw UsageError("mix-external needs external subscale scores");
    const auto& m = std::get<ensemble::MixtureModel>(model.body);
    if (external->subscales != m.names) {
      throw DataError("external scores subscales do not match the model's");
    }
    std::vector<double> row(m.names.size());
    for (std::size_t i = 0; i < ds.rows(); ++i) {
      for (std::size_t s = 0; s < row.size(); ++s) row[s] = external->scores[s].at(i);
      out[i] = ensemble::predict_mixture(m, row);
    }
    return out;
  }
  if (ds.cols() != model.config.features.size()) {
    throw DataError("dataset has " + std::to_string(ds.cols()) + " features, model expects " +
                    std::to_string(model.config.features.size()));
  }
  for (std::size_t i = 0; i < ds.rows(); ++i) out[i] = model.score(ds.row(i));
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

ordered_json pipeline_to_json(const ensemble::AdditivePipeline& p) {
  return {{"transform", p.transform.to_json()}, {"model", to_json(p.model)}};
}

ensemble::AdditivePipeline pipeline_from_json(const ordered_json& doc) {
  ensemble::AdditivePipeline p;
  p.transform = binning::BinningTransform::from_json(doc.at("transform"));
  p.model = additive_model_from_json(doc.at("model"));
  if (p.model.dim() != p.transform.output_dim()) {
    throw DataError("model: coefficient count does not match the encoding width");
  }
  return p;
}

ordered_json diagnostics_to_json(const glm::FitDiagnostics& d) {
  return {{"iterations", d.iterations},
          {"projected_gradient_norm", d.projected_gradient_norm},
          {"objective", d.objective},
          {"converged", d.converged}};
}

}  // namespace

ordered_json model_to_json(const TrainedModel& model) {
  ordered_json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["kind"] = std::string(model_token(model.kind));
  doc["classifier"] = std::string(classifier_id(model.kind));
  doc["config"] = config_to_json(model.config);
  doc["levels"] = model.levels;
  ordered_json body;
  if (const auto* p = std::get_if<ensemble::AdditivePipeline>(&model.body)) {
    body = pipeline_to_json(*p);
  } else if (const auto* t = std::get_if<ensemble::TwoLayerModel>(&model.body)) {
    body["subscales"] = ordered_json::array();
    for (std::size_t s = 0; s < t->submodels.size(); ++s) {
      body["subscales"].push_back(
          {{"name", t->subscale_names[s]}, {"pipeline", pipeline_to_json(t->submodels[s])}});
    }
    body["outer"] = to_json(t->outer);
  } else {
    const auto& m = std::get<ensemble::MixtureModel>(model.body);
    body["seed"] = m.seed;
    body["subscales"] = ordered_json::array();
    for (std::size_t s = 0; s < m.names.size(); ++s) {
      ordered_json entry = {{"name", m.names[s]}, {"weight", m.weights[s]}};
      const auto* p = dynamic_cast<const ensemble::AdditivePipeline*>(m.submodels[s].get());
      entry["pipeline"] = p ? pipeline_to_json(*p) : ordered_json(nullptr);
      body["subscales"].push_back(std::move(entry));
    }
  }
  doc["model"] = std::move(body);
  doc["diagnostics"] = ordered_json::array();
  for (const auto& d : model.diagnostics) doc["diagnostics"].push_back(diagnostics_to_json(d));
  return doc;
}

TrainedModel model_from_json(const ordered_json& doc) {
  try {
    if (doc.at("schema_version").get<int>() != kSchemaVersion) {
      throw DataError("model: unsupported schema_version");
    }
    TrainedModel out;
    out.kind = parse_model_kind(doc.at("kind").get<std::string>());
    out.config = parse_config(doc.at("config"));
    out.levels = doc.at("levels").get<LevelDictionary>();
    const auto& body = doc.at("model");
    switch (out.kind) {
      case ModelKind::Nnlr:
      case ModelKind::LinNnlr:
      case ModelKind::Arm1:
      case ModelKind::LinArm1:
        out.body = pipeline_from_json(body);
        break;
      case ModelKind::Arm2:
      case ModelKind::LinArm2: {
        ensemble::TwoLayerModel t;
        for (const auto& entry : body.at("subscales")) {
          t.subscale_names.push_back(entry.at("name").get<std::string>());
          t.submodels.push_back(pipeline_from_json(entry.at("pipeline")));
        }
        t.outer = additive_model_from_json(body.at("outer"));
        if (t.outer.dim() != t.submodels.size()) {
          throw DataError("model: outer layer width does not match the subscale count");
        }
        out.body = std::move(t);
        break;
      }
      case ModelKind::MixArm1:
      case ModelKind::MixLinArm1:
      case ModelKind::MixExternal: {
        ensemble::MixtureModel m;
        m.seed = body.at("seed").get<std::uint64_t>();
        for (const auto& entry : body.at("subscales")) {
          m.names.push_back(entry.at("name").get<std::string>());
          m.weights.push_back(entry.at("weight").get<double>());
          const auto& p = entry.at("pipeline");
          if (p.is_null()) {
            if (out.kind != ModelKind::MixExternal) throw DataError("model: subscale without a pipeline");
            m.submodels.push_back(nullptr);
          } else {
            m.submodels.push_back(std::make_shared<ensemble::AdditivePipeline>(pipeline_from_json(p)));
          }
        }
        if (m.names.empty()) throw DataError("model: mixture without subscales");
        out.body = std::move(m);
        break;
      }
    }
    if (doc.contains("diagnostics")) {
      for (const auto& d : doc.at("diagnostics")) {
        glm::FitDiagnostics fd;
        fd.iterations = d.at("iterations").get<int>();
        fd.projected_gradient_norm = d.at("projected_gradient_norm").get<double>();
        fd.objective = d.at("objective").get<double>();
        fd.converged = d.at("converged").get<bool>();
        out.diagnostics.push_back(fd);
      }
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model: malformed document: ") + e.what());
  }
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file '" + path.string() + "'");
  out << model_to_json(model).dump(2) << '\n';
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file '" + path.string() + "'");
  ordered_json doc;
  try {
    doc = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("model file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return model_from_json(doc);
}

// ---------------------------------------------------------------------------
// Cross-validation

namespace {

double mean_of(const std::vector<FoldMetrics>& folds, double FoldMetrics::*field) {
  if (folds.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (const auto& f : folds) sum += f.*field;
  return sum / static_cast<double>(folds.size());
}

}  // namespace

double RunReport::mean_auc() const { return mean_of(folds, &FoldMetrics::auc); }
double RunReport::mean_ece() const { return mean_of(folds, &FoldMetrics::ece); }
double RunReport::mean_mce() const { return mean_of(folds, &FoldMetrics::mce); }
double RunReport::mean_certainty() const { return mean_of(folds, &FoldMetrics::certainty); }

FoldMetrics evaluate_fold(ModelKind kind, const Dataset& ds, const DatasetConfig& config,
                          const FoldPlan& plan, int fold, const EvalOptions& options,
                          const ExternalScores* external) {
  const auto train_idx = plan.train_rows(fold);
  const auto test_idx = plan.test_rows(fold);
  const Dataset train = ds.subset(train_idx);
  const Dataset test = ds.subset(test_idx);

  TrainOptions topts = options.train;
  topts.seed = derive_seed(options.seed, static_cast<std::uint64_t>(fold));

  std::optional<ExternalRows> ext_train, ext_test;
  if (kind == ModelKind::MixExternal) {
    if (external == nullptr) throw DataError("mix-external needs an external_scores file for this dataset");
    ext_train = external->select(train_idx);
    ext_test = external->select(test_idx);
  }
  const TrainedModel model =
      train_model(kind, train, config, topts, ext_train ? &*ext_train : nullptr);
  const auto scores = predict_rows(model, test, ext_test ? &*ext_test : nullptr);

  FoldMetrics fm;
  fm.fold = fold;
  fm.train_rows = train.rows();
  fm.test_rows = test.rows();
  fm.auc = metrics::auc(scores, test.labels());
  const auto table = metrics::calibration_table(scores, test.labels(), options.calibration_bins);
  fm.ece = metrics::ece(table);
  fm.mce = metrics::mce(table);
  fm.certainty = metrics::certainty_fraction(scores);
  fm.diagnostics = model.diagnostics;
  return fm;
}

std::string digest_bytes(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = hex[h & 0xF];
    h >>= 4;
  }
  return out;
}

std::string digest_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return digest_bytes(buf.str());
}

}  // namespace lamkit::cli

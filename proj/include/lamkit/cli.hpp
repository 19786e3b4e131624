#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "lamkit/data.hpp"
#include "lamkit/ensemble.hpp"
#include "lamkit/glm.hpp"
#include "lamkit/stats.hpp"

namespace lamkit::cli {

inline constexpr int kSchemaVersion = 1;

/// Bad flags or arguments; maps to exit code 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ModelKind {
  Nnlr,
  LinNnlr,
  Arm1,
  LinArm1,
  Arm2,
  LinArm2,
  MixArm1,
  MixLinArm1,
  MixExternal,
};

/// Accepts the command-line token ("lin-arm1") or the roster id ("LinARM1").
ModelKind parse_model_kind(std::string_view token);
std::string_view model_token(ModelKind kind);
std::string_view classifier_id(ModelKind kind);
std::vector<ModelKind> all_model_kinds();
bool is_linearised(ModelKind kind);

/// External subscale scores for a set of rows: scores[s][j].
struct ExternalRows {
  std::vector<std::string> subscales;
  std::vector<std::vector<double>> scores;
};

/// Subscale scores produced outside this tool, one row per (row, subscale).
/// CSV columns: row_id, fold_id, subscale, score.
struct ExternalScores {
  std::vector<std::string> subscales;  // first-seen order
  std::vector<int> fold_of_row;        // -1 when the row never appears
  // scores[s][row]; NaN when missing.
  std::vector<std::vector<double>> scores;

  std::size_t rows() const { return fold_of_row.size(); }
  /// Scores for the requested rows. Throws DataError on a gap.
  ExternalRows select(std::span<const std::size_t> rows) const;
  ExternalRows all() const;
  /// Throws DataError if any row's fold differs from the plan.
  void check_folds(const FoldPlan& plan) const;
};

ExternalScores read_external_scores(std::istream& in);
ExternalScores load_external_scores(const std::filesystem::path& path);

struct TrainOptions {
  double c = 0.0;
  std::uint64_t seed = 0;
  double hedge_holdout = 0.0;
  glm::SolverOptions solver;
};

using ModelBody =
    std::variant<ensemble::AdditivePipeline, ensemble::TwoLayerModel, ensemble::MixtureModel>;

struct TrainedModel {
  ModelKind kind = ModelKind::Arm1;
  DatasetConfig config;
  LevelDictionary levels;
  ModelBody body;
  std::vector<glm::FitDiagnostics> diagnostics;

  bool needs_external_scores() const { return kind == ModelKind::MixExternal; }
  /// Risk for one raw row. External mixtures need `external` (one score per
  /// subscale, in model order).
  double score(std::span<const double> raw_row, std::span<const double> external = {}) const;
};

/// `external` covers the rows of `ds`; only MixExternal uses it, to drive
/// the Hedge pass.
TrainedModel train_model(ModelKind kind, const Dataset& ds, const DatasetConfig& config,
                         const TrainOptions& options, const ExternalRows* external = nullptr);

std::vector<double> predict_rows(const TrainedModel& model, const Dataset& ds,
                                 const ExternalRows* external = nullptr);

nlohmann::ordered_json model_to_json(const TrainedModel& model);
TrainedModel model_from_json(const nlohmann::ordered_json& doc);
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Cross-validation

struct FoldMetrics {
  int fold = 0;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  double auc = 0.0;
  double ece = 0.0;
  double mce = 0.0;
  double certainty = 0.0;
  std::vector<glm::FitDiagnostics> diagnostics;
};

struct RunReport {
  ModelKind kind = ModelKind::Arm1;
  std::string dataset;
  int k = 0;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::string data_digest;
  std::vector<FoldMetrics> folds;
  std::optional<std::string> error;  // the run failed; folds may be partial

  bool ok() const { return !error.has_value(); }
  double mean_auc() const;
  double mean_ece() const;
  double mean_mce() const;
  double mean_certainty() const;
};

struct EvalOptions {
  int k = 10;
  std::uint64_t seed = 0;
  int calibration_bins = 15;
  TrainOptions train;
};

/// Trains on every fold but `fold` and scores the held-out rows. The
/// training seed is derived from the master seed and the fold index.
FoldMetrics evaluate_fold(ModelKind kind, const Dataset& ds, const DatasetConfig& config,
                          const FoldPlan& plan, int fold, const EvalOptions& options,
                          const ExternalScores* external = nullptr);

nlohmann::ordered_json report_to_json(const RunReport& report, bool timestamps);

/// FNV-1a 64 over raw bytes, as 16 hex digits.
std::string digest_bytes(std::string_view bytes);
std::string digest_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Benchmark

struct ManifestEntry {
  std::string name;
  std::filesystem::path dataset;
  std::filesystem::path config;
  std::optional<std::filesystem::path> external_scores;
};

/// JSON list of {dataset, config, name[, external_scores]}. Relative paths
/// resolve against the manifest's directory.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

struct BenchmarkOptions {
  std::vector<ModelKind> models;
  EvalOptions eval;
  std::filesystem::path out_dir;
  unsigned threads = 0;  // 0 = hardware concurrency
  bool timestamps = true;
  std::optional<std::string> label_column;
};

inline const std::vector<std::string> kMetricNames = {"auc", "ece", "mce", "certainty"};

/// Every model on every dataset over every fold. Writes one report per
/// (model, dataset), fold assignments per dataset, and one score matrix CSV
/// per metric. Failed runs leave empty matrix cells.
std::vector<RunReport> run_benchmark(const std::vector<ManifestEntry>& manifest,
                                     const BenchmarkOptions& options);

void write_score_matrix(const stats::ScoreMatrix& sm, std::ostream& out);
/// Empty cells load as NaN; ScoreMatrix::validate rejects them.
stats::ScoreMatrix read_score_matrix(std::istream& in);
stats::ScoreMatrix load_score_matrix(const std::filesystem::path& path);

/// auc is higher-is-better; ece, mce and certainty are lower-is-better.
std::optional<stats::Orientation> orientation_from_name(std::string_view file_stem);

// ---------------------------------------------------------------------------
// Compare, explain, approximation report

nlohmann::ordered_json comparison_to_json(const stats::ScoreMatrix& sm,
                                          const stats::ComparisonResult& result);
void write_cd_edges(const stats::ScoreMatrix& sm, const stats::ComparisonResult& result,
                    std::ostream& out);
/// Cell (i, j): pseudomedian of classifier i minus classifier j, with a
/// trailing '*' when the difference is significant.
void write_pseudomedian_table(const stats::ScoreMatrix& sm, const stats::ComparisonResult& result,
                              std::ostream& out);

struct ExplainOptions {
  std::size_t top_k = 4;
};

/// Attribution for one raw row. `external` holds the row's subscale scores
/// for external mixtures.
nlohmann::ordered_json explain_row(const TrainedModel& model, std::span<const double> raw_row,
                                   const ExplainOptions& options,
                                   std::span<const double> external = {});

nlohmann::ordered_json approximation_report(double tolerance = 1e-10);

// ---------------------------------------------------------------------------
// Commands. Each returns the process exit code; errors propagate as
// exceptions and are mapped by exit_code_for.

int exit_code_for(const std::exception& e);

struct TrainArgs {
  std::filesystem::path data, config, out;
  std::string model = "arm1";
  std::optional<std::filesystem::path> external_scores;
  std::optional<std::string> label_column;
  TrainOptions options;
};
int cmd_train(const TrainArgs& args, std::ostream& log);

struct PredictArgs {
  std::filesystem::path model, data, out;
  std::optional<std::filesystem::path> external_scores;
};
int cmd_predict(const PredictArgs& args, std::ostream& log);

struct BenchmarkArgs {
  std::filesystem::path manifest, out_dir;
  std::vector<std::string> models;
  int k = 10;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  bool timestamps = true;
  std::optional<std::string> label_column;
  TrainOptions options;
};
int cmd_benchmark(const BenchmarkArgs& args, std::ostream& log);

struct CompareArgs {
  std::vector<std::filesystem::path> matrices;
  std::filesystem::path out_dir;
  double alpha = 0.05;
  std::optional<std::string> orientation;  // "higher" or "lower"
};
int cmd_compare(const CompareArgs& args, std::ostream& log);

struct ExplainArgs {
  std::filesystem::path model, rows;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> external_scores;
  std::size_t top_k = 4;
};
int cmd_explain(const ExplainArgs& args, std::ostream& out);

struct ApproxArgs {
  double tolerance = 1e-10;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> curve;
};
int cmd_approx_report(const ApproxArgs& args, std::ostream& out);

struct SplitArgs {
  std::filesystem::path data;
  std::filesystem::path out_prefix;
  std::size_t rows_per_part = 0;
};
int cmd_split(const SplitArgs& args, std::ostream& log);

}  // namespace lamkit::cli

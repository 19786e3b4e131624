// lamkit: train, score, benchmark and compare additive risk models.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lamkit/cli.hpp"

namespace cli = lamkit::cli;

namespace {

void add_train_options(CLI::App* cmd, cli::TrainOptions& o) {
  cmd->add_option("--c", o.c, "l2 penalty on coefficients")->check(CLI::NonNegativeNumber);
  cmd->add_option("--tolerance", o.solver.tolerance, "projected-gradient tolerance")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--max-iterations", o.solver.max_iterations, "solver iteration cap")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--hedge-holdout", o.hedge_holdout,
                  "fraction of training rows reserved for the Hedge pass of mixtures")
      ->check(CLI::Range(0.0, 0.99));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linearised additive models, monotone risk scorecards and classifier comparison"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "lamkit 1.0");

  cli::TrainArgs train;
  std::string train_data, train_config, train_out, train_ext;
  auto* c_train = app.add_subcommand("train", "fit a model and write it as JSON");
  c_train->add_option("--data", train_data, "training CSV")->required()->check(CLI::ExistingFile);
  c_train->add_option("--config", train_config, "feature configuration JSON")->required()->check(CLI::ExistingFile);
  c_train->add_option("--model", train.model, "model kind (nnlr, lin-nnlr, arm1, lin-arm1, arm2, lin-arm2, mix-arm1, mix-lin-arm1, mix-external)")
      ->capture_default_str();
  c_train->add_option("--out", train_out, "model output path")->required();
  c_train->add_option("--seed", train.options.seed, "seed for the Hedge shuffle");
  c_train->add_option("--external-scores", train_ext, "subscale score CSV for mix-external");
  std::string train_label;
  c_train->add_option("--label", train_label, "label column (overrides the config)");
  add_train_options(c_train, train.options);

  cli::PredictArgs predict;
  std::string predict_model, predict_data, predict_out, predict_ext;
  auto* c_predict = app.add_subcommand("predict", "score rows with a trained model");
  c_predict->add_option("--model", predict_model, "model JSON")->required()->check(CLI::ExistingFile);
  c_predict->add_option("--data", predict_data, "rows to score")->required()->check(CLI::ExistingFile);
  c_predict->add_option("--out", predict_out, "output CSV (row_id,score)")->required();
  c_predict->add_option("--external-scores", predict_ext, "subscale score CSV for mix-external");

  cli::BenchmarkArgs bench;
  std::string bench_manifest, bench_out, bench_label;
  auto* c_bench = app.add_subcommand("benchmark", "stratified cross-validation over models and datasets");
  c_bench->add_option("--manifest", bench_manifest, "JSON list of {dataset, config, name}")
      ->required()
      ->check(CLI::ExistingFile);
  c_bench->add_option("--models", bench.models, "model kinds")->required()->delimiter(',');
  c_bench->add_option("--k", bench.k, "folds")->capture_default_str()->check(CLI::Range(2, 1000));
  c_bench->add_option("--seed", bench.seed, "master seed")->capture_default_str();
  c_bench->add_option("--out", bench_out, "output directory")->required();
  c_bench->add_option("--threads", bench.threads, "worker threads (0 = all cores)");
  c_bench->add_flag("--no-timestamps", "omit timestamps from reports");
  c_bench->add_option("--label", bench_label, "label column (overrides the configs)");
  add_train_options(c_bench, bench.options);

  cli::CompareArgs compare;
  std::vector<std::string> compare_matrices;
  std::string compare_out, compare_orientation;
  auto* c_compare = app.add_subcommand("compare", "Friedman, Wilcoxon-Holm and Hodges-Lehmann on score matrices");
  c_compare->add_option("matrices", compare_matrices, "score matrix CSVs")->required()->check(CLI::ExistingFile);
  c_compare->add_option("--alpha", compare.alpha, "significance level")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  c_compare->add_option("--out", compare_out, "output directory")->required();
  c_compare->add_option("--orientation", compare_orientation, "higher or lower is better");

  cli::ExplainArgs explain;
  std::string explain_model, explain_rows, explain_out, explain_ext;
  auto* c_explain = app.add_subcommand("explain", "reason codes for rows");
  c_explain->add_option("--model", explain_model, "model JSON")->required()->check(CLI::ExistingFile);
  c_explain->add_option("--rows", explain_rows, "rows CSV")->required()->check(CLI::ExistingFile);
  c_explain->add_option("--top-k", explain.top_k, "reason codes per row")->capture_default_str();
  c_explain->add_option("--out", explain_out, "output JSON (default stdout)");
  c_explain->add_option("--external-scores", explain_ext, "subscale score CSV for mix-external");

  cli::ApproxArgs approx;
  std::string approx_out, approx_curve;
  auto* c_approx = app.add_subcommand("approx-report", "optimal clipped-linear sigmoid approximation");
  c_approx->add_option("--tolerance", approx.tolerance, "Newton stopping tolerance on SE'")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  c_approx->add_option("--out", approx_out, "output JSON (default stdout)");
  c_approx->add_option("--curve", approx_curve, "CSV of SE(alpha) and max error over a grid");

  cli::SplitArgs split;
  std::string split_data, split_prefix;
  auto* c_split = app.add_subcommand("split", "cut a CSV into contiguous row ranges");
  c_split->add_option("--data", split_data, "input CSV")->required()->check(CLI::ExistingFile);
  c_split->add_option("--rows-per-part", split.rows_per_part, "rows per output file")->required();
  c_split->add_option("--out-prefix", split_prefix, "output path prefix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*c_train) {
      train.data = train_data;
      train.config = train_config;
      train.out = train_out;
      if (!train_ext.empty()) train.external_scores = train_ext;
      if (!train_label.empty()) train.label_column = train_label;
      return cli::cmd_train(train, std::cerr);
    }
    if (*c_predict) {
      predict.model = predict_model;
      predict.data = predict_data;
      predict.out = predict_out;
      if (!predict_ext.empty()) predict.external_scores = predict_ext;
      return cli::cmd_predict(predict, std::cerr);
    }
    if (*c_bench) {
      bench.manifest = bench_manifest;
      bench.out_dir = bench_out;
      bench.timestamps = c_bench->count("--no-timestamps") == 0;
      if (!bench_label.empty()) bench.label_column = bench_label;
      return cli::cmd_benchmark(bench, std::cerr);
    }
    if (*c_compare) {
      for (const auto& m : compare_matrices) compare.matrices.emplace_back(m);
      compare.out_dir = compare_out;
      if (!compare_orientation.empty()) compare.orientation = compare_orientation;
      return cli::cmd_compare(compare, std::cerr);
    }
    if (*c_explain) {
      explain.model = explain_model;
      explain.rows = explain_rows;
      if (!explain_out.empty()) explain.out = explain_out;
      if (!explain_ext.empty()) explain.external_scores = explain_ext;
      return cli::cmd_explain(explain, std::cout);
    }
    if (*c_approx) {
      if (!approx_out.empty()) approx.out = approx_out;
      if (!approx_curve.empty()) approx.curve = approx_curve;
      return cli::cmd_approx_report(approx, std::cout);
    }
    if (*c_split) {
      split.data = split_data;
      split.out_prefix = split_prefix;
      return cli::cmd_split(split, std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::exit_code_for(e);
  }
  return 2;
}

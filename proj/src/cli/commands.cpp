#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <set>
#include <thread>

#include "lamkit/cli.hpp"
#include "lamkit/errors.hpp"
#include "lamkit/lam.hpp"

namespace lamkit::cli {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const DataError*>(&e)) return 3;
  if (dynamic_cast<const NumericalError*>(&e)) return 4;
  if (dynamic_cast<const std::invalid_argument*>(&e)) return 2;
  if (dynamic_cast<const std::domain_error*>(&e)) return 4;
  return 1;
}

namespace {

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

DatasetConfig load_config_with_label(const fs::path& path, const std::optional<std::string>& label) {
  auto config = load_config(path);
  if (label) config.label_column = *label;
  return config;
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. Results must be
// written to per-index slots so the outcome does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

struct LoadedDataset {
  ManifestEntry entry;
  DatasetConfig config;
  Dataset data;
  FoldPlan plan;
  std::string config_digest;
  std::string data_digest;
  std::optional<ExternalScores> external;
  std::optional<std::string> error;           // dataset could not be loaded
  std::optional<std::string> external_error;  // only MixExternal fails
};

struct TaskResult {
  std::optional<FoldMetrics> metrics;
  std::string error;
};

}  // namespace

std::vector<ManifestEntry> load_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
  ordered_json doc;
  try {
    doc = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest is not valid JSON: " + std::string(e.what()));
  }
  if (!doc.is_array() || doc.empty()) throw DataError("manifest must be a non-empty JSON list");
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  std::vector<ManifestEntry> out;
  std::set<std::string> names;
  for (const auto& node : doc) {
    try {
      ManifestEntry e;
      e.dataset = resolve(node.at("dataset").get<std::string>());
      e.config = resolve(node.at("config").get<std::string>());
      e.name = node.contains("name") ? node.at("name").get<std::string>() : e.dataset.stem().string();
      if (node.contains("external_scores")) {
        e.external_scores = resolve(node.at("external_scores").get<std::string>());
      }
      if (!names.insert(e.name).second) throw DataError("manifest: duplicate dataset name '" + e.name + "'");
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest entry malformed: " + std::string(e.what()));
    }
  }
  return out;
}

std::vector<RunReport> run_benchmark(const std::vector<ManifestEntry>& manifest,
                                     const BenchmarkOptions& options) {
  if (options.models.empty()) throw UsageError("benchmark needs at least one model");
  const int k = options.eval.k;
  if (k < 2) throw UsageError("k must be at least 2");

  std::vector<LoadedDataset> datasets(manifest.size());
  for (std::size_t d = 0; d < manifest.size(); ++d) {
    auto& ld = datasets[d];
    ld.entry = manifest[d];
    try {
      ld.config = load_config_with_label(ld.entry.config, options.label_column);
      ld.config_digest = digest_file(ld.entry.config);
      ld.data_digest = digest_file(ld.entry.dataset);
      ld.data = load_csv(ld.entry.dataset, ld.config);
      ld.plan = stratified_kfold(ld.data, k, options.eval.seed);
    } catch (const std::exception& e) {
      ld.error = e.what();
      continue;
    }
    if (ld.entry.external_scores) {
      try {
        ld.external = load_external_scores(*ld.entry.external_scores);
        ld.external->check_folds(ld.plan);
      } catch (const std::exception& e) {
        ld.external.reset();
        ld.external_error = e.what();
      }
    }
  }

  const std::size_t n_models = options.models.size();
  const std::size_t n_data = datasets.size();
  const auto folds = static_cast<std::size_t>(k);
  std::vector<TaskResult> results(n_models * n_data * folds);
  parallel_for(results.size(), options.threads, [&](std::size_t t) {
    const std::size_t m = t / (n_data * folds);
    const std::size_t d = (t / folds) % n_data;
    const int f = static_cast<int>(t % folds);
    const auto& ld = datasets[d];
    const ModelKind kind = options.models[m];
    if (ld.error) {
      results[t].error = *ld.error;
      return;
    }
    if (kind == ModelKind::MixExternal && !ld.external) {
      results[t].error = ld.external_error.value_or("no external_scores file for this dataset");
      return;
    }
    try {
      results[t].metrics = evaluate_fold(kind, ld.data, ld.config, ld.plan, f, options.eval,
                                         ld.external ? &*ld.external : nullptr);
    } catch (const std::exception& e) {
      results[t].error = "fold " + std::to_string(f) + ": " + e.what();
    }
  });

  // Fixed reduction order: model, then dataset, then fold.
  std::vector<RunReport> reports;
  for (std::size_t m = 0; m < n_models; ++m) {
    for (std::size_t d = 0; d < n_data; ++d) {
      RunReport r;
      r.kind = options.models[m];
      r.dataset = datasets[d].entry.name;
      r.k = k;
      r.seed = options.eval.seed;
      r.config_digest = datasets[d].config_digest;
      r.data_digest = datasets[d].data_digest;
      for (std::size_t f = 0; f < folds; ++f) {
        auto& res = results[(m * n_data + d) * folds + f];
        if (res.metrics) r.folds.push_back(std::move(*res.metrics));
        else if (!r.error) r.error = res.error;
      }
      reports.push_back(std::move(r));
    }
  }

  const fs::path out_dir = options.out_dir;
  fs::create_directories(out_dir / "reports");
  fs::create_directories(out_dir / "folds");
  for (const auto& r : reports) {
    auto out = open_output(out_dir / "reports" /
                           (std::string(model_token(r.kind)) + "__" + r.dataset + ".json"));
    out << report_to_json(r, options.timestamps).dump(2) << '\n';
  }
  for (const auto& ld : datasets) {
    if (ld.error) continue;
    auto out = open_output(out_dir / "folds" / (ld.entry.name + ".csv"));
    out << "row_id,fold_id\n";
    for (std::size_t i = 0; i < ld.plan.assignments.size(); ++i) {
      out << i << ',' << ld.plan.assignments[i] << '\n';
    }
  }
  for (const auto& metric : kMetricNames) {
    stats::ScoreMatrix sm;
    for (auto kind : options.models) sm.classifiers.emplace_back(classifier_id(kind));
    for (const auto& ld : datasets) sm.datasets.push_back(ld.entry.name);
    sm.scores = Matrix::Constant(static_cast<Eigen::Index>(n_models), static_cast<Eigen::Index>(n_data),
                                 std::numeric_limits<double>::quiet_NaN());
    for (std::size_t m = 0; m < n_models; ++m) {
      for (std::size_t d = 0; d < n_data; ++d) {
        const auto& r = reports[m * n_data + d];
        if (!r.ok()) continue;
        double v = 0.0;
        if (metric == "auc") v = r.mean_auc();
        else if (metric == "ece") v = r.mean_ece();
        else if (metric == "mce") v = r.mean_mce();
        else v = r.mean_certainty();
        sm.scores(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d)) = v;
      }
    }
    auto out = open_output(out_dir / ("scores_" + metric + ".csv"));
    write_score_matrix(sm, out);
  }
  return reports;
}

// ---------------------------------------------------------------------------

int cmd_train(const TrainArgs& args, std::ostream& log) {
  const ModelKind kind = parse_model_kind(args.model);
  const auto config = load_config_with_label(args.config, args.label_column);
  const Dataset ds = load_csv(args.data, config);
  std::optional<ExternalRows> external;
  if (kind == ModelKind::MixExternal) {
    if (!args.external_scores) throw UsageError("--model mix-external needs --external-scores");
    const auto ext = load_external_scores(*args.external_scores);
    if (ext.rows() != ds.rows()) {
      throw DataError("external scores cover " + std::to_string(ext.rows()) + " rows, dataset has " +
                      std::to_string(ds.rows()));
    }
    external = ext.all();
  }
  const auto model = train_model(kind, ds, config, args.options, external ? &*external : nullptr);
  save_model(model, args.out);
  log << "trained " << classifier_id(kind) << " on " << ds.rows() << " rows -> " << args.out.string()
      << '\n';
  return 0;
}

int cmd_predict(const PredictArgs& args, std::ostream& log) {
  const auto model = load_model(args.model);
  CsvOptions opts;
  opts.labels_optional = true;
  opts.known_levels = &model.levels;
  const Dataset ds = load_csv(args.data, model.config, opts);
  std::optional<ExternalRows> external;
  if (model.needs_external_scores()) {
    if (!args.external_scores) throw UsageError("this model needs --external-scores");
    const auto ext = load_external_scores(*args.external_scores);
    std::vector<std::size_t> rows(ds.rows());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    external = ext.select(rows);
  }
  const auto scores = predict_rows(model, ds, external ? &*external : nullptr);
  auto out = open_output(args.out);
  out << "row_id,score\n";
  for (std::size_t i = 0; i < scores.size(); ++i) out << i << ',' << format_double(scores[i]) << '\n';
  log << "scored " << scores.size() << " rows -> " << args.out.string() << '\n';
  return 0;
}

int cmd_benchmark(const BenchmarkArgs& args, std::ostream& log) {
  BenchmarkOptions opts;
  if (args.models.empty()) throw UsageError("--models needs at least one model kind");
  for (const auto& m : args.models) opts.models.push_back(parse_model_kind(m));
  opts.eval.k = args.k;
  opts.eval.seed = args.seed;
  opts.eval.train = args.options;
  // Benchmarks record solver trouble in the reports instead of aborting.
  opts.eval.train.solver.throw_on_nonconvergence = false;
  opts.out_dir = args.out_dir;
  opts.threads = args.threads;
  opts.timestamps = args.timestamps;
  opts.label_column = args.label_column;
  const auto manifest = load_manifest(args.manifest);
  const auto reports = run_benchmark(manifest, opts);
  std::size_t failed = 0;
  for (const auto& r : reports) {
    if (!r.ok()) {
      ++failed;
      log << "run " << classifier_id(r.kind) << " on " << r.dataset << " failed: " << *r.error << '\n';
    }
  }
  log << reports.size() << " runs, " << failed << " failed -> " << args.out_dir.string() << '\n';
  return 0;
}

int cmd_compare(const CompareArgs& args, std::ostream& log) {
  if (args.matrices.empty()) throw UsageError("compare needs at least one score matrix");
  std::optional<stats::Orientation> forced;
  if (args.orientation) {
    if (*args.orientation == "higher") forced = stats::Orientation::HigherIsBetter;
    else if (*args.orientation == "lower") forced = stats::Orientation::LowerIsBetter;
    else throw UsageError("--orientation must be 'higher' or 'lower'");
  }
  fs::create_directories(args.out_dir);
  for (const auto& path : args.matrices) {
    auto sm = load_score_matrix(path);
    const auto stem = path.stem().string();
    if (forced) sm.orientation = *forced;
    else if (!orientation_from_name(stem)) {
      throw UsageError("cannot infer orientation from '" + path.filename().string() +
                       "'; pass --orientation");
    }
    const auto result = stats::compare(sm, args.alpha);
    {
      auto out = open_output(args.out_dir / (stem + "_comparison.json"));
      out << comparison_to_json(sm, result).dump(2) << '\n';
    }
    {
      auto out = open_output(args.out_dir / (stem + "_cd_edges.csv"));
      write_cd_edges(sm, result, out);
    }
    {
      auto out = open_output(args.out_dir / (stem + "_pseudomedians.csv"));
      write_pseudomedian_table(sm, result, out);
    }
    std::size_t rejected = 0;
    for (const auto& p : result.pairs) rejected += p.rejected ? 1 : 0;
    log << stem << ": omnibus p=" << format_double(result.omnibus.p_value) << ", " << rejected << " of "
        << result.pairs.size() << " pairs differ\n";
  }
  return 0;
}

int cmd_explain(const ExplainArgs& args, std::ostream& out) {
  if (args.top_k == 0) throw UsageError("--top-k must be positive");
  const auto model = load_model(args.model);
  CsvOptions opts;
  opts.labels_optional = true;
  opts.known_levels = &model.levels;
  const Dataset ds = load_csv(args.rows, model.config, opts);
  std::optional<ExternalRows> external;
  if (model.needs_external_scores()) {
    if (!args.external_scores) throw UsageError("this model needs --external-scores");
    const auto ext = load_external_scores(*args.external_scores);
    std::vector<std::size_t> rows(ds.rows());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    external = ext.select(rows);
  }
  ExplainOptions eo;
  eo.top_k = args.top_k;
  ordered_json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["classifier"] = std::string(classifier_id(model.kind));
  doc["rows"] = ordered_json::array();
  std::vector<double> ext_row;
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    if (external) {
      ext_row.clear();
      for (const auto& s : external->scores) ext_row.push_back(s[i]);
    }
    auto e = explain_row(model, ds.row(i), eo, ext_row);
    e.erase("classifier");
    ordered_json entry = {{"row", i}};
    for (auto& [key, v] : e.items()) entry[key] = v;
    doc["rows"].push_back(std::move(entry));
  }
  if (args.out) {
    auto f = open_output(*args.out);
    f << doc.dump(2) << '\n';
  } else {
    out << doc.dump(2) << '\n';
  }
  return 0;
}

int cmd_approx_report(const ApproxArgs& args, std::ostream& out) {
  const auto doc = approximation_report(args.tolerance);
  if (args.out) {
    auto f = open_output(*args.out);
    f << doc.dump(2) << '\n';
  } else {
    out << doc.dump(2) << '\n';
  }
  if (args.curve) {
    auto f = open_output(*args.curve);
    f << "alpha,squared_error,max_abs_error\n";
    for (int i = 0; i <= 195; ++i) {
      const double a = 0.25 + 0.05 * i;
      f << format_double(a) << ',' << format_double(lam::squared_error(a)) << ','
        << format_double(lam::max_abs_error(a)) << '\n';
    }
  }
  return 0;
}

int cmd_split(const SplitArgs& args, std::ostream& log) {
  if (args.rows_per_part == 0) throw UsageError("--rows-per-part must be positive");
  std::ifstream in(args.data, std::ios::binary);
  if (!in) throw DataError("cannot open data file '" + args.data.string() + "'");
  std::vector<std::string> header;
  if (!read_csv_record(in, header)) throw DataError("csv: empty input");
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> rec;
  while (read_csv_record(in, rec)) {
    if (rec.size() == 1 && rec[0].empty()) continue;
    if (rec.size() != header.size()) {
      throw DataError("csv: record " + std::to_string(records.size() + 1) + " has wrong field count");
    }
    records.push_back(rec);
  }
  const auto parts = contiguous_splits(records.size(), args.rows_per_part);
  auto write_record = [](std::ostream& o, const std::vector<std::string>& r) {
    for (std::size_t j = 0; j < r.size(); ++j) o << (j ? "," : "") << csv_quote(r[j]);
    o << '\n';
  };
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const fs::path path = args.out_prefix.string() + "_" + std::to_string(p + 1) + ".csv";
    auto out = open_output(path);
    write_record(out, header);
    for (std::size_t i = parts[p].first; i < parts[p].second; ++i) write_record(out, records[i]);
    log << path.string() << ": rows " << parts[p].first << ".." << parts[p].second << '\n';
  }
  return 0;
}

}  // namespace lamkit::cli

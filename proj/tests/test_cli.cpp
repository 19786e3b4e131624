#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "lamkit/cli.hpp"
#include "lamkit/errors.hpp"
#include "lamkit/lam.hpp"

using namespace lamkit;
using namespace lamkit::cli;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

const fs::path kData = LAMKIT_DATA_DIR;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("lamkit_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

int run_tool(const std::string& args) {
  const std::string cmd = std::string("\"") + LAMKIT_TOOL + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct Toy {
  DatasetConfig config;
  Dataset ds;
};

const Toy& toy() {
  static const Toy t = [] {
    Toy out;
    out.config = load_config(kData / "toy_config.json");
    out.ds = load_csv(kData / "toy_a.csv", out.config);
    return out;
  }();
  return t;
}

// Two subscale scores per row, in [0, 1], with a fold column.
std::string external_csv(const Dataset& ds, const FoldPlan& plan) {
  std::ostringstream out;
  out << "row_id,fold_id,subscale,score\n";
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    const double a = 0.2 + 0.6 * static_cast<double>(ds.labels()[i]) * 0.5 + 0.01 * static_cast<double>(i % 7);
    const double b = 0.5;
    out << i << ',' << plan.assignments[i] << ",capacity," << format_double(a) << '\n';
    out << i << ',' << plan.assignments[i] << ",history," << format_double(b) << '\n';
  }
  return out.str();
}

}  // namespace

TEST_CASE("model kind tokens and ids") {
  for (auto k : all_model_kinds()) {
    CHECK(parse_model_kind(model_token(k)) == k);
    CHECK(parse_model_kind(classifier_id(k)) == k);
  }
  CHECK(parse_model_kind("lin-arm1") == ModelKind::LinArm1);
  CHECK(is_linearised(ModelKind::MixLinArm1));
  CHECK_FALSE(is_linearised(ModelKind::Arm2));
  CHECK_THROWS_AS(parse_model_kind("xgboost"), UsageError);
}

TEST_CASE("model JSON round trip reproduces every score") {
  const auto& t = toy();
  for (auto kind : all_model_kinds()) {
    if (kind == ModelKind::MixExternal) continue;
    CAPTURE(std::string(model_token(kind)));
    TrainOptions opt;
    opt.seed = 5;
    const auto model = train_model(kind, t.ds, t.config, opt);
    const auto text = model_to_json(model).dump();
    const auto back = model_from_json(ordered_json::parse(text));
    CHECK(back.kind == kind);
    CHECK(model_to_json(back).dump() == text);
    const auto a = predict_rows(model, t.ds);
    const auto b = predict_rows(back, t.ds);
    CHECK(a == b);
    for (double s : a) CHECK((s >= 0.0 && s <= 1.0));
  }
  auto doc = model_to_json(train_model(ModelKind::Arm1, t.ds, t.config, {}));
  doc["schema_version"] = 99;
  CHECK_THROWS_AS(model_from_json(doc), DataError);
}

TEST_CASE("linearised kinds score through the clipped link") {
  const auto& t = toy();
  const auto m = train_model(ModelKind::LinArm1, t.ds, t.config, {});
  const auto& p = std::get<ensemble::AdditivePipeline>(m.body);
  CHECK(p.model.link == Link::Linearised);
  const auto scores = predict_rows(m, t.ds);
  for (std::size_t i = 0; i < t.ds.rows(); ++i) {
    const double z = p.logit(t.ds.row(i));
    CHECK((scores[i] == 0.0 || scores[i] == 1.0) == (std::abs(z) >= lam::kAlphaStar));
  }
}

TEST_CASE("external subscale scores") {
  const auto& t = toy();
  const auto plan = stratified_kfold(t.ds, 5, 3);
  std::istringstream in(external_csv(t.ds, plan));
  const auto ext = read_external_scores(in);
  CHECK(ext.rows() == t.ds.rows());
  CHECK(ext.subscales == std::vector<std::string>{"capacity", "history"});
  CHECK_NOTHROW(ext.check_folds(plan));
  CHECK_THROWS_AS(ext.check_folds(stratified_kfold(t.ds, 5, 4)), DataError);

  const auto rows = ext.all();
  const auto model = train_model(ModelKind::MixExternal, t.ds, t.config, {}, &rows);
  const auto& mix = std::get<ensemble::MixtureModel>(model.body);
  CHECK(mix.weights.size() == 2);
  CHECK(mix.weights[0] > mix.weights[1]);  // the informative column wins
  const auto scores = predict_rows(model, t.ds, &rows);
  CHECK(scores[0] == doctest::Approx(mix.weights[0] * rows.scores[0][0] + mix.weights[1] * rows.scores[1][0]));
  CHECK_THROWS(predict_rows(model, t.ds));
  CHECK_THROWS(train_model(ModelKind::MixExternal, t.ds, t.config, {}));

  // A gap in the file surfaces when those rows are requested.
  std::istringstream gap("row_id,fold_id,subscale,score\n0,0,a,0.5\n0,0,b,0.5\n2,0,a,0.5\n");
  const auto partial = read_external_scores(gap);
  const std::vector<std::size_t> want{0, 2};
  CHECK_THROWS_AS(partial.select(want), DataError);
  std::istringstream bad("row_id,fold_id,subscale,score\n0,0,a,1.5\n");
  CHECK_THROWS_AS(read_external_scores(bad), DataError);
}

TEST_CASE("reason codes") {
  const auto& t = toy();
  TrainOptions opt;
  auto model = train_model(ModelKind::MixLinArm1, t.ds, t.config, opt);
  auto& mix = std::get<ensemble::MixtureModel>(model.body);
  mix.weights = {1.0, 0.0};
  std::size_t checked = 0;
  for (std::size_t i = 0; i < t.ds.rows() && checked < 20; ++i) {
    const auto sub = mix.subscale_scores(t.ds.row(i));
    if (!(sub[0] > 0.0)) continue;
    ++checked;
    const auto e = explain_row(model, t.ds.row(i), {});
    REQUIRE(e["reason_codes"].size() == 1);
    CHECK(e["reason_codes"][0]["subscale"] == "capacity");
    double total = 0.0;
    for (const auto& c : e["contributions"]) total += c["contribution"].get<double>();
    CHECK(total == doctest::Approx(e["prediction"].get<double>()).epsilon(1e-12));
  }
  CHECK(checked > 0);

  const auto lin = train_model(ModelKind::LinArm1, t.ds, t.config, opt);
  for (std::size_t i = 0; i < 50; ++i) {
    const auto e = explain_row(lin, t.ds.row(i), {2});
    CHECK(e["reason_codes"].size() <= 2);
    double prev = 1e300;
    for (const auto& r : e["reason_codes"]) {
      const double v = r["contribution"].get<double>();
      CHECK(v > 0.0);
      CHECK(v <= prev);
      prev = v;
    }
    double sum = e["base"].get<double>();
    for (const auto& c : e["contributions"]) sum += c["contribution"].get<double>();
    CHECK(sum == doctest::Approx(e["score"].get<double>()).epsilon(1e-12));
    CHECK(e["faithful"].get<bool>() == (e["prediction"].get<double>() > 0.0 && e["prediction"].get<double>() < 1.0));
  }
}

TEST_CASE("score matrix CSV round trip and missing cells") {
  stats::ScoreMatrix sm;
  sm.classifiers = {"ARM1", "NNLR"};
  sm.datasets = {"a", "b,c"};
  sm.scores = Matrix(2, 2);
  sm.scores << 0.1, 0.2, 0.30000000000000004, 0.4;
  std::ostringstream out;
  write_score_matrix(sm, out);
  std::istringstream in(out.str());
  const auto back = read_score_matrix(in);
  CHECK(back.classifiers == sm.classifiers);
  CHECK(back.datasets == sm.datasets);
  CHECK(back.scores == sm.scores);

  std::istringstream gap("classifier,a,b\nX,0.1,\nY,NA,0.2\n");
  const auto holes = read_score_matrix(gap);
  CHECK(std::isnan(holes.scores(0, 1)));
  CHECK(std::isnan(holes.scores(1, 0)));
  CHECK_THROWS_AS(holes.validate(), DataError);

  CHECK(orientation_from_name("scores_auc") == stats::Orientation::HigherIsBetter);
  CHECK(orientation_from_name("scores_ece") == stats::Orientation::LowerIsBetter);
  CHECK_FALSE(orientation_from_name("other").has_value());
  CHECK_FALSE(orientation_from_name("scores_certainty").has_value());
}

TEST_CASE("benchmark: run counts, fold files and determinism") {
  const auto dir = scratch("bench");
  BenchmarkOptions opt;
  opt.models = {ModelKind::Arm1, ModelKind::LinArm1};
  opt.eval.k = 4;
  opt.eval.seed = 17;
  opt.eval.train.solver.throw_on_nonconvergence = false;
  opt.threads = 1;
  opt.timestamps = false;
  const auto manifest = load_manifest(kData / "manifest.json");
  REQUIRE(manifest.size() == 2);

  opt.out_dir = dir / "one";
  const auto reports = run_benchmark(manifest, opt);
  CHECK(reports.size() == 4);
  for (const auto& r : reports) {
    CHECK(r.ok());
    CHECK(r.folds.size() == 4);
    std::size_t tested = 0;
    for (const auto& f : r.folds) tested += f.test_rows;
    CHECK(tested == (r.dataset == "toy_a" ? 600u : 400u));
    CHECK(r.mean_auc() > 0.6);
  }
  for (const auto& m : kMetricNames) CHECK(fs::exists(opt.out_dir / ("scores_" + m + ".csv")));
  CHECK(fs::exists(opt.out_dir / "folds" / "toy_a.csv"));
  CHECK(fs::exists(opt.out_dir / "reports" / "arm1__toy_b.json"));

  // Same inputs, more threads: identical bytes.
  opt.out_dir = dir / "two";
  opt.threads = 3;
  run_benchmark(manifest, opt);
  for (const auto& m : kMetricNames) {
    CHECK(slurp(dir / "one" / ("scores_" + m + ".csv")) == slurp(dir / "two" / ("scores_" + m + ".csv")));
  }
  CHECK(slurp(dir / "one" / "reports" / "lin-arm1__toy_a.json") ==
        slurp(dir / "two" / "reports" / "lin-arm1__toy_a.json"));
  CHECK(slurp(dir / "one" / "folds" / "toy_b.csv") == slurp(dir / "two" / "folds" / "toy_b.csv"));

  // Fold plans depend on the dataset seed only, so every model sees the same folds.
  const auto fold_csv = slurp(dir / "one" / "folds" / "toy_a.csv");
  CHECK(fold_csv.rfind("row_id,fold_id\n", 0) == 0);
}

TEST_CASE("benchmark records failed runs and continues") {
  const auto dir = scratch("bench_fail");
  spit(dir / "manifest.json",
       ordered_json::array({{{"name", "toy_a"},
                             {"dataset", (kData / "toy_a.csv").string()},
                             {"config", (kData / "toy_config.json").string()}}})
           .dump());
  BenchmarkOptions opt;
  opt.models = {ModelKind::Arm1, ModelKind::MixExternal};
  opt.eval.k = 3;
  opt.threads = 1;
  opt.timestamps = false;
  opt.out_dir = dir / "out";
  const auto reports = run_benchmark(load_manifest(dir / "manifest.json"), opt);
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].ok());
  CHECK_FALSE(reports[1].ok());
  const auto sm = load_score_matrix(opt.out_dir / "scores_auc.csv");
  CHECK(std::isfinite(sm.scores(0, 0)));
  CHECK(std::isnan(sm.scores(1, 0)));
}

TEST_CASE("benchmark with external scores per fold") {
  const auto& t = toy();
  const auto dir = scratch("bench_ext");
  const auto plan = stratified_kfold(t.ds, 3, 9);
  spit(dir / "ext.csv", external_csv(t.ds, plan));
  spit(dir / "manifest.json",
       ordered_json::array({{{"name", "toy_a"},
                             {"dataset", (kData / "toy_a.csv").string()},
                             {"config", (kData / "toy_config.json").string()},
                             {"external_scores", "ext.csv"}}})
           .dump());
  BenchmarkOptions opt;
  opt.models = {ModelKind::MixExternal};
  opt.eval.k = 3;
  opt.eval.seed = 9;
  opt.threads = 1;
  opt.timestamps = false;
  opt.out_dir = dir / "out";
  const auto reports = run_benchmark(load_manifest(dir / "manifest.json"), opt);
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].ok());
  CHECK(reports[0].folds.size() == 3);

  // A different master seed gives a different fold plan, which the file contradicts.
  opt.eval.seed = 10;
  opt.out_dir = dir / "out2";
  const auto mismatch = run_benchmark(load_manifest(dir / "manifest.json"), opt);
  CHECK_FALSE(mismatch[0].ok());
}

TEST_CASE("report JSON carries digests and omits timestamps on request") {
  const auto& t = toy();
  RunReport r;
  r.kind = ModelKind::Arm1;
  r.dataset = "toy_a";
  r.k = 3;
  const auto plan = stratified_kfold(t.ds, 3, 1);
  EvalOptions eo;
  eo.k = 3;
  for (int f = 0; f < 3; ++f) r.folds.push_back(evaluate_fold(ModelKind::Arm1, t.ds, t.config, plan, f, eo));
  const auto doc = report_to_json(r, false);
  CHECK_FALSE(doc.contains("timestamp"));
  CHECK(doc["status"] == "ok");
  CHECK(doc["folds"].size() == 3);
  CHECK(report_to_json(r, true).contains("timestamp"));
  CHECK(digest_bytes("") == "cbf29ce484222325");
  CHECK(digest_bytes("a") == "af63dc4c8601ec8c");
}

TEST_CASE("compare command writes its three outputs") {
  const auto dir = scratch("compare");
  spit(dir / "scores_auc.csv",
       "classifier,d1,d2,d3,d4,d5,d6\n"
       "A,0.91,0.85,0.88,0.79,0.93,0.87\n"
       "B,0.81,0.75,0.80,0.70,0.83,0.77\n"
       "C,0.80,0.76,0.79,0.71,0.82,0.78\n");
  CompareArgs args;
  args.matrices = {dir / "scores_auc.csv"};
  args.out_dir = dir / "out";
  std::ostringstream log;
  CHECK(cmd_compare(args, log) == 0);
  const auto doc = ordered_json::parse(slurp(dir / "out" / "scores_auc_comparison.json"));
  CHECK(doc["orientation"] == "higher_is_better");
  CHECK(doc["mean_ranks"][0] == 1.0);
  CHECK(fs::exists(dir / "out" / "scores_auc_cd_edges.csv"));
  CHECK(fs::exists(dir / "out" / "scores_auc_pseudomedians.csv"));
}

TEST_CASE("tool exit codes") {
  const auto dir = scratch("tool");
  const std::string data = (kData / "toy_a.csv").string();
  const std::string config = (kData / "toy_config.json").string();
  const std::string model = (dir / "m.json").string();

  CHECK(run_tool("") == 2);
  CHECK(run_tool("frobnicate") == 2);
  CHECK(run_tool("train --data " + data + " --config " + config + " --out " + model + " --model nope") == 2);
  CHECK(run_tool("train --data /no/such.csv --config " + config + " --out " + model) == 2);

  spit(dir / "broken.json", "{\"features\": ");
  CHECK(run_tool("train --data " + data + " --config " + (dir / "broken.json").string() + " --out " + model) == 3);
  spit(dir / "bad.csv", "income,utilisation\n1,2\n");
  CHECK(run_tool("train --data " + (dir / "bad.csv").string() + " --config " + config + " --out " + model) == 3);

  CHECK(run_tool("train --data " + data + " --config " + config + " --out " + model + " --model arm2") == 0);
  CHECK(fs::exists(model));
  const std::string scores = (dir / "p.csv").string();
  CHECK(run_tool("predict --model " + model + " --data " + data + " --out " + scores) == 0);
  CHECK(slurp(scores).rfind("row_id,score\n0,", 0) == 0);
  CHECK(run_tool("explain --model " + model + " --rows " + data + " --out " + (dir / "e.json").string()) == 0);
  CHECK(ordered_json::parse(slurp(dir / "e.json"))["rows"].size() == 600);

  spit(dir / "scores_auc.csv", "classifier,a,b\nX,0.1,\nY,0.3,0.2\n");
  CHECK(run_tool("compare " + (dir / "scores_auc.csv").string() + " --out " + (dir / "cmp").string()) == 3);

  CHECK(run_tool("approx-report --out " + (dir / "approx.json").string()) == 0);
  const auto approx = ordered_json::parse(slurp(dir / "approx.json"));
  CHECK(std::abs(approx["alpha_star"].get<double>() - 2.5996) < 1e-3);

  CHECK(run_tool("split --data " + data + " --rows-per-part 250 --out-prefix " + (dir / "part").string()) == 0);
  CHECK(fs::exists(dir / "part_1.csv"));
  CHECK(fs::exists(dir / "part_3.csv"));
  CHECK_FALSE(fs::exists(dir / "part_4.csv"));
}

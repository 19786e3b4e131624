#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "lamkit/data.hpp"
#include "lamkit/errors.hpp"

using namespace lamkit;
using nlohmann::ordered_json;

namespace {

DatasetConfig two_feature_config() {
  return parse_config(ordered_json::parse(R"({
    "features": {
      "a": {"monotone": 1, "special_values": [-9]},
      "b": {"monotone": 0}
    }
  })"));
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config parsing") {
  const auto cfg = parse_config(ordered_json::parse(R"({
    "label": "bad",
    "special_value_threshold": -1,
    "features": {
      "x": {"monotone": -1, "special_values": [-7, -8], "max_leaves": 3, "lower_bound": 0},
      "c": {"categorical": true},
      "z": {}
    },
    "subscales": {"s1": ["x"], "s2": ["c", "z"]}
  })"));
  CHECK(cfg.label_column == "bad");
  CHECK(cfg.special_value_threshold == -1.0);
  REQUIRE(cfg.features.size() == 3);
  CHECK(cfg.features[0].monotone == Monotone::Decreasing);
  CHECK(cfg.features[0].special_values == std::vector<double>{-7, -8});
  CHECK(cfg.features[0].max_leaves == 3);
  CHECK(cfg.features[1].categorical);
  CHECK(cfg.features[2].max_leaves == 5);
  CHECK(cfg.feature_names() == std::vector<std::string>{"x", "c", "z"});
  CHECK(cfg.subscales.groups[0].first == "s1");
  CHECK(cfg.is_special(cfg.features[0], -7));
  CHECK(cfg.is_special(cfg.features[2], -2));
  CHECK_FALSE(cfg.is_special(cfg.features[2], -1));

  const auto back = parse_config(config_to_json(cfg));
  CHECK(config_to_json(back) == config_to_json(cfg));
}

TEST_CASE("config validation errors") {
  CHECK_THROWS_AS(parse_config(ordered_json::parse(R"({"features": {"c": {"categorical": true, "monotone": 1}}})")),
                  DataError);
  CHECK_THROWS_AS(parse_config(ordered_json::parse(R"({"features": {"x": {"max_leaves": 1}}})")), DataError);
  CHECK_THROWS_AS(parse_config(ordered_json::parse(R"({"features": {"x": {"monotone": 2}}})")), DataError);
  CHECK_THROWS_AS(parse_config(ordered_json::parse(R"({"features": {}})")), DataError);
  CHECK_THROWS_AS(parse_config(ordered_json::parse(R"({"features": {"target": {}}})")), DataError);
  const auto omit = error_of([] {
    parse_config(ordered_json::parse(R"({"features": {"x": {}, "y": {}}, "subscales": {"s": ["x"]}})"));
  });
  CHECK(omit.find("subscale partition violation") != std::string::npos);
  CHECK(omit.find("'y'") != std::string::npos);
  const auto dup = error_of([] {
    parse_config(ordered_json::parse(R"({"features": {"x": {}}, "subscales": {"s": ["x"], "t": ["x"]}})"));
  });
  CHECK(dup.find("more than one subscale") != std::string::npos);
}

TEST_CASE("load a small csv") {
  std::istringstream in("a,b,target\n1,2,0\n3,4,1\n5,6,1\n");
  const auto ds = read_csv(in, two_feature_config());
  CHECK(ds.rows() == 3);
  CHECK(ds.cols() == 2);
  CHECK(ds.labels() == std::vector<int>{0, 1, 1});
  CHECK(ds.at(2, 1) == 6.0);
  CHECK(ds.positives() == 2);
}

TEST_CASE("csv diagnostics are distinct") {
  const auto cfg = two_feature_config();
  auto load = [&](const std::string& text) {
    return error_of([&] {
      std::istringstream in(text);
      read_csv(in, cfg);
    });
  };
  CHECK(load("a,b,target\n1,2,2\n3,4,0\n").find("label outside {0,1}") != std::string::npos);
  CHECK(load("a,target\n1,0\n2,1\n").find("missing column 'b'") != std::string::npos);
  CHECK(load("a,b,target\n1,xyz,0\n2,3,1\n").find("non-numeric cell") != std::string::npos);
  CHECK(load("a,b,target\n1,2,1\n2,3,1\n").find("both classes") != std::string::npos);
  CHECK(load("a,b,target\n1,,0\n2,3,1\n").find("missing cell") != std::string::npos);
  CHECK(load("a,b,target\n1,2\n").find("fields") != std::string::npos);

  auto partitioned = cfg;
  partitioned.subscales.groups = {{"s", {"a"}}};
  const auto msg = error_of([&] {
    std::istringstream in("a,b,target\n1,2,0\n3,4,1\n");
    read_csv(in, partitioned);
  });
  CHECK(msg.find("subscale partition violation") != std::string::npos);
}

TEST_CASE("missing cells take the first special value") {
  std::istringstream in("a,b,target\n,2,0\n3,4,1\n");
  const auto ds = read_csv(in, two_feature_config());
  CHECK(ds.at(0, 0) == -9.0);
}

TEST_CASE("labels may be absent for scoring") {
  std::istringstream in("a,b\n1,2\n3,4\n");
  CsvOptions opts;
  opts.labels_optional = true;
  const auto ds = read_csv(in, two_feature_config(), opts);
  CHECK(ds.rows() == 2);
}

TEST_CASE("categorical text levels are coded and reused") {
  const auto cfg = parse_config(ordered_json::parse(R"({"features": {"c": {"categorical": true}, "x": {}}})"));
  std::istringstream in("c,x,target\nred,1,0\nblue,2,1\n\"gr,een\",3,1\nred,4,0\n");
  const auto ds = read_csv(in, cfg);
  REQUIRE(ds.levels().contains("c"));
  const auto& lv = ds.levels().at("c");
  CHECK(lv == std::vector<std::string>{"blue", "gr,een", "red"});
  CHECK(ds.at(0, 0) == 2.0);
  CHECK(ds.at(2, 0) == 1.0);

  CsvOptions opts;
  opts.labels_optional = true;
  opts.known_levels = &ds.levels();
  std::istringstream in2("c,x\nblue,1\npurple,2\n");
  const auto scored = read_csv(in2, cfg, opts);
  CHECK(scored.at(0, 0) == 0.0);
  CHECK(scored.at(1, 0) == -1.0);
}

TEST_CASE("dataset constructor validation") {
  Matrix x(2, 1);
  x << 1.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(Dataset(x, {0, 1}, {"a"}, {false}), DataError);
  Matrix y(2, 2);
  y << 1, 2, 3, 4;
  CHECK_THROWS_AS(Dataset(y, {0, 1}, {"a", "a"}, {false, false}), DataError);
  CHECK_THROWS_AS(Dataset(y, {0, 3}, {"a", "b"}, {false, false}), DataError);
  CHECK_THROWS_AS(Dataset(y, {0}, {"a", "b"}, {false, false}), DataError);
  const Dataset ok(y, {0, 1}, {"a", "b"}, {false, false});
  const std::vector<std::size_t> pick{1};
  const auto sub = ok.subset(pick);
  CHECK(sub.rows() == 1);
  CHECK(sub.at(0, 1) == 4.0);
}

TEST_CASE("csv round trip is bit exact") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  std::uniform_int_distribution<int> e(-300, 300);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index m = 50;
    Matrix x(m, 3);
    std::vector<int> y(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) {
      x(i, 0) = u(rng);
      x(i, 1) = std::ldexp(u(rng), e(rng));
      x(i, 2) = std::nextafter(u(rng), 0.0);
      y[static_cast<std::size_t>(i)] = static_cast<int>(i % 2);
    }
    const Dataset ds(x, y, {"p", "q", "r"}, {false, false, false});
    std::stringstream buf;
    write_csv(ds, buf);
    const auto cfg = parse_config(ordered_json::parse(R"({"features": {"p": {}, "q": {}, "r": {}}})"));
    const auto back = read_csv(buf, cfg);
    REQUIRE(back.rows() == ds.rows());
    bool identical = true;
    for (std::size_t i = 0; i < ds.rows(); ++i) {
      for (std::size_t j = 0; j < ds.cols(); ++j) identical = identical && back.at(i, j) == ds.at(i, j);
    }
    CHECK(identical);
    CHECK(back.labels() == ds.labels());
  }
}

TEST_CASE("stratified folds: exact divisibility") {
  const std::vector<int> y{1, 0, 1, 0, 1, 0, 1, 0, 1, 0};
  const auto plan = stratified_kfold(y, 5, 3);
  for (int f = 0; f < 5; ++f) {
    const auto test = plan.test_rows(f);
    REQUIRE(test.size() == 2);
    int pos = 0;
    for (auto i : test) pos += y[i];
    CHECK(pos == 1);
  }
  CHECK(stratified_kfold(y, 5, 3).assignments == plan.assignments);
}

TEST_CASE("stratified folds: 37 positives in 100 rows") {
  std::vector<int> y(100, 0);
  for (int i = 0; i < 37; ++i) y[static_cast<std::size_t>(i * 2)] = 1;
  const auto plan = stratified_kfold(y, 10, 17);
  for (int f = 0; f < 10; ++f) {
    int pos = 0;
    for (auto i : plan.test_rows(f)) pos += y[i];
    CHECK((pos == 3 || pos == 4));
  }
}

TEST_CASE("stratified folds partition rows for many seeds") {
  std::mt19937_64 rng(5);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const std::size_t m = 20 + static_cast<std::size_t>(rng() % 200);
    std::vector<int> y(m);
    for (auto& v : y) v = rng() % 3 == 0 ? 1 : 0;
    const int k = 2 + static_cast<int>(rng() % 9);
    const auto pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
    if (pos < static_cast<std::size_t>(k) || m - pos < static_cast<std::size_t>(k)) {
      CHECK_THROWS_AS(stratified_kfold(y, k, seed), DataError);
      continue;
    }
    const auto plan = stratified_kfold(y, k, seed);
    std::set<std::size_t> seen;
    for (int f = 0; f < k; ++f) {
      const auto test = plan.test_rows(f);
      const auto train = plan.train_rows(f);
      CHECK(test.size() + train.size() == m);
      std::size_t fold_pos = 0;
      for (auto i : test) {
        CHECK(seen.insert(i).second);
        fold_pos += static_cast<std::size_t>(y[i]);
      }
      const double ideal = static_cast<double>(pos) / k;
      CHECK(std::abs(static_cast<double>(fold_pos) - ideal) < 1.0);
      const double frac_gap = std::abs(static_cast<double>(fold_pos) / test.size() - static_cast<double>(pos) / m);
      CHECK(frac_gap <= 1.0 / test.size() + 1e-12);
    }
    CHECK(seen.size() == m);
  }
}

TEST_CASE("stratified folds reject small classes and bad k") {
  const std::vector<int> y{1, 0, 0, 0, 1};
  CHECK_THROWS_AS(stratified_kfold(y, 3, 0), DataError);
  CHECK_THROWS(stratified_kfold(y, 1, 0));
}

TEST_CASE("contiguous splits") {
  const auto parts = contiguous_splits(10, 4);
  REQUIRE(parts.size() == 3);
  CHECK(parts[0] == std::pair<std::size_t, std::size_t>{0, 4});
  CHECK(parts[2] == std::pair<std::size_t, std::size_t>{8, 10});
  CHECK_THROWS(contiguous_splits(10, 0));
}

TEST_CASE("format_double round trips") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e300, 123456789.0}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}

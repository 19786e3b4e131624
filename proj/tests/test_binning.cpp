#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "lamkit/binning.hpp"
#include "lamkit/errors.hpp"
#include "oracles.hpp"

using namespace lamkit;
using namespace lamkit::binning;
using nlohmann::ordered_json;

namespace {

// Every candidate midpoint between adjacent distinct values.
std::vector<double> candidates(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  std::vector<double> out;
  for (std::size_t i = 1; i < v.size(); ++i) out.push_back((v[i - 1] + v[i]) / 2.0);
  return out;
}

Dataset make_dataset(std::mt19937_64& rng, std::size_t m) {
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::uniform_int_distribution<int> lvl(0, 3);
  Matrix x(static_cast<Eigen::Index>(m), 4);
  std::vector<int> y(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    x(r, 0) = std::round(u(rng) * 10) / 10;
    x(r, 1) = std::round(u(rng) * 10) / 10;
    x(r, 2) = rng() % 10 == 0 ? -1.0 : std::round(u(rng));
    x(r, 3) = lvl(rng);
    const double logit = 0.4 * x(r, 0) - 0.3 * x(r, 1) + 0.2 * x(r, 3) - 1.0;
    y[i] = std::uniform_real_distribution<double>(0, 1)(rng) < oracle::logistic(logit) ? 1 : 0;
  }
  return Dataset(x, y, {"inc", "dec", "free", "cat"}, {false, false, false, true});
}

DatasetConfig make_config() {
  return parse_config(ordered_json::parse(R"({
    "special_value_threshold": 0,
    "features": {
      "inc": {"monotone": 1, "max_leaves": 5},
      "dec": {"monotone": -1, "max_leaves": 4},
      "free": {"monotone": 0, "special_values": [-1], "max_leaves": 3},
      "cat": {"categorical": true}
    }
  })"));
}

}  // namespace

TEST_CASE("fit_edges: clean split at the class boundary") {
  const std::vector<double> v{1, 2, 3, 4};
  const std::vector<int> y{0, 0, 1, 1};
  CHECK(fit_edges(v, y, 2) == std::vector<double>{2.5});
}

TEST_CASE("fit_edges: constant feature has no edges") {
  const std::vector<double> v{3, 3, 3, 3};
  const std::vector<int> y{0, 1, 0, 1};
  CHECK(fit_edges(v, y, 4).empty());
  CHECK_THROWS_AS(fit_edges(v, y, 1), std::invalid_argument);
}

TEST_CASE("fit_edges: interleaved labels pick a best candidate") {
  const std::vector<double> v{1, 2, 3, 4};
  const std::vector<int> y{0, 1, 0, 1};
  const auto edges = fit_edges(v, y, 2);
  REQUIRE(edges.size() == 1);
  const double chosen = oracle::split_gain(v, y, edges[0]);
  for (double c : candidates(v)) CHECK(chosen >= oracle::split_gain(v, y, c) - 1e-12);
}

TEST_CASE("fit_edges: first split is the exhaustive argmax") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 5 + rng() % 60;
    std::vector<double> v(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = static_cast<double>(rng() % 15);
      y[i] = (rng() % 100) < (v[i] > 7 ? 70u : 30u) ? 1 : 0;
    }
    const auto cands = candidates(v);
    const auto edges = fit_edges(v, y, 2);
    if (cands.empty()) {
      CHECK(edges.empty());
      continue;
    }
    double best = -1;
    double best_t = 0;
    for (double c : cands) {
      const double g = oracle::split_gain(v, y, c);
      if (g > best + 1e-12) {
        best = g;
        best_t = c;
      }
    }
    const bool pure = std::all_of(y.begin(), y.end(), [&](int t) { return t == y[0]; });
    if (pure) {
      CHECK(edges.empty());
      continue;
    }
    REQUIRE(edges.size() == 1);
    CHECK(edges[0] == best_t);
    CHECK(split_gain(v, y, edges[0]) == doctest::Approx(oracle::split_gain(v, y, edges[0])).epsilon(1e-12));
  }
}

TEST_CASE("fit_edges: budget, order and midpoints") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 30 + rng() % 100;
    std::vector<double> v(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = static_cast<double>(rng() % 40) / 4.0;
      y[i] = static_cast<int>(rng() % 2);
    }
    const int leaves = 2 + static_cast<int>(rng() % 6);
    const auto edges = fit_edges(v, y, leaves);
    CHECK(edges.size() <= static_cast<std::size_t>(leaves - 1));
    CHECK(std::is_sorted(edges.begin(), edges.end()));
    CHECK(std::adjacent_find(edges.begin(), edges.end()) == edges.end());
    const auto cands = candidates(v);
    for (double e : edges) CHECK(std::find(cands.begin(), cands.end(), e) != cands.end());
  }
}

TEST_CASE("encodings by mode") {
  std::mt19937_64 rng(2);
  const auto ds = make_dataset(rng, 400);
  const auto cfg = make_config();
  const auto fit = fit_transform(ds, cfg);
  const auto& t = fit.transform;
  REQUIRE(t.features().size() == 4);
  CHECK(t.features()[0].mode == EncodingMode::RightHalfIntervals);
  CHECK(t.features()[1].mode == EncodingMode::LeftHalfIntervals);
  CHECK(t.features()[2].mode == EncodingMode::TwoSided);
  CHECK(t.features()[3].mode == EncodingMode::Categorical);
  CHECK(std::is_sorted(t.features()[0].edges.rbegin(), t.features()[0].edges.rend()));
  CHECK(std::is_sorted(t.features()[1].edges.begin(), t.features()[1].edges.end()));

  // Constrained interval columns carry direction Increasing.
  for (const auto& c : t.columns()) {
    if (c.source_feature == "inc" || c.source_feature == "dec") CHECK(c.direction == Monotone::Increasing);
    else CHECK(c.direction == Monotone::Unconstrained);
  }
  CHECK(fit.encoded.rows() == 400);
  CHECK(static_cast<std::size_t>(fit.encoded.cols()) == t.output_dim());

  const auto& dec = t.features()[1];
  const auto e = t.encode(dec.edges.front() - 0.01, dec);
  for (double v : e) CHECK(v == 1.0);
  const auto top = t.encode(1e9, dec);
  for (std::size_t k = 0; k + 1 < top.size(); ++k) CHECK(top[k] == 0.0);
  CHECK(top.back() == 1.0);

  const auto& free = t.features()[2];
  for (double v : {0.0, 3.0, 5.5, 10.0}) {
    const auto b = t.encode(v, free);
    double hot = 0;
    for (std::size_t k = 0; k <= free.edges.size(); ++k) hot += b[k];
    CHECK(hot == 1.0);
    CHECK(b.back() == 0.0);  // special column
  }
  const auto sp = t.encode(-1.0, free);
  for (std::size_t k = 0; k + 1 < sp.size(); ++k) CHECK(sp[k] == 0.0);
  CHECK(sp.back() == 1.0);

  const auto& cat = t.features()[3];
  CHECK(cat.levels == std::vector<double>{0, 1, 2, 3});
  CHECK(t.encode(2.0, cat) == std::vector<double>{0, 0, 1, 0});
  CHECK(t.encode(-1.0, cat) == std::vector<double>{0, 0, 0, 0});
}

TEST_CASE("interval encodings are monotone in the raw value") {
  std::mt19937_64 rng(3);
  const auto ds = make_dataset(rng, 300);
  const auto fit = fit_transform(ds, make_config());
  const auto& t = fit.transform;
  std::uniform_real_distribution<double> u(0.0, 12.0);
  for (int trial = 0; trial < 5000; ++trial) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    const auto inc_a = t.encode(a, t.features()[0]);
    const auto inc_b = t.encode(b, t.features()[0]);
    const auto dec_a = t.encode(a, t.features()[1]);
    const auto dec_b = t.encode(b, t.features()[1]);
    for (std::size_t k = 0; k < inc_a.size(); ++k) CHECK(inc_a[k] <= inc_b[k]);
    for (std::size_t k = 0; k < dec_a.size(); ++k) CHECK(dec_a[k] >= dec_b[k]);
  }
}

TEST_CASE("special detection by threshold and by list") {
  const auto cfg = parse_config(ordered_json::parse(R"({
    "special_value_threshold": 0,
    "features": {"x": {"monotone": 1, "special_values": [-7, 999]}}
  })"));
  Matrix x(8, 1);
  x << -7, -3, 1, 2, 3, 999, 4, 5;
  const Dataset ds(x, {0, 1, 0, 1, 1, 0, 1, 0}, {"x"}, {false});
  const auto fit = fit_transform(ds, cfg);
  const auto& f = fit.transform.features()[0];
  CHECK(f.other_special);
  const auto names = fit.transform.columns();
  CHECK(names[names.size() - 3].name == "x==-7");
  CHECK(names[names.size() - 2].name == "x==999");
  CHECK(names.back().name == "x:other_special");
  const auto e999 = fit.transform.encode(999.0, f);
  CHECK(e999[e999.size() - 2] == 1.0);
  CHECK(e999[e999.size() - 3] == 0.0);
  const auto other = fit.transform.encode(-3.0, f);
  CHECK(other.back() == 1.0);
  CHECK(std::count(other.begin(), other.end(), 1.0) == 1);
}

TEST_CASE("raw style passes values through") {
  std::mt19937_64 rng(5);
  const auto ds = make_dataset(rng, 50);
  const auto fit = fit_transform(ds, make_config(), Style::Raw);
  const auto& t = fit.transform;
  CHECK(t.features()[0].mode == EncodingMode::Raw);
  CHECK(t.columns()[0].direction == Monotone::Increasing);
  CHECK(t.columns()[1].direction == Monotone::Decreasing);
  CHECK(t.features()[3].mode == EncodingMode::Categorical);
  for (std::size_t i = 0; i < ds.rows(); ++i) CHECK(fit.encoded(static_cast<Eigen::Index>(i), 0) == ds.at(i, 0));
}

TEST_CASE("transform JSON round trip preserves the encoding") {
  std::mt19937_64 rng(6);
  const auto ds = make_dataset(rng, 200);
  const auto fit = fit_transform(ds, make_config());
  const auto back = BinningTransform::from_json(ordered_json::parse(fit.transform.to_json().dump()));
  CHECK(back.output_dim() == fit.transform.output_dim());
  CHECK((back.transform(ds) - fit.encoded).cwiseAbs().maxCoeff() == 0.0);
  for (std::size_t k = 0; k < back.columns().size(); ++k) {
    CHECK(back.columns()[k].name == fit.transform.columns()[k].name);
    CHECK(back.columns()[k].direction == fit.transform.columns()[k].direction);
  }
  std::vector<double> short_row(2, 0.0);
  CHECK_THROWS_AS(back.encode_row(short_row), std::invalid_argument);
}

TEST_CASE("feature subsets and unknown features") {
  std::mt19937_64 rng(7);
  const auto ds = make_dataset(rng, 100);
  const std::vector<std::string> sub{"dec", "cat"};
  const auto fit = fit_transform(ds, make_config(), Style::Binned, sub);
  CHECK(fit.transform.features().size() == 2);
  CHECK(fit.transform.features()[0].source_index == 1);
  const std::vector<std::string> bad{"nope"};
  CHECK_THROWS_AS(fit_transform(ds, make_config(), Style::Binned, bad), DataError);
}

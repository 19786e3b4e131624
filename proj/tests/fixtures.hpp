// Randomised model-fitting scenarios shared by the unit and acceptance tests.
#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "lamkit/data.hpp"
#include "lamkit/ensemble.hpp"
#include "oracles.hpp"

namespace fixture {

using namespace lamkit;
using nlohmann::ordered_json;

constexpr std::size_t kFeatures = 5;

struct Scenario {
  Dataset ds;
  DatasetConfig config;
  std::vector<int> directions;
};

// Random data with random declared directions. Labels follow a mix of the
// declared directions and noise, so constraints bind on some features.
inline Scenario random_scenario(std::mt19937_64& rng, std::size_t m) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> dir(-1, 1);
  std::normal_distribution<double> n01(0.0, 1.0);
  Scenario s;
  s.directions.resize(kFeatures);
  for (auto& d : s.directions) d = dir(rng);
  std::vector<double> effect(kFeatures);
  for (auto& e : effect) e = n01(rng);

  Matrix x(static_cast<Eigen::Index>(m), kFeatures);
  std::vector<int> y(m);
  for (std::size_t j = 0; j < m; ++j) {
    const auto r = static_cast<Eigen::Index>(j);
    double z = 0.0;
    for (std::size_t i = 0; i < kFeatures; ++i) {
      const double v = u(rng) < 0.05 ? -1.0 : std::round(u(rng) * 200.0) / 20.0;
      x(r, static_cast<Eigen::Index>(i)) = v;
      if (v >= 0) z += effect[i] * (v - 5.0) / 3.0;
    }
    y[j] = u(rng) < oracle::logistic(z) ? 1 : 0;
  }
  std::vector<std::string> names;
  for (std::size_t i = 0; i < kFeatures; ++i) names.push_back("f" + std::to_string(i));
  s.ds = Dataset(x, y, names, std::vector<bool>(kFeatures, false));

  ordered_json doc;
  doc["special_value_threshold"] = 0.0;
  for (std::size_t i = 0; i < kFeatures; ++i) {
    doc["features"][names[i]] = {{"monotone", s.directions[i]},
                                 {"special_values", {-1.0}},
                                 {"max_leaves", 2 + static_cast<int>(rng() % 5)}};
  }
  doc["subscales"]["first"] = {"f0", "f1"};
  doc["subscales"]["second"] = {"f2", "f3", "f4"};
  s.config = parse_config(doc);
  return s;
}

// Counts probes where raising one feature moves the score against its
// declared direction. Comparison is exact.
inline int violations(const ensemble::Scorer& model, const Scenario& s, std::mt19937_64& rng, int probes) {
  std::uniform_real_distribution<double> u(0.0, 11.0);
  std::uniform_int_distribution<std::size_t> pick_row(0, s.ds.rows() - 1);
  int bad = 0;
  int done = 0;
  while (done < probes) {
    const std::size_t f = rng() % kFeatures;
    if (s.directions[f] == 0) continue;
    ++done;
    const auto base = s.ds.row(pick_row(rng));
    std::vector<double> lo(base.begin(), base.end());
    auto hi = lo;
    double a = u(rng), b = u(rng);
    if (rng() % 4 == 0) a = std::round(a * 20.0) / 20.0;  // land on data values and edges
    if (a > b) std::swap(a, b);
    lo[f] = a;
    hi[f] = b;
    const double s_lo = model.score(lo);
    const double s_hi = model.score(hi);
    if (s.directions[f] > 0 && s_hi < s_lo) ++bad;
    if (s.directions[f] < 0 && s_hi > s_lo) ++bad;
  }
  return bad;
}

}  // namespace fixture

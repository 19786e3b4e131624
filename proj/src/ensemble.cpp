#include "lamkit/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "lamkit/errors.hpp"
#include "lamkit/lam.hpp"
#include "lamkit/random.hpp"

namespace lamkit::ensemble {

double AdditivePipeline::logit(std::span<const double> raw_row) const {
  return glm::predict_logit(model, transform.encode_row(raw_row));
}

double AdditivePipeline::score(std::span<const double> raw_row) const {
  return lam::predict(model, transform.encode_row(raw_row));
}

AdditivePipeline linearise(const AdditivePipeline& p) {
  AdditivePipeline out;
  out.transform = p.transform;
  out.model = lam::linearise(p.model);
  return out;
}

namespace {

PipelineFit fit_pipeline(const Dataset& ds, const DatasetConfig& config, binning::Style style,
                         double c, const glm::SolverOptions& options,
                         std::span<const std::string> features) {
  auto encoded = binning::fit_transform(ds, config, style, features);
  auto fit = glm::train_nnlr(encoded.encoded, ds.labels(), encoded.transform.columns(), c, options);
  PipelineFit out;
  out.pipeline.transform = std::move(encoded.transform);
  out.pipeline.model = std::move(fit.model);
  out.diagnostics = fit.diagnostics;
  return out;
}

const SubscaleSpec& require_subscales(const DatasetConfig& config, const Dataset& ds) {
  if (config.subscales.empty()) throw DataError("model requires subscales in the configuration");
  config.subscales.validate_partition(ds.feature_names());
  return config.subscales;
}

}  // namespace

PipelineFit train_arm1(const Dataset& ds, const DatasetConfig& config, double c,
                       const glm::SolverOptions& options, std::span<const std::string> features) {
  return fit_pipeline(ds, config, binning::Style::Binned, c, options, features);
}

PipelineFit train_nnlr(const Dataset& ds, const DatasetConfig& config, double c,
                       const glm::SolverOptions& options) {
  return fit_pipeline(ds, config, binning::Style::Raw, c, options, {});
}

// ---------------------------------------------------------------------------

std::vector<double> TwoLayerModel::subscale_scores(std::span<const double> raw_row) const {
  std::vector<double> out;
  out.reserve(submodels.size());
  for (const auto& s : submodels) out.push_back(s.score(raw_row));
  return out;
}

double TwoLayerModel::score(std::span<const double> raw_row) const {
  return lam::predict(outer, subscale_scores(raw_row));
}

TwoLayerFit train_arm2(const Dataset& ds, const DatasetConfig& config, double c,
                       const glm::SolverOptions& options) {
  const auto& subscales = require_subscales(config, ds);
  TwoLayerFit fit;
  for (const auto& [name, members] : subscales.groups) {
    auto sub = train_arm1(ds, config, c, options, members);
    fit.model.subscale_names.push_back(name);
    fit.model.submodels.push_back(std::move(sub.pipeline));
    fit.diagnostics.push_back(sub.diagnostics);
  }

  Matrix risks(static_cast<Eigen::Index>(ds.rows()), static_cast<Eigen::Index>(subscales.size()));
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    const auto scores = fit.model.subscale_scores(ds.row(i));
    for (std::size_t s = 0; s < scores.size(); ++s) {
      risks(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) = scores[s];
    }
  }
  std::vector<ColumnInfo> columns;
  for (const auto& name : fit.model.subscale_names) columns.push_back({name, name, Monotone::Increasing});
  auto outer = glm::train_nnlr(risks, ds.labels(), std::move(columns), c, options);
  fit.model.outer = std::move(outer.model);
  fit.diagnostics.push_back(outer.diagnostics);
  return fit;
}

TwoLayerModel linearise(const TwoLayerModel& m) {
  TwoLayerModel out;
  out.subscale_names = m.subscale_names;
  for (const auto& s : m.submodels) out.submodels.push_back(linearise(s));
  out.outer = lam::linearise(m.outer);
  return out;
}

// ---------------------------------------------------------------------------

double hedge_learning_rate(std::size_t experts, std::size_t rows) {
  if (rows == 0) throw std::invalid_argument("hedge_learning_rate: no rows");
  return 8.0 * std::log(static_cast<double>(experts)) / static_cast<double>(rows);
}

std::vector<double> subscale_hedge(const std::vector<std::vector<double>>& expert_scores,
                                   std::span<const int> labels, std::uint64_t seed,
                                   const HedgeObserver& observer) {
  const std::size_t experts = expert_scores.size();
  if (experts < 2) throw std::invalid_argument("subscale_hedge: need at least two subscales");
  const std::size_t rows = labels.size();
  if (rows == 0) throw std::invalid_argument("subscale_hedge: no rows");
  for (const auto& scores : expert_scores) {
    if (scores.size() != rows) throw std::invalid_argument("subscale_hedge: score/label size mismatch");
    for (double s : scores) {
      if (!(s >= 0.0 && s <= 1.0)) {
        throw DataError("subscale_hedge: submodel output outside [0,1]");
      }
    }
  }

  const double eta = hedge_learning_rate(experts, rows);
  // Weights are carried as logarithms; w_S = exp(l_S) / sum exp(l). This is
  // the multiplicative update followed by renormalisation, without underflow.
  std::vector<double> log_w(experts, 0.0);
  std::vector<double> w(experts, 1.0 / static_cast<double>(experts));
  const auto order = seeded_permutation(rows, seed);
  for (std::size_t step = 0; step < rows; ++step) {
    const std::size_t j = order[step];
    const int y = labels[j];
    for (std::size_t s = 0; s < experts; ++s) {
      const double p = std::clamp(expert_scores[s][j], glm::kProbClip, 1.0 - glm::kProbClip);
      const double loss = y == 1 ? -std::log(p) : -std::log1p(-p);
      log_w[s] -= eta * loss;
    }
    const double top = *std::max_element(log_w.begin(), log_w.end());
    double total = 0.0;
    for (std::size_t s = 0; s < experts; ++s) {
      log_w[s] -= top;
      w[s] = std::exp(log_w[s]);
      total += w[s];
    }
    for (double& v : w) v /= total;
    if (observer) observer(step + 1, w);
  }
  return w;
}

std::vector<double> MixtureModel::subscale_scores(std::span<const double> raw_row) const {
  std::vector<double> out;
  out.reserve(submodels.size());
  for (std::size_t s = 0; s < submodels.size(); ++s) {
    if (!submodels[s]) {
      throw std::logic_error("mixture: subscale '" + names[s] + "' has externally supplied scores");
    }
    out.push_back(submodels[s]->score(raw_row));
  }
  return out;
}

double MixtureModel::score(std::span<const double> raw_row) const {
  return predict_mixture(*this, subscale_scores(raw_row));
}

double predict_mixture(const MixtureModel& m, std::span<const double> subscale_scores) {
  if (subscale_scores.size() != m.weights.size()) {
    throw std::invalid_argument("predict_mixture: expected " + std::to_string(m.weights.size()) +
                                " subscale scores, got " + std::to_string(subscale_scores.size()));
  }
  double total = 0.0;
  for (std::size_t s = 0; s < m.weights.size(); ++s) total += m.weights[s] * subscale_scores[s];
  return std::clamp(total, 0.0, 1.0);
}

std::vector<SubscaleContribution> attribute_subscales(const MixtureModel& m,
                                                      std::span<const double> subscale_scores) {
  if (subscale_scores.size() != m.weights.size()) {
    throw std::invalid_argument("attribute_subscales: subscale count mismatch");
  }
  std::vector<SubscaleContribution> out;
  for (std::size_t s = 0; s < m.weights.size(); ++s) {
    out.push_back({m.names[s], m.weights[s], subscale_scores[s], m.weights[s] * subscale_scores[s]});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.contribution > b.contribution;
  });
  return out;
}

MixtureFit train_mixture(const Dataset& ds, const DatasetConfig& config,
                         const MixtureOptions& options) {
  const auto& subscales = require_subscales(config, ds);
  if (options.hedge_holdout < 0.0 || options.hedge_holdout >= 1.0) {
    throw std::invalid_argument("train_mixture: hedge_holdout must lie in [0, 1)");
  }

  // Rows the submodels are fitted on, and rows the Hedge pass consumes.
  const Dataset* fit_rows = &ds;
  const Dataset* hedge_rows = &ds;
  Dataset fit_part, hedge_part;
  if (options.hedge_holdout > 0.0) {
    const auto order = seeded_permutation(ds.rows(), derive_seed(options.seed, 0x686f6c64));
    const auto held = static_cast<std::size_t>(
        std::ceil(options.hedge_holdout * static_cast<double>(ds.rows())));
    std::vector<std::size_t> hedge_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
    std::vector<std::size_t> fit_idx(order.begin() + static_cast<std::ptrdiff_t>(held), order.end());
    std::sort(hedge_idx.begin(), hedge_idx.end());
    std::sort(fit_idx.begin(), fit_idx.end());
    if (hedge_idx.empty() || fit_idx.empty()) throw DataError("train_mixture: holdout leaves an empty part");
    fit_part = ds.subset(fit_idx);
    hedge_part = ds.subset(hedge_idx);
    fit_rows = &fit_part;
    hedge_rows = &hedge_part;
  }

  MixtureFit fit;
  fit.model.seed = options.seed;
  for (const auto& [name, members] : subscales.groups) {
    auto sub = train_arm1(*fit_rows, config, options.c, options.solver, members);
    auto pipeline = std::make_shared<AdditivePipeline>(
        options.linearised ? linearise(sub.pipeline) : std::move(sub.pipeline));
    fit.model.names.push_back(name);
    fit.model.submodels.push_back(std::move(pipeline));
    fit.diagnostics.push_back(sub.diagnostics);
  }

  if (fit.model.names.size() == 1) {
    fit.model.weights = {1.0};
    return fit;
  }
  std::vector<std::vector<double>> scores(fit.model.names.size(),
                                          std::vector<double>(hedge_rows->rows()));
  for (std::size_t i = 0; i < hedge_rows->rows(); ++i) {
    for (std::size_t s = 0; s < fit.model.submodels.size(); ++s) {
      scores[s][i] = fit.model.submodels[s]->score(hedge_rows->row(i));
    }
  }
  fit.model.weights = subscale_hedge(scores, hedge_rows->labels(), options.seed);
  return fit;
}

}  // namespace lamkit::ensemble

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lamkit/binning.hpp"
#include "lamkit/data.hpp"
#include "lamkit/glm.hpp"
#include "lamkit/model.hpp"

namespace lamkit::ensemble {

/// Anything that maps a raw feature row to a risk in [0, 1].
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual double score(std::span<const double> raw_row) const = 0;
};

/// An encoding followed by an additive model: NNLR, ARM1 and their
/// linearised versions.
struct AdditivePipeline final : Scorer {
  binning::BinningTransform transform;
  AdditiveModel model;

  double score(std::span<const double> raw_row) const override;
  double logit(std::span<const double> raw_row) const;
};

AdditivePipeline linearise(const AdditivePipeline& p);

struct PipelineFit {
  AdditivePipeline pipeline;
  glm::FitDiagnostics diagnostics;
};

/// Binned monotone indicator encoding, then NNLR. Restricted to
/// `features` when non-empty.
PipelineFit train_arm1(const Dataset& ds, const DatasetConfig& config, double c = 0.0,
                       const glm::SolverOptions& options = {},
                       std::span<const std::string> features = {});

/// NNLR on unprocessed numeric features (categoricals and specials one-hot).
PipelineFit train_nnlr(const Dataset& ds, const DatasetConfig& config, double c = 0.0,
                       const glm::SolverOptions& options = {});

/// Per-subscale ARM1 scorers combined by a second NNLR layer whose inputs
/// are all constrained increasing.
struct TwoLayerModel final : Scorer {
  std::vector<std::string> subscale_names;
  std::vector<AdditivePipeline> submodels;
  AdditiveModel outer;

  std::vector<double> subscale_scores(std::span<const double> raw_row) const;
  double score(std::span<const double> raw_row) const override;
};

struct TwoLayerFit {
  TwoLayerModel model;
  std::vector<glm::FitDiagnostics> diagnostics;  // per subscale, then outer
};

/// First layer is trained and frozen before the outer layer sees its outputs.
TwoLayerFit train_arm2(const Dataset& ds, const DatasetConfig& config, double c = 0.0,
                       const glm::SolverOptions& options = {});

/// Linearises every subscale model and the outer layer.
TwoLayerModel linearise(const TwoLayerModel& m);

// ---------------------------------------------------------------------------
// SubscaleHedge

/// eta = 8 log(|S|) / M.
double hedge_learning_rate(std::size_t experts, std::size_t rows);

/// Called after every update with the 1-based step and the normalised weights.
using HedgeObserver = std::function<void(std::size_t, std::span<const double>)>;

/// Multiplicative-weights pass over one seeded shuffle of the rows.
/// expert_scores[s][j] is expert s's risk for row j. Losses use scores
/// clipped to [1e-12, 1 - 1e-12]. Requires at least two experts.
std::vector<double> subscale_hedge(const std::vector<std::vector<double>>& expert_scores,
                                   std::span<const int> labels, std::uint64_t seed,
                                   const HedgeObserver& observer = {});

/// Linear opinion pool over subscale scorers.
struct MixtureModel final : Scorer {
  std::vector<std::string> names;
  std::vector<double> weights;
  // Null entries are allowed for scores supplied from outside (files).
  std::vector<std::shared_ptr<const Scorer>> submodels;
  std::uint64_t seed = 0;

  std::vector<double> subscale_scores(std::span<const double> raw_row) const;
  double score(std::span<const double> raw_row) const override;
};

/// sum_S w_S r_S for already evaluated subscale scores.
double predict_mixture(const MixtureModel& m, std::span<const double> subscale_scores);

struct SubscaleContribution {
  std::string name;
  double weight = 0.0;
  double score = 0.0;
  double contribution = 0.0;  // weight * score
};

/// Contributions w_S r_S sorted descending (ties by subscale order).
std::vector<SubscaleContribution> attribute_subscales(const MixtureModel& m,
                                                      std::span<const double> subscale_scores);

struct MixtureOptions {
  bool linearised = false;
  double c = 0.0;
  std::uint64_t seed = 0;
  // Fraction of training rows held out from submodel fitting for the Hedge
  // pass. Zero feeds the Hedge pass the same rows the submodels saw.
  double hedge_holdout = 0.0;
  glm::SolverOptions solver;
};

struct MixtureFit {
  MixtureModel model;
  std::vector<glm::FitDiagnostics> diagnostics;
};

/// MixARM1 / MixLinARM1.
MixtureFit train_mixture(const Dataset& ds, const DatasetConfig& config,
                         const MixtureOptions& options);

}  // namespace lamkit::ensemble

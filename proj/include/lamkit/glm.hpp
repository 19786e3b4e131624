#pragma once

#include <span>
#include <vector>

#include "lamkit/matrix.hpp"
#include "lamkit/model.hpp"

namespace lamkit::glm {

/// Probabilities are clipped to [kProbClip, 1 - kProbClip] inside the loss.
inline constexpr double kProbClip = 1e-12;

struct SolverOptions {
  double tolerance = 1e-7;  // projected-gradient infinity norm
  int max_iterations = 50000;
  bool throw_on_nonconvergence = true;
};

struct FitDiagnostics {
  int iterations = 0;
  double projected_gradient_norm = 0.0;
  double objective = 0.0;
  bool converged = false;
};

struct NnlrFit {
  AdditiveModel model;
  FitDiagnostics diagnostics;
};

/// The penalised objective
///   (1/M) sum_j L(sigma(b + x_j . beta), y_j) + C * ||beta||^2
/// with clipped logistic loss L. The bias is not penalised.
class NnlrObjective {
 public:
  NnlrObjective(const Matrix& x, std::span<const int> y, double c);

  double value(double bias, std::span<const double> beta) const;
  /// Fills grad[0] with d/d bias and grad[1..] with d/d beta.
  double value_and_gradient(double bias, std::span<const double> beta,
                            std::span<double> grad) const;

  std::size_t dim() const { return static_cast<std::size_t>(x_.cols()); }

 private:
  const Matrix& x_;
  std::span<const int> y_;
  double c_;
};

/// Sign-constrained, l2-penalised logistic regression fitted by a damped
/// projected Newton method with an epsilon-active set.
/// Constant columns are pinned at zero (they are collinear with the bias).
NnlrFit train_nnlr(const Matrix& x, std::span<const int> y, std::vector<ColumnInfo> columns,
                   double c = 0.0, const SolverOptions& options = {});

/// ||theta - P(theta - grad)||_inf in the original coordinates, where P
/// projects onto the sign constraints.
double kkt_residual(const Matrix& x, std::span<const int> y, const AdditiveModel& model,
                    double c = 0.0);

double predict_logit(const AdditiveModel& m, std::span<const double> x);

/// Logistic link only; a linearised model must go through lam::predict_lam.
double predict_proba(const AdditiveModel& m, std::span<const double> x);

}  // namespace lamkit::glm

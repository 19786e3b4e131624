#pragma once

#include <span>
#include <vector>

#include "lamkit/model.hpp"

namespace lamkit::lam {

/// Pinned optimum of the clipped-linear sigmoid approximation. The Newton
/// search in find_alpha_star reproduces it; see verify_pinned_alpha.
inline constexpr double kAlphaStar = 80000.0 / 30773.0;

double sigmoid(double x);

/// 0 below -alpha, 1 above alpha, 1/2 + x/(2 alpha) in between.
double sigmoid_approx(double x, double alpha);

/// Spence's dilogarithm Li2(z) = -int_0^z ln(1-u)/u du for z <= 0.
double dilog(double z);

/// Integrated squared error between sigmoid_approx(., alpha) and sigmoid
/// over the whole real line, in closed form.
double squared_error(double alpha);

/// Derivative of squared_error by central differences (step 1e-6).
double squared_error_derivative(double alpha);

/// sup_x |sigmoid_approx(x, alpha) - sigmoid(x)|.
double max_abs_error(double alpha);

struct ApproximationReport {
  double alpha_star = 0.0;
  double se_at_min = 0.0;
  int newton_iterations = 0;
  double max_abs_error = 0.0;
  double derivative_at_min = 0.0;
  double pinned_alpha = kAlphaStar;
  double derivative_at_pinned = 0.0;
};

/// Newton iteration on SE'(alpha) from alpha = 2, until |SE'| <= tol.
/// Throws NumericalError after 100 iterations.
ApproximationReport find_alpha_star(double tol = 1e-10);

/// |SE'(kAlphaStar)| <= tol.
bool verify_pinned_alpha(double tol = 1e-6);

/// Same coefficients, linearised link. Throws if already linearised.
AdditiveModel linearise(const AdditiveModel& m);

/// Pi_[0,1](1/2 + beta_0/(2 alpha*) + sum_i beta_i x_i / (2 alpha*)).
double predict_lam(const AdditiveModel& m, std::span<const double> x);

/// Dispatches on the model's link.
double predict(const AdditiveModel& m, std::span<const double> x);

struct Attribution {
  double base = 0.5;  // 1/2 + beta_0 / (2 alpha*)
  std::vector<double> contributions;
  double score = 0.5;       // base + sum(contributions), before clipping
  double prediction = 0.5;  // clipped to [0, 1]
  bool faithful = true;     // logit within [-alpha*, alpha*]
};

Attribution attribute_lam(const AdditiveModel& m, std::span<const double> x);

namespace detail {
/// The closed form exactly as first derived, with both Li2(-e^-a) and
/// Li2(-e^a) terms. Kept for cross-checking the simplified evaluation.
double squared_error_unsimplified(double alpha);
}  // namespace detail

}  // namespace lamkit::lam

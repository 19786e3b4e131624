#include "lamkit/lam.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "lamkit/errors.hpp"
#include "lamkit/glm.hpp"

namespace lamkit::lam {

namespace {

using real = long double;

constexpr real kPi2Over6 = std::numbers::pi_v<real> * std::numbers::pi_v<real> / 6;

real dilog_series(real z) {
  real term = z;
  real sum = 0;
  for (int k = 1; k < 200; ++k) {
    const real add = term / (static_cast<real>(k) * k);
    sum += add;
    if (std::fabs(add) < 1e-22L) break;
    term *= z;
  }
  return sum;
}

// Valid for z < 1. Series when |z| <= 1/2; Landen's identity maps
// z in [-1, -1/2) to (1/3, 1/2]; inversion handles z < -1.
real dilog_ld(real z) {
  if (z == 0) return 0;
  if (z < -1) {
    const real l = std::log(-z);
    return -kPi2Over6 - l * l / 2 - dilog_ld(1 / z);
  }
  if (z < -0.5L) {
    const real l = std::log1p(-z);
    return -dilog_series(z / (z - 1)) - l * l / 2;
  }
  return dilog_series(z);
}

real se_ld(real a) {
  // From the closed form, using log(e^a + 1) = a + log(1 + e^-a) and the
  // inversion Li2(-e^a) = -pi^2/6 - a^2/2 - Li2(-e^-a) to avoid cancellation.
  const real li = dilog_ld(-std::exp(-a));
  return (a * a / 2 - 3 * a + 3 * kPi2Over6 + 6 * li) / (3 * a);
}

real se_derivative_ld(real a) {
  constexpr real h = 1e-6L;
  return (se_ld(a + h) - se_ld(a - h)) / (2 * h);
}

real se_second_derivative_ld(real a) {
  constexpr real h = 1e-4L;
  return (se_ld(a + h) - 2 * se_ld(a) + se_ld(a - h)) / (h * h);
}

void require_positive(double alpha, const char* who) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument(std::string(who) + ": alpha must be positive and finite");
  }
}

}  // namespace

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double sigmoid_approx(double x, double alpha) {
  require_positive(alpha, "sigmoid_approx");
  if (x < -alpha) return 0.0;
  if (x > alpha) return 1.0;
  return 0.5 + x / (2.0 * alpha);
}

double dilog(double z) {
  if (!(z <= 0.0)) throw std::invalid_argument("dilog: argument must be <= 0");
  return static_cast<double>(dilog_ld(z));
}

double squared_error(double alpha) {
  require_positive(alpha, "squared_error");
  return static_cast<double>(se_ld(alpha));
}

double squared_error_derivative(double alpha) {
  require_positive(alpha, "squared_error_derivative");
  return static_cast<double>(se_derivative_ld(alpha));
}

double detail::squared_error_unsimplified(double alpha) {
  require_positive(alpha, "squared_error_unsimplified");
  const real a = alpha;
  const real num = 7 * a * a + 6 * a * std::log1p(std::exp(-a)) - 6 * a * std::log(std::exp(a) + 1) +
                   3 * a - 3 * dilog_ld(-std::exp(-a)) + 3 * dilog_ld(-std::exp(a));
  return static_cast<double>(-num / (3 * a));
}

double max_abs_error(double alpha) {
  require_positive(alpha, "max_abs_error");
  // By symmetry only x >= 0 matters. Beyond alpha the gap 1 - sigma(x)
  // shrinks, so the candidates are x = alpha and the interior stationary
  // point where sigma'(x) = 1/(2 alpha).
  double worst = 1.0 - sigmoid(alpha);
  const double disc = 1.0 - 2.0 / alpha;
  if (disc > 0.0) {
    const double p = 0.5 * (1.0 + std::sqrt(disc));
    const double x0 = std::log(p / (1.0 - p));
    if (x0 < alpha) worst = std::max(worst, std::abs(sigmoid_approx(x0, alpha) - sigmoid(x0)));
  }
  return worst;
}

ApproximationReport find_alpha_star(double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("find_alpha_star: tol must be positive");
  real a = 2.0L;
  int iter = 0;
  real d1 = se_derivative_ld(a);
  while (std::fabs(d1) > tol) {
    if (iter >= 100) {
      throw NumericalError("find_alpha_star: Newton iteration did not converge in 100 steps");
    }
    const real d2 = se_second_derivative_ld(a);
    real next = a - d1 / d2;
    if (!(d2 > 0) || !(next > 0)) next = a / 2;
    a = next;
    d1 = se_derivative_ld(a);
    ++iter;
  }
  ApproximationReport report;
  report.alpha_star = static_cast<double>(a);
  report.se_at_min = static_cast<double>(se_ld(a));
  report.newton_iterations = iter;
  report.derivative_at_min = static_cast<double>(d1);
  report.max_abs_error = max_abs_error(report.alpha_star);
  report.derivative_at_pinned = static_cast<double>(se_derivative_ld(kAlphaStar));
  return report;
}

bool verify_pinned_alpha(double tol) {
  return std::fabs(se_derivative_ld(kAlphaStar)) <= tol;
}

AdditiveModel linearise(const AdditiveModel& m) {
  if (m.link == Link::Linearised) throw std::logic_error("linearise: model is already linearised");
  AdditiveModel out = m;
  out.link = Link::Linearised;
  out.alpha_star = kAlphaStar;
  return out;
}

namespace {

void require_linearised(const AdditiveModel& m, const char* who) {
  if (m.link != Link::Linearised || !(m.alpha_star > 0.0)) {
    throw std::logic_error(std::string(who) + ": model is not linearised");
  }
}

}  // namespace

double predict_lam(const AdditiveModel& m, std::span<const double> x) {
  require_linearised(m, "predict_lam");
  if (x.size() != m.dim()) throw std::invalid_argument("predict_lam: dimension mismatch");
  const double scale = 1.0 / (2.0 * m.alpha_star);
  double score = 0.5 + m.bias * scale;
  for (std::size_t i = 0; i < x.size(); ++i) score += m.coefficients[i] * x[i] * scale;
  return std::clamp(score, 0.0, 1.0);
}

double predict(const AdditiveModel& m, std::span<const double> x) {
  return m.link == Link::Linearised ? predict_lam(m, x) : glm::predict_proba(m, x);
}

Attribution attribute_lam(const AdditiveModel& m, std::span<const double> x) {
  require_linearised(m, "attribute_lam");
  if (x.size() != m.dim()) throw std::invalid_argument("attribute_lam: dimension mismatch");
  const double scale = 1.0 / (2.0 * m.alpha_star);
  Attribution out;
  out.base = 0.5 + m.bias * scale;
  out.contributions.resize(x.size());
  out.score = out.base;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.contributions[i] = m.coefficients[i] * x[i] * scale;
    out.score += out.contributions[i];
  }
  out.prediction = std::clamp(out.score, 0.0, 1.0);
  const double logit = glm::predict_logit(m, x);
  out.faithful = logit >= -m.alpha_star && logit <= m.alpha_star;
  return out;
}

}  // namespace lamkit::lam

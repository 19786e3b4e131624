#include "lamkit/glm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "lamkit/errors.hpp"
#include "lamkit/lam.hpp"

namespace lamkit::glm {

namespace {

// Logit at which the clipped probability saturates.
const double kLogitCap = std::log((1.0 - kProbClip) / kProbClip);

double softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// Clipped logistic loss and its derivative with respect to the logit.
double loss_and_slope(double z, int y, double& slope) {
  if (z >= kLogitCap || z <= -kLogitCap) {
    slope = 0.0;
    const double zc = std::clamp(z, -kLogitCap, kLogitCap);
    return y == 1 ? softplus(-zc) : softplus(zc);
  }
  slope = lam::sigmoid(z) - static_cast<double>(y);
  return y == 1 ? softplus(-z) : softplus(z);
}

double project(double v, Monotone dir) {
  switch (dir) {
    case Monotone::Increasing: return std::max(v, 0.0);
    case Monotone::Decreasing: return std::min(v, 0.0);
    case Monotone::Unconstrained: return v;
  }
  return v;
}

double residual_component(double beta, double grad, Monotone dir) {
  return std::abs(beta - project(beta - grad, dir));
}

}  // namespace

NnlrObjective::NnlrObjective(const Matrix& x, std::span<const int> y, double c)
    : x_(x), y_(y), c_(c) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw std::invalid_argument("NnlrObjective: row count and label count differ");
  }
}

double NnlrObjective::value(double bias, std::span<const double> beta) const {
  std::vector<double> grad(beta.size() + 1);
  return value_and_gradient(bias, beta, grad);
}

double NnlrObjective::value_and_gradient(double bias, std::span<const double> beta,
                                         std::span<double> grad) const {
  const auto m = x_.rows();
  const auto d = x_.cols();
  std::fill(grad.begin(), grad.end(), 0.0);
  double total = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    double z = bias;
    for (Eigen::Index i = 0; i < d; ++i) z += x_(j, i) * beta[static_cast<std::size_t>(i)];
    double slope = 0.0;
    total += loss_and_slope(z, y_[static_cast<std::size_t>(j)], slope);
    grad[0] += slope;
    for (Eigen::Index i = 0; i < d; ++i) grad[static_cast<std::size_t>(i) + 1] += slope * x_(j, i);
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  double penalty = 0.0;
  grad[0] *= inv_m;
  for (std::size_t i = 0; i < beta.size(); ++i) {
    grad[i + 1] = grad[i + 1] * inv_m + 2.0 * c_ * beta[i];
    penalty += beta[i] * beta[i];
  }
  return total * inv_m + c_ * penalty;
}

double kkt_residual(const Matrix& x, std::span<const int> y, const AdditiveModel& model, double c) {
  NnlrObjective objective(x, y, c);
  std::vector<double> grad(model.dim() + 1);
  objective.value_and_gradient(model.bias, model.coefficients, grad);
  double worst = std::abs(grad[0]);
  for (std::size_t i = 0; i < model.dim(); ++i) {
    worst = std::max(worst, residual_component(model.coefficients[i], grad[i + 1],
                                               model.columns[i].direction));
  }
  return worst;
}

namespace {

// The problem is solved in standardised coordinates
//   z_i = (x_i - mu_i) / s_i,   beta'_i = s_i beta_i,   b' = b + sum_i mu_i beta_i
// which preserves coefficient signs and leaves the objective unchanged when
// the penalty is written as C * sum_i (beta'_i / s_i)^2.
class StandardisedProblem {
 public:
  StandardisedProblem(const Matrix& x, std::span<const int> y, double c,
                      const std::vector<Monotone>& directions)
      : y_(y), c_(c) {
    const auto m = x.rows();
    const auto d = x.cols();
    mean_.assign(static_cast<std::size_t>(d), 0.0);
    scale_.assign(static_cast<std::size_t>(d), 0.0);
    for (Eigen::Index i = 0; i < d; ++i) {
      const double mu = x.col(i).mean();
      const double var = (x.col(i).array() - mu).square().mean();
      const double s = std::sqrt(var);
      mean_[static_cast<std::size_t>(i)] = mu;
      if (s > 1e-12 * std::max(1.0, std::abs(mu))) {
        scale_[static_cast<std::size_t>(i)] = s;
        active_.push_back(i);
      }
    }
    z_.resize(m, static_cast<Eigen::Index>(active_.size()));
    for (std::size_t a = 0; a < active_.size(); ++a) {
      const auto i = active_[a];
      z_.col(static_cast<Eigen::Index>(a)) =
          (x.col(i).array() - mean_[static_cast<std::size_t>(i)]) / scale_[static_cast<std::size_t>(i)];
      directions_.push_back(directions[static_cast<std::size_t>(i)]);
      inv_scale_sq_.push_back(1.0 / (scale_[static_cast<std::size_t>(i)] * scale_[static_cast<std::size_t>(i)]));
    }
    logits_.resize(m);
    slopes_.resize(m);
  }

  std::size_t dim() const { return active_.size() + 1; }

  // theta = (b', beta'_active)
  double evaluate(const Vector& theta, Vector& grad) {
    const auto p = static_cast<Eigen::Index>(active_.size());
    logits_.noalias() = z_ * theta.tail(p);
    logits_.array() += theta(0);
    double total = 0.0;
    for (Eigen::Index j = 0; j < logits_.size(); ++j) {
      double slope = 0.0;
      total += loss_and_slope(logits_(j), y_[static_cast<std::size_t>(j)], slope);
      slopes_(j) = slope;
    }
    const double inv_m = 1.0 / static_cast<double>(logits_.size());
    grad.resize(theta.size());
    grad(0) = slopes_.sum() * inv_m;
    grad.tail(p).noalias() = z_.transpose() * slopes_;
    grad.tail(p) *= inv_m;
    double penalty = 0.0;
    for (Eigen::Index a = 0; a < p; ++a) {
      const double w = inv_scale_sq_[static_cast<std::size_t>(a)];
      penalty += w * theta(a + 1) * theta(a + 1);
      grad(a + 1) += 2.0 * c_ * w * theta(a + 1);
    }
    return total * inv_m + c_ * penalty;
  }

  // Hessian of the objective at the point last passed to evaluate().
  void hessian(Eigen::MatrixXd& h) const {
    const auto m = logits_.size();
    const auto p = static_cast<Eigen::Index>(active_.size());
    Eigen::MatrixXd a(m, p + 1);
    for (Eigen::Index j = 0; j < m; ++j) {
      const double z = logits_(j);
      double w = 0.0;
      if (z < kLogitCap && z > -kLogitCap) {
        const double sg = lam::sigmoid(z);
        w = sg * (1.0 - sg);
      }
      const double r = std::sqrt(w);
      a(j, 0) = r;
      a.row(j).tail(p) = r * z_.row(j);
    }
    h.setZero(p + 1, p + 1);
    h.selfadjointView<Eigen::Lower>().rankUpdate(a.transpose(), 1.0 / static_cast<double>(m));
    h = h.selfadjointView<Eigen::Lower>();
    for (Eigen::Index k = 0; k < p; ++k) {
      h(k + 1, k + 1) += 2.0 * c_ * inv_scale_sq_[static_cast<std::size_t>(k)];
    }
  }

  // True when coordinate k sits within eps of its bound and the gradient
  // pushes it further out.
  bool at_bound(const Vector& theta, const Vector& g, Eigen::Index k, double eps) const {
    if (k == 0) return false;
    switch (directions_[static_cast<std::size_t>(k - 1)]) {
      case Monotone::Increasing: return theta(k) <= eps && g(k) > 0.0;
      case Monotone::Decreasing: return theta(k) >= -eps && g(k) < 0.0;
      case Monotone::Unconstrained: return false;
    }
    return false;
  }

  void project(Vector& theta) const {
    for (std::size_t a = 0; a < directions_.size(); ++a) {
      const auto k = static_cast<Eigen::Index>(a) + 1;
      theta(k) = glm::project(theta(k), directions_[a]);
    }
  }

  // Back to original coordinates: (bias, beta).
  void recover(const Vector& theta, double& bias, std::vector<double>& beta) const {
    beta.assign(mean_.size(), 0.0);
    bias = theta(0);
    for (std::size_t a = 0; a < active_.size(); ++a) {
      const auto i = static_cast<std::size_t>(active_[a]);
      beta[i] = theta(static_cast<Eigen::Index>(a) + 1) / scale_[i];
      bias -= beta[i] * mean_[i];
    }
  }

  // KKT residual in original coordinates from the standardised gradient.
  // Uses d/d beta_i = s_i d/d beta'_i + mu_i d/d b'.
  double original_residual(const Vector& theta, const Vector& grad,
                           const std::vector<Monotone>& directions) const {
    double worst = std::abs(grad(0));
    std::vector<double> g(mean_.size());
    std::vector<double> beta(mean_.size(), 0.0);
    for (std::size_t i = 0; i < mean_.size(); ++i) g[i] = mean_[i] * grad(0);
    for (std::size_t a = 0; a < active_.size(); ++a) {
      const auto i = static_cast<std::size_t>(active_[a]);
      const auto k = static_cast<Eigen::Index>(a) + 1;
      g[i] += scale_[i] * grad(k);
      beta[i] = theta(k) / scale_[i];
    }
    for (std::size_t i = 0; i < mean_.size(); ++i) {
      worst = std::max(worst, residual_component(beta[i], g[i], directions[i]));
    }
    return worst;
  }

 private:
  std::span<const int> y_;
  double c_;
  std::vector<double> mean_;
  std::vector<double> scale_;
  std::vector<Eigen::Index> active_;
  std::vector<Monotone> directions_;
  std::vector<double> inv_scale_sq_;
  Eigen::MatrixXd z_;
  Vector logits_;
  Vector slopes_;
};

}  // namespace

NnlrFit train_nnlr(const Matrix& x, std::span<const int> y, std::vector<ColumnInfo> columns,
                   double c, const SolverOptions& options) {
  if (x.rows() < 1) throw std::invalid_argument("train_nnlr: need at least one row");
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw std::invalid_argument("train_nnlr: row count and label count differ");
  }
  if (static_cast<std::size_t>(x.cols()) != columns.size()) {
    throw std::invalid_argument("train_nnlr: column metadata does not match the matrix");
  }
  if (!(c >= 0.0)) throw std::invalid_argument("train_nnlr: C must be nonnegative");

  NnlrFit fit;
  fit.model.columns = std::move(columns);
  fit.model.coefficients.assign(static_cast<std::size_t>(x.cols()), 0.0);
  const auto directions = directions_of(fit.model.columns);

  const auto positives = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
  const double rate = static_cast<double>(positives) / static_cast<double>(y.size());
  const double clipped_rate = std::clamp(rate, kProbClip, 1.0 - kProbClip);
  if (positives == 0 || positives == y.size()) {
    fit.model.bias = std::log(clipped_rate / (1.0 - clipped_rate));
    fit.diagnostics.converged = true;
    fit.diagnostics.projected_gradient_norm = kkt_residual(x, y, fit.model, c);
    fit.diagnostics.objective = NnlrObjective(x, y, c).value(fit.model.bias, fit.model.coefficients);
    return fit;
  }

  StandardisedProblem problem(x, y, c, directions);
  const auto n = static_cast<Eigen::Index>(problem.dim());
  Vector theta = Vector::Zero(n);
  theta(0) = std::log(clipped_rate / (1.0 - clipped_rate));

  constexpr double kArmijo = 1e-4;
  constexpr double kActiveCap = 1e-2;

  Vector grad;
  double f = problem.evaluate(theta, grad);
  double residual = problem.original_residual(theta, grad, directions);

  int iter = 0;
  Vector trial(n);
  Vector trial_grad;
  Eigen::MatrixXd hessian;
  std::vector<Eigen::Index> free_idx;
  for (; iter < options.max_iterations && residual > options.tolerance; ++iter) {
    problem.hessian(hessian);

    // Bertsekas' epsilon-active set: coordinates at (or within eps of) their
    // bound whose gradient pushes outward are moved by a scaled gradient
    // step; the rest take a damped Newton step.
    Vector probe = theta - grad;
    problem.project(probe);
    const double eps = std::min(kActiveCap, (probe - theta).lpNorm<Eigen::Infinity>());
    Vector direction = Vector::Zero(n);
    free_idx.clear();
    for (Eigen::Index k = 0; k < n; ++k) {
      if (problem.at_bound(theta, grad, k, eps)) {
        direction(k) = -grad(k) / std::max(hessian(k, k), 1e-12);
      } else {
        free_idx.push_back(k);
      }
    }
    if (!free_idx.empty()) {
      const auto nf = static_cast<Eigen::Index>(free_idx.size());
      Eigen::MatrixXd h(nf, nf);
      Vector g(nf);
      double diag_max = 0.0;
      for (Eigen::Index a = 0; a < nf; ++a) {
        g(a) = grad(free_idx[static_cast<std::size_t>(a)]);
        for (Eigen::Index b = 0; b < nf; ++b) {
          h(a, b) = hessian(free_idx[static_cast<std::size_t>(a)], free_idx[static_cast<std::size_t>(b)]);
        }
        diag_max = std::max(diag_max, h(a, a));
      }
      // Damping proportional to the gradient keeps the step well defined on
      // the flat directions created by collinear indicator columns.
      const double mu = 1e-4 * g.lpNorm<Eigen::Infinity>() + 1e-12 * std::max(diag_max, 1.0);
      h.diagonal().array() += mu;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
      Vector step = ldlt.solve(-g);
      if (ldlt.info() != Eigen::Success || !step.allFinite() || !(g.dot(step) < 0.0)) {
        step = -g.array() / h.diagonal().array();
      }
      for (Eigen::Index a = 0; a < nf; ++a) direction(free_idx[static_cast<std::size_t>(a)]) = step(a);
    }

    // Projected arc search, then a projected-gradient step if that fails.
    bool accepted = false;
    double f_trial = 0.0;
    for (int pass = 0; pass < 2 && !accepted; ++pass) {
      if (pass == 1) {
        const double lipschitz = std::max(hessian.diagonal().maxCoeff(), 1e-12) * static_cast<double>(n);
        direction = -grad / lipschitz;
      }
      double t = 1.0;
      for (int ls = 0; ls < 60; ++ls) {
        trial = theta + t * direction;
        problem.project(trial);
        const double decrease = grad.dot(trial - theta);
        if (decrease < 0.0) {
          f_trial = problem.evaluate(trial, trial_grad);
          if (f_trial <= f + kArmijo * decrease) {
            accepted = true;
            break;
          }
        }
        t *= 0.5;
      }
    }
    if (!accepted) break;

    theta.swap(trial);
    grad.swap(trial_grad);
    f = f_trial;
    residual = problem.original_residual(theta, grad, directions);
  }

  problem.recover(theta, fit.model.bias, fit.model.coefficients);
  fit.diagnostics.iterations = iter;
  fit.diagnostics.objective = f;
  fit.diagnostics.projected_gradient_norm = residual;
  fit.diagnostics.converged = residual <= options.tolerance;
  if (!fit.diagnostics.converged && options.throw_on_nonconvergence) {
    std::ostringstream msg;
    msg << "train_nnlr: no convergence after " << iter
        << " iterations, projected-gradient norm " << residual;
    throw ConvergenceError(msg.str(), iter, residual);
  }
  return fit;
}

double predict_logit(const AdditiveModel& m, std::span<const double> x) {
  if (x.size() != m.coefficients.size()) {
    throw std::invalid_argument("predict_logit: row has " + std::to_string(x.size()) +
                                " entries, model expects " + std::to_string(m.coefficients.size()));
  }
  double z = m.bias;
  for (std::size_t i = 0; i < x.size(); ++i) z += m.coefficients[i] * x[i];
  return z;
}

double predict_proba(const AdditiveModel& m, std::span<const double> x) {
  if (m.link != Link::Logistic) {
    throw std::logic_error("predict_proba: model is linearised; use lam::predict_lam");
  }
  return lam::sigmoid(predict_logit(m, x));
}

}  // namespace lamkit::glm

#include <algorithm>
#include <cmath>
#include <set>

#include "hiceaa/analytics.hpp"

namespace hiceaa {

namespace {

// log(1 + e^z) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double clipped_logit(double rate) {
  const double p = std::clamp(rate, 0.01, 0.99);
  return std::log(p) - std::log1p(-p);
}

double axis_value(std::uint64_t key, FitAxis axis) {
  const auto k = static_cast<double>(key);
  return axis == FitAxis::sqrt_pixels ? std::sqrt(k) : k;
}

}  // namespace

FitObjective::FitObjective(const ErrorTable& table, FitLoss loss, FitAxis axis) : loss_(loss) {
  const bool width_axis = axis == FitAxis::width;
  if (width_axis != (table.keyed_by == TableKey::resolution)) {
    throw DomainError(std::string("fit axis '") + std::string(to_string(axis)) +
                      "' does not match the table's key");
  }
  for (const auto& row : table.rows) {
    if (row.trials == 0) continue;
    x_.push_back(axis_value(row.key, axis));
    trials_.push_back(static_cast<double>(row.trials));
    errors_.push_back(static_cast<double>(row.errors));
    rate_.push_back(row.error_rate);
  }
}

double FitObjective::value(double alpha, double center) const {
  double sum = 0.0;
  for (std::size_t i = 0; i < x_.size(); ++i) {
    const double t = alpha * x_[i] + center;
    if (loss_ == FitLoss::weighted_least_squares) {
      const double d = rate_[i] - logistic(t);
      sum += trials_[i] * d * d;
    } else {
      // -[e ln f + (n - e) ln(1 - f)], with ln f = -softplus(-t), ln(1 - f) = -softplus(t).
      sum += errors_[i] * softplus(-t) + (trials_[i] - errors_[i]) * softplus(t);
    }
  }
  return sum;
}

std::array<double, 2> FitObjective::gradient(double alpha, double center) const {
  double ga = 0.0, gc = 0.0;
  for (std::size_t i = 0; i < x_.size(); ++i) {
    const double f = logistic(alpha * x_[i] + center);
    double dt;  // d loss_i / d t
    if (loss_ == FitLoss::weighted_least_squares) {
      dt = -2.0 * trials_[i] * (rate_[i] - f) * f * (1.0 - f);
    } else {
      dt = trials_[i] * f - errors_[i];
    }
    ga += dt * x_[i];
    gc += dt;
  }
  return {ga, gc};
}

SigmoidModel fit_sigmoid(const ErrorTable& table, const FitOptions& options) {
  const FitObjective objective(table, options.loss, options.axis);
  const auto& x = objective.x_;
  const auto& rate = objective.rate_;
  const std::size_t n = x.size();

  const std::set<double> distinct_x(x.begin(), x.end());
  if (n < 2 || distinct_x.size() < 2) {
    throw InsufficientData("sigmoid fit needs at least 2 rows with trials > 0, got " + std::to_string(n));
  }

  SigmoidModel model;
  model.loss = options.loss;
  model.axis = options.axis;
  model.n_points = n;

  if (std::all_of(rate.begin(), rate.end(), [&](double r) { return r == rate.front(); })) {
    model.alpha = 0.0;
    model.center = clipped_logit(rate.front());
    model.residual = objective.value(model.alpha, model.center);
    model.converged = true;
    throw DegenerateData(model);
  }

  // Start: ordinary least squares of logit(clipped rate) on x.
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += clipped_logit(rate[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (clipped_logit(rate[i]) - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  double alpha = sxy / sxx;
  double center = my - alpha * mx;
  double current = objective.value(alpha, center);

  // Levenberg-Marquardt damping around Gauss-Newton (WLS) or Newton (binomial;
  // for the canonical logit link its Hessian has the same form).
  double lambda = 1e-3;
  std::size_t iter = 0;
  bool converged = false;
  while (iter < options.max_iterations) {
    ++iter;
    double h_aa = 0.0, h_ac = 0.0, h_cc = 0.0, b_a = 0.0, b_c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double f = logistic(alpha * x[i] + center);
      const double slope = f * (1.0 - f);
      double weight, push;
      if (options.loss == FitLoss::weighted_least_squares) {
        weight = objective.trials_[i] * slope * slope;
        push = objective.trials_[i] * slope * (rate[i] - f);
      } else {
        weight = objective.trials_[i] * slope;
        push = objective.errors_[i] - objective.trials_[i] * f;
      }
      h_aa += weight * x[i] * x[i];
      h_ac += weight * x[i];
      h_cc += weight;
      b_a += push * x[i];
      b_c += push;
    }

    const double d_aa = h_aa + lambda * (h_aa + 1e-12);
    const double d_cc = h_cc + lambda * (h_cc + 1e-12);
    const double det = d_aa * d_cc - h_ac * h_ac;
    double step_a = 0.0, step_c = 0.0;
    if (det > 0.0 && std::isfinite(det)) {
      step_a = (d_cc * b_a - h_ac * b_c) / det;
      step_c = (d_aa * b_c - h_ac * b_a) / det;
    }

    const double next_alpha = alpha + step_a;
    const double next_center = center + step_c;
    const double next = objective.value(next_alpha, next_center);
    const bool accepted = std::isfinite(next) && next <= current;
    if (accepted) {
      alpha = next_alpha;
      center = next_center;
      current = next;
      lambda = std::max(lambda * 0.1, 1e-15);
    } else {
      lambda *= 10.0;
    }
    if (options.on_step) {
      options.on_step(FitStep{iter, alpha, center, current, accepted});
    }

    if (std::hypot(step_a, step_c) < options.step_tolerance || lambda > 1e20) {
      converged = true;
      break;
    }
  }

  model.alpha = alpha;
  model.center = center;
  model.residual = current;
  model.iterations = iter;
  model.converged = converged;
  return model;
}

}  // namespace hiceaa

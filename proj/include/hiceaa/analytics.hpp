#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hiceaa/errors.hpp"
#include "hiceaa/session.hpp"

namespace hiceaa {

// ---- aggregate tables -------------------------------------------------------

enum class TableKey { resolution, pixels };

struct ErrorTableRow {
  std::uint64_t key = 0;  // width in pixels, or object-pixel count (bin lower bound)
  std::uint64_t trials = 0;
  std::uint64_t errors = 0;
  double error_rate = 0.0;

  friend bool operator==(const ErrorTableRow&, const ErrorTableRow&) = default;
};

struct ErrorTable {
  TableKey keyed_by = TableKey::resolution;
  std::uint64_t bin_width = 1;
  std::vector<ErrorTableRow> rows;  // ascending key

  std::uint64_t total_trials() const noexcept;
  std::uint64_t total_errors() const noexcept;

  friend bool operator==(const ErrorTable&, const ErrorTable&) = default;
};

/// Row with error_rate filled in from the counts.
ErrorTableRow make_row(std::uint64_t key, std::uint64_t trials, std::uint64_t errors);

/// Abstentions (-1) count as errors like any other incorrect selection.
ErrorTable aggregate_by_resolution(std::span<const TrialRecord> records);

/// Keys are object-pixel counts merged into [k*bin, (k+1)*bin) bins keyed by
/// their lower bound. bin_width 0 is rejected with DomainError.
ErrorTable aggregate_by_pixels(std::span<const TrialRecord> records, std::uint64_t bin_width = 1);

/// `key,trials,errors,error_rate` with the rate printed to 6 decimals.
std::string to_csv(const ErrorTable& table);

// ---- sigmoid error model ----------------------------------------------------

enum class FitLoss { weighted_least_squares, binomial_likelihood };

/// What the fitted x axis is. Width is the primary mode.
enum class FitAxis { width, pixels, sqrt_pixels };

std::string_view to_string(FitLoss loss);
std::string_view to_string(FitAxis axis);
FitLoss parse_fit_loss(std::string_view text);  // "wls" | "binomial"; DomainError otherwise

/// y = 1 / (1 + exp(-(alpha * x + center))). `center` is the intercept; the
/// 50% point sits at x = -center / alpha.
struct SigmoidModel {
  double alpha = 0.0;
  double center = 0.0;
  double residual = 0.0;  // loss value at the solution
  std::size_t n_points = 0;
  FitLoss loss = FitLoss::weighted_least_squares;
  FitAxis axis = FitAxis::width;
  std::size_t iterations = 0;
  bool converged = false;
};

/// The constants reported for the MNIST human study.
inline constexpr double kStudyAlpha = -0.95;
inline constexpr double kStudyCenter = 6.5;

SigmoidModel study_model();

/// Logistic function evaluated without overflow for any finite t.
double logistic(double t) noexcept;

double predict_error(double x, const SigmoidModel& model) noexcept;

struct ResolutionRequirement {
  double width = 0.0;           // real-valued solution of predict_error(width) == target
  std::int64_t integer_width = 0;  // ceil(width)
};

/// Inverts the model. Throws DomainError unless 0 < target_error < 1, and
/// DegenerateModel when alpha == 0.
ResolutionRequirement required_resolution(double target_error, const SigmoidModel& model);

/// Raised when every usable row has the same error rate. Carries the flat
/// (alpha = 0) model that reproduces that rate.
class DegenerateData : public Error {
 public:
  explicit DegenerateData(SigmoidModel fallback)
      : Error("all error rates identical; reporting flat fit with alpha = 0"), fallback_(fallback) {}
  const SigmoidModel& fallback() const noexcept { return fallback_; }

 private:
  SigmoidModel fallback_;
};

/// A single point of the fit's iteration history.
struct FitStep {
  std::size_t iteration = 0;
  double alpha = 0.0;
  double center = 0.0;
  double objective = 0.0;
  bool accepted = false;
};

struct FitOptions {
  FitLoss loss = FitLoss::weighted_least_squares;
  FitAxis axis = FitAxis::width;
  std::size_t max_iterations = 200;
  double step_tolerance = 1e-10;
  /// Called after every trial step; the objective of accepted steps never increases.
  std::function<void(const FitStep&)> on_step;
};

/// Loss surface the fit minimizes, exposed for diagnostics and gradient checks.
/// Rows with zero trials are ignored. x values come from `axis`.
class FitObjective {
 public:
  FitObjective(const ErrorTable& table, FitLoss loss, FitAxis axis);

  double value(double alpha, double center) const;
  std::array<double, 2> gradient(double alpha, double center) const;
  std::size_t size() const noexcept { return x_.size(); }

 private:
  friend SigmoidModel fit_sigmoid(const ErrorTable&, const FitOptions&);

  FitLoss loss_;
  std::vector<double> x_;
  std::vector<double> trials_;
  std::vector<double> errors_;
  std::vector<double> rate_;
};

/// Fits (alpha, center). Start: OLS on logit(rate clipped to [0.01, 0.99]);
/// refinement: damped Gauss-Newton (WLS) or damped Newton (binomial), stopping
/// when the parameter step drops below `step_tolerance` or after
/// `max_iterations` steps. Throws InsufficientData (< 2 usable rows) or
/// DegenerateData (all rates identical).
SigmoidModel fit_sigmoid(const ErrorTable& table, const FitOptions& options = {});

/// `alpha,center,residual,n_points,loss`
std::string format_model(const SigmoidModel& model);

// ---- camera resolution ------------------------------------------------------

/// Required sensor resolution in pixels: fov * nf / smallest_feature.
/// Throws DomainError for non-positive inputs.
double camera_resolution(double fov, double smallest_feature, double nf);

// ---- misc statistics --------------------------------------------------------

/// Spearman rank correlation with average ranks for ties. Requires equal
/// lengths >= 2; returns 0 when either side is constant.
double spearman_correlation(std::span<const double> a, std::span<const double> b);

}  // namespace hiceaa

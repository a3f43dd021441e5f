#include "hiceaa/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

namespace hiceaa {

std::uint64_t ErrorTable::total_trials() const noexcept {
  std::uint64_t n = 0;
  for (const auto& r : rows) n += r.trials;
  return n;
}

std::uint64_t ErrorTable::total_errors() const noexcept {
  std::uint64_t n = 0;
  for (const auto& r : rows) n += r.errors;
  return n;
}

ErrorTableRow make_row(std::uint64_t key, std::uint64_t trials, std::uint64_t errors) {
  ErrorTableRow row{key, trials, errors, 0.0};
  if (trials > 0) {
    row.error_rate = static_cast<double>(errors) / static_cast<double>(trials);
  }
  return row;
}

namespace {

template <typename KeyFn>
std::vector<ErrorTableRow> tally(std::span<const TrialRecord> records, KeyFn key_of) {
  std::map<std::uint64_t, std::pair<std::uint64_t, std::uint64_t>> counts;
  for (const auto& r : records) {
    auto& [trials, errors] = counts[key_of(r)];
    ++trials;
    if (!r.correct) ++errors;
  }
  std::vector<ErrorTableRow> rows;
  rows.reserve(counts.size());
  for (const auto& [key, c] : counts) {
    rows.push_back(make_row(key, c.first, c.second));
  }
  return rows;
}

}  // namespace

ErrorTable aggregate_by_resolution(std::span<const TrialRecord> records) {
  ErrorTable table;
  table.keyed_by = TableKey::resolution;
  table.rows = tally(records, [](const TrialRecord& r) { return static_cast<std::uint64_t>(r.trial.resolution); });
  return table;
}

ErrorTable aggregate_by_pixels(std::span<const TrialRecord> records, std::uint64_t bin_width) {
  if (bin_width == 0) {
    throw DomainError("pixel bin width must be >= 1");
  }
  ErrorTable table;
  table.keyed_by = TableKey::pixels;
  table.bin_width = bin_width;
  table.rows = tally(records, [bin_width](const TrialRecord& r) {
    return static_cast<std::uint64_t>(r.trial.object_pixels) / bin_width * bin_width;
  });
  return table;
}

std::string to_csv(const ErrorTable& table) {
  std::string out = "key,trials,errors,error_rate\n";
  char buf[96];
  for (const auto& r : table.rows) {
    std::snprintf(buf, sizeof buf, "%llu,%llu,%llu,%.6f\n", static_cast<unsigned long long>(r.key),
                  static_cast<unsigned long long>(r.trials), static_cast<unsigned long long>(r.errors),
                  r.error_rate);
    out += buf;
  }
  return out;
}

// ---- sigmoid ------------------------------------------------------------------

std::string_view to_string(FitLoss loss) {
  return loss == FitLoss::weighted_least_squares ? "wls" : "binomial";
}

std::string_view to_string(FitAxis axis) {
  switch (axis) {
    case FitAxis::width:
      return "width";
    case FitAxis::pixels:
      return "pixels";
    case FitAxis::sqrt_pixels:
      return "sqrt_pixels";
  }
  return "width";
}

FitLoss parse_fit_loss(std::string_view text) {
  if (text == "wls") return FitLoss::weighted_least_squares;
  if (text == "binomial") return FitLoss::binomial_likelihood;
  throw DomainError("unknown fit loss '" + std::string(text) + "' (expected wls or binomial)");
}

SigmoidModel study_model() {
  SigmoidModel m;
  m.alpha = kStudyAlpha;
  m.center = kStudyCenter;
  return m;
}

double logistic(double t) noexcept {
  if (t >= 0.0) {
    return 1.0 / (1.0 + std::exp(-t));
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double predict_error(double x, const SigmoidModel& model) noexcept {
  return logistic(model.alpha * x + model.center);
}

ResolutionRequirement required_resolution(double target_error, const SigmoidModel& model) {
  if (!(target_error > 0.0 && target_error < 1.0)) {
    throw DomainError("target error must lie strictly between 0 and 1");
  }
  if (model.alpha == 0.0) {
    throw DegenerateModel();
  }
  // logit(y) = ln(y) - ln(1 - y), equal to -ln(1/y - 1).
  const double logit = std::log(target_error) - std::log1p(-target_error);
  ResolutionRequirement req;
  req.width = (logit - model.center) / model.alpha;
  req.integer_width = static_cast<std::int64_t>(std::ceil(req.width));
  return req;
}

std::string format_model(const SigmoidModel& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g,%zu,%s", m.alpha, m.center, m.residual, m.n_points,
                std::string(to_string(m.loss)).c_str());
  return buf;
}

// ---- camera ---------------------------------------------------------------------

double camera_resolution(double fov, double smallest_feature, double nf) {
  if (!(fov > 0.0) || !(smallest_feature > 0.0) || !(nf > 0.0)) {
    throw DomainError("field of view, feature size and pixels per feature must all be > 0");
  }
  return fov * nf / smallest_feature;
}

// ---- spearman -------------------------------------------------------------------

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw DomainError("spearman correlation needs two equal-length samples of size >= 2");
  }
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    const double da = ra[i] - mean;
    const double db = rb[i] - mean;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) {
    return 0.0;
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace hiceaa

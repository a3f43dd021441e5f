#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hiceaa/analytics.hpp"
#include "hiceaa/dataset.hpp"
#include "hiceaa/random.hpp"
#include "hiceaa/session.hpp"

namespace hiceaa {

/// Machine-observer counterpart of the labeling study.
struct ObserverReport {
  std::string observer_name;
  std::size_t k = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  ErrorTable table;
  std::optional<SigmoidModel> fit;
  double wall_time_s = 0.0;
};

/// Classifies every test image at `resolution` by majority vote of its k
/// nearest train images (squared Euclidean distance on decimated intensities).
/// Distance ties go to the lower dataset_index, vote ties to the smaller label.
/// Throws EmptyDataset, or DomainError for k == 0 or a resolution outside 1..28.
ErrorTableRow knn_observe(std::span<const LabeledExample> train, std::span<const LabeledExample> test,
                          std::size_t resolution, std::size_t k);

struct SweepOptions {
  std::size_t k = 3;
  std::vector<std::size_t> resolutions;  // empty means 1..28
  bool fit = false;
  FitLoss fit_loss = FitLoss::weighted_least_squares;
};

ObserverReport sweep_resolutions(std::span<const LabeledExample> train, std::span<const LabeledExample> test,
                                 const SweepOptions& options);

/// Train/test subsets drawn without replacement from one seeded stream
/// (train first, then test).
struct DeskSample {
  Split train;
  Split test;
};

DeskSample desk_sample(std::span<const LabeledExample> train_pool, std::span<const LabeledExample> test_pool,
                       std::size_t train_size, std::size_t test_size, std::uint64_t seed);

/// Synthetic labeler: answers the true label with probability
/// 1 - predict_error(resolution), otherwise abstains with -1.
int sigmoid_observer_selection(const Trial& trial, const SigmoidModel& model, Rng& rng);

/// Metadata line prefixed with `#`, then the table CSV. Wall time is left out
/// so identical inputs give byte-identical reports.
std::string to_csv(const ObserverReport& report);

}  // namespace hiceaa

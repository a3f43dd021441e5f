#include "hiceaa/baseline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <thread>

#include "hiceaa/errors.hpp"
#include "hiceaa/resample.hpp"
#include "hiceaa/session.hpp"

namespace hiceaa {

namespace {

struct Neighbor {
  std::uint32_t distance;
  std::size_t dataset_index;
  std::uint8_t label;
};

bool closer(const Neighbor& a, const Neighbor& b) {
  return a.distance != b.distance ? a.distance < b.distance : a.dataset_index < b.dataset_index;
}

std::vector<GrayImage> decimate_all(std::span<const LabeledExample> examples, std::size_t resolution) {
  std::vector<GrayImage> out;
  out.reserve(examples.size());
  for (const auto& e : examples) {
    out.push_back(downsample_area(e.image, resolution));
  }
  return out;
}

std::uint32_t squared_distance(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  std::uint32_t sum = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int d = int{a[i]} - int{b[i]};
    sum += static_cast<std::uint32_t>(d * d);
  }
  return sum;
}

template <typename Fn>
void parallel_for(std::size_t count, Fn fn) {
  const std::size_t workers = std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, 64);
  if (workers == 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) fn(i);
    });
  }
}

}  // namespace

ErrorTableRow knn_observe(std::span<const LabeledExample> train, std::span<const LabeledExample> test,
                          std::size_t resolution, std::size_t k) {
  if (train.empty() || test.empty()) {
    throw EmptyDataset();
  }
  if (k == 0) {
    throw DomainError("k must be >= 1");
  }
  if (resolution < static_cast<std::size_t>(kMinResolution) || resolution > static_cast<std::size_t>(kMaxResolution)) {
    throw DomainError("resolution must be within 1..28");
  }
  const auto train_px = decimate_all(train, resolution);
  const auto test_px = decimate_all(test, resolution);
  const std::size_t kk = std::min(k, train.size());

  std::vector<std::uint8_t> wrong(test.size(), 0);
  parallel_for(test.size(), [&](std::size_t t) {
    std::vector<Neighbor> all(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      all[i] = {squared_distance(test_px[t].pixels(), train_px[i].pixels()), train[i].dataset_index, train[i].label};
    }
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(kk), all.end(), closer);
    std::array<std::size_t, 10> votes{};
    for (std::size_t i = 0; i < kk; ++i) ++votes[all[i].label];
    // max_element returns the first maximum, i.e. the smallest label.
    const auto predicted = static_cast<std::uint8_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    wrong[t] = predicted != test[t].label ? 1 : 0;
  });

  std::uint64_t errors = 0;
  for (auto w : wrong) errors += w;
  return make_row(resolution, test.size(), errors);
}

ObserverReport sweep_resolutions(std::span<const LabeledExample> train, std::span<const LabeledExample> test,
                                 const SweepOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::size_t> resolutions = options.resolutions;
  if (resolutions.empty()) {
    for (int r = kMinResolution; r <= kMaxResolution; ++r) resolutions.push_back(static_cast<std::size_t>(r));
  }
  std::sort(resolutions.begin(), resolutions.end());
  resolutions.erase(std::unique(resolutions.begin(), resolutions.end()), resolutions.end());

  ObserverReport report;
  report.observer_name = "knn";
  report.k = options.k;
  report.train_size = train.size();
  report.test_size = test.size();
  report.table.keyed_by = TableKey::resolution;
  for (auto r : resolutions) {
    report.table.rows.push_back(knn_observe(train, test, r, options.k));
  }
  if (options.fit) {
    FitOptions fit;
    fit.loss = options.fit_loss;
    report.fit = fit_sigmoid(report.table, fit);
  }
  report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

DeskSample desk_sample(std::span<const LabeledExample> train_pool, std::span<const LabeledExample> test_pool,
                       std::size_t train_size, std::size_t test_size, std::uint64_t seed) {
  Rng rng(seed);
  DeskSample sample;
  sample.train = subsample(train_pool, train_size, rng);
  sample.test = subsample(test_pool, test_size, rng);
  return sample;
}

int sigmoid_observer_selection(const Trial& trial, const SigmoidModel& model, Rng& rng) {
  const double p_error = predict_error(static_cast<double>(trial.resolution), model);
  return rng.unit() < p_error ? kAbstain : trial.true_label;
}

std::string to_csv(const ObserverReport& report) {
  std::string out = "# observer=" + report.observer_name + " k=" + std::to_string(report.k) +
                    " train_size=" + std::to_string(report.train_size) +
                    " test_size=" + std::to_string(report.test_size);
  if (report.fit) {
    out += " fit=" + format_model(*report.fit);
  }
  out += "\n";
  out += to_csv(report.table);
  return out;
}

}  // namespace hiceaa

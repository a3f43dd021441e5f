// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <mutex>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "hiceaa/analytics.hpp"
#include "hiceaa/baseline.hpp"
#include "hiceaa/dataset.hpp"
#include "hiceaa/resample.hpp"
#include "hiceaa/service.hpp"
#include "live_service.hpp"
#include "test_support.hpp"

using namespace hiceaa;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s  %-34s %8.2fs  %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), secs, o.detail.c_str());
  std::fflush(stdout);
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* spec, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, spec, a, b, c, d);
  return buf;
}

// ---- downsampler oracles ----------------------------------------------------

// Plain block mean for widths dividing 28.
GrayImage block_mean(const GrayImage& src, std::size_t target) {
  const std::size_t s = src.width() / target;
  std::vector<std::uint8_t> out(target * target);
  for (std::size_t i = 0; i < target; ++i)
    for (std::size_t j = 0; j < target; ++j) {
      std::uint64_t sum = 0;
      for (std::size_t r = i * s; r < (i + 1) * s; ++r)
        for (std::size_t c = j * s; c < (j + 1) * s; ++c) sum += src.at(r, c);
      const std::uint64_t n = s * s;
      out[i * target + j] = static_cast<std::uint8_t>((2 * sum + n) / (2 * n));
    }
  return GrayImage(target, std::move(out));
}

// Coverage integral over the source replicated onto a 4x grid: every
// sub-cell contributes its exact overlap with the output box.
GrayImage supersampled_coverage(const GrayImage& src, std::size_t target) {
  constexpr int kSuper = 4;
  const std::size_t w = src.width();
  const std::size_t fine = w * kSuper;
  std::vector<double> up(fine * fine);
  for (std::size_t r = 0; r < fine; ++r)
    for (std::size_t c = 0; c < fine; ++c) up[r * fine + c] = src.at(r / kSuper, c / kSuper);

  const double box = static_cast<double>(fine) / static_cast<double>(target);  // in sub-cells
  auto overlap = [](double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); };
  std::vector<std::uint8_t> out(target * target);
  for (std::size_t i = 0; i < target; ++i)
    for (std::size_t j = 0; j < target; ++j) {
      const double y0 = i * box, y1 = (i + 1) * box, x0 = j * box, x1 = (j + 1) * box;
      double sum = 0.0, area = 0.0;
      for (std::size_t r = static_cast<std::size_t>(y0); r < fine && r < y1; ++r) {
        const double wy = overlap(r, r + 1.0, y0, y1);
        for (std::size_t c = static_cast<std::size_t>(x0); c < fine && c < x1; ++c) {
          const double wgt = wy * overlap(c, c + 1.0, x0, x1);
          sum += wgt * up[r * fine + c];
          area += wgt;
        }
      }
      out[i * target + j] = static_cast<std::uint8_t>(std::clamp(std::floor(sum / area + 0.5), 0.0, 255.0));
    }
  return GrayImage(target, std::move(out));
}

Outcome downsampler_integer() {
  std::mt19937_64 gen(2001);
  const auto t0 = Clock::now();
  std::size_t mismatches = 0;
  for (int i = 0; i < 200; ++i) {
    const auto img = testutil::random_image(28, gen);
    for (std::size_t t : {14u, 7u, 4u, 2u, 1u}) mismatches += downsample_area(img, t) != block_mean(img, t);
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 5.0, fmt("mismatched outputs=%.0f of 1000, %.3fs (limit 5s)", mismatches, secs)};
}

Outcome downsampler_fractional() {
  std::mt19937_64 gen(2002);
  const auto t0 = Clock::now();
  int worst = 0;
  for (int i = 0; i < 100; ++i) {
    const auto img = testutil::random_image(28, gen);
    for (std::size_t t = 1; t <= 28; ++t) {
      const auto got = downsample_area(img, t);
      const auto want = supersampled_coverage(img, t);
      for (std::size_t k = 0; k < t * t; ++k)
        worst = std::max(worst, std::abs(int{got.pixels()[k]} - int{want.pixels()[k]}));
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1 && secs < 60.0, fmt("max |diff|=%.0f (limit 1), %.3fs (limit 60s)", worst, secs)};
}

// ---- sigmoid model ------------------------------------------------------------

Outcome sigmoid_evaluation() {
  const auto m = study_model();
  const double mid_err = std::abs(predict_error(-m.center / m.alpha, m) - 0.5);
  bool decreasing = true;
  double prev = predict_error(0.0, m);
  for (int i = 1; i <= 28000; ++i) {
    const double y = predict_error(i * 0.001, m);
    decreasing = decreasing && y < prev;
    prev = y;
  }
  const double hi = predict_error(1e6, m), lo = predict_error(-1e6, m);
  const bool finite = std::isfinite(hi) && std::isfinite(lo) && hi >= 0.0 && lo <= 1.0;
  return {mid_err <= 1e-12 && decreasing && finite,
          fmt("|f(-c/a)-0.5|=%.2e, strictly decreasing=%.0f, f(1e6)=%.3g f(-1e6)=%.3g", mid_err, decreasing, hi, lo)};
}

Outcome inversion_round_trip() {
  const auto m = study_model();
  std::mt19937_64 gen(2004);
  std::uniform_real_distribution<double> target(0.001, 0.999);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double y = target(gen);
    worst = std::max(worst, std::abs(predict_error(required_resolution(y, m).width, m) - y));
  }
  return {worst <= 1e-9, fmt("max |f(f^-1(y))-y|=%.2e (limit 1e-9)", worst)};
}

ErrorTable synthetic_table(std::mt19937_64* gen, std::uint64_t trials) {
  const auto truth = study_model();
  ErrorTable t;
  for (int x = 1; x <= 28; ++x) {
    const double p = predict_error(x, truth);
    std::uint64_t errors;
    if (gen) {
      std::binomial_distribution<std::uint64_t> draw(trials, p);
      errors = draw(*gen);
    } else {
      errors = static_cast<std::uint64_t>(std::llround(p * static_cast<double>(trials)));
    }
    t.rows.push_back(make_row(static_cast<std::uint64_t>(x), trials, errors));
  }
  return t;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

Outcome fit_recovery() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string detail;
  for (auto loss : {FitLoss::weighted_least_squares, FitLoss::binomial_likelihood}) {
    FitOptions opts;
    opts.loss = loss;
    std::vector<double> alphas, centers;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      std::mt19937_64 gen(50000 + seed);
      const auto m = fit_sigmoid(synthetic_table(&gen, 1000), opts);
      alphas.push_back(m.alpha);
      centers.push_back(m.center);
    }
    const double da = std::abs(median(alphas) - kStudyAlpha);
    const double dc = std::abs(median(centers) - kStudyCenter);
    const auto exact = fit_sigmoid(synthetic_table(nullptr, 1'000'000'000'000ULL), opts);
    const double ea = std::abs(exact.alpha - kStudyAlpha), ec = std::abs(exact.center - kStudyCenter);
    ok = ok && da <= 0.05 && dc <= 0.3 && ea <= 1e-6 && ec <= 1e-6;
    detail += std::string(to_string(loss)) + fmt(": median |da|=%.4f |dc|=%.4f, noise-free |da|=%.1e |dc|=%.1e; ", da, dc, ea, ec);
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 30.0, detail + fmt("%.3fs (limit 30s)", secs)};
}

Outcome gradient_check() {
  std::mt19937_64 gen(2006);
  const auto table = synthetic_table(&gen, 1000);
  std::uniform_real_distribution<double> a(-2.0, -0.2), c(1.0, 12.0);
  double worst = 0.0;
  for (auto loss : {FitLoss::weighted_least_squares, FitLoss::binomial_likelihood}) {
    const FitObjective obj(table, loss, FitAxis::width);
    for (int i = 0; i < 20; ++i) {
      const double pa = a(gen), pc = c(gen);
      constexpr double h = 1e-6;
      const auto g = obj.gradient(pa, pc);
      const double na = (obj.value(pa + h, pc) - obj.value(pa - h, pc)) / (2 * h);
      const double nc = (obj.value(pa, pc + h) - obj.value(pa, pc - h)) / (2 * h);
      const double scale = std::max(std::hypot(g[0], g[1]), std::hypot(na, nc));
      worst = std::max(worst, std::hypot(g[0] - na, g[1] - nc) / scale);
    }
  }
  return {worst <= 1e-6, fmt("max relative error=%.2e over 20 points x 2 losses (limit 1e-6)", worst)};
}

// ---- live service -------------------------------------------------------------

struct TrialReply {
  std::string id;
  int status = 0;
};

TrialReply fetch_trial(httplib::Client& client, const std::string& session) {
  auto res = client.Get("/api/v1/trial?session=" + session);
  if (!res || res->status != 200) return {"", res ? res->status : -1};
  return {json::parse(res->body).at("trial_id").get<std::string>(), 200};
}

int post_response(httplib::Client& client, const std::string& id, int selection, double elapsed) {
  const json body{{"trial_id", id}, {"selection", selection}, {"elapsed_ms", elapsed}};
  auto res = client.Post("/api/v1/response", body.dump(), "application/json");
  return res ? res->status : -1;
}

Outcome human_study_substitute(const std::shared_ptr<const Split>& split) {
  const auto t0 = Clock::now();
  testutil::TempFile log("acceptance-study");
  ServiceOptions opts;
  opts.log_path = log.path();
  opts.coordinator.seed = 2007;
  testutil::LiveService live(opts);
  live.service().set_dataset(split);
  auto client = live.client();

  // The oracle labeler reads the hidden label through the in-process
  // coordinator, never through the HTTP payload.
  const auto truth = study_model();
  Rng labeler(2007);
  int failed_calls = 0;
  for (int i = 0; i < 500; ++i) {
    const auto session = "observer-" + std::to_string(i % 5);
    const auto trial = fetch_trial(client, session);
    const auto hidden = trial.status == 200 ? live.service().coordinator()->find_pending(trial.id) : std::nullopt;
    if (!hidden) {
      ++failed_calls;
      continue;
    }
    const int selection = sigmoid_observer_selection(*hidden, truth, labeler);
    failed_calls += post_response(client, trial.id, selection, 400.0 + labeler.below(800)) != 200;
  }
  const auto records = load_log(log.path()).records;
  const auto m = fit_sigmoid(aggregate_by_resolution(records));
  const double da = std::abs(m.alpha - kStudyAlpha), dc = std::abs(m.center - kStudyCenter);
  const double secs = seconds_since(t0);
  return {failed_calls == 0 && records.size() == 500 && da <= 0.3 && dc <= 1.5 && secs < 120.0,
          fmt("records=%.0f alpha=%.4f center=%.4f, ", static_cast<double>(records.size()), m.alpha, m.center) +
              fmt("|da|=%.3f (limit 0.3) |dc|=%.3f (limit 1.5), %.2fs (limit 120s)", da, dc, secs)};
}

Outcome log_integrity(const std::shared_ptr<const Split>& split) {
  testutil::TempFile log("acceptance-log");
  ServiceOptions opts;
  opts.log_path = log.path();
  opts.coordinator.seed = 2009;
  testutil::LiveService live(opts);
  live.service().set_dataset(split);

  constexpr int kClients = 20, kPerClient = 50;
  std::atomic<int> failed{0};
  {
    std::vector<std::jthread> clients;
    for (int c = 0; c < kClients; ++c) {
      clients.emplace_back([&, c] {
        auto client = live.client();
        std::mt19937_64 gen(static_cast<std::uint64_t>(c));
        for (int i = 0; i < kPerClient; ++i) {
          const auto session = "client" + std::to_string(c) + "-s" + std::to_string(i % 3);
          const auto trial = fetch_trial(client, session);
          if (trial.status != 200 ||
              post_response(client, trial.id, static_cast<int>(gen() % 11) - 1, static_cast<double>(gen() % 2000)) != 200)
            ++failed;
        }
      });
    }
  }

  std::size_t lines = 0;
  {
    std::ifstream in(log.path());
    for (std::string line; std::getline(in, line);) ++lines;
  }
  const auto records = load_log(log.path(), /*strict=*/true).records;
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.trial.trial_id);

  auto client = live.client();
  auto by_res = client.Get("/api/v1/stats?by=resolution&format=csv");
  auto by_px = client.Get("/api/v1/stats?by=pixels&bin=10&format=csv");
  const bool csv_equal = by_res && by_px && by_res->body == to_csv(aggregate_by_resolution(records)) &&
                         by_px->body == to_csv(aggregate_by_pixels(records, 10));

  const bool ok = failed == 0 && lines == 1000 && records.size() == 1000 && ids.size() == 1000 && csv_equal;
  return {ok, fmt("failed requests=%.0f lines=%.0f parsed=%.0f unique ids=%.0f, ", failed.load(), lines,
                  records.size(), ids.size()) +
                  "stats csv == offline: " + (csv_equal ? "yes" : "no")};
}

// ---- machine baseline ---------------------------------------------------------

Outcome machine_baseline(const std::filesystem::path& dir) {
  const auto t0 = Clock::now();
  const auto train_pool = load_split(dir, SplitName::train);
  const auto test_pool = load_split(dir, SplitName::validation);
  const auto sample = desk_sample(train_pool, test_pool, 2000, 500, 7);
  SweepOptions opts;
  opts.k = 3;
  const auto report = sweep_resolutions(sample.train, sample.test, opts);
  const double secs = seconds_since(t0);

  std::vector<double> res, err;
  for (const auto& r : report.table.rows) {
    res.push_back(static_cast<double>(r.key));
    err.push_back(r.error_rate);
  }
  const double e1 = report.table.rows.at(0).error_rate;
  const double e4 = report.table.rows.at(3).error_rate;
  const double e14 = report.table.rows.at(13).error_rate;
  const double e28 = report.table.rows.at(27).error_rate;
  const double rho = spearman_correlation(res, err);
  const bool ok = report.table.rows.size() == 28 && secs < 600.0 && e28 <= 0.15 && e1 >= 0.5 && e4 > e14 && rho <= -0.8;
  return {ok, fmt("err(1)=%.3f err(4)=%.3f err(14)=%.3f err(28)=%.3f, ", e1, e4, e14, e28) +
                  fmt("spearman=%.3f (limit -0.8), %.1fs (limit 600s)", rho, secs)};
}

Outcome camera_formula() {
  const double a = camera_resolution(100.0, 1.0, 2.0);
  const double b = camera_resolution(1.0, 1.0, 1.0);
  return {a == 200.0 && b == 1.0, fmt("camera(100,1,2)=%.10g camera(1,1,1)=%.10g", a, b)};
}

}  // namespace

int main() {
  report("downsampler integer ratios", downsampler_integer);
  report("downsampler fractional widths", downsampler_fractional);
  report("sigmoid evaluation", sigmoid_evaluation);
  report("inversion round trip", inversion_round_trip);
  report("fit recovery", fit_recovery);
  report("gradient check", gradient_check);

  const auto dir = testutil::mnist_dir();
  if (!dir) {
    const Outcome missing{false, "MNIST files not found (set HICEAA_DATA)"};
    for (const char* name : {"scripted study via live service", "machine baseline shape", "log integrity"})
      report(name, [&] { return missing; });
  } else {
    const auto split = std::make_shared<const Split>(load_split(*dir, SplitName::validation));
    report("scripted study via live service", [&] { return human_study_substitute(split); });
    report("machine baseline shape", [&] { return machine_baseline(*dir); });
    report("log integrity", [&] { return log_integrity(split); });
  }
  report("camera formula", camera_formula);

  std::printf("%s: %d failing criteria\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}

#include "hiceaa/cli.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "hiceaa/analytics.hpp"
#include "test_support.hpp"

using namespace hiceaa;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "hiceaa");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Synthetic validation split laid out under the MNIST file names.
void write_dataset(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto split = testutil::synthetic_split(20);
  std::vector<GrayImage> images;
  std::vector<std::uint8_t> labels;
  for (const auto& e : split) {
    images.push_back(e.image);
    labels.push_back(e.label);
  }
  write_bytes(dir / "t10k-images-idx3-ubyte", serialize_idx_images(images, kMnistWidth));
  write_bytes(dir / "t10k-labels-idx1-ubyte", serialize_idx_labels(labels));
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Cli, PredictStudyModel) {
  const auto r = run({"predict", "--alpha", "-0.95", "--center", "6.5", "--width", "12"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "0.00739154\n");
}

TEST(Cli, PlanOnePercent) {
  const auto r = run({"plan", "--target-error", "0.01"});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "11.679 12\n");
}

TEST(Cli, PlanOutOfRangeIsDomainError) {
  EXPECT_EQ(run({"plan", "--target-error", "1.5"}).code, 1);
  EXPECT_EQ(run({"plan", "--alpha", "0", "--target-error", "0.2"}).code, 1);
}

TEST(Cli, Camera) {
  EXPECT_EQ(run({"camera", "--fov", "100", "--feature-size", "1", "--nf", "2"}).out, "200\n");
  EXPECT_EQ(run({"camera", "--fov", "1", "--feature-size", "1", "--nf", "1"}).out, "1\n");
  EXPECT_EQ(run({"camera", "--fov", "0", "--feature-size", "1", "--nf", "1"}).code, 1);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"predict"}).code, 2);
  EXPECT_EQ(run({"aggregate", "--log", "x", "--by", "colour"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, MissingDatasetDirIsUsageError) {
  ::unsetenv("HICEAA_DATA");
  testutil::TempFile log("cli-log");
  EXPECT_EQ(run({"simulate", "--log", log.path().string()}).code, 2);
}

TEST(Cli, MissingLogIsDomainError) {
  EXPECT_EQ(run({"aggregate", "--log", "/nonexistent/trials.jsonl"}).code, 1);
}

TEST(Cli, SimulateAggregateFitExport) {
  testutil::TempFile data("cli-data"), log("cli-log"), out("cli-out");
  write_dataset(data.path());

  const auto sim = run({"simulate", "--dataset-dir", data.path().string(), "--log", log.path().string(), "--trials",
                        "3000", "--sessions", "3", "--seed", "5"});
  ASSERT_EQ(sim.code, 0) << sim.err;
  const auto records = load_log(log.path()).records;
  ASSERT_EQ(records.size(), 3000u);

  const auto agg = run({"aggregate", "--log", log.path().string()});
  EXPECT_EQ(agg.code, 0);
  EXPECT_EQ(agg.out, to_csv(aggregate_by_resolution(records)));
  const auto px = run({"aggregate", "--log", log.path().string(), "--by", "pixels", "--bin-width", "4"});
  EXPECT_EQ(px.out, to_csv(aggregate_by_pixels(records, 4)));

  const auto fit = run({"fit", "--log", log.path().string()});
  EXPECT_EQ(fit.code, 0) << fit.err;
  EXPECT_EQ(fit.out, format_model(fit_sigmoid(aggregate_by_resolution(records))) + "\n");
  const auto m = fit_sigmoid(aggregate_by_resolution(records));
  EXPECT_NEAR(m.alpha, kStudyAlpha, 0.3);
  EXPECT_NEAR(m.center, kStudyCenter, 1.5);

  const auto fit_px = run({"fit", "--log", log.path().string(), "--axis", "sqrt-pixels", "--loss", "binomial"});
  EXPECT_EQ(fit_px.out.substr(0, 18), "# axis=sqrt_pixels");

  const auto ex = run({"export", "--log", log.path().string(), "--out-dir", out.path().string()});
  ASSERT_EQ(ex.code, 0) << ex.err;
  EXPECT_EQ(slurp(out.path() / "by_resolution.csv"), agg.out);
  EXPECT_EQ(slurp(out.path() / "by_pixels.csv"), to_csv(aggregate_by_pixels(records)));
  EXPECT_EQ(slurp(out.path() / "model.csv"), "alpha,center,residual,n_points,loss\n" + fit.out);
}

TEST(Cli, SimulateIsReproducible) {
  testutil::TempFile data("cli-data"), a("cli-a"), b("cli-b");
  write_dataset(data.path());
  for (const auto* log : {&a, &b}) {
    ASSERT_EQ(run({"simulate", "--dataset-dir", data.path().string(), "--log", log->path().string(), "--trials", "50"})
                  .code,
              0);
  }
  const auto ra = load_log(a.path()).records;
  const auto rb = load_log(b.path()).records;
  ASSERT_EQ(ra.size(), rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) {
    EXPECT_EQ(ra[i].trial.dataset_index, rb[i].trial.dataset_index);
    EXPECT_EQ(ra[i].trial.resolution, rb[i].trial.resolution);
    EXPECT_EQ(ra[i].selection, rb[i].selection);
  }
}

TEST(Cli, FitOnFlatLogWarnsAndFails) {
  testutil::TempFile data("cli-data"), log("cli-log");
  write_dataset(data.path());
  // A log where every answer is an abstention has error rate 1 everywhere.
  ASSERT_EQ(run({"simulate", "--dataset-dir", data.path().string(), "--log", log.path().string(), "--trials", "200",
                 "--alpha", "0", "--center", "1000"})
                .code,
            0);
  const auto fit = run({"fit", "--log", log.path().string()});
  EXPECT_EQ(fit.code, 1);
  EXPECT_NE(fit.err.find("warning"), std::string::npos);
  EXPECT_EQ(fit.out.substr(0, 2), "0,");
}

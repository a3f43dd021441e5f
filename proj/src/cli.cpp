#include "hiceaa/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <thread>

#include "hiceaa/analytics.hpp"
#include "hiceaa/baseline.hpp"
#include "hiceaa/errors.hpp"
#include "hiceaa/service.hpp"

namespace hiceaa {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::filesystem::path dataset_dir_or_throw(const std::string& flag) {
  auto dir = resolve_dataset_dir(flag);
  if (dir.empty()) {
    throw UsageError("no dataset directory: pass --dataset-dir or set HICEAA_DATA");
  }
  return dir;
}

LogContents read_log_reporting(const std::string& path, std::ostream& err) {
  auto contents = load_log(path, /*strict=*/false);
  for (const auto& p : contents.problems) {
    err << "warning: skipped malformed log line " << p.line << ": " << p.message << "\n";
  }
  return contents;
}

FitAxis parse_axis(const std::string& text) {
  if (text == "width") return FitAxis::width;
  if (text == "pixels") return FitAxis::pixels;
  if (text == "sqrt-pixels") return FitAxis::sqrt_pixels;
  throw UsageError("--axis must be width, pixels or sqrt-pixels");
}

ErrorTable table_for_axis(std::span<const TrialRecord> records, FitAxis axis, std::uint64_t bin) {
  return axis == FitAxis::width ? aggregate_by_resolution(records) : aggregate_by_pixels(records, bin);
}

// Fits and prints; a flat table prints the fallback model with a warning and
// reports a domain error.
int print_fit(const ErrorTable& table, FitLoss loss, FitAxis axis, std::ostream& out, std::ostream& err) {
  FitOptions options;
  options.loss = loss;
  options.axis = axis;
  if (axis != FitAxis::width) {
    out << "# axis=" << to_string(axis) << "\n";
  }
  try {
    out << format_model(fit_sigmoid(table, options)) << "\n";
  } catch (const DegenerateData& e) {
    out << format_model(e.fallback()) << "\n";
    err << "warning: " << e.what() << "\n";
    return kExitDomain;
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Resolution vs. classification error toolkit", "hiceaa"};
  app.require_subcommand(1);
  int status = kExitOk;

  // ---- serve ----
  auto* serve = app.add_subcommand("serve", "Run the labeling HTTP service");
  std::string dataset_dir;
  std::string log_path = "trials.jsonl";
  int port = kDefaultPort;
  std::string host = "0.0.0.0";
  std::size_t display_px = kDefaultDisplayPx;
  std::optional<std::uint64_t> seed;
  std::string ui_dir;
  double pending_timeout_min = 15.0;
  serve->add_option("--dataset-dir", dataset_dir, "Directory with the MNIST IDX files (else $HICEAA_DATA)");
  serve->add_option("--log", log_path, "Trial log (JSON lines, append-only)")->capture_default_str();
  serve->add_option("--port", port, "Listen port")->capture_default_str();
  serve->add_option("--host", host, "Listen address")->capture_default_str();
  serve->add_option("--display-px", display_px, "Suggested render size in CSS px")->capture_default_str();
  serve->add_option("--seed", seed, "Base seed for per-session random streams");
  serve->add_option("--ui-dir", ui_dir, "Static UI bundle served at /");
  serve->add_option("--pending-timeout-min", pending_timeout_min, "Idle minutes before a pending trial expires")
      ->capture_default_str();
  serve->callback([&] {
    const auto dir = dataset_dir_or_throw(dataset_dir);
    ServiceOptions options;
    options.log_path = log_path;
    options.display_px = display_px;
    options.ui_dir = ui_dir;
    options.coordinator.seed = seed.value_or(std::random_device{}());
    options.coordinator.pending_timeout = std::chrono::milliseconds(static_cast<long long>(pending_timeout_min * 60000.0));
    LabelingService service(options);
    const int bound = service.bind(host, port);
    if (bound < 0) {
      throw IoError("cannot bind " + host + ":" + std::to_string(port));
    }
    std::string load_error;
    std::jthread loader([&] {
      try {
        service.set_dataset(std::make_shared<const Split>(load_split(dir, SplitName::validation)));
        err << "dataset loaded from " << dir.string() << "\n";
      } catch (const std::exception& e) {
        load_error = e.what();
        service.wait_until_ready();
        service.stop();
      }
    });
    err << "listening on " << host << ":" << bound << ", log " << log_path << "\n";
    service.serve();
    loader.join();
    if (!load_error.empty()) {
      throw IoError(load_error);
    }
  });

  // ---- aggregate ----
  auto* aggregate = app.add_subcommand("aggregate", "Print an error-rate table from a trial log");
  std::string by = "resolution";
  std::uint64_t bin_width = 1;
  aggregate->add_option("--log", log_path, "Trial log")->required();
  aggregate->add_option("--by", by, "resolution or pixels")->check(CLI::IsMember({"resolution", "pixels"}))
      ->capture_default_str();
  aggregate->add_option("--bin-width", bin_width, "Pixel-count bin width")->check(CLI::PositiveNumber)
      ->capture_default_str();
  aggregate->callback([&] {
    const auto contents = read_log_reporting(log_path, err);
    const auto table = by == "resolution" ? aggregate_by_resolution(contents.records)
                                          : aggregate_by_pixels(contents.records, bin_width);
    out << to_csv(table);
  });

  // ---- fit ----
  auto* fit = app.add_subcommand("fit", "Fit the sigmoid error model to a trial log");
  std::string loss = "wls";
  std::string axis = "width";
  fit->add_option("--log", log_path, "Trial log")->required();
  fit->add_option("--loss", loss, "wls or binomial")->check(CLI::IsMember({"wls", "binomial"}))->capture_default_str();
  fit->add_option("--axis", axis, "width, pixels or sqrt-pixels")->capture_default_str();
  fit->add_option("--bin-width", bin_width, "Pixel-count bin width (pixel axes)")->check(CLI::PositiveNumber);
  fit->callback([&] {
    const auto ax = parse_axis(axis);
    const auto contents = read_log_reporting(log_path, err);
    status = print_fit(table_for_axis(contents.records, ax, bin_width), parse_fit_loss(loss), ax, out, err);
  });

  // ---- predict / plan ----
  double alpha = kStudyAlpha;
  double center = kStudyCenter;
  auto* predict = app.add_subcommand("predict", "Evaluate the error model at an image width");
  double width = 0.0;
  predict->add_option("--alpha", alpha, "Sigmoid slope")->capture_default_str();
  predict->add_option("--center", center, "Sigmoid intercept")->capture_default_str();
  predict->add_option("--width", width, "Image width in pixels")->required();
  predict->callback([&] {
    SigmoidModel m;
    m.alpha = alpha;
    m.center = center;
    out << fmt("%.6g", predict_error(width, m)) << "\n";
  });

  auto* plan = app.add_subcommand("plan", "Width needed to reach a target error rate");
  double target = 0.0;
  plan->add_option("--alpha", alpha, "Sigmoid slope")->capture_default_str();
  plan->add_option("--center", center, "Sigmoid intercept")->capture_default_str();
  plan->add_option("--target-error", target, "Target error rate in (0, 1)")->required();
  plan->callback([&] {
    SigmoidModel m;
    m.alpha = alpha;
    m.center = center;
    const auto req = required_resolution(target, m);
    out << fmt("%.3f", req.width) << " " << req.integer_width << "\n";
  });

  // ---- camera ----
  auto* camera = app.add_subcommand("camera", "Required camera resolution: fov * nf / feature size");
  double fov = 0.0, feature = 0.0, nf = 0.0;
  camera->add_option("--fov", fov, "Field of view length")->required();
  camera->add_option("--feature-size", feature, "Smallest feature, same unit as --fov")->required();
  camera->add_option("--nf", nf, "Pixels per smallest feature")->required();
  camera->callback([&] { out << fmt("%.10g", camera_resolution(fov, feature, nf)) << "\n"; });

  // ---- simulate ----
  auto* simulate = app.add_subcommand("simulate", "Run the trial loop offline with a synthetic sigmoid labeler");
  std::size_t trials = 500;
  std::size_t sessions = 1;
  std::uint64_t sim_seed = 1;
  simulate->add_option("--dataset-dir", dataset_dir, "Directory with the MNIST IDX files (else $HICEAA_DATA)");
  simulate->add_option("--log", log_path, "Trial log to append to")->required();
  simulate->add_option("--trials", trials, "Number of trials")->capture_default_str();
  simulate->add_option("--sessions", sessions, "Number of labeler sessions (round robin)")
      ->check(CLI::PositiveNumber)->capture_default_str();
  simulate->add_option("--seed", sim_seed, "Seed")->capture_default_str();
  simulate->add_option("--alpha", alpha, "Labeler sigmoid slope")->capture_default_str();
  simulate->add_option("--center", center, "Labeler sigmoid intercept")->capture_default_str();
  simulate->callback([&] {
    const auto split = std::make_shared<const Split>(load_split(dataset_dir_or_throw(dataset_dir), SplitName::validation));
    TrialLog log(log_path);
    CoordinatorOptions options;
    options.seed = sim_seed;
    TrialCoordinator coordinator(split, log, options);
    SigmoidModel labeler;
    labeler.alpha = alpha;
    labeler.center = center;
    Rng rng(mix_seed(sim_seed));
    for (std::size_t i = 0; i < trials; ++i) {
      const auto issued = coordinator.issue("sim-" + std::to_string(i % sessions));
      const int selection = sigmoid_observer_selection(issued.trial, labeler, rng);
      coordinator.respond(issued.trial.trial_id, selection, 300.0 + static_cast<double>(rng.below(1200)));
    }
    err << "appended " << trials << " records to " << log_path << "\n";
  });

  // ---- export ----
  auto* exporter = app.add_subcommand("export", "Write both tables and the fitted model as CSV files");
  std::string out_dir;
  exporter->add_option("--log", log_path, "Trial log")->required();
  exporter->add_option("--out-dir", out_dir, "Output directory")->required();
  exporter->add_option("--bin-width", bin_width, "Pixel-count bin width")->check(CLI::PositiveNumber);
  exporter->add_option("--loss", loss, "wls or binomial")->check(CLI::IsMember({"wls", "binomial"}));
  exporter->callback([&] {
    const auto contents = read_log_reporting(log_path, err);
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    const auto write = [&](const std::string& name, const std::string& text) {
      std::ofstream f(dir / name, std::ios::binary | std::ios::trunc);
      f << text;
      if (!f) throw IoError("cannot write " + (dir / name).string());
    };
    const auto by_res = aggregate_by_resolution(contents.records);
    write("by_resolution.csv", to_csv(by_res));
    write("by_pixels.csv", to_csv(aggregate_by_pixels(contents.records, bin_width)));
    FitOptions options;
    options.loss = parse_fit_loss(loss);
    std::string model_line;
    try {
      model_line = format_model(fit_sigmoid(by_res, options));
    } catch (const DegenerateData& e) {
      model_line = format_model(e.fallback());
      err << "warning: " << e.what() << "\n";
    } catch (const InsufficientData& e) {
      err << "warning: " << e.what() << "; model.csv not written\n";
      return;
    }
    write("model.csv", "alpha,center,residual,n_points,loss\n" + model_line + "\n");
  });

  // ---- baseline ----
  auto* baseline = app.add_subcommand("baseline", "k-NN machine observer swept over resolutions 1..28");
  std::size_t k = 3, train_n = 2000, test_n = 500;
  std::uint64_t baseline_seed = 7;
  bool do_fit = false;
  baseline->add_option("--dataset-dir", dataset_dir, "Directory with the MNIST IDX files (else $HICEAA_DATA)");
  baseline->add_option("--k", k, "Neighbors")->check(CLI::PositiveNumber)->capture_default_str();
  baseline->add_option("--train", train_n, "Train subsample size")->capture_default_str();
  baseline->add_option("--test", test_n, "Test subsample size")->capture_default_str();
  baseline->add_option("--seed", baseline_seed, "Subsampling seed")->capture_default_str();
  baseline->add_flag("--fit", do_fit, "Also fit the sigmoid model to the machine curve");
  baseline->callback([&] {
    const auto dir = dataset_dir_or_throw(dataset_dir);
    const auto train_pool = load_split(dir, SplitName::train);
    const auto test_pool = load_split(dir, SplitName::validation);
    const auto sample = desk_sample(train_pool, test_pool, train_n, test_n, baseline_seed);
    SweepOptions options;
    options.k = k;
    options.fit = do_fit;
    const auto report = sweep_resolutions(sample.train, sample.test, options);
    out << to_csv(report);
    err << "wall_time_s=" << fmt("%.3f", report.wall_time_s) << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomain;
  }
  return status;
}

}  // namespace hiceaa

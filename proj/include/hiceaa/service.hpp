#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "hiceaa/dataset.hpp"
#include "hiceaa/resample.hpp"
#include "hiceaa/session.hpp"

namespace hiceaa {

inline constexpr int kDefaultPort = 8377;

struct ServiceOptions {
  std::filesystem::path log_path = "trials.jsonl";
  std::size_t display_px = kDefaultDisplayPx;
  /// Static UI bundle served at GET /. Empty: a minimal built-in page.
  std::filesystem::path ui_dir;
  CoordinatorOptions coordinator;
};

/// Session ids must be 1..64 characters of [A-Za-z0-9._~-].
bool valid_session_id(std::string_view id) noexcept;

std::string base64_encode(std::span<const std::uint8_t> bytes);

/// HTTP front end for the labeling loop and the aggregate tables.
///
///   GET  /api/v1/trial?session=ID                -> {trial_id, width, pixels_b64, display_px}
///   POST /api/v1/response {trial_id, selection, elapsed_ms} -> {recorded: true}
///   GET  /api/v1/stats?by=resolution|pixels[&bin=N][&format=csv]
///   GET  /                                       -> UI bundle
///
/// Trial payloads never carry the true label or dataset index, and responses
/// get no correctness feedback. The trial log is the only persistent state.
class LabelingService {
 public:
  explicit LabelingService(ServiceOptions options);
  ~LabelingService();
  LabelingService(const LabelingService&) = delete;
  LabelingService& operator=(const LabelingService&) = delete;

  /// Until this is called the trial endpoint answers 503.
  void set_dataset(std::shared_ptr<const Split> split);
  bool dataset_loaded() const;

  /// Returns the bound port, or -1 on failure. port 0 picks a free port.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  bool serve();
  void stop();
  void wait_until_ready() const;

  /// Server-side coordinator (null before set_dataset). For in-process tools
  /// such as scripted observers; nothing here is reachable over HTTP.
  TrialCoordinator* coordinator();

  const std::filesystem::path& log_path() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace hiceaa

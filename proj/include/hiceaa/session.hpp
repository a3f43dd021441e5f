#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hiceaa/dataset.hpp"
#include "hiceaa/random.hpp"

namespace hiceaa {

inline constexpr int kMinResolution = 1;
inline constexpr int kMaxResolution = 28;
inline constexpr int kAbstain = -1;  // "can't recognize"

using WallClock = std::chrono::system_clock;
using Timestamp = std::chrono::time_point<WallClock, std::chrono::milliseconds>;

struct Trial {
  std::string trial_id;
  std::string session_id;
  std::size_t dataset_index = 0;
  int true_label = 0;
  int resolution = 0;
  std::size_t object_pixels = 0;
  Timestamp issued_at{};

  friend bool operator==(const Trial&, const Trial&) = default;
};

struct TrialRecord {
  Trial trial;
  int selection = kAbstain;
  double elapsed_ms = 0.0;
  bool correct = false;

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

/// A freshly generated trial plus the down-sampled image to display.
struct IssuedTrial {
  Trial trial;
  GrayImage image;
};

/// One iteration of the labeling loop: uniform example, then an independent
/// uniform resolution in [1, 28], then decimation and object-pixel count.
/// `trial_id` is left empty for the caller to assign.
IssuedTrial next_trial(std::span<const LabeledExample> split, Rng& rng, std::string_view session_id,
                       Timestamp issued_at);

bool valid_selection(int selection) noexcept;

/// Builds the record for a response. Throws InvalidSelection, or DomainError
/// for a negative or non-finite elapsed_ms.
TrialRecord score_response(Trial trial, int selection, double elapsed_ms);

// ---- trial log (one JSON object per line) -----------------------------------

std::string format_utc(Timestamp ts);
/// Parses `YYYY-MM-DDTHH:MM:SS.mmmZ`; std::nullopt on malformed input.
std::optional<Timestamp> parse_utc(std::string_view text);

/// Serialized record without the trailing newline.
std::string encode_record(const TrialRecord& record);
/// Throws ParseError(line_number) when the text is not a well-formed record.
TrialRecord decode_record(std::string_view line, std::size_t line_number);

struct LogProblem {
  std::size_t line = 0;
  std::string message;
};

struct LogContents {
  std::vector<TrialRecord> records;
  std::vector<LogProblem> problems;  // only populated when strict == false
};

/// Reads a trial log in append order. Blank lines are skipped. In strict mode
/// the first bad line throws ParseError; otherwise it is reported and skipped.
/// Throws IoError when the file cannot be read.
LogContents load_log(const std::filesystem::path& path, bool strict = true);

/// Append-only, single-writer trial log. Each record goes out as one write(2)
/// on an O_APPEND descriptor, so a killed process leaves only whole lines.
class TrialLog {
 public:
  explicit TrialLog(std::filesystem::path path);
  ~TrialLog();
  TrialLog(const TrialLog&) = delete;
  TrialLog& operator=(const TrialLog&) = delete;

  void append(const TrialRecord& record);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  std::mutex mutex_;
};

// ---- coordinator ------------------------------------------------------------

struct CoordinatorOptions {
  std::uint64_t seed = 0;
  std::chrono::milliseconds pending_timeout = std::chrono::minutes(15);
  /// Monotonic time source for expiry; replaceable in tests.
  std::function<std::chrono::steady_clock::time_point()> now = [] { return std::chrono::steady_clock::now(); };
};

/// Owns the pending-trial registry and routes answered trials to the log.
/// Safe for concurrent use by many sessions.
class TrialCoordinator {
 public:
  TrialCoordinator(std::shared_ptr<const Split> split, TrialLog& log, CoordinatorOptions options = {});

  /// Creates a pending trial for `session_id`. Throws EmptyDataset.
  IssuedTrial issue(std::string_view session_id);

  /// Scores and logs a response exactly once. Throws InvalidSelection,
  /// DomainError (bad elapsed_ms), UnknownTrial (never issued or expired) or
  /// DuplicateResponse.
  TrialRecord respond(std::string_view trial_id, int selection, double elapsed_ms);

  /// Server-side view of a pending trial. Never exposed over HTTP.
  std::optional<Trial> find_pending(std::string_view trial_id) const;

  std::size_t pending_count() const;

  /// Drops pending trials idle for longer than the timeout; returns how many.
  std::size_t expire_idle();

 private:
  struct SessionState {
    explicit SessionState(std::uint64_t seed) : rng(seed) {}
    std::mutex mutex;
    Rng rng;
  };

  struct Pending {
    Trial trial;
    std::chrono::steady_clock::time_point issued;
  };

  SessionState& session(std::string_view session_id);
  std::size_t expire_locked(std::chrono::steady_clock::time_point now);

  std::shared_ptr<const Split> split_;
  TrialLog& log_;
  CoordinatorOptions options_;
  std::uint64_t id_salt_;

  std::mutex sessions_mutex_;
  std::unordered_map<std::string, std::unique_ptr<SessionState>> sessions_;

  mutable std::mutex pending_mutex_;
  std::uint64_t next_serial_ = 0;
  std::unordered_map<std::string, Pending> pending_;
  std::unordered_set<std::string> answered_;
};

}  // namespace hiceaa

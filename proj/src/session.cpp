#include "hiceaa/session.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "hiceaa/errors.hpp"
#include "hiceaa/resample.hpp"

namespace hiceaa {

using nlohmann::ordered_json;

IssuedTrial next_trial(std::span<const LabeledExample> split, Rng& rng, std::string_view session_id,
                       Timestamp issued_at) {
  const auto& example = sample_example(split, rng);
  const int resolution = static_cast<int>(rng.between(kMinResolution, kMaxResolution));
  // Always decimated from the 28x28 original.
  GrayImage image = downsample_area(example.image, static_cast<std::size_t>(resolution));

  Trial trial;
  trial.session_id = std::string(session_id);
  trial.dataset_index = example.dataset_index;
  trial.true_label = example.label;
  trial.resolution = resolution;
  trial.object_pixels = count_object_pixels(image);
  trial.issued_at = issued_at;
  return IssuedTrial{std::move(trial), std::move(image)};
}

bool valid_selection(int selection) noexcept { return selection >= kAbstain && selection <= 9; }

TrialRecord score_response(Trial trial, int selection, double elapsed_ms) {
  if (!valid_selection(selection)) {
    throw InvalidSelection(selection);
  }
  if (!(elapsed_ms >= 0.0) || !std::isfinite(elapsed_ms)) {
    throw DomainError("elapsed_ms must be a finite non-negative number");
  }
  TrialRecord record;
  record.correct = selection == trial.true_label;
  record.trial = std::move(trial);
  record.selection = selection;
  record.elapsed_ms = elapsed_ms;
  return record;
}

// ---- timestamps -------------------------------------------------------------

std::string format_utc(Timestamp ts) {
  using namespace std::chrono;
  const auto day = floor<days>(ts);
  const year_month_day ymd{day};
  const hh_mm_ss<milliseconds> tod{ts - day};
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(tod.hours().count()), static_cast<int>(tod.minutes().count()),
                static_cast<int>(tod.seconds().count()), static_cast<int>(tod.subseconds().count()));
  return buf.data();
}

std::optional<Timestamp> parse_utc(std::string_view text) {
  using namespace std::chrono;
  if (text.size() != 24) {
    return std::nullopt;
  }
  int y = 0;
  unsigned mo = 0, d = 0;
  int h = 0, mi = 0, s = 0, ms = 0;
  char tail = 0;
  const std::string copy(text);
  if (std::sscanf(copy.c_str(), "%4d-%2u-%2uT%2d:%2d:%2d.%3d%c", &y, &mo, &d, &h, &mi, &s, &ms, &tail) != 8 ||
      tail != 'Z') {
    return std::nullopt;
  }
  const year_month_day ymd{year{y}, month{mo}, day{d}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 59 || h < 0 || mi < 0 || s < 0 || ms < 0) {
    return std::nullopt;
  }
  return Timestamp{sys_days{ymd}.time_since_epoch() + hours{h} + minutes{mi} + seconds{s} + milliseconds{ms}};
}

// ---- record codec -------------------------------------------------------------

std::string encode_record(const TrialRecord& r) {
  ordered_json j;
  j["trial_id"] = r.trial.trial_id;
  j["session_id"] = r.trial.session_id;
  j["ts_utc"] = format_utc(r.trial.issued_at);
  j["dataset_index"] = r.trial.dataset_index;
  j["true_label"] = r.trial.true_label;
  j["resolution"] = r.trial.resolution;
  j["object_pixels"] = r.trial.object_pixels;
  j["selection"] = r.selection;
  j["elapsed_ms"] = r.elapsed_ms;
  j["correct"] = r.correct;
  return j.dump();
}

namespace {

constexpr std::array<const char*, 10> kRecordFields = {
    "trial_id", "session_id", "ts_utc", "dataset_index", "true_label",
    "resolution", "object_pixels", "selection", "elapsed_ms", "correct"};

template <typename T>
T field(const ordered_json& j, const char* name, std::size_t line) {
  const auto& v = j.at(name);
  if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ParseError(line, std::string(name) + " must be a string");
  } else if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ParseError(line, std::string(name) + " must be a boolean");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ParseError(line, std::string(name) + " must be a number");
  } else {
    if (!v.is_number_integer()) throw ParseError(line, std::string(name) + " must be an integer");
  }
  return v.get<T>();
}

}  // namespace

TrialRecord decode_record(std::string_view line, std::size_t line_number) {
  const auto j = ordered_json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ParseError(line_number, "not a JSON object");
  }
  if (j.size() != kRecordFields.size()) {
    throw ParseError(line_number, "expected exactly " + std::to_string(kRecordFields.size()) + " fields");
  }
  for (const char* name : kRecordFields) {
    if (!j.contains(name)) {
      throw ParseError(line_number, std::string("missing field ") + name);
    }
  }

  TrialRecord r;
  r.trial.trial_id = field<std::string>(j, "trial_id", line_number);
  r.trial.session_id = field<std::string>(j, "session_id", line_number);
  const auto ts = parse_utc(field<std::string>(j, "ts_utc", line_number));
  if (!ts) {
    throw ParseError(line_number, "ts_utc is not an ISO-8601 UTC timestamp");
  }
  r.trial.issued_at = *ts;
  const auto index = field<std::int64_t>(j, "dataset_index", line_number);
  const auto label = field<std::int64_t>(j, "true_label", line_number);
  const auto resolution = field<std::int64_t>(j, "resolution", line_number);
  const auto pixels = field<std::int64_t>(j, "object_pixels", line_number);
  const auto selection = field<std::int64_t>(j, "selection", line_number);
  r.elapsed_ms = field<double>(j, "elapsed_ms", line_number);
  r.correct = field<bool>(j, "correct", line_number);

  if (r.trial.trial_id.empty()) throw ParseError(line_number, "empty trial_id");
  if (index < 0) throw ParseError(line_number, "negative dataset_index");
  if (label < 0 || label > 9) throw ParseError(line_number, "true_label outside 0..9");
  if (resolution < kMinResolution || resolution > kMaxResolution) {
    throw ParseError(line_number, "resolution outside 1..28");
  }
  if (pixels < 0 || pixels > resolution * resolution) {
    throw ParseError(line_number, "object_pixels exceeds resolution^2");
  }
  if (selection < kAbstain || selection > 9) throw ParseError(line_number, "selection outside -1..9");
  if (!(r.elapsed_ms >= 0.0)) throw ParseError(line_number, "negative elapsed_ms");
  if (r.correct != (selection == label)) {
    throw ParseError(line_number, "correct flag disagrees with selection/true_label");
  }

  r.trial.dataset_index = static_cast<std::size_t>(index);
  r.trial.true_label = static_cast<int>(label);
  r.trial.resolution = static_cast<int>(resolution);
  r.trial.object_pixels = static_cast<std::size_t>(pixels);
  r.selection = static_cast<int>(selection);
  return r;
}

LogContents load_log(const std::filesystem::path& path, bool strict) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open trial log " + path.string());
  }
  LogContents out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    try {
      out.records.push_back(decode_record(line, number));
    } catch (const ParseError& e) {
      if (strict) {
        throw;
      }
      out.problems.push_back({e.line(), e.what()});
    }
  }
  if (in.bad()) {
    throw IoError("read failed for trial log " + path.string());
  }
  return out;
}

// ---- TrialLog -----------------------------------------------------------------

TrialLog::TrialLog(std::filesystem::path path) : path_(std::move(path)) {
  fd_ = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) {
    throw IoError("cannot open trial log " + path_.string() + ": " + std::strerror(errno));
  }
}

TrialLog::~TrialLog() {
  if (fd_ >= 0) {
    ::close(fd_);
  }
}

void TrialLog::append(const TrialRecord& record) {
  std::string line = encode_record(record);
  line.push_back('\n');
  std::lock_guard lock(mutex_);
  std::size_t done = 0;
  while (done < line.size()) {
    const auto n = ::write(fd_, line.data() + done, line.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw IoError("append to " + path_.string() + " failed: " + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

// ---- TrialCoordinator -------------------------------------------------------

TrialCoordinator::TrialCoordinator(std::shared_ptr<const Split> split, TrialLog& log, CoordinatorOptions options)
    : split_(std::move(split)),
      log_(log),
      options_(std::move(options)),
      id_salt_(mix_seed(std::random_device{}() ^ (std::uint64_t{std::random_device{}()} << 32))) {
  if (!split_ || split_->empty()) {
    throw EmptyDataset();
  }
}

TrialCoordinator::SessionState& TrialCoordinator::session(std::string_view session_id) {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(std::string(session_id));
  if (it == sessions_.end()) {
    const auto seed = mix_seed(options_.seed ^ stable_hash(session_id));
    it = sessions_.emplace(std::string(session_id), std::make_unique<SessionState>(seed)).first;
  }
  return *it->second;
}

IssuedTrial TrialCoordinator::issue(std::string_view session_id) {
  const auto issued_at = std::chrono::time_point_cast<std::chrono::milliseconds>(WallClock::now());
  IssuedTrial issued = [&] {
    auto& state = session(session_id);
    std::lock_guard lock(state.mutex);
    return next_trial(*split_, state.rng, session_id, issued_at);
  }();

  const auto now = options_.now();
  std::lock_guard lock(pending_mutex_);
  expire_locked(now);
  std::array<char, 40> id{};
  std::snprintf(id.data(), id.size(), "%016llx-%llx", static_cast<unsigned long long>(id_salt_),
                static_cast<unsigned long long>(next_serial_++));
  issued.trial.trial_id = id.data();
  pending_.emplace(issued.trial.trial_id, Pending{issued.trial, now});
  return issued;
}

TrialRecord TrialCoordinator::respond(std::string_view trial_id, int selection, double elapsed_ms) {
  if (!valid_selection(selection)) {
    throw InvalidSelection(selection);
  }
  if (!(elapsed_ms >= 0.0) || !std::isfinite(elapsed_ms)) {
    throw DomainError("elapsed_ms must be a finite non-negative number");
  }
  const std::string key(trial_id);
  Pending taken;
  {
    std::lock_guard lock(pending_mutex_);
    if (answered_.contains(key)) {
      throw DuplicateResponse(key);
    }
    auto it = pending_.find(key);
    if (it == pending_.end()) {
      throw UnknownTrial(key);
    }
    if (options_.now() - it->second.issued > options_.pending_timeout) {
      pending_.erase(it);
      throw UnknownTrial(key);
    }
    taken = std::move(it->second);
    pending_.erase(it);
    answered_.insert(key);
  }

  auto record = score_response(taken.trial, selection, elapsed_ms);
  try {
    log_.append(record);
  } catch (...) {
    std::lock_guard lock(pending_mutex_);
    answered_.erase(key);
    pending_.emplace(key, std::move(taken));
    throw;
  }
  return record;
}

std::optional<Trial> TrialCoordinator::find_pending(std::string_view trial_id) const {
  std::lock_guard lock(pending_mutex_);
  if (auto it = pending_.find(std::string(trial_id)); it != pending_.end()) {
    return it->second.trial;
  }
  return std::nullopt;
}

std::size_t TrialCoordinator::pending_count() const {
  std::lock_guard lock(pending_mutex_);
  return pending_.size();
}

std::size_t TrialCoordinator::expire_idle() {
  const auto now = options_.now();
  std::lock_guard lock(pending_mutex_);
  return expire_locked(now);
}

std::size_t TrialCoordinator::expire_locked(std::chrono::steady_clock::time_point now) {
  return std::erase_if(pending_, [&](const auto& kv) { return now - kv.second.issued > options_.pending_timeout; });
}

}  // namespace hiceaa

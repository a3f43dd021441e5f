#include "hiceaa/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <json.hpp>
#include <mutex>

#include "hiceaa/analytics.hpp"
#include "hiceaa/errors.hpp"

namespace hiceaa {

using nlohmann::json;

bool valid_session_id(std::string_view id) noexcept {
  if (id.empty() || id.size() > 64) {
    return false;
  }
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '_' ||
           c == '.' || c == '~';
  });
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (std::uint32_t{bytes[i]} << 16) | (std::uint32_t{bytes[i + 1]} << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (const auto rest = bytes.size() - i; rest > 0) {
    std::uint32_t v = std::uint32_t{bytes[i]} << 16;
    if (rest == 2) v |= std::uint32_t{bytes[i + 1]} << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

namespace {

constexpr const char* kFallbackPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>HICEAA</title></head>
<body>
<p>No UI bundle configured (start the server with --ui-dir).</p>
<p>API: GET /api/v1/trial?session=ID, POST /api/v1/response, GET /api/v1/stats?by=resolution|pixels</p>
</body></html>
)";

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_header("Cache-Control", "no-store");
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, json{{"error", message}});
}

}  // namespace

struct LabelingService::Impl {
  explicit Impl(ServiceOptions opts) : options(std::move(opts)), log(options.log_path) {}

  std::shared_ptr<TrialCoordinator> current() const {
    std::lock_guard lock(mutex);
    return coordinator;
  }

  void handle_trial(const httplib::Request& req, httplib::Response& res) {
    const auto session = req.get_param_value("session");
    if (!valid_session_id(session)) {
      send_error(res, 400, "session must be 1..64 URL-safe characters");
      return;
    }
    const auto coord = current();
    if (!coord) {
      send_error(res, 503, "dataset not loaded");
      return;
    }
    const auto issued = coord->issue(session);
    send_json(res, 200,
              json{{"trial_id", issued.trial.trial_id},
                   {"width", issued.image.width()},
                   {"pixels_b64", base64_encode(issued.image.pixels())},
                   {"display_px", options.display_px}});
  }

  void handle_response(const httplib::Request& req, httplib::Response& res) {
    const auto body = json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object() || !body.contains("trial_id") || !body["trial_id"].is_string() ||
        !body.contains("selection") || !body["selection"].is_number_integer() || !body.contains("elapsed_ms") ||
        !body["elapsed_ms"].is_number()) {
      send_error(res, 400, "body must be {trial_id: string, selection: integer, elapsed_ms: number}");
      return;
    }
    const auto selection = body["selection"].get<std::int64_t>();
    if (selection < kAbstain || selection > 9) {
      send_error(res, 422, "selection must be within -1..9");
      return;
    }
    const auto coord = current();
    if (!coord) {
      send_error(res, 503, "dataset not loaded");
      return;
    }
    try {
      coord->respond(body["trial_id"].get<std::string>(), static_cast<int>(selection),
                     body["elapsed_ms"].get<double>());
    } catch (const UnknownTrial& e) {
      send_error(res, 404, e.what());
      return;
    } catch (const DuplicateResponse& e) {
      send_error(res, 409, e.what());
      return;
    } catch (const InvalidSelection& e) {
      send_error(res, 422, e.what());
      return;
    } catch (const DomainError& e) {
      send_error(res, 400, e.what());
      return;
    }
    send_json(res, 200, json{{"recorded", true}});
  }

  void handle_stats(const httplib::Request& req, httplib::Response& res) {
    const auto by = req.has_param("by") ? req.get_param_value("by") : std::string("resolution");
    if (by != "resolution" && by != "pixels") {
      send_error(res, 400, "by must be 'resolution' or 'pixels'");
      return;
    }
    std::uint64_t bin = 1;
    if (req.has_param("bin")) {
      try {
        const auto text = req.get_param_value("bin");
        std::size_t used = 0;
        const auto v = std::stoll(text, &used);
        if (used != text.size() || v < 1) throw std::invalid_argument("bin");
        bin = static_cast<std::uint64_t>(v);
      } catch (const std::exception&) {
        send_error(res, 400, "bin must be a positive integer");
        return;
      }
    }

    const auto contents = load_log(log.path(), /*strict=*/false);
    const auto table =
        by == "resolution" ? aggregate_by_resolution(contents.records) : aggregate_by_pixels(contents.records, bin);

    if (req.get_param_value("format") == "csv") {
      res.status = 200;
      res.set_header("Cache-Control", "no-store");
      res.set_content(to_csv(table), "text/csv");
      return;
    }
    json rows = json::array();
    for (const auto& r : table.rows) {
      rows.push_back(json{{"key", r.key}, {"trials", r.trials}, {"errors", r.errors}, {"error_rate", r.error_rate}});
    }
    send_json(res, 200,
              json{{"by", by},
                   {"bin_width", table.bin_width},
                   {"rows", std::move(rows)},
                   {"total_trials", table.total_trials()},
                   {"total_errors", table.total_errors()},
                   {"skipped_lines", contents.problems.size()}});
  }

  void install_routes() {
    server.Get("/api/v1/trial", [this](const auto& req, auto& res) { handle_trial(req, res); });
    server.Post("/api/v1/response", [this](const auto& req, auto& res) { handle_response(req, res); });
    server.Get("/api/v1/stats", [this](const auto& req, auto& res) { handle_stats(req, res); });
    if (!options.ui_dir.empty()) {
      server.set_mount_point("/", options.ui_dir.string());
    } else {
      server.Get("/", [](const auto&, auto& res) { res.set_content(kFallbackPage, "text/html"); });
    }
    server.set_exception_handler([](const auto&, auto& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      } catch (...) {
        send_error(res, 500, "internal error");
      }
    });
  }

  ServiceOptions options;
  TrialLog log;
  httplib::Server server;
  mutable std::mutex mutex;
  std::shared_ptr<TrialCoordinator> coordinator;
};

LabelingService::LabelingService(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {
  impl_->install_routes();
}

LabelingService::~LabelingService() { stop(); }

void LabelingService::set_dataset(std::shared_ptr<const Split> split) {
  auto coord = std::make_shared<TrialCoordinator>(std::move(split), impl_->log, impl_->options.coordinator);
  std::lock_guard lock(impl_->mutex);
  impl_->coordinator = std::move(coord);
}

bool LabelingService::dataset_loaded() const { return impl_->current() != nullptr; }

int LabelingService::bind(const std::string& host, int port) {
  if (port == 0) {
    return impl_->server.bind_to_any_port(host);
  }
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool LabelingService::serve() { return impl_->server.listen_after_bind(); }

void LabelingService::stop() {
  if (impl_->server.is_running()) {
    impl_->server.stop();
  }
}

void LabelingService::wait_until_ready() const { impl_->server.wait_until_ready(); }

TrialCoordinator* LabelingService::coordinator() { return impl_->current().get(); }

const std::filesystem::path& LabelingService::log_path() const noexcept { return impl_->log.path(); }

}  // namespace hiceaa

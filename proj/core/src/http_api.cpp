#include "audit/http_api.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>

#include "audit/error.hpp"
#include "audit/extraction.hpp"
#include "audit/util.hpp"
#include "json_codec.hpp"

namespace audit::service {

namespace {

void reply_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
  reply_json(res, status, nlohmann::json{{"error", message}});
}

std::optional<int> parse_int_param(const httplib::Request& req, const char* name,
                                   int fallback) {
  if (!req.has_param(name)) return fallback;
  const std::string raw = req.get_param_value(name);
  try {
    std::size_t used = 0;
    const int value = std::stoi(raw, &used);
    if (used != raw.size()) return std::nullopt;
    return value;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

struct ApiServer::Impl {
  JobManager& manager;
  std::string host;
  int requested_port;
  int bound_port = -1;
  httplib::Server server;
  std::thread thread;

  Impl(JobManager& mgr, std::string h, int p)
      : manager(mgr), host(std::move(h)), requested_port(p) {}

  void install_routes() {
    server.Post("/evaluations", [this](const httplib::Request& req,
                                       httplib::Response& res) {
      const auto body = nlohmann::json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object()) {
        reply_error(res, 400, "body must be a JSON object");
        return;
      }
      Submission submission;
      submission.text = body.value("text", std::string());
      submission.title = body.value("title", std::string());
      submission.owner = body.value("owner", std::string());
      if (util::trim(submission.text).empty()) {
        reply_error(res, 400, "text must be non-empty");
        return;
      }
      if (util::trim(submission.owner).empty()) {
        reply_error(res, 400, "owner must be non-empty");
        return;
      }
      if (body.contains("content_type")) {
        if (!body["content_type"].is_string()) {
          reply_error(res, 400, "content_type must be a string");
          return;
        }
        const auto type = extraction::content_type_from_string(
            body["content_type"].get<std::string>());
        if (!type) {
          reply_error(res, 400, "content_type must be book, article, code or other");
          return;
        }
        submission.content_type = *type;
      }
      if (body.contains("label") && !body["label"].is_null()) {
        if (!body["label"].is_string()) {
          reply_error(res, 400, "label must be a string");
          return;
        }
        submission.label = body["label"].get<std::string>();
      }
      const std::string id = manager.submit(std::move(submission));
      reply_json(res, 202, nlohmann::json{{"job_id", id}});
    });

    server.Get(R"(/evaluations/([^/]+))", [this](const httplib::Request& req,
                                                 httplib::Response& res) {
      const auto job = manager.get(req.matches[1].str());
      if (!job) {
        reply_error(res, 404, "unknown job");
        return;
      }
      reply_json(res, 200, job_to_json(*job));
    });

    server.Get("/evaluations", [this](const httplib::Request& req,
                                      httplib::Response& res) {
      const auto offset = parse_int_param(req, "offset", 0);
      const auto limit = parse_int_param(req, "limit", 20);
      if (!offset || *offset < 0 || !limit || *limit < 0) {
        reply_error(res, 400, "offset and limit must be non-negative integers");
        return;
      }
      nlohmann::json jobs = nlohmann::json::array();
      for (const auto& job : manager.list(*offset, *limit)) {
        jobs.push_back(job_to_json(job));
      }
      reply_json(res, 200,
                 nlohmann::json{{"jobs", std::move(jobs)},
                                {"total", manager.job_count()},
                                {"offset", *offset},
                                {"limit", *limit}});
    });

    server.Get("/search", [this](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_param("q") || util::trim(req.get_param_value("q")).empty()) {
        reply_error(res, 400, "q must be non-empty");
        return;
      }
      const auto k = parse_int_param(req, "k", 5);
      if (!k || *k < 1) {
        reply_error(res, 400, "k must be a positive integer");
        return;
      }
      try {
        nlohmann::json matches = nlohmann::json::array();
        for (const auto& match : manager.search(req.get_param_value("q"), *k)) {
          matches.push_back(match_to_json(match));
        }
        reply_json(res, 200, nlohmann::json{{"matches", std::move(matches)}});
      } catch (const std::exception& e) {
        reply_error(res, 503, std::string("search unavailable: ") + e.what());
      }
    });

    server.Get("/analytics", [this](const httplib::Request&, httplib::Response& res) {
      reply_json(res, 200, analytics_to_json(manager.analytics()));
    });

    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      reply_json(res, 200, nlohmann::json{{"status", "ok"}});
    });
  }
};

ApiServer::ApiServer(JobManager& manager, std::string host, int port)
    : impl_(std::make_unique<Impl>(manager, std::move(host), port)) {}

ApiServer::~ApiServer() {
  if (impl_ && impl_->thread.joinable()) stop();
}

void ApiServer::start() {
  impl_->install_routes();
  if (impl_->requested_port == 0) {
    impl_->bound_port = impl_->server.bind_to_any_port(impl_->host);
    if (impl_->bound_port < 0)
      throw Error(Errc::provider_unavailable, "cannot bind a port on " + impl_->host);
  } else {
    if (!impl_->server.bind_to_port(impl_->host, impl_->requested_port))
      throw Error(Errc::provider_unavailable,
                  "cannot bind " + impl_->host + ":" +
                      std::to_string(impl_->requested_port));
    impl_->bound_port = impl_->requested_port;
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  for (int i = 0; i < 200 && !impl_->server.is_running(); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  if (!impl_->server.is_running())
    throw Error(Errc::provider_unavailable, "server failed to start");
}

void ApiServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int ApiServer::port() const { return impl_->bound_port; }

}  // namespace audit::service

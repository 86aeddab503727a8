#pragma once

#include <memory>
#include <string>

#include "audit/pipeline.hpp"

namespace audit::service {

/// JSON-over-HTTP front end for a JobManager.
///
///   POST /evaluations          submit; 202 with {"job_id": ...}
///   GET  /evaluations/{id}     job status / result
///   GET  /evaluations          paged list (?offset=&limit=)
///   GET  /search?q=...&k=...   vector search over past evaluations
///   GET  /analytics            aggregate stats
///   GET  /healthz              liveness
class ApiServer {
 public:
  /// port 0 picks a free port; see port() after start().
  ApiServer(JobManager& manager, std::string host, int port);
  ~ApiServer();

  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds and serves on a background thread. Throws provider_unavailable
  /// if the socket cannot be bound.
  void start();
  void stop();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace audit::service

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "audit/config.hpp"
#include "audit/extraction.hpp"
#include "audit/stats.hpp"
#include "audit/vectorlog.hpp"

namespace audit::service {

enum class JobState {
  queued,
  extracting,
  paraphrasing,
  quizzing,
  scoring,
  done,
  failed,
  duplicate,
};

const char* to_string(JobState state);
std::optional<JobState> job_state_from_string(std::string_view name);
bool is_terminal(JobState state);

struct Submission {
  std::string text;
  std::string title;
  std::string owner;
  extraction::ContentType content_type = extraction::ContentType::book;
  /// Optional ground-truth tag ("member" or "clean") for calibration runs.
  std::optional<std::string> label;
};

/// Document id is a content hash, so resubmitting identical text yields the
/// same id regardless of title or owner.
extraction::Document make_document(const Submission& submission);

struct EvaluationJob {
  std::string job_id;
  std::string doc_id;
  std::string title;
  std::string owner;
  extraction::ContentType content_type = extraction::ContentType::book;
  JobState state = JobState::queued;
  std::int64_t created_at = 0;
  std::int64_t finished_at = 0;
  std::optional<stats::DocumentVerdict> verdict;
  std::optional<std::string> error;
  std::optional<std::string> label;
  /// Calls made to the generation + evaluation providers for this job.
  int provider_call_count = 0;
  /// Sum of per-call token estimates (prompt + completion).
  long long token_total = 0;
};

std::string to_json_string(const EvaluationJob& job, bool pretty = false);
EvaluationJob job_from_json_string(std::string_view text);
std::string to_json_string(const stats::DocumentVerdict& verdict,
                           bool pretty = false);

struct PipelineHooks {
  std::function<void(JobState)> on_state;
};

/// Runs one document through extract -> paraphrase -> quiz -> score and
/// records the outcome into the store. A store hit on the document vector
/// short-circuits to `duplicate` before any provider call.
EvaluationJob run_pipeline(const extraction::Document& document,
                           const config::PipelineConfig& cfg,
                           const config::ProviderSet& providers,
                           vectorlog::VectorStore& store,
                           const PipelineHooks& hooks = {},
                           std::optional<std::string> label = std::nullopt,
                           std::string job_id = {});

struct Analytics {
  std::map<std::string, int> jobs_per_state;
  int total_jobs = 0;
  std::optional<double> mean_detection_rate;
  /// AUC over labeled jobs' detection rates; needs both classes present.
  std::optional<double> auc;
  int labeled_member = 0;
  int labeled_clean = 0;
  long long token_total = 0;
};

/// Owns the job queue, worker threads, vector store, and history file.
/// Jobs survive restarts via a JSONL history; the store via its snapshot.
class JobManager {
 public:
  explicit JobManager(config::PipelineConfig cfg);
  JobManager(config::PipelineConfig cfg, config::ProviderSet providers);
  ~JobManager();

  JobManager(const JobManager&) = delete;
  JobManager& operator=(const JobManager&) = delete;

  /// Enqueues and returns the job id immediately.
  std::string submit(Submission submission);
  /// Enqueues and waits for that job to reach a terminal state.
  EvaluationJob run_blocking(Submission submission);

  std::optional<EvaluationJob> get(const std::string& job_id) const;
  /// Newest first.
  std::vector<EvaluationJob> list(int offset, int limit) const;
  std::size_t job_count() const;

  Analytics analytics() const;
  std::vector<vectorlog::QueryMatch> search(std::string_view query_text,
                                            int k) const;

  /// Blocks until the queue is empty and all workers are idle.
  void wait_idle();

  /// Flushes the history file and writes a store snapshot.
  void persist();

  const config::PipelineConfig& config() const { return cfg_; }
  vectorlog::VectorStore& store() { return store_; }

  /// Test observer, called on every state change. Set before submitting.
  std::function<void(const std::string& job_id, JobState state)> state_observer;

 private:
  void worker_loop();
  void append_history(const EvaluationJob& job);
  void load_history();

  config::PipelineConfig cfg_;
  config::ProviderSet providers_;
  vectorlog::VectorStore store_;

  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace audit::service

#include "audit/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "audit/error.hpp"
#include "audit/quiz.hpp"
#include "audit/util.hpp"
#include "json_codec.hpp"

namespace audit::service {

const char* to_string(JobState state) {
  switch (state) {
    case JobState::queued: return "queued";
    case JobState::extracting: return "extracting";
    case JobState::paraphrasing: return "paraphrasing";
    case JobState::quizzing: return "quizzing";
    case JobState::scoring: return "scoring";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
    case JobState::duplicate: return "duplicate";
  }
  return "queued";
}

std::optional<JobState> job_state_from_string(std::string_view name) {
  if (name == "queued") return JobState::queued;
  if (name == "extracting") return JobState::extracting;
  if (name == "paraphrasing") return JobState::paraphrasing;
  if (name == "quizzing") return JobState::quizzing;
  if (name == "scoring") return JobState::scoring;
  if (name == "done") return JobState::done;
  if (name == "failed") return JobState::failed;
  if (name == "duplicate") return JobState::duplicate;
  return std::nullopt;
}

bool is_terminal(JobState state) {
  return state == JobState::done || state == JobState::failed ||
         state == JobState::duplicate;
}

namespace {

std::string hex16(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

// Ids must stay unique across process restarts sharing one history file,
// so a wall-clock counter alone is not enough.
std::string fresh_job_id(const std::string& doc_id) {
  static std::atomic<std::uint64_t> counter{0};
  const auto ticks = static_cast<std::uint64_t>(
      std::chrono::steady_clock::now().time_since_epoch().count());
  return "j-" + hex16(util::splitmix64(util::fnv1a64(doc_id) ^
                                       util::splitmix64(ticks) ^
                                       counter.fetch_add(1)));
}

// Forwards to the wrapped provider while accumulating call and token
// counts for one job. A call that throws is still counted as a call.
class MeteredProvider final : public providers::GenerationProvider {
 public:
  MeteredProvider(providers::GenerationProvider& inner, std::atomic<int>& calls,
                  std::atomic<long long>& tokens)
      : inner_(inner), calls_(calls), tokens_(tokens) {}

  providers::GenerationResponse generate(
      const providers::GenerationRequest& request) override {
    calls_.fetch_add(1);
    auto response = inner_.generate(request);
    // The fixed estimator over the exchanged texts keeps accounting
    // consistent across providers that report nothing.
    tokens_.fetch_add(
        static_cast<long long>(providers::token_estimate(request.system_prompt)) +
        providers::token_estimate(request.user_prompt) +
        providers::token_estimate(response.text));
    return response;
  }

 private:
  providers::GenerationProvider& inner_;
  std::atomic<int>& calls_;
  std::atomic<long long>& tokens_;
};

std::string verdict_summary(const stats::DocumentVerdict& verdict) {
  std::ostringstream out;
  out << stats::to_string(verdict.verdict) << " rate=" << verdict.detection_rate
      << " p=" << verdict.p_value << " n=" << verdict.n_trials;
  return out.str();
}

}  // namespace

extraction::Document make_document(const Submission& submission) {
  extraction::Document doc;
  doc.id = "doc-" + hex16(util::fnv1a64(submission.text));
  doc.title = submission.title.empty() ? "untitled" : submission.title;
  doc.owner = submission.owner;
  doc.content_type = submission.content_type;
  doc.text = submission.text;
  doc.submitted_at = util::now_unix_seconds();
  return doc;
}

EvaluationJob run_pipeline(const extraction::Document& document,
                           const config::PipelineConfig& cfg,
                           const config::ProviderSet& providers,
                           vectorlog::VectorStore& store, const PipelineHooks& hooks,
                           std::optional<std::string> label, std::string job_id) {
  EvaluationJob job;
  job.job_id = job_id.empty() ? fresh_job_id(document.id) : std::move(job_id);
  job.doc_id = document.id;
  job.title = document.title;
  job.owner = document.owner;
  job.content_type = document.content_type;
  job.label = std::move(label);
  job.created_at = util::now_unix_seconds();
  job.state = JobState::queued;

  const auto set_state = [&](JobState state) {
    job.state = state;
    if (hooks.on_state) hooks.on_state(state);
  };

  std::atomic<int> calls{0};
  std::atomic<long long> tokens{0};
  MeteredProvider target(*providers.target, calls, tokens);
  MeteredProvider generator(*providers.generator, calls, tokens);

  try {
    const auto doc_vector = providers.embedder->embed(document.text);
    if (const auto prior = store.dedup_check(doc_vector, cfg.store)) {
      if (const auto it = prior->metadata.find("verdict_json");
          it != prior->metadata.end()) {
        const auto parsed = nlohmann::json::parse(it->second, nullptr, false);
        if (!parsed.is_discarded()) job.verdict = verdict_from_json(parsed);
      }
      set_state(JobState::duplicate);
    } else {
      set_state(JobState::extracting);
      const auto chunks = extraction::chunk_passages(document, cfg.uniqueness);
      const auto ranked = extraction::uniqueness_rank(chunks, cfg.uniqueness);
      const auto selected =
          extraction::select_unique(ranked, cfg.uniqueness.passages_to_select);
      if (selected.empty())
        throw Error(Errc::not_enough_passages, "no passages were selected");

      if (providers.memorizer && cfg.target_provider.memorize_submissions) {
        for (const auto& passage : selected) {
          providers.memorizer->memorize(extraction::passage_key(passage), passage.text);
        }
      }

      set_state(JobState::paraphrasing);
      std::vector<paraphrase::ParaphraseSet> complete_sets;
      for (const auto& passage : selected) {
        auto set = paraphrase::generate_paraphrase_set(passage, generator,
                                                       *providers.embedder,
                                                       cfg.validation);
        if (set.complete(cfg.validation.required_paraphrases)) {
          complete_sets.push_back(std::move(set));
        }
      }
      if (complete_sets.empty())
        throw Error(Errc::incomplete_set,
                    "no passage produced a complete paraphrase set within budget");

      set_state(JobState::quizzing);
      const int option_count = cfg.validation.required_paraphrases + 1;
      std::vector<quiz::QuizTrial> trials;
      for (const auto& set : complete_sets) {
        const auto question = quiz::build_question(
            set, cfg.service.question_mode, document.owner, &generator,
            cfg.validation.required_paraphrases);
        const auto permutations =
            cfg.quiz.permutation_mode == quiz::QuizConfig::PermutationMode::full
                ? quiz::enumerate_permutations(option_count)
                : quiz::balanced_subset(option_count, cfg.quiz.budget_per_question,
                                        cfg.quiz.permutation_seed);
        auto run = quiz::run_trials(question, permutations, target, cfg.policy);
        for (auto& trial : run.trials) trials.push_back(std::move(trial));
        if (run.aborted) {
          throw Error(Errc::provider_unavailable,
                      "trials aborted: " + run.abort_error);
        }
      }

      set_state(JobState::scoring);
      const auto verdict = stats::make_verdict(document.id, trials, cfg.stats);
      job.verdict = verdict;

      vectorlog::VectorRecord record;
      record.id = document.id;
      record.vector = doc_vector;
      record.metadata["owner"] = document.owner;
      record.metadata["timestamp"] = util::format_iso8601(util::now_unix_seconds());
      record.metadata["content_type"] = extraction::to_string(document.content_type);
      record.metadata["verdict_summary"] = verdict_summary(verdict);
      record.metadata["verdict_json"] = to_json_string(verdict);
      record.metadata["title"] = document.title;
      if (job.label) record.metadata["label"] = *job.label;
      store.upsert(std::move(record));
      set_state(JobState::done);
    }
  } catch (const std::exception& e) {
    job.error = e.what();
    set_state(JobState::failed);
  }

  job.provider_call_count = calls.load();
  job.token_total = tokens.load();
  job.finished_at = util::now_unix_seconds();
  return job;
}

struct JobManager::Impl {
  mutable std::mutex mutex;
  std::condition_variable work_ready;
  std::condition_variable job_done;
  std::deque<std::string> queue;
  std::map<std::string, EvaluationJob> jobs;
  std::map<std::string, Submission> pending;
  std::vector<std::string> order;  // submission order, oldest first
  std::vector<std::thread> workers;
  std::ofstream history;
  bool stopping = false;
  int active = 0;
};

JobManager::JobManager(config::PipelineConfig cfg)
    : JobManager(std::move(cfg), config::ProviderSet{}) {
  providers_ = config::build_providers(cfg_);
}

JobManager::JobManager(config::PipelineConfig cfg, config::ProviderSet providers)
    : cfg_(std::move(cfg)),
      providers_(std::move(providers)),
      store_(providers::kEmbeddingDim),
      impl_(std::make_unique<Impl>()) {
  cfg_.finalize();
  if (!cfg_.store.snapshot_path.empty() &&
      std::filesystem::exists(cfg_.store.snapshot_path)) {
    store_ = vectorlog::VectorStore::snapshot_load(cfg_.store.snapshot_path,
                                                   providers::kEmbeddingDim);
  }
  load_history();
  if (!cfg_.service.history_path.empty()) {
    impl_->history.open(cfg_.service.history_path, std::ios::app | std::ios::binary);
  }
  const int workers = cfg_.service.workers;
  impl_->workers.reserve(static_cast<std::size_t>(workers));
  for (int i = 0; i < workers; ++i) {
    impl_->workers.emplace_back([this] { worker_loop(); });
  }
}

JobManager::~JobManager() {
  {
    std::lock_guard lock(impl_->mutex);
    impl_->stopping = true;
  }
  impl_->work_ready.notify_all();
  for (auto& worker : impl_->workers) worker.join();
  if (!cfg_.store.snapshot_path.empty()) {
    try {
      store_.snapshot_save(cfg_.store.snapshot_path);
    } catch (const std::exception&) {
      // Destruction must not throw; the per-job save already persisted
      // everything that completed.
    }
  }
}

void JobManager::load_history() {
  if (cfg_.service.history_path.empty() ||
      !std::filesystem::exists(cfg_.service.history_path)) {
    return;
  }
  std::ifstream in(cfg_.service.history_path, std::ios::binary);
  if (!in) throw Error(Errc::corrupt_snapshot,
                       "cannot open history: " + cfg_.service.history_path);
  std::string line;
  long line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (util::trim(line).empty()) continue;
    try {
      EvaluationJob job = job_from_json_string(line);
      const std::string id = job.job_id;
      if (!impl_->jobs.count(id)) impl_->order.push_back(id);
      impl_->jobs[id] = std::move(job);
    } catch (const Error& e) {
      throw Error(Errc::corrupt_snapshot, e.what(), line_number);
    }
  }
}

void JobManager::append_history(const EvaluationJob& job) {
  if (!impl_->history.is_open()) return;
  impl_->history << to_json_string(job) << '\n';
  impl_->history.flush();
}

std::string JobManager::submit(Submission submission) {
  const auto document = make_document(submission);
  EvaluationJob job;
  job.doc_id = document.id;
  job.title = document.title;
  job.owner = document.owner;
  job.content_type = document.content_type;
  job.label = submission.label;
  job.state = JobState::queued;
  job.created_at = util::now_unix_seconds();

  std::string id;
  {
    std::lock_guard lock(impl_->mutex);
    id = fresh_job_id(document.id);
    job.job_id = id;
    impl_->jobs[id] = job;
    impl_->order.push_back(id);
    impl_->pending[id] = std::move(submission);
    impl_->queue.push_back(id);
  }
  if (state_observer) state_observer(id, JobState::queued);
  impl_->work_ready.notify_one();
  return id;
}

void JobManager::worker_loop() {
  while (true) {
    std::string id;
    Submission submission;
    {
      std::unique_lock lock(impl_->mutex);
      impl_->work_ready.wait(lock,
                             [&] { return impl_->stopping || !impl_->queue.empty(); });
      if (impl_->queue.empty()) return;  // stopping and drained
      id = impl_->queue.front();
      impl_->queue.pop_front();
      submission = std::move(impl_->pending.at(id));
      impl_->pending.erase(id);
      ++impl_->active;
    }

    const auto document = make_document(submission);
    PipelineHooks hooks;
    hooks.on_state = [this, &id](JobState state) {
      {
        std::lock_guard lock(impl_->mutex);
        auto it = impl_->jobs.find(id);
        if (it != impl_->jobs.end()) it->second.state = state;
      }
      if (state_observer) state_observer(id, state);
    };

    EvaluationJob finished =
        run_pipeline(document, cfg_, providers_, store_, hooks, submission.label, id);

    {
      std::lock_guard lock(impl_->mutex);
      finished.created_at = impl_->jobs.at(id).created_at;
      impl_->jobs[id] = finished;
      --impl_->active;
    }
    append_history(finished);
    if (!cfg_.store.snapshot_path.empty() && finished.state == JobState::done) {
      try {
        store_.snapshot_save(cfg_.store.snapshot_path);
      } catch (const std::exception&) {
        // Persisting is best-effort per job; the destructor retries.
      }
    }
    impl_->job_done.notify_all();
  }
}

EvaluationJob JobManager::run_blocking(Submission submission) {
  const std::string id = submit(std::move(submission));
  std::unique_lock lock(impl_->mutex);
  impl_->job_done.wait(lock, [&] { return is_terminal(impl_->jobs.at(id).state); });
  return impl_->jobs.at(id);
}

std::optional<EvaluationJob> JobManager::get(const std::string& job_id) const {
  std::lock_guard lock(impl_->mutex);
  auto it = impl_->jobs.find(job_id);
  if (it == impl_->jobs.end()) return std::nullopt;
  return it->second;
}

std::vector<EvaluationJob> JobManager::list(int offset, int limit) const {
  if (offset < 0) offset = 0;
  if (limit < 0) limit = 0;
  std::lock_guard lock(impl_->mutex);
  std::vector<EvaluationJob> out;
  const auto total = static_cast<int>(impl_->order.size());
  for (int i = total - 1 - offset; i >= 0 && static_cast<int>(out.size()) < limit; --i) {
    out.push_back(impl_->jobs.at(impl_->order[static_cast<std::size_t>(i)]));
  }
  return out;
}

std::size_t JobManager::job_count() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->jobs.size();
}

Analytics JobManager::analytics() const {
  std::lock_guard lock(impl_->mutex);
  Analytics out;
  double rate_sum = 0.0;
  int rate_count = 0;
  std::vector<double> member_scores;
  std::vector<double> clean_scores;
  for (const auto& [id, job] : impl_->jobs) {
    ++out.jobs_per_state[to_string(job.state)];
    ++out.total_jobs;
    out.token_total += job.token_total;
    if (job.verdict) {
      rate_sum += job.verdict->detection_rate;
      ++rate_count;
      if (job.label == "member") member_scores.push_back(job.verdict->detection_rate);
      if (job.label == "clean") clean_scores.push_back(job.verdict->detection_rate);
    }
  }
  out.labeled_member = static_cast<int>(member_scores.size());
  out.labeled_clean = static_cast<int>(clean_scores.size());
  if (rate_count > 0) out.mean_detection_rate = rate_sum / rate_count;
  if (!member_scores.empty() && !clean_scores.empty()) {
    out.auc = stats::roc_auc(member_scores, clean_scores);
  }
  return out;
}

std::vector<vectorlog::QueryMatch> JobManager::search(std::string_view query_text,
                                                      int k) const {
  const auto vector = providers_.embedder->embed(query_text);
  return store_.query(vector, k);
}

void JobManager::wait_idle() {
  std::unique_lock lock(impl_->mutex);
  impl_->job_done.wait(lock, [&] { return impl_->queue.empty() && impl_->active == 0; });
}

void JobManager::persist() {
  if (!cfg_.store.snapshot_path.empty()) {
    store_.snapshot_save(cfg_.store.snapshot_path);
  }
  std::lock_guard lock(impl_->mutex);
  if (impl_->history.is_open()) impl_->history.flush();
}

}  // namespace audit::service

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "audit/config.hpp"
#include "audit/error.hpp"
#include "audit/extraction.hpp"
#include "audit/pipeline.hpp"
#include "audit/providers.hpp"
#include "audit/util.hpp"
#include "test_support.hpp"

using namespace audit;
using namespace audit::service;

namespace {

// Four unrelated prose documents, each long enough for two passages. The
// topics keep their embeddings far apart so dedup never cross-fires.
const std::string kGlacierDoc =
    "The survey team reached the glacier snout a little after dawn, when the "
    "ice still held the blue shadow of the ridge. Marta checked the stakes "
    "they had drilled the previous autumn and found that the lowest one had "
    "toppled into a meltwater channel. She photographed the channel, measured "
    "its width with the folding rule, and called the numbers back to Piotr, "
    "who wrote them in the yellow field book with a pencil stub. The ablation "
    "readings were worse than the model predicted. Piotr taped a fresh prism "
    "to the reference boulder and sighted the theodolite on the far cairn. "
    "Wind came down the icefall in long pulses, lifting grit off the moraine "
    "and pattering it against their shells. By noon they had finished the "
    "lower transect and ate bread and hard cheese on a slab that had calved "
    "from the serac band years ago. Marta marked two new crevasses on the "
    "sketch map and flagged a snow bridge that had sagged since the last "
    "visit. They roped up for the upper basin, where the firn line had "
    "retreated another eighty meters, and the radar sled hissed over the old "
    "accumulation zone until the light went flat.";

const std::string kMarketDoc =
    "The fish market opened before the streetlights shut off, and the first "
    "crates of herring came up the ramp glistening under a crust of ice. "
    "Auctioneers walked the rows chalking lot numbers on the lids while the "
    "buyers from the smokehouses stamped their boots and blew on their "
    "fingers. Old Sefa ran the scale house and would not be hurried by "
    "anyone. She weighed each pallet twice, slid the brass counterweights "
    "with a flick, and sang out the totals in a voice that carried over the "
    "forklifts. The mackerel boats had come in late because of the swell, so "
    "the early bidding circled around flatfish and a single enormous halibut "
    "that took two men to lift onto the display bench. A restaurant runner "
    "argued about the skate wings and lost. Gulls worked the gutting line "
    "from the rafters, dropping to snatch trimmings the moment a knife hand "
    "turned away. By half past seven the floor was hosed down, the empty "
    "crates were stacked in leaning towers, and the accountant in the glass "
    "booth was matching dockets to the auction slips with a red pen held "
    "crosswise in her mouth.";

const std::string kPressDoc =
    "The letterpress shop kept its type in oak cases that smelled of machine "
    "oil and graphite. Apprentices learned the lay of the case before they "
    "were allowed near the composing stick, reciting the compartments until "
    "their hands could find a lowercase e in the dark. Hendrik set the first "
    "line of the broadside at a steady click, nicks facing out, thin spaces "
    "snugged against the full point. The proof came off the galley press "
    "gray and uneven, so he dabbed the forme again and pulled a second "
    "sheet. Two wrong founts had crept into the italic, and he swapped them "
    "with tweezers without breaking the measure. The big cylinder machine in "
    "the back took the afternoon run, its rollers freshly washed, the "
    "delivery fan flipping printed sheets onto the pile in a whisper of "
    "wind. Ink was mixed by eye to match the client's swatch, a dense "
    "bottle green that needed three passes of the muller. When the run "
    "ended, Hendrik distributed the type back into the cases, washed the "
    "forme with lye water, and hung the day's proofs on the wire where the "
    "morning light would show every flaw.";

const std::string kSignalDoc =
    "The signal box stood at the junction where the coast line split from "
    "the valley route, and its levers were polished bright where forty years "
    "of hands had gripped them. Eleri came on shift at six, read the train "
    "register, and wound the block instruments while the kettle ticked on "
    "the stove. The morning coal empties were running twelve minutes late, "
    "which meant holding the milk train at the outer home until the section "
    "cleared. She pulled the distant back to caution and watched the bobbing "
    "lamp of the permanent way gang clear the crossing. Bells exchanged "
    "their codes up and down the line, two pause three, answered and "
    "repeated, and she moved the levers in the order the diagram demanded, "
    "feeling the wire run out through the cranks under the floor. A tail "
    "lamp confirmed the empties complete, and she gave train out of section "
    "to the box at the tunnel mouth. Rain began before the school train was "
    "due, so she lit the lamp over the frame early and entered the weather "
    "in the register in her careful round hand, the nib scratching in the "
    "quiet between bells.";

config::PipelineConfig base_config() {
  config::PipelineConfig cfg;
  cfg.service.history_path = "";  // tests opt into persistence explicitly
  cfg.service.workers = 2;
  cfg.policy.backoff_base_ms = 1;
  cfg.finalize();
  return cfg;
}

Submission make_submission(const std::string& text, const std::string& title,
                           std::optional<std::string> label = std::nullopt) {
  Submission s;
  s.text = text;
  s.title = title;
  s.owner = "Ms. Harrow";
  s.label = std::move(label);
  return s;
}

// Forwards and counts; proves whether the wrapped provider was touched.
class CountingProvider final : public providers::GenerationProvider {
 public:
  explicit CountingProvider(std::shared_ptr<providers::GenerationProvider> inner)
      : inner_(std::move(inner)) {}

  providers::GenerationResponse generate(
      const providers::GenerationRequest& request) override {
    calls_.fetch_add(1);
    return inner_->generate(request);
  }

  int calls() const { return calls_.load(); }

 private:
  std::shared_ptr<providers::GenerationProvider> inner_;
  std::atomic<int> calls_{0};
};

// Keeps every exchanged text so token accounting can be recomputed outside.
class RecordingProvider final : public providers::GenerationProvider {
 public:
  explicit RecordingProvider(std::shared_ptr<providers::GenerationProvider> inner)
      : inner_(std::move(inner)) {}

  providers::GenerationResponse generate(
      const providers::GenerationRequest& request) override {
    auto response = inner_->generate(request);
    std::lock_guard lock(mutex_);
    exchanges_.push_back({request.system_prompt, request.user_prompt, response.text});
    return response;
  }

  struct Exchange {
    std::string system, user, response;
  };

  std::vector<Exchange> exchanges() const {
    std::lock_guard lock(mutex_);
    return exchanges_;
  }

 private:
  std::shared_ptr<providers::GenerationProvider> inner_;
  mutable std::mutex mutex_;
  std::vector<Exchange> exchanges_;
};

std::string hex16(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

}  // namespace

TEST_CASE("job state names round trip") {
  for (auto state : {JobState::queued, JobState::extracting, JobState::paraphrasing,
                     JobState::quizzing, JobState::scoring, JobState::done,
                     JobState::failed, JobState::duplicate}) {
    CHECK(job_state_from_string(to_string(state)) == state);
  }
  CHECK(!job_state_from_string("resting").has_value());
  CHECK(is_terminal(JobState::done));
  CHECK(is_terminal(JobState::failed));
  CHECK(is_terminal(JobState::duplicate));
  CHECK_FALSE(is_terminal(JobState::queued));
  CHECK_FALSE(is_terminal(JobState::scoring));
}

TEST_CASE("document ids hash the text only") {
  auto a = make_document(make_submission("same words", "title one"));
  auto b = make_document(make_submission("same words", "title two"));
  auto c = make_document(make_submission("other words", "title one"));
  CHECK(a.id == b.id);
  CHECK(a.id != c.id);
  CHECK(a.id == "doc-" + hex16(util::fnv1a64("same words")));
  CHECK(a.title == "title one");
  CHECK(make_document(make_submission("x", "")).title == "untitled");
}

TEST_CASE("job json round trips through the history codec") {
  EvaluationJob job;
  job.job_id = "j-00ff";
  job.doc_id = "doc-1234";
  job.title = "Field Notes";
  job.owner = "Ms. Harrow";
  job.content_type = extraction::ContentType::article;
  job.state = JobState::done;
  job.created_at = 1700000000;
  job.finished_at = 1700000042;
  stats::DocumentVerdict verdict;
  verdict.doc_id = "doc-1234";
  verdict.n_trials = 35;
  verdict.n_correct = 9;
  verdict.detection_rate = 9.0 / 35.0;
  verdict.chance_p0 = 0.2;
  verdict.p_value = 0.25;
  verdict.verdict = stats::Verdict::inconclusive;
  job.verdict = verdict;
  job.label = "member";
  job.provider_call_count = 42;
  job.token_total = 12345;

  const auto text = to_json_string(job);
  const auto back = job_from_json_string(text);
  CHECK(back.job_id == job.job_id);
  CHECK(back.doc_id == job.doc_id);
  CHECK(back.title == job.title);
  CHECK(back.owner == job.owner);
  CHECK(back.content_type == job.content_type);
  CHECK(back.state == job.state);
  CHECK(back.created_at == job.created_at);
  CHECK(back.finished_at == job.finished_at);
  REQUIRE(back.verdict.has_value());
  CHECK(back.verdict->n_trials == 35);
  CHECK(back.verdict->n_correct == 9);
  CHECK(back.verdict->detection_rate == verdict.detection_rate);
  CHECK(back.verdict->p_value == verdict.p_value);
  CHECK(back.verdict->verdict == stats::Verdict::inconclusive);
  CHECK_FALSE(back.error.has_value());
  CHECK(back.label == job.label);
  CHECK(back.provider_call_count == 42);
  CHECK(back.token_total == 12345);

  job.error = "not_enough_passages: whatever";
  job.verdict.reset();
  job.label.reset();
  const auto failed = job_from_json_string(to_json_string(job));
  CHECK(failed.error == job.error);
  CHECK_FALSE(failed.verdict.has_value());
  CHECK_FALSE(failed.label.has_value());

  CHECK_THROWS_AS(job_from_json_string("not json"), Error);
  CHECK_THROWS_AS(job_from_json_string("[]"), Error);
}

TEST_CASE("run_pipeline walks the fixture through every stage") {
  auto cfg = base_config();
  auto providers = config::build_providers(cfg);
  vectorlog::VectorStore store;
  const auto text = test_support::read_file(test_support::fixture_path("field_notes.txt"));
  const auto document = make_document(make_submission(text, "Field Notes"));

  std::vector<JobState> seen;
  PipelineHooks hooks;
  hooks.on_state = [&seen](JobState s) { seen.push_back(s); };

  const auto job = run_pipeline(document, cfg, providers, store, hooks);
  CHECK(job.state == JobState::done);
  CHECK(job.job_id.substr(0, 2) == "j-");
  CHECK(job.doc_id == document.id);
  CHECK_FALSE(job.error.has_value());
  REQUIRE(job.verdict.has_value());
  CHECK(job.verdict->n_trials == 35);  // 7 passages, 5 balanced trials each
  CHECK(job.verdict->chance_p0 == 0.20);
  CHECK(job.verdict->detection_rate ==
        double(job.verdict->n_correct) / job.verdict->n_trials);
  CHECK(job.provider_call_count == 42);  // 7 paraphrase calls + 35 trials
  CHECK(job.token_total > 0);
  CHECK(job.finished_at >= job.created_at);

  const std::vector<JobState> expected = {JobState::extracting, JobState::paraphrasing,
                                          JobState::quizzing, JobState::scoring,
                                          JobState::done};
  CHECK(seen == expected);

  REQUIRE(store.size() == 1);
  const auto record = store.get(document.id);
  REQUIRE(record.has_value());
  CHECK(record->metadata.at("owner") == "Ms. Harrow");
  CHECK(record->metadata.at("content_type") == "book");
  CHECK(record->metadata.at("title") == "Field Notes");
  CHECK(record->metadata.count("timestamp") == 1);
  CHECK(record->metadata.count("verdict_summary") == 1);
  CHECK(record->metadata.count("verdict_json") == 1);
}

TEST_CASE("token accounting equals an independent count of exchanged text") {
  auto cfg = base_config();
  config::ProviderSet set;
  auto target = std::make_shared<RecordingProvider>(
      std::make_shared<providers::UniformGuesser>(7));
  auto generator = std::make_shared<RecordingProvider>(
      std::make_shared<providers::MockParaphraser>());
  set.target = target;
  set.generator = generator;
  set.embedder = std::make_shared<providers::HashingEmbedder>();

  vectorlog::VectorStore store;
  const auto document = make_document(make_submission(kGlacierDoc, "Glacier"));
  const auto job = run_pipeline(document, cfg, set, store);
  REQUIRE(job.state == JobState::done);

  long long expected_tokens = 0;
  int expected_calls = 0;
  for (const auto* provider : {target.get(), generator.get()}) {
    for (const auto& e : provider->exchanges()) {
      expected_tokens += providers::token_estimate(e.system) +
                         providers::token_estimate(e.user) +
                         providers::token_estimate(e.response);
      ++expected_calls;
    }
  }
  CHECK(job.provider_call_count == expected_calls);
  CHECK(job.token_total == expected_tokens);
}

TEST_CASE("run_pipeline reports failures instead of throwing") {
  auto cfg = base_config();
  auto providers = config::build_providers(cfg);
  vectorlog::VectorStore store;

  auto tiny = run_pipeline(make_document(make_submission("one two three.", "Tiny")),
                           cfg, providers, store);
  CHECK(tiny.state == JobState::failed);
  REQUIRE(tiny.error.has_value());
  CHECK(tiny.error->find("empty_document") != std::string::npos);
  CHECK_FALSE(tiny.verdict.has_value());
  CHECK(store.size() == 0);

  // Roughly one passage worth of words cannot be ranked against peers.
  std::string one_passage;
  for (int i = 0; i < 6; ++i)
    one_passage += "the gulls crossed the channel before the tide turned again. ";
  auto single = run_pipeline(make_document(make_submission(one_passage, "Single")),
                             cfg, providers, store);
  CHECK(single.state == JobState::failed);
  REQUIRE(single.error.has_value());
  CHECK(single.error->find("not_enough_passages") != std::string::npos);
  CHECK(store.size() == 0);
}

TEST_CASE("a target outage fails the job and keeps the error") {
  class Offline final : public providers::GenerationProvider {
   public:
    providers::GenerationResponse generate(
        const providers::GenerationRequest&) override {
      throw Error(Errc::provider_unavailable, "offline for maintenance");
    }
  };

  auto cfg = base_config();
  config::ProviderSet set;
  set.target = std::make_shared<Offline>();
  set.generator = std::make_shared<providers::MockParaphraser>();
  set.embedder = std::make_shared<providers::HashingEmbedder>();

  vectorlog::VectorStore store;
  const auto job = run_pipeline(make_document(make_submission(kPressDoc, "Press")),
                                cfg, set, store);
  CHECK(job.state == JobState::failed);
  REQUIRE(job.error.has_value());
  CHECK(job.error->find("offline for maintenance") != std::string::npos);
  CHECK(job.provider_call_count > 0);
  CHECK(store.size() == 0);
}

TEST_CASE("duplicate submissions skip every provider call") {
  auto cfg = base_config();
  auto counted_target = std::make_shared<CountingProvider>(
      std::make_shared<providers::UniformGuesser>(7));
  auto counted_generator = std::make_shared<CountingProvider>(
      std::make_shared<providers::MockParaphraser>());
  config::ProviderSet set;
  set.target = counted_target;
  set.generator = counted_generator;
  set.embedder = std::make_shared<providers::HashingEmbedder>();

  JobManager manager(cfg, set);
  const auto text = test_support::read_file(test_support::fixture_path("field_notes.txt"));

  const auto first = manager.run_blocking(make_submission(text, "Field Notes"));
  REQUIRE(first.state == JobState::done);
  REQUIRE(first.verdict.has_value());
  const int calls_after_first = counted_target->calls() + counted_generator->calls();
  CHECK(calls_after_first > 0);

  const auto again = manager.run_blocking(make_submission(text, "Renamed Copy"));
  CHECK(again.state == JobState::duplicate);
  CHECK(again.job_id != first.job_id);
  CHECK(again.doc_id == first.doc_id);
  CHECK(again.provider_call_count == 0);
  CHECK(again.token_total == 0);
  CHECK(counted_target->calls() + counted_generator->calls() == calls_after_first);
  REQUIRE(again.verdict.has_value());
  CHECK(again.verdict->n_trials == first.verdict->n_trials);
  CHECK(again.verdict->n_correct == first.verdict->n_correct);
  CHECK(again.verdict->p_value == first.verdict->p_value);
  CHECK(manager.store().size() == 1);
  CHECK(manager.job_count() == 2);
}

TEST_CASE("job manager lists newest first with offset and limit") {
  auto cfg = base_config();
  JobManager manager(cfg);

  std::vector<std::string> ids;
  for (int i = 0; i < 3; ++i) {
    // Tiny texts fail fast; list semantics do not care about success.
    ids.push_back(manager.submit(
        make_submission("too short " + std::to_string(i) + ".",
                        "t" + std::to_string(i))));
  }
  CHECK(ids[0] != ids[1]);
  CHECK(ids[1] != ids[2]);
  manager.wait_idle();

  CHECK(manager.job_count() == 3);
  for (const auto& id : ids) {
    auto job = manager.get(id);
    REQUIRE(job.has_value());
    CHECK(job->state == JobState::failed);
  }
  CHECK_FALSE(manager.get("j-missing").has_value());

  auto page = manager.list(0, 10);
  REQUIRE(page.size() == 3);
  CHECK(page[0].title == "t2");
  CHECK(page[1].title == "t1");
  CHECK(page[2].title == "t0");

  auto middle = manager.list(1, 1);
  REQUIRE(middle.size() == 1);
  CHECK(middle[0].title == "t1");

  CHECK(manager.list(3, 10).empty());
  CHECK(manager.list(0, 0).empty());
  CHECK(manager.list(-1, -1).empty());

  auto analytics = manager.analytics();
  CHECK(analytics.total_jobs == 3);
  CHECK(analytics.jobs_per_state.at("failed") == 3);
  CHECK_FALSE(analytics.mean_detection_rate.has_value());
  CHECK_FALSE(analytics.auc.has_value());
}

TEST_CASE("a state observer sees the full life of a job") {
  auto cfg = base_config();
  cfg.service.workers = 1;
  JobManager manager(cfg);

  std::mutex mutex;
  std::vector<std::pair<std::string, JobState>> events;
  manager.state_observer = [&](const std::string& id, JobState state) {
    std::lock_guard lock(mutex);
    events.emplace_back(id, state);
  };

  const auto job = manager.run_blocking(make_submission(kSignalDoc, "Signal Box"));
  REQUIRE(job.state == JobState::done);

  std::vector<JobState> states;
  for (const auto& [id, state] : events) {
    CHECK(id == job.job_id);
    states.push_back(state);
  }
  const std::vector<JobState> expected = {JobState::queued, JobState::extracting,
                                          JobState::paraphrasing, JobState::quizzing,
                                          JobState::scoring, JobState::done};
  CHECK(states == expected);
}

TEST_CASE("labeled calibration runs separate members from clean documents") {
  auto cfg = base_config();
  auto memorizer = std::make_shared<providers::ScriptedMemorizer>(1.0, 11);
  config::ProviderSet set;
  set.target = memorizer;
  set.memorizer = memorizer;
  set.generator = std::make_shared<providers::MockParaphraser>();
  set.embedder = std::make_shared<providers::HashingEmbedder>();
  JobManager manager(cfg, set);

  const std::vector<std::pair<std::string, std::string>> members = {
      {kGlacierDoc, "Glacier"}, {kMarketDoc, "Market"}};
  const std::vector<std::pair<std::string, std::string>> clean = {
      {kPressDoc, "Press"}, {kSignalDoc, "Signal Box"}};

  for (const auto& [text, title] : members) {
    // Teach the mock every chunk so the verbatim option is always known.
    const auto document = make_document(make_submission(text, title));
    for (const auto& passage :
         extraction::chunk_passages(document, cfg.uniqueness)) {
      memorizer->memorize(extraction::passage_key(passage), passage.text);
    }
    const auto job = manager.run_blocking(make_submission(text, title, "member"));
    REQUIRE(job.state == JobState::done);
    CHECK(job.verdict->detection_rate == 1.0);
    CHECK(job.verdict->verdict == stats::Verdict::likely_in_training);
  }
  for (const auto& [text, title] : clean) {
    const auto job = manager.run_blocking(make_submission(text, title, "clean"));
    REQUIRE(job.state == JobState::done);
    CHECK(job.verdict->detection_rate < 0.6);
  }

  const auto analytics = manager.analytics();
  CHECK(analytics.total_jobs == 4);
  CHECK(analytics.jobs_per_state.at("done") == 4);
  CHECK(analytics.labeled_member == 2);
  CHECK(analytics.labeled_clean == 2);
  REQUIRE(analytics.mean_detection_rate.has_value());
  CHECK(*analytics.mean_detection_rate > 0.0);
  REQUIRE(analytics.auc.has_value());
  CHECK(*analytics.auc == 1.0);
  CHECK(analytics.token_total > 0);

  // The store search should surface the market document for market words.
  const auto matches = manager.search("herring crates auction scale house", 2);
  REQUIRE(!matches.empty());
  CHECK(matches.front().id == make_document(make_submission(kMarketDoc, "")).id);
}

TEST_CASE("history and snapshot survive a restart") {
  test_support::TempDir dir("pipeline-restart");
  auto cfg = base_config();
  cfg.service.history_path = dir.file("history.jsonl");
  cfg.store.snapshot_path = dir.file("store.jsonl");

  const auto fixture =
      test_support::read_file(test_support::fixture_path("field_notes.txt"));

  std::string first_id;
  std::string second_id;
  stats::DocumentVerdict first_verdict;
  long long first_tokens = 0;
  {
    JobManager manager(cfg);
    const auto first = manager.run_blocking(make_submission(fixture, "Field Notes"));
    REQUIRE(first.state == JobState::done);
    first_id = first.job_id;
    first_verdict = *first.verdict;
    first_tokens = first.token_total;
    const auto second = manager.run_blocking(make_submission(kGlacierDoc, "Glacier"));
    REQUIRE(second.state == JobState::done);
    second_id = second.job_id;
    manager.persist();
  }

  JobManager reborn(cfg);
  CHECK(reborn.job_count() == 2);
  const auto replayed = reborn.get(first_id);
  REQUIRE(replayed.has_value());
  CHECK(replayed->state == JobState::done);
  REQUIRE(replayed->verdict.has_value());
  CHECK(replayed->verdict->n_trials == first_verdict.n_trials);
  CHECK(replayed->verdict->p_value == first_verdict.p_value);
  CHECK(replayed->token_total == first_tokens);

  auto page = reborn.list(0, 10);
  REQUIRE(page.size() == 2);
  CHECK(page[0].job_id == second_id);
  CHECK(page[1].job_id == first_id);

  const auto analytics = reborn.analytics();
  CHECK(analytics.total_jobs == 2);
  CHECK(analytics.jobs_per_state.at("done") == 2);
  REQUIRE(analytics.mean_detection_rate.has_value());

  // The reloaded snapshot still recognizes the document as already audited.
  const auto again = reborn.run_blocking(make_submission(fixture, "Resubmitted"));
  CHECK(again.state == JobState::duplicate);
  CHECK(again.provider_call_count == 0);
  REQUIRE(again.verdict.has_value());
  CHECK(again.verdict->p_value == first_verdict.p_value);
  CHECK(reborn.job_count() == 3);
}

TEST_CASE("a corrupt history line is rejected with its line number") {
  test_support::TempDir dir("pipeline-corrupt");
  auto cfg = base_config();
  cfg.service.history_path = dir.file("history.jsonl");

  EvaluationJob job;
  job.job_id = "j-1";
  job.doc_id = "doc-1";
  job.state = JobState::failed;
  job.error = "empty_document: too short";
  {
    std::ofstream out(cfg.service.history_path, std::ios::binary);
    out << to_json_string(job) << '\n';
    out << "this is not a job record\n";
  }

  try {
    JobManager manager(cfg);
    FAIL("expected corrupt_snapshot");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::corrupt_snapshot);
    CHECK(e.line() == 2);
  }
}

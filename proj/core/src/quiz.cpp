#include "audit/quiz.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include <json.hpp>

#include "audit/error.hpp"
#include "audit/util.hpp"

namespace audit::quiz {

const char* to_string(QuestionMode mode) {
  switch (mode) {
    case QuestionMode::create: return "create";
    case QuestionMode::format: return "format";
  }
  return "format";
}

std::optional<QuestionMode> question_mode_from_string(std::string_view name) {
  if (name == "create") return QuestionMode::create;
  if (name == "format") return QuestionMode::format;
  return std::nullopt;
}

bool Permutation::is_valid(int option_count) const {
  if (static_cast<int>(ordering.size()) != option_count) return false;
  std::vector<bool> seen(static_cast<std::size_t>(option_count), false);
  for (int v : ordering) {
    if (v < 0 || v >= option_count || seen[static_cast<std::size_t>(v)]) return false;
    seen[static_cast<std::size_t>(v)] = true;
  }
  return true;
}

void QuizConfig::validate() const {
  if (labels.empty() || labels.size() > 6)
    throw Error(Errc::config_error, "quiz.labels must hold 1 to 6 distinct letters");
  if (std::set<char>(labels.begin(), labels.end()).size() != labels.size())
    throw Error(Errc::config_error, "quiz.labels must be distinct");
  if (budget_per_question < 1 || budget_per_question > 120)
    throw Error(Errc::config_error, "quiz.budget_per_question must be in [1, 120]");
}

namespace {

constexpr std::string_view kStemPrefix = "Which of the following is the exact verbatim passage from ";
constexpr std::string_view kStemSuffix = "'s work?";
// The range marker is an en dash (U+2013); the literal split keeps the hex
// escape from swallowing the following letter.
constexpr std::string_view kInstruction =
    "Answer with a single letter (A\xe2\x80\x93" "E) and nothing else.";

std::string create_mode_stem(const std::string& verbatim,
                             providers::GenerationProvider& provider) {
  providers::GenerationRequest req;
  req.system_prompt = "You write quiz stems and answer in the exact format requested.";
  req.user_prompt =
      "Write the stem of a multiple-choice question asking which option is the "
      "exact verbatim text of the source below. Quote the source's opening words "
      "inside the stem. Respond with only a JSON object of the shape "
      "{\"stem\": \"...\", \"uses_exact_text\": true}.\n"
      "<passage>\n" + verbatim + "\n</passage>";
  req.temperature = 0.0;
  req.max_tokens = 256;
  const auto response = provider.generate(req);

  const std::size_t open = response.text.find('{');
  const std::size_t close = response.text.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open)
    throw Error(Errc::parse_error, "stem response carries no JSON object");
  const auto parsed = nlohmann::json::parse(
      response.text.substr(open, close - open + 1), nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object())
    throw Error(Errc::parse_error, "stem response is not a JSON object");
  if (!parsed.contains("uses_exact_text") || !parsed["uses_exact_text"].is_boolean() ||
      !parsed["uses_exact_text"].get<bool>())
    throw Error(Errc::parse_error, "stem response does not confirm uses_exact_text");
  if (!parsed.contains("stem") || !parsed["stem"].is_string() ||
      parsed["stem"].get<std::string>().empty())
    throw Error(Errc::parse_error, "stem response carries no stem text");
  return parsed["stem"].get<std::string>();
}

}  // namespace

QuizQuestion build_question(const paraphrase::ParaphraseSet& set, QuestionMode mode,
                            std::string_view owner,
                            providers::GenerationProvider* stem_provider,
                            int required_paraphrases) {
  if (!set.complete(required_paraphrases))
    throw Error(Errc::incomplete_set,
                "paraphrase set has " + std::to_string(set.accepted_count) +
                    " accepted paraphrases; need exactly " +
                    std::to_string(required_paraphrases));

  QuizQuestion q;
  q.passage_id = set.passage_id;
  q.mode = mode;
  q.options.push_back(util::normalize_whitespace(set.original_text));
  for (const auto& text : set.accepted_texts()) {
    q.options.push_back(util::normalize_whitespace(text));
  }
  q.verbatim_index = 0;

  std::set<std::string> distinct(q.options.begin(), q.options.end());
  if (distinct.size() != q.options.size())
    throw Error(Errc::incomplete_set, "question options are not pairwise distinct");

  if (mode == QuestionMode::format) {
    q.stem = std::string(kStemPrefix) + std::string(owner) + std::string(kStemSuffix);
  } else {
    if (stem_provider == nullptr)
      throw Error(Errc::bad_args, "create mode needs a stem provider");
    q.stem = create_mode_stem(q.options[0], *stem_provider);
  }
  return q;
}

std::vector<Permutation> enumerate_permutations(int option_count) {
  if (option_count < 2 || option_count > 6)
    throw Error(Errc::bad_args, "permutation enumeration supports 2 to 6 options");
  std::vector<int> ordering(static_cast<std::size_t>(option_count));
  std::iota(ordering.begin(), ordering.end(), 0);
  std::vector<Permutation> out;
  do {
    out.push_back({ordering});
  } while (std::next_permutation(ordering.begin(), ordering.end()));
  return out;
}

std::vector<Permutation> balanced_subset(int option_count, int budget,
                                         std::uint64_t seed) {
  if (option_count < 1) throw Error(Errc::bad_args, "option count must be >= 1");
  if (budget < 1 || budget % option_count != 0)
    throw Error(Errc::bad_budget, "budget must be a positive multiple of the option count");

  std::vector<Permutation> out;
  out.reserve(static_cast<std::size_t>(budget));
  const int base = static_cast<int>(seed % static_cast<std::uint64_t>(option_count));
  for (int r = 0; r < budget; ++r) {
    Permutation perm;
    perm.ordering.resize(static_cast<std::size_t>(option_count));
    const int shift = (base + r) % option_count;
    for (int pos = 0; pos < option_count; ++pos) {
      perm.ordering[static_cast<std::size_t>(pos)] = (shift + pos) % option_count;
    }
    out.push_back(std::move(perm));
  }
  return out;
}

std::string render_prompt(const QuizQuestion& question, const Permutation& permutation,
                          std::string_view labels) {
  const int k = static_cast<int>(question.options.size());
  if (static_cast<int>(labels.size()) != k)
    throw Error(Errc::bad_args, "label count must match option count");
  if (!permutation.is_valid(k))
    throw Error(Errc::bad_args, "permutation is not a bijection over the options");

  std::string out = question.stem;
  out += "\n\n";
  for (int pos = 0; pos < k; ++pos) {
    out.push_back(labels[static_cast<std::size_t>(pos)]);
    out += ". ";
    out += question.options[static_cast<std::size_t>(
        permutation.ordering[static_cast<std::size_t>(pos)])];
    out.push_back('\n');
  }
  out.push_back('\n');
  out += kInstruction;
  return out;
}

std::optional<char> parse_answer(std::string_view raw_response) {
  for (std::size_t i = 0; i < raw_response.size(); ++i) {
    const char c = raw_response[i];
    const char upper = util::ascii_upper(c);
    if (upper < 'A' || upper > 'E') continue;
    if (i > 0) {
      const char prev = raw_response[i - 1];
      if (util::is_ascii_alnum(prev) || prev == '\'') continue;
    }
    if (i + 1 < raw_response.size() && util::is_ascii_alnum(raw_response[i + 1])) continue;
    return upper;
  }
  return std::nullopt;
}

TrialRunResult run_trials(const QuizQuestion& question,
                          const std::vector<Permutation>& permutations,
                          providers::GenerationProvider& target,
                          const providers::ProviderPolicy& policy) {
  policy.validate();
  const std::string labels = "ABCDEF";
  const std::string_view label_view(labels.data(), question.options.size());

  std::vector<std::optional<QuizTrial>> slots(permutations.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> aborted{false};
  std::mutex abort_mutex;
  std::string abort_error;

  auto worker = [&] {
    while (!aborted.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= permutations.size()) break;
      QuizTrial trial;
      trial.passage_id = question.passage_id;
      trial.permutation = permutations[i];
      trial.rendered_prompt = render_prompt(question, permutations[i], label_view);

      providers::GenerationRequest req;
      req.system_prompt = "You answer multiple-choice questions.";
      req.user_prompt = trial.rendered_prompt;
      req.temperature = 0.0;
      req.max_tokens = 8;
      try {
        const auto response = target.generate(req);
        trial.raw_response = response.text;
        // Computed from the exchanged texts, not trusted from the provider.
        trial.prompt_token_estimate = providers::token_estimate(req.system_prompt) +
                                      providers::token_estimate(req.user_prompt);
        trial.completion_token_estimate = providers::token_estimate(response.text);
        trial.parsed_label = parse_answer(response.text);
        if (trial.parsed_label) {
          const int pos = *trial.parsed_label - 'A';
          trial.correct = pos >= 0 && pos < static_cast<int>(question.options.size()) &&
                          permutations[i].ordering[static_cast<std::size_t>(pos)] ==
                              question.verbatim_index;
        }
        slots[i] = std::move(trial);
      } catch (const std::exception& e) {
        bool expected = false;
        if (aborted.compare_exchange_strong(expected, true)) {
          std::lock_guard lock(abort_mutex);
          abort_error = e.what();
        }
        break;
      }
    }
  };

  const std::size_t thread_count =
      std::min<std::size_t>(static_cast<std::size_t>(policy.max_in_flight),
                            std::max<std::size_t>(permutations.size(), 1));
  std::vector<std::thread> threads;
  threads.reserve(thread_count);
  for (std::size_t t = 0; t < thread_count; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  TrialRunResult result;
  result.aborted = aborted.load();
  result.abort_error = abort_error;
  for (auto& slot : slots) {
    if (slot) result.trials.push_back(std::move(*slot));
  }
  return result;
}

}  // namespace audit::quiz

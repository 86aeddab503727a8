#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "audit/paraphrase.hpp"
#include "audit/providers.hpp"

namespace audit::quiz {

enum class QuestionMode { create, format };

const char* to_string(QuestionMode mode);
std::optional<QuestionMode> question_mode_from_string(std::string_view name);

struct QuizQuestion {
  std::string passage_id;
  QuestionMode mode = QuestionMode::format;
  std::string stem;
  std::vector<std::string> options;  // canonical order; verbatim + paraphrases
  int verbatim_index = 0;            // position of the verbatim text in options
};

/// ordering[rendered position] = canonical option index; a bijection.
struct Permutation {
  std::vector<int> ordering;

  bool is_valid(int option_count) const;
};

struct QuizConfig {
  enum class PermutationMode { full, balanced };

  PermutationMode permutation_mode = PermutationMode::balanced;
  int budget_per_question = 5;  // balanced mode; multiple of the option count
  std::string labels = "ABCDE";
  std::uint64_t permutation_seed = 1;

  void validate() const;
};

struct QuizTrial {
  std::string passage_id;
  Permutation permutation;
  std::string rendered_prompt;
  std::string raw_response;
  std::optional<char> parsed_label;  // nullopt marks a parse failure
  bool correct = false;
  int prompt_token_estimate = 0;
  int completion_token_estimate = 0;
};

struct TrialRunResult {
  std::vector<QuizTrial> trials;  // ordered by permutation index
  bool aborted = false;
  std::string abort_error;
};

/// Builds the 5-option question for a complete paraphrase set. format
/// mode uses the standardized stem naming the owner; create mode asks
/// stem_provider for a stem as {"stem": ..., "uses_exact_text": true}.
/// Throws incomplete_set unless exactly required_paraphrases are accepted.
QuizQuestion build_question(const paraphrase::ParaphraseSet& set, QuestionMode mode,
                            std::string_view owner,
                            providers::GenerationProvider* stem_provider = nullptr,
                            int required_paraphrases = 4);

/// All k! bijections of {0..k-1} in lexicographic order, 2 <= k <= 6.
std::vector<Permutation> enumerate_permutations(int option_count);

/// budget permutations in which every canonical index occupies every
/// rendered position exactly budget/k times: cyclic Latin-square rows
/// rotated by a seed-derived offset. Throws bad_budget unless budget is a
/// positive multiple of k.
std::vector<Permutation> balanced_subset(int option_count, int budget, std::uint64_t seed);

/// Deterministic prompt layout: stem, blank line, one "X. option" line per
/// rendered position, blank line, answer instruction.
std::string render_prompt(const QuizQuestion& question, const Permutation& permutation,
                          std::string_view labels);

/// First standalone A-E letter (case-insensitive, non-alphanumeric on both
/// sides, not preceded by an apostrophe so contractions don't match).
/// nullopt when the response has none.
std::optional<char> parse_answer(std::string_view raw_response);

/// One provider call per permutation at temperature 0, issued concurrently
/// up to policy.max_in_flight. Unparseable responses are recorded as
/// incorrect trials, not dropped. provider_unavailable / timeout aborts
/// the remaining trials, returning the completed ones plus the abort flag.
TrialRunResult run_trials(const QuizQuestion& question,
                          const std::vector<Permutation>& permutations,
                          providers::GenerationProvider& target,
                          const providers::ProviderPolicy& policy);

}  // namespace audit::quiz

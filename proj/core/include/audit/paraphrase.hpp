#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "audit/extraction.hpp"
#include "audit/providers.hpp"

namespace audit::paraphrase {

enum class Strategy { passive_voice, question_restructure, simplify };

inline constexpr std::array<Strategy, 3> kAllStrategies = {
    Strategy::passive_voice, Strategy::question_restructure, Strategy::simplify};

const char* to_string(Strategy strategy);
std::optional<Strategy> strategy_from_string(std::string_view name);

enum class RejectReason { artifact, too_short, too_long, low_similarity, near_copy, parse_error };

const char* to_string(RejectReason reason);

struct Paraphrase {
  std::string passage_id;
  Strategy strategy = Strategy::passive_voice;
  std::string text;
  double similarity = 0.0;    // vs original; meaningful once that gate ran
  double length_ratio = 0.0;  // paraphrase words / original words
  bool accepted = false;
  std::optional<RejectReason> reject_reason;
};

struct ParaphraseSet {
  std::string passage_id;
  std::string original_text;
  std::vector<Paraphrase> paraphrases;  // accepted and rejected attempts
  int accepted_count = 0;

  bool complete(int required_paraphrases) const {
    return accepted_count == required_paraphrases;
  }
  std::vector<std::string> accepted_texts() const;
};

struct ValidationConfig {
  double min_similarity = 0.70;
  double max_similarity = 0.98;
  double min_length_ratio = 0.75;
  double max_length_ratio = 1.33;
  std::vector<std::string> artifact_literals = {"NULL", "null", "ERROR"};
  std::vector<std::string> artifact_prefixes = {
      "I'm sorry", "I am sorry", "I apologize", "I cannot", "I can't", "As an AI"};
  int generation_budget = 8;  // max provider calls per passage
  int required_paraphrases = 4;

  void validate() const;
};

/// Prompt asking the model to rewrite the passage per the named strategy,
/// preserving meaning and approximate length, in the XML envelope of
/// parse_paraphrase_xml. Temperature 0.7.
providers::GenerationRequest build_paraphrase_prompt(const extraction::Passage& passage,
                                                     Strategy strategy, int count);

/// Extracts every <paraphrase strategy="...">text</paraphrase> inside the
/// first <paraphrases>...</paraphrases> envelope, ignoring surrounding
/// chatter and unescaping &lt; &gt; &amp;. Elements with unknown strategy
/// names are skipped. Throws parse_error when no envelope is found.
std::vector<std::pair<Strategy, std::string>> parse_paraphrase_xml(std::string_view response_text);

/// Inverse of parse_paraphrase_xml; escapes & < > in texts.
std::string render_paraphrase_xml(std::span<const std::pair<Strategy, std::string>> items);

/// Cosine of the two embeddings. Throws empty_text on empty input.
double semantic_similarity(std::string_view a, std::string_view b,
                           providers::Embedder& embedder);

/// Gates a candidate in order: artifact filter (empty text, literal
/// artifacts, refusal prefixes, truncated final sentence), length-ratio
/// window, similarity window. The first failing gate sets the reject
/// reason; rejection is data, not an error. The candidate is trimmed
/// before validation. passage_id is left for the caller to fill.
Paraphrase validate_paraphrase(std::string_view original, std::string_view candidate,
                               const ValidationConfig& cfg, providers::Embedder& embedder);

/// Requests paraphrases cycling strategies round-robin until
/// required_paraphrases are accepted or generation_budget provider calls
/// were spent, validating every candidate and rejecting near-duplicates
/// of already-accepted paraphrases. An exhausted budget yields a set with
/// accepted_count below the requirement (never an exception).
ParaphraseSet generate_paraphrase_set(const extraction::Passage& passage,
                                      providers::GenerationProvider& provider,
                                      providers::Embedder& embedder,
                                      const ValidationConfig& cfg);

}  // namespace audit::paraphrase

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace audit::extraction {

enum class ContentType { book, article, code, other };

const char* to_string(ContentType type);
std::optional<ContentType> content_type_from_string(std::string_view name);

struct Document {
  std::string id;
  std::string title;
  std::string owner;
  ContentType content_type = ContentType::other;
  std::string text;
  std::int64_t submitted_at = 0;  // unix seconds, UTC
};

/// A contiguous slice of a document. Passages of one document tile its
/// text exactly: char ranges are adjacent and cover [0, text.size()).
struct Passage {
  std::string doc_id;
  int index = 0;
  std::size_t char_begin = 0;
  std::size_t char_end = 0;  // [char_begin, char_end)
  std::string text;
  int token_count = 0;  // whitespace-separated words
  double uniqueness_score = 0.0;  // lower = more unique
};

struct UniquenessConfig {
  double k1 = 1.2;
  double b = 0.75;
  int target_passage_tokens = 128;
  int min_passage_tokens = 32;
  int passages_to_select = 30;

  void validate() const;  // throws config_error
};

/// Stable identifier of a passage within its document: "<doc_id>#<index>".
std::string passage_key(const Passage& passage);

/// Lowercased maximal alphanumeric runs, in order of appearance.
std::vector<std::string> bm25_tokens(std::string_view text);

struct CorpusStats {
  int passage_count = 0;
  double avg_token_count = 0.0;  // mean bm25-token length over passages
  std::unordered_map<std::string, int> passage_frequency;  // df per term
};

CorpusStats build_corpus_stats(std::span<const Passage> passages);

/// Tiles doc.text into passages of roughly target_passage_tokens words.
/// Cut points snap to the nearest sentence end within 20 tokens of the
/// target; otherwise a hard token cut. A remainder that a cut would
/// leave below min_passage_tokens is absorbed into the final passage.
/// Throws empty_document when the document has fewer than
/// min_passage_tokens words.
std::vector<Passage> chunk_passages(const Document& doc, const UniquenessConfig& cfg);

/// Okapi BM25 of a token sequence against one passage. Each query token
/// occurrence contributes IDF(t) * tf*(k1+1) / (tf + k1*(1-b+b*|d|/avgdl))
/// with IDF(t) = ln(1 + (N - df + 0.5)/(df + 0.5)). Empty query scores 0.
double bm25_score(std::span<const std::string> query, const Passage& candidate,
                  const CorpusStats& stats, const UniquenessConfig& cfg);

/// Scores each passage as the sum of its BM25 against every other passage
/// and returns them sorted ascending (most unique first), ties broken by
/// lower index. Scores are written back into the returned passages.
/// Throws not_enough_passages when fewer than 2 are given.
std::vector<Passage> uniqueness_rank(std::vector<Passage> passages,
                                     const UniquenessConfig& cfg);

/// First min(count, size) passages of a ranked list, in rank order.
std::vector<Passage> select_unique(std::vector<Passage> ranked, int count);

}  // namespace audit::extraction

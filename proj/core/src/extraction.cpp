#include "audit/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <unordered_set>

#include "audit/error.hpp"
#include "audit/util.hpp"

namespace audit::extraction {

const char* to_string(ContentType type) {
  switch (type) {
    case ContentType::book: return "book";
    case ContentType::article: return "article";
    case ContentType::code: return "code";
    case ContentType::other: return "other";
  }
  return "other";
}

std::optional<ContentType> content_type_from_string(std::string_view name) {
  if (name == "book") return ContentType::book;
  if (name == "article") return ContentType::article;
  if (name == "code") return ContentType::code;
  if (name == "other") return ContentType::other;
  return std::nullopt;
}

void UniquenessConfig::validate() const {
  if (!(k1 > 0.0)) throw Error(Errc::config_error, "uniqueness.k1 must be > 0");
  if (b < 0.0 || b > 1.0) throw Error(Errc::config_error, "uniqueness.b must be in [0, 1]");
  if (min_passage_tokens < 1)
    throw Error(Errc::config_error, "uniqueness.min_passage_tokens must be >= 1");
  if (target_passage_tokens < min_passage_tokens)
    throw Error(Errc::config_error, "uniqueness.target_passage_tokens must be >= min_passage_tokens");
  if (passages_to_select < 0)
    throw Error(Errc::config_error, "uniqueness.passages_to_select must be >= 0");
}

std::string passage_key(const Passage& passage) {
  return passage.doc_id + "#" + std::to_string(passage.index);
}

std::vector<std::string> bm25_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (util::is_ascii_alnum(c)) {
      current.push_back(util::ascii_lower(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

CorpusStats build_corpus_stats(std::span<const Passage> passages) {
  CorpusStats stats;
  stats.passage_count = static_cast<int>(passages.size());
  long long token_total = 0;
  for (const Passage& p : passages) {
    auto tokens = bm25_tokens(p.text);
    token_total += static_cast<long long>(tokens.size());
    std::unordered_set<std::string> seen(tokens.begin(), tokens.end());
    for (const auto& t : seen) ++stats.passage_frequency[t];
  }
  if (stats.passage_count > 0) {
    stats.avg_token_count =
        static_cast<double>(token_total) / static_cast<double>(stats.passage_count);
  }
  return stats;
}

namespace {

constexpr int kSnapWindowTokens = 20;

bool ends_sentence(std::string_view text, std::pair<std::size_t, std::size_t> span) {
  char last = text[span.second - 1];
  return last == '.' || last == '!' || last == '?';
}

}  // namespace

std::vector<Passage> chunk_passages(const Document& doc, const UniquenessConfig& cfg) {
  cfg.validate();
  const auto spans = util::word_spans(doc.text);
  const int total = static_cast<int>(spans.size());
  if (total < cfg.min_passage_tokens) {
    throw Error(Errc::empty_document,
                "document has " + std::to_string(total) + " words; need at least " +
                    std::to_string(cfg.min_passage_tokens));
  }

  // Word-index cut points. A cut is only made while the remainder could
  // still hold a full target passage plus a minimum one; anything shorter
  // is absorbed into the final passage.
  std::vector<int> ends;  // exclusive word indices
  int begin_word = 0;
  while (total - begin_word >= cfg.target_passage_tokens + cfg.min_passage_tokens) {
    const int target_last = begin_word + cfg.target_passage_tokens - 1;
    int best = -1;
    int best_dist = kSnapWindowTokens + 1;
    for (int w = target_last - kSnapWindowTokens; w <= target_last + kSnapWindowTokens; ++w) {
      if (w < begin_word + cfg.min_passage_tokens - 1) continue;
      if (w >= total) break;
      if (total - (w + 1) < cfg.min_passage_tokens) continue;
      if (!ends_sentence(doc.text, spans[w])) continue;
      const int dist = std::abs(w - target_last);
      if (dist < best_dist) {
        best = w;
        best_dist = dist;
      }
    }
    const int end_word = best >= 0 ? best + 1 : target_last + 1;
    ends.push_back(end_word);
    begin_word = end_word;
  }
  ends.push_back(total);

  std::vector<Passage> out;
  out.reserve(ends.size());
  int word_begin = 0;
  std::size_t char_begin = 0;
  for (std::size_t i = 0; i < ends.size(); ++i) {
    const int word_end = ends[i];
    const std::size_t char_end =
        (i + 1 == ends.size()) ? doc.text.size() : spans[word_end].first;
    Passage p;
    p.doc_id = doc.id;
    p.index = static_cast<int>(i);
    p.char_begin = char_begin;
    p.char_end = char_end;
    p.text = doc.text.substr(char_begin, char_end - char_begin);
    p.token_count = word_end - word_begin;
    out.push_back(std::move(p));
    word_begin = word_end;
    char_begin = char_end;
  }
  return out;
}

double bm25_score(std::span<const std::string> query, const Passage& candidate,
                  const CorpusStats& stats, const UniquenessConfig& cfg) {
  if (query.empty() || stats.passage_count == 0) return 0.0;
  const auto doc_tokens = bm25_tokens(candidate.text);
  if (doc_tokens.empty()) return 0.0;
  std::unordered_map<std::string, int> tf;
  for (const auto& t : doc_tokens) ++tf[t];

  const double n = static_cast<double>(stats.passage_count);
  const double dl = static_cast<double>(doc_tokens.size());
  const double avgdl = stats.avg_token_count > 0.0 ? stats.avg_token_count : dl;
  double score = 0.0;
  for (const auto& term : query) {
    auto it = tf.find(term);
    if (it == tf.end()) continue;
    const double f = static_cast<double>(it->second);
    auto dfit = stats.passage_frequency.find(term);
    const double df = dfit == stats.passage_frequency.end()
                          ? 0.0
                          : static_cast<double>(dfit->second);
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    score += idf * f * (cfg.k1 + 1.0) /
             (f + cfg.k1 * (1.0 - cfg.b + cfg.b * dl / avgdl));
  }
  return score;
}

std::vector<Passage> uniqueness_rank(std::vector<Passage> passages,
                                     const UniquenessConfig& cfg) {
  if (passages.size() < 2) {
    throw Error(Errc::not_enough_passages,
                "uniqueness ranking needs at least 2 passages, got " +
                    std::to_string(passages.size()));
  }
  const CorpusStats stats = build_corpus_stats(passages);
  std::vector<std::vector<std::string>> queries;
  queries.reserve(passages.size());
  for (const auto& p : passages) queries.push_back(bm25_tokens(p.text));

  for (std::size_t i = 0; i < passages.size(); ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < passages.size(); ++j) {
      if (j == i) continue;
      sum += bm25_score(queries[i], passages[j], stats, cfg);
    }
    passages[i].uniqueness_score = sum;
  }
  std::sort(passages.begin(), passages.end(), [](const Passage& a, const Passage& b) {
    if (a.uniqueness_score != b.uniqueness_score)
      return a.uniqueness_score < b.uniqueness_score;
    return a.index < b.index;
  });
  return passages;
}

std::vector<Passage> select_unique(std::vector<Passage> ranked, int count) {
  if (count < 0) count = 0;
  if (static_cast<std::size_t>(count) < ranked.size()) {
    ranked.resize(static_cast<std::size_t>(count));
  }
  return ranked;
}

}  // namespace audit::extraction

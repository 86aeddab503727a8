#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "audit/error.hpp"
#include "audit/extraction.hpp"
#include "test_support.hpp"

using namespace audit;
using namespace audit::extraction;

namespace {

Document make_doc(std::string text, std::string id = "d1") {
  Document doc;
  doc.id = std::move(id);
  doc.title = "t";
  doc.owner = "o";
  doc.text = std::move(text);
  return doc;
}

Passage make_passage(std::string text, int index, std::string doc_id = "d1") {
  Passage p;
  p.doc_id = std::move(doc_id);
  p.index = index;
  p.char_end = text.size();
  p.token_count = static_cast<int>(bm25_tokens(text).size());
  p.text = std::move(text);
  return p;
}

// 30 words w00..w29; the listed indices end with a period.
std::string thirty_words(std::vector<int> sentence_ends) {
  std::string out;
  for (int i = 0; i < 30; ++i) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "w%02d", i);
    out += buf;
    for (int e : sentence_ends)
      if (e == i) out += ".";
    if (i + 1 < 30) out += " ";
  }
  return out;
}

// Independent BM25 for cross-checking uniqueness_rank.
double reference_bm25(const std::vector<std::string>& query, const Passage& doc,
                      const CorpusStats& stats, const UniquenessConfig& cfg) {
  std::map<std::string, int> tf;
  auto doc_tokens = bm25_tokens(doc.text);
  for (const auto& t : doc_tokens) tf[t]++;
  const double dl = static_cast<double>(doc_tokens.size());
  const double avgdl = stats.avg_token_count > 0 ? stats.avg_token_count : dl;
  double score = 0.0;
  for (const auto& q : query) {
    auto it = tf.find(q);
    if (it == tf.end()) continue;
    auto df_it = stats.passage_frequency.find(q);
    const double df = df_it == stats.passage_frequency.end() ? 0.0 : df_it->second;
    const double idf =
        std::log(1.0 + (stats.passage_count - df + 0.5) / (df + 0.5));
    const double t = it->second;
    score += idf * (t * (cfg.k1 + 1.0)) /
             (t + cfg.k1 * (1.0 - cfg.b + cfg.b * dl / avgdl));
  }
  return score;
}

}  // namespace

TEST_CASE("bm25_tokens lowercases maximal alphanumeric runs") {
  auto t = bm25_tokens("The cat, the CAT2; don't!");
  REQUIRE(t.size() == 6);
  CHECK(t[0] == "the");
  CHECK(t[1] == "cat");
  CHECK(t[2] == "the");
  CHECK(t[3] == "cat2");
  CHECK(t[4] == "don");
  CHECK(t[5] == "t");
  CHECK(bm25_tokens("  ...  ").empty());
}

TEST_CASE("bm25 toy corpus matches hand-computed values") {
  std::vector<Passage> corpus = {make_passage("cat sat mat", 0),
                                 make_passage("cat ran far", 1),
                                 make_passage("dog barks loud", 2)};
  UniquenessConfig cfg;
  auto stats = build_corpus_stats(corpus);
  CHECK(stats.passage_count == 3);
  CHECK(stats.avg_token_count == doctest::Approx(3.0));
  CHECK(stats.passage_frequency.at("cat") == 2);
  CHECK(stats.passage_frequency.at("dog") == 1);

  // idf(cat) = ln(1 + (3-2+0.5)/(2+0.5)) = ln(1.6); equal lengths make the
  // tf normalizer exactly 1, so the score is the idf alone.
  const double ln16 = 0.47000362924573563;
  std::vector<std::string> q1 = bm25_tokens("cat sat mat");
  CHECK(bm25_score(q1, corpus[1], stats, cfg) == doctest::Approx(ln16).epsilon(1e-9));
  CHECK(bm25_score(q1, corpus[2], stats, cfg) == 0.0);

  // Repeated query occurrences each contribute.
  std::vector<std::string> twice = {"cat", "cat"};
  CHECK(bm25_score(twice, corpus[1], stats, cfg) ==
        doctest::Approx(2 * ln16).epsilon(1e-9));

  auto ranked = uniqueness_rank(corpus, cfg);
  REQUIRE(ranked.size() == 3);
  CHECK(ranked[0].index == 2);  // token-disjoint passage is most unique
  CHECK(ranked[0].uniqueness_score == 0.0);
  CHECK(ranked[1].index == 0);  // tie with passage 1 broken by lower index
  CHECK(ranked[2].index == 1);
  CHECK(ranked[1].uniqueness_score == doctest::Approx(ln16).epsilon(1e-9));
  CHECK(ranked[2].uniqueness_score == doctest::Approx(ln16).epsilon(1e-9));
}

TEST_CASE("uniqueness_rank equals brute force on random corpora") {
  std::mt19937_64 rng(11);
  const std::vector<std::string> vocab = {"ash",  "birch", "cedar", "dune",
                                          "eel",  "fern",  "gale",  "heron",
                                          "iris", "jetty"};
  for (int round = 0; round < 20; ++round) {
    const int n = 2 + static_cast<int>(rng() % 4);
    std::vector<Passage> corpus;
    for (int i = 0; i < n; ++i) {
      std::string text;
      const int words = 3 + static_cast<int>(rng() % 8);
      for (int w = 0; w < words; ++w) {
        if (w) text += " ";
        text += vocab[rng() % vocab.size()];
      }
      corpus.push_back(make_passage(text, i));
    }
    UniquenessConfig cfg;
    auto stats = build_corpus_stats(corpus);
    std::vector<std::pair<double, int>> expected;
    for (int i = 0; i < n; ++i) {
      double sum = 0.0;
      auto query = bm25_tokens(corpus[static_cast<std::size_t>(i)].text);
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        sum += reference_bm25(query, corpus[static_cast<std::size_t>(j)], stats, cfg);
      }
      expected.push_back({sum, i});
    }
    std::stable_sort(expected.begin(), expected.end());
    auto ranked = uniqueness_rank(corpus, cfg);
    REQUIRE(ranked.size() == static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      CHECK(ranked[static_cast<std::size_t>(i)].index == expected[static_cast<std::size_t>(i)].second);
      CHECK(ranked[static_cast<std::size_t>(i)].uniqueness_score ==
            doctest::Approx(expected[static_cast<std::size_t>(i)].first).epsilon(1e-9));
    }
  }
}

TEST_CASE("uniqueness_rank rejects corpora below two passages") {
  UniquenessConfig cfg;
  std::vector<Passage> one = {make_passage("solo words here", 0)};
  CHECK_THROWS_AS(uniqueness_rank(one, cfg), Error);
  CHECK_THROWS_AS(uniqueness_rank({}, cfg), Error);
}

TEST_CASE("chunker tiles the document exactly") {
  auto text = test_support::read_file(test_support::fixture_path("field_notes.txt"));
  REQUIRE(!text.empty());
  auto doc = make_doc(text);
  UniquenessConfig cfg;
  auto passages = chunk_passages(doc, cfg);
  REQUIRE(passages.size() >= 2);

  std::size_t cursor = 0;
  for (std::size_t i = 0; i < passages.size(); ++i) {
    const auto& p = passages[i];
    CHECK(p.index == static_cast<int>(i));
    CHECK(p.char_begin == cursor);
    CHECK(p.char_end > p.char_begin);
    CHECK(p.text == text.substr(p.char_begin, p.char_end - p.char_begin));
    CHECK(p.token_count >= cfg.min_passage_tokens);
    cursor = p.char_end;
  }
  CHECK(cursor == text.size());
}

TEST_CASE("chunker snaps cuts to nearby sentence ends") {
  UniquenessConfig cfg;
  cfg.target_passage_tokens = 10;
  cfg.min_passage_tokens = 3;

  // Sentence ends at words 7, 13, 21: first cut snaps from 9 back to 7;
  // the second resolves the 13-vs-21 distance tie toward the earlier word.
  auto doc = make_doc(thirty_words({7, 13, 21}));
  auto passages = chunk_passages(doc, cfg);
  REQUIRE(passages.size() == 4);
  CHECK(passages[0].token_count == 8);
  CHECK(passages[1].token_count == 6);
  CHECK(passages[2].token_count == 8);
  CHECK(passages[3].token_count == 8);

  // No punctuation anywhere: hard cuts at the exact target size.
  auto plain = make_doc(thirty_words({}));
  auto hard = chunk_passages(plain, cfg);
  REQUIRE(hard.size() == 3);
  for (const auto& p : hard) CHECK(p.token_count == 10);
}

TEST_CASE("chunker absorbs a short tail into the final passage") {
  UniquenessConfig cfg;
  cfg.target_passage_tokens = 10;
  cfg.min_passage_tokens = 3;

  // 12 words: one cut would leave a 2-word remainder, so no cut happens.
  std::string text;
  for (int i = 0; i < 12; ++i) text += (i ? " w" : "w") + std::to_string(i);
  auto passages = chunk_passages(make_doc(text), cfg);
  REQUIRE(passages.size() == 1);
  CHECK(passages[0].token_count == 12);
}

TEST_CASE("chunker rejects documents below the minimum") {
  UniquenessConfig cfg;  // min 32
  auto tiny = make_doc("only a few words here");
  CHECK_THROWS_AS(chunk_passages(tiny, cfg), Error);
  try {
    chunk_passages(tiny, cfg);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::empty_document);
  }
}

TEST_CASE("select_unique clamps its count") {
  std::vector<Passage> ranked = {make_passage("a b c", 2), make_passage("d e f", 0)};
  CHECK(select_unique(ranked, 1).size() == 1);
  CHECK(select_unique(ranked, 1)[0].index == 2);  // rank order preserved
  CHECK(select_unique(ranked, 10).size() == 2);
  CHECK(select_unique(ranked, 0).empty());
  CHECK(select_unique(ranked, -4).empty());
}

TEST_CASE("content type names round trip") {
  CHECK(content_type_from_string("book") == ContentType::book);
  CHECK(content_type_from_string("article") == ContentType::article);
  CHECK(content_type_from_string("code") == ContentType::code);
  CHECK(content_type_from_string("other") == ContentType::other);
  CHECK(!content_type_from_string("scroll").has_value());
  CHECK(std::string(to_string(ContentType::book)) == "book");
}

TEST_CASE("passage_key composes doc id and index") {
  CHECK(passage_key(make_passage("x y z", 3, "doc-9")) == "doc-9#3");
}

TEST_CASE("uniqueness config validation") {
  UniquenessConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.k1 = -1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = UniquenessConfig{};
  cfg.min_passage_tokens = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = UniquenessConfig{};
  cfg.target_passage_tokens = 10;
  cfg.min_passage_tokens = 20;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

// Microbenchmarks for the hot paths: passage ranking, tail probabilities,
// embedding, store queries and quiz assembly.

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "audit/extraction.hpp"
#include "audit/providers.hpp"
#include "audit/quiz.hpp"
#include "audit/stats.hpp"
#include "audit/vectorlog.hpp"

using namespace audit;

namespace {

// Deterministic filler prose; word choice only has to vary per passage.
std::string synthetic_passage(std::uint64_t seed, int words) {
  static const char* kWords[] = {
      "harbor", "ledger",  "signal",  "lantern", "estuary", "causeway",
      "quay",   "pressure", "granite", "mooring", "archive", "timetable",
      "sluice", "vellum",  "ballast", "semaphore"};
  std::mt19937_64 rng(seed);
  std::ostringstream out;
  for (int i = 0; i < words; ++i) {
    if (i) out << ' ';
    out << kWords[rng() % 16];
  }
  out << '.';
  return out.str();
}

std::vector<extraction::Passage> synthetic_corpus(int count, int words) {
  std::vector<extraction::Passage> corpus;
  corpus.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    extraction::Passage p;
    p.doc_id = "bench";
    p.index = i;
    p.text = synthetic_passage(static_cast<std::uint64_t>(i) * 7919 + 17, words);
    p.token_count = words;
    corpus.push_back(std::move(p));
  }
  return corpus;
}

void bm_uniqueness_rank(benchmark::State& state) {
  const auto corpus = synthetic_corpus(static_cast<int>(state.range(0)), 180);
  extraction::UniquenessConfig cfg;
  for (auto _ : state) {
    auto ranked = extraction::uniqueness_rank(corpus, cfg);
    benchmark::DoNotOptimize(ranked);
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(bm_uniqueness_rank)->Arg(8)->Arg(32)->Arg(128)->Complexity();

void bm_binomial_pvalue(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(stats::binomial_pvalue(n, n / 4, 0.20));
  }
}
BENCHMARK(bm_binomial_pvalue)->Arg(25)->Arg(100)->Arg(1000);

void bm_fallback_embed(benchmark::State& state) {
  const auto text =
      synthetic_passage(42, static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(providers::fallback_embed(text));
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(text.size()));
}
BENCHMARK(bm_fallback_embed)->Arg(40)->Arg(200)->Arg(1000);

void bm_store_query(benchmark::State& state) {
  vectorlog::VectorStore store;
  for (int i = 0; i < state.range(0); ++i) {
    vectorlog::VectorRecord record;
    record.id = "doc-" + std::to_string(i);
    record.vector =
        providers::fallback_embed(synthetic_passage(std::uint64_t(i), 60));
    record.metadata = {{"owner", "bench"},
                       {"timestamp", "0"},
                       {"content_type", "book"},
                       {"verdict_summary", "inconclusive"}};
    store.upsert(std::move(record));
  }
  const auto probe = providers::fallback_embed(synthetic_passage(999983, 60));
  for (auto _ : state) {
    benchmark::DoNotOptimize(store.query(probe, 10));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(bm_store_query)->Arg(100)->Arg(1000)->Arg(10000)->Complexity();

void bm_enumerate_permutations(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(quiz::enumerate_permutations(k));
  }
}
BENCHMARK(bm_enumerate_permutations)->Arg(4)->Arg(5)->Arg(6);

void bm_balanced_subset(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(quiz::balanced_subset(5, 60, seed++));
  }
}
BENCHMARK(bm_balanced_subset);

void bm_render_prompt(benchmark::State& state) {
  quiz::QuizQuestion question;
  question.passage_id = "bench#0";
  question.stem = "Which option reproduces the passage verbatim?";
  for (int i = 0; i < 5; ++i) {
    question.options.push_back(synthetic_passage(std::uint64_t(i) + 100, 60));
  }
  question.verbatim_index = 0;
  const auto perms = quiz::balanced_subset(5, 5, 7);
  std::size_t which = 0;
  for (auto _ : state) {
    const auto& perm = perms[which++ % perms.size()];
    benchmark::DoNotOptimize(quiz::render_prompt(question, perm, "ABCDE"));
  }
}
BENCHMARK(bm_render_prompt);

}  // namespace

BENCHMARK_MAIN();

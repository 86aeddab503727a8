#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace audit::providers {

struct GenerationRequest {
  std::string system_prompt;
  std::string user_prompt;
  double temperature = 0.0;  // [0, 2]
  int max_tokens = 256;
  std::optional<std::uint64_t> seed;

  void validate() const;  // throws malformed_request
};

struct GenerationResponse {
  std::string text;
  int prompt_token_estimate = 0;
  int completion_token_estimate = 0;
  std::int64_t latency_ms = 0;
};

/// Fixed provider-independent token estimate: ceil(chars / 4).
int token_estimate(std::string_view text);

struct ProviderPolicy {
  int max_retries = 3;         // retries after the first attempt
  int backoff_base_ms = 500;   // doubled per retry
  int max_in_flight = 4;
  int timeout_ms = 60000;

  void validate() const;
};

class GenerationProvider {
 public:
  virtual ~GenerationProvider() = default;
  virtual GenerationResponse generate(const GenerationRequest& request) = 0;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  /// Unit-L2-norm vector of dimension kEmbeddingDim. Throws empty_text.
  virtual std::vector<float> embed(std::string_view text) = 0;
};

inline constexpr int kEmbeddingDim = 384;

/// Signed feature hashing of character 3-grams of the lowercased text
/// (padded with 0x02/0x03 sentinels) into kEmbeddingDim buckets, then
/// L2-normalized. Deterministic across processes. Throws empty_text.
std::vector<float> fallback_embed(std::string_view text);

double cosine(std::span<const float> a, std::span<const float> b);

class HashingEmbedder final : public Embedder {
 public:
  std::vector<float> embed(std::string_view text) override;
};

/// One parsed option of a rendered multiple-choice prompt.
struct PromptOption {
  char label = 0;
  std::string text;
};

/// Recovers "X. option" lines (X in A..F at a line start) from a rendered
/// quiz prompt. Options spanning multiple lines keep their line breaks.
std::vector<PromptOption> parse_prompt_options(std::string_view prompt);

/// Answers any quiz prompt with a label drawn uniformly from the options
/// present. Pure function of (seed, prompt): the same request always gets
/// the same answer.
class UniformGuesser final : public GenerationProvider {
 public:
  explicit UniformGuesser(std::uint64_t seed);
  GenerationResponse generate(const GenerationRequest& request) override;

 private:
  std::uint64_t seed_;
};

/// Models a model that memorized specific passages: when a prompt offers a
/// memorized verbatim text among its options, picks it with probability
/// p_mem and otherwise falls back to a uniform draw over the remaining
/// options; prompts without memorized content get a uniform draw over all
/// options. Deterministic given (seed, prompt).
class ScriptedMemorizer final : public GenerationProvider {
 public:
  ScriptedMemorizer(double p_mem, std::uint64_t seed);

  void memorize(std::string passage_id, std::string verbatim_text);
  const std::set<std::string>& memorized_passage_ids() const { return ids_; }

  GenerationResponse generate(const GenerationRequest& request) override;

 private:
  double p_mem_;
  std::uint64_t seed_;
  std::set<std::string> ids_;
  std::set<std::string> texts_;
  mutable std::mutex mutex_;  // guards memorize() against concurrent generate()
};

/// Deterministic local paraphraser: extracts the passage between
/// <passage> markers from the prompt and emits the requested number of
/// <paraphrase> elements produced by fixed word-substitution transforms.
/// Also answers question-stem requests with a canned structured JSON
/// object. Keeps the full pipeline runnable offline.
class MockParaphraser final : public GenerationProvider {
 public:
  GenerationResponse generate(const GenerationRequest& request) override;
};

/// Applies ProviderPolicy around an inner provider: bounded concurrent
/// requests (max_in_flight) and retries with exponential backoff on
/// provider_unavailable / timeout. malformed_request is never retried.
class PolicyBoundProvider final : public GenerationProvider {
 public:
  PolicyBoundProvider(std::shared_ptr<GenerationProvider> inner, ProviderPolicy policy);
  ~PolicyBoundProvider() override;

  GenerationResponse generate(const GenerationRequest& request) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Speaks a neutral chat-completion JSON shape over HTTP:
/// request {model?, messages: [{role, content}...], temperature,
/// max_tokens, seed?}; response {choices: [{message: {content}}]} or
/// {text}. 408 maps to timeout, 429/5xx/transport to
/// provider_unavailable, other 4xx to malformed_request; retrying is the
/// policy wrapper's job.
class HttpChatProvider final : public GenerationProvider {
 public:
  struct Options {
    std::string endpoint;     // http://host:port/path
    std::string api_key_env;  // env var NAME holding the bearer token
    std::string model;
    ProviderPolicy policy;
  };

  explicit HttpChatProvider(Options options);
  GenerationResponse generate(const GenerationRequest& request) override;

 private:
  GenerationResponse attempt(const GenerationRequest& request);

  Options options_;
};

}  // namespace audit::providers

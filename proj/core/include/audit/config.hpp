#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include "audit/extraction.hpp"
#include "audit/paraphrase.hpp"
#include "audit/providers.hpp"
#include "audit/quiz.hpp"
#include "audit/stats.hpp"
#include "audit/vectorlog.hpp"

namespace audit::config {

enum class ProviderKind { mock_uniform, mock_memorizer, mock_paraphraser, http };

const char* to_string(ProviderKind kind);

struct ProviderBinding {
  ProviderKind kind = ProviderKind::mock_uniform;
  std::string endpoint;
  std::string api_key_env;  // env var NAME; the key itself never lives in config
  std::string model;
  double p_mem = 0.9;       // mock_memorizer
  std::uint64_t seed = 7;   // mocks
  bool memorize_submissions = false;  // mock_memorizer positive-control mode
};

struct ServiceConfig {
  int workers = 2;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string history_path = "audit_history.jsonl";
  quiz::QuestionMode question_mode = quiz::QuestionMode::format;

  void validate() const;
};

/// Generator slot defaults to the mock paraphraser so a bare config runs offline.
inline ProviderBinding default_generation_binding() {
  ProviderBinding binding;
  binding.kind = ProviderKind::mock_paraphraser;
  return binding;
}

struct PipelineConfig {
  extraction::UniquenessConfig uniqueness;
  paraphrase::ValidationConfig validation;
  quiz::QuizConfig quiz;
  stats::StatsConfig stats;
  vectorlog::StoreConfig store;
  providers::ProviderPolicy policy;
  ProviderBinding target_provider{};
  ProviderBinding generation_provider = default_generation_binding();
  std::string embedder_kind = "fallback";
  ServiceConfig service;

  /// Recomputes derived fields (stats.chance_p0 from the required
  /// paraphrase count) and validates every sub-config.
  void finalize();
};

/// INI-style sections of key = value pairs; '#' and ';' comments. Unknown
/// sections or keys are config_error with the offending line number.
PipelineConfig parse_config(std::string_view text);
PipelineConfig load_config(const std::string& path);

struct ProviderSet {
  std::shared_ptr<providers::GenerationProvider> target;
  std::shared_ptr<providers::GenerationProvider> generator;
  std::shared_ptr<providers::Embedder> embedder;
  /// Set when the target binding is mock_memorizer (memorize_submissions).
  std::shared_ptr<providers::ScriptedMemorizer> memorizer;
};

/// Instantiates the configured providers, each wrapped in the policy
/// (retry + in-flight bound).
ProviderSet build_providers(const PipelineConfig& cfg);

}  // namespace audit::config

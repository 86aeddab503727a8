#include "audit/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "audit/error.hpp"
#include "audit/util.hpp"

namespace audit::config {

const char* to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::mock_uniform: return "mock_uniform";
    case ProviderKind::mock_memorizer: return "mock_memorizer";
    case ProviderKind::mock_paraphraser: return "mock_paraphraser";
    case ProviderKind::http: return "http";
  }
  return "mock_uniform";
}

void ServiceConfig::validate() const {
  if (workers < 1) throw Error(Errc::config_error, "service.workers must be >= 1");
  if (port < 0 || port > 65535)
    throw Error(Errc::config_error, "service.port must be in [0, 65535]");
  if (host.empty()) throw Error(Errc::config_error, "service.host must be non-empty");
}

namespace {

void validate_binding(const ProviderBinding& binding, const char* section) {
  if (binding.kind == ProviderKind::http && binding.endpoint.empty())
    throw Error(Errc::config_error,
                std::string(section) + ".endpoint is required for kind http");
  if (!(binding.p_mem >= 0.0 && binding.p_mem <= 1.0))
    throw Error(Errc::config_error, std::string(section) + ".p_mem must be in [0, 1]");
}

}  // namespace

void PipelineConfig::finalize() {
  stats.chance_p0 = stats::chance_probability(validation.required_paraphrases);
  uniqueness.validate();
  validation.validate();
  quiz.validate();
  // The option count is only known here; balanced subsets need the budget
  // to split evenly across it.
  const int option_count = validation.required_paraphrases + 1;
  if (quiz.permutation_mode == quiz::QuizConfig::PermutationMode::balanced &&
      quiz.budget_per_question % option_count != 0)
    throw Error(Errc::config_error,
                "quiz.budget_per_question must be a multiple of "
                "required_paraphrases + 1 in balanced mode");
  if (option_count > static_cast<int>(quiz.labels.size()))
    throw Error(Errc::config_error,
                "quiz.labels is too short for required_paraphrases + 1 options");
  stats.validate();
  store.validate();
  policy.validate();
  service.validate();
  validate_binding(target_provider, "provider");
  validate_binding(generation_provider, "generation_provider");
  if (target_provider.kind == ProviderKind::mock_paraphraser)
    throw Error(Errc::config_error, "provider.kind mock_paraphraser is only a generation provider");
  if (generation_provider.kind == ProviderKind::mock_uniform ||
      generation_provider.kind == ProviderKind::mock_memorizer)
    throw Error(Errc::config_error,
                "generation_provider.kind must be mock_paraphraser or http");
  if (embedder_kind != "fallback")
    throw Error(Errc::config_error, "embedder.kind must be fallback");
}

namespace {

[[noreturn]] void fail(const std::string& message, long line) {
  throw Error(Errc::config_error, message, line);
}

double parse_double(std::string_view value, long line) {
  // from_chars for doubles is incomplete on some libstdc++ versions; go
  // through strtod with full-consumption checking instead.
  const std::string owned(value);
  char* end = nullptr;
  const double parsed = std::strtod(owned.c_str(), &end);
  if (owned.empty() || end != owned.c_str() + owned.size())
    fail("expected a number, got '" + owned + "'", line);
  return parsed;
}

long long parse_int(std::string_view value, long line) {
  long long parsed = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), parsed);
  if (ec != std::errc() || ptr != value.data() + value.size())
    fail("expected an integer, got '" + std::string(value) + "'", line);
  return parsed;
}

std::uint64_t parse_uint(std::string_view value, long line) {
  std::uint64_t parsed = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), parsed);
  if (ec != std::errc() || ptr != value.data() + value.size())
    fail("expected an unsigned integer, got '" + std::string(value) + "'", line);
  return parsed;
}

bool parse_bool(std::string_view value, long line) {
  if (value == "true") return true;
  if (value == "false") return false;
  fail("expected true or false, got '" + std::string(value) + "'", line);
}

ProviderKind parse_target_kind(std::string_view value, long line) {
  if (value == "mock_uniform") return ProviderKind::mock_uniform;
  if (value == "mock_memorizer") return ProviderKind::mock_memorizer;
  if (value == "http") return ProviderKind::http;
  fail("provider.kind must be mock_uniform, mock_memorizer or http", line);
}

ProviderKind parse_generation_kind(std::string_view value, long line) {
  if (value == "mock_paraphraser") return ProviderKind::mock_paraphraser;
  if (value == "http") return ProviderKind::http;
  fail("generation_provider.kind must be mock_paraphraser or http", line);
}

void apply(PipelineConfig& cfg, const std::string& section, std::string_view key,
           std::string_view value, long line) {
  const std::string v(value);
  if (section == "uniqueness") {
    auto& u = cfg.uniqueness;
    if (key == "k1") u.k1 = parse_double(value, line);
    else if (key == "b") u.b = parse_double(value, line);
    else if (key == "target_passage_tokens") u.target_passage_tokens = static_cast<int>(parse_int(value, line));
    else if (key == "min_passage_tokens") u.min_passage_tokens = static_cast<int>(parse_int(value, line));
    else if (key == "passages_to_select") u.passages_to_select = static_cast<int>(parse_int(value, line));
    else fail("unknown key uniqueness." + std::string(key), line);
  } else if (section == "validation") {
    auto& val = cfg.validation;
    if (key == "min_similarity") val.min_similarity = parse_double(value, line);
    else if (key == "max_similarity") val.max_similarity = parse_double(value, line);
    else if (key == "min_length_ratio") val.min_length_ratio = parse_double(value, line);
    else if (key == "max_length_ratio") val.max_length_ratio = parse_double(value, line);
    else if (key == "generation_budget") val.generation_budget = static_cast<int>(parse_int(value, line));
    else if (key == "required_paraphrases") val.required_paraphrases = static_cast<int>(parse_int(value, line));
    else fail("unknown key validation." + std::string(key), line);
  } else if (section == "quiz") {
    auto& q = cfg.quiz;
    if (key == "permutation_mode") {
      if (value == "full") q.permutation_mode = quiz::QuizConfig::PermutationMode::full;
      else if (value == "balanced") q.permutation_mode = quiz::QuizConfig::PermutationMode::balanced;
      else fail("quiz.permutation_mode must be full or balanced", line);
    } else if (key == "budget_per_question") {
      q.budget_per_question = static_cast<int>(parse_int(value, line));
    } else if (key == "permutation_seed") {
      q.permutation_seed = parse_uint(value, line);
    } else {
      fail("unknown key quiz." + std::string(key), line);
    }
  } else if (section == "stats") {
    auto& s = cfg.stats;
    if (key == "alpha") s.alpha = parse_double(value, line);
    else if (key == "power_target") s.power_target = parse_double(value, line);
    else if (key == "effect_p1") s.effect_p1 = parse_double(value, line);
    else fail("unknown key stats." + std::string(key), line);
  } else if (section == "store") {
    auto& st = cfg.store;
    if (key == "dedup_threshold") st.dedup_threshold = parse_double(value, line);
    else if (key == "snapshot_path") st.snapshot_path = v;
    else fail("unknown key store." + std::string(key), line);
  } else if (section == "policy") {
    auto& p = cfg.policy;
    if (key == "max_retries") p.max_retries = static_cast<int>(parse_int(value, line));
    else if (key == "backoff_base_ms") p.backoff_base_ms = static_cast<int>(parse_int(value, line));
    else if (key == "max_in_flight") p.max_in_flight = static_cast<int>(parse_int(value, line));
    else if (key == "timeout_ms") p.timeout_ms = static_cast<int>(parse_int(value, line));
    else fail("unknown key policy." + std::string(key), line);
  } else if (section == "provider") {
    auto& b = cfg.target_provider;
    if (key == "kind") b.kind = parse_target_kind(value, line);
    else if (key == "endpoint") b.endpoint = v;
    else if (key == "api_key_env") b.api_key_env = v;
    else if (key == "model") b.model = v;
    else if (key == "p_mem") b.p_mem = parse_double(value, line);
    else if (key == "seed") b.seed = parse_uint(value, line);
    else if (key == "memorize_submissions") b.memorize_submissions = parse_bool(value, line);
    else fail("unknown key provider." + std::string(key), line);
  } else if (section == "generation_provider") {
    auto& b = cfg.generation_provider;
    if (key == "kind") b.kind = parse_generation_kind(value, line);
    else if (key == "endpoint") b.endpoint = v;
    else if (key == "api_key_env") b.api_key_env = v;
    else if (key == "model") b.model = v;
    else if (key == "seed") b.seed = parse_uint(value, line);
    else fail("unknown key generation_provider." + std::string(key), line);
  } else if (section == "embedder") {
    if (key == "kind") cfg.embedder_kind = v;
    else fail("unknown key embedder." + std::string(key), line);
  } else if (section == "service") {
    auto& s = cfg.service;
    if (key == "workers") s.workers = static_cast<int>(parse_int(value, line));
    else if (key == "host") s.host = v;
    else if (key == "port") s.port = static_cast<int>(parse_int(value, line));
    else if (key == "history_path") s.history_path = v;
    else if (key == "question_mode") {
      const auto mode = quiz::question_mode_from_string(value);
      if (!mode) fail("service.question_mode must be create or format", line);
      s.question_mode = *mode;
    } else {
      fail("unknown key service." + std::string(key), line);
    }
  } else {
    fail("unknown section [" + section + "]", line);
  }
}

}  // namespace

PipelineConfig parse_config(std::string_view text) {
  PipelineConfig cfg;
  std::string section;
  long line_number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    const std::string_view raw =
        text.substr(pos, eol == std::string_view::npos ? std::string_view::npos
                                                       : eol - pos);
    ++line_number;
    const std::string_view line = util::trim(raw);
    if (!line.empty() && line[0] != '#' && line[0] != ';') {
      if (line.front() == '[') {
        if (line.back() != ']' || line.size() < 3)
          fail("malformed section header '" + std::string(line) + "'", line_number);
        section = std::string(util::trim(line.substr(1, line.size() - 2)));
      } else {
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos)
          fail("expected key = value, got '" + std::string(line) + "'", line_number);
        const std::string_view key = util::trim(line.substr(0, eq));
        const std::string_view value = util::trim(line.substr(eq + 1));
        if (key.empty()) fail("empty key", line_number);
        if (section.empty()) fail("key outside any [section]", line_number);
        apply(cfg, section, key, value, line_number);
      }
    }
    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }
  cfg.finalize();
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::config_error, "cannot open config file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

ProviderSet build_providers(const PipelineConfig& cfg) {
  ProviderSet set;

  std::shared_ptr<providers::GenerationProvider> target_inner;
  switch (cfg.target_provider.kind) {
    case ProviderKind::mock_uniform:
      target_inner = std::make_shared<providers::UniformGuesser>(cfg.target_provider.seed);
      break;
    case ProviderKind::mock_memorizer: {
      auto memorizer = std::make_shared<providers::ScriptedMemorizer>(
          cfg.target_provider.p_mem, cfg.target_provider.seed);
      set.memorizer = memorizer;
      target_inner = memorizer;
      break;
    }
    case ProviderKind::http:
      target_inner = std::make_shared<providers::HttpChatProvider>(
          providers::HttpChatProvider::Options{cfg.target_provider.endpoint,
                                               cfg.target_provider.api_key_env,
                                               cfg.target_provider.model, cfg.policy});
      break;
    default:
      throw Error(Errc::config_error, "unsupported target provider kind");
  }
  set.target =
      std::make_shared<providers::PolicyBoundProvider>(std::move(target_inner), cfg.policy);

  std::shared_ptr<providers::GenerationProvider> generation_inner;
  switch (cfg.generation_provider.kind) {
    case ProviderKind::mock_paraphraser:
      generation_inner = std::make_shared<providers::MockParaphraser>();
      break;
    case ProviderKind::http:
      generation_inner = std::make_shared<providers::HttpChatProvider>(
          providers::HttpChatProvider::Options{cfg.generation_provider.endpoint,
                                               cfg.generation_provider.api_key_env,
                                               cfg.generation_provider.model, cfg.policy});
      break;
    default:
      throw Error(Errc::config_error, "unsupported generation provider kind");
  }
  set.generator = std::make_shared<providers::PolicyBoundProvider>(
      std::move(generation_inner), cfg.policy);

  set.embedder = std::make_shared<providers::HashingEmbedder>();
  return set;
}

}  // namespace audit::config

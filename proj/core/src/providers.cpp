#include "audit/providers.hpp"

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <regex>
#include <thread>

#include <json.hpp>

#include "audit/error.hpp"
#include "audit/paraphrase.hpp"
#include "audit/util.hpp"

// httplib stays out of the public headers.
#include <httplib.h>

namespace audit::providers {

void GenerationRequest::validate() const {
  if (util::trim(system_prompt).empty() || util::trim(user_prompt).empty())
    throw Error(Errc::malformed_request, "prompts must be non-empty");
  if (!(temperature >= 0.0 && temperature <= 2.0))
    throw Error(Errc::malformed_request, "temperature must be in [0, 2]");
  if (max_tokens < 1)
    throw Error(Errc::malformed_request, "max_tokens must be >= 1");
}

int token_estimate(std::string_view text) {
  return static_cast<int>((text.size() + 3) / 4);
}

void ProviderPolicy::validate() const {
  if (max_retries < 0) throw Error(Errc::config_error, "policy.max_retries must be >= 0");
  if (backoff_base_ms < 1) throw Error(Errc::config_error, "policy.backoff_base_ms must be >= 1");
  if (max_in_flight < 1) throw Error(Errc::config_error, "policy.max_in_flight must be >= 1");
  if (timeout_ms < 1) throw Error(Errc::config_error, "policy.timeout_ms must be >= 1");
}

std::vector<float> fallback_embed(std::string_view text) {
  if (text.empty()) throw Error(Errc::empty_text, "cannot embed empty text");
  std::string padded;
  padded.reserve(text.size() + 2);
  padded.push_back('\x02');
  for (char c : text) padded.push_back(util::ascii_lower(c));
  padded.push_back('\x03');

  std::vector<double> acc(kEmbeddingDim, 0.0);
  for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
    const std::uint64_t h = util::fnv1a64(std::string_view(padded.data() + i, 3));
    const std::size_t bucket = static_cast<std::size_t>(h % kEmbeddingDim);
    acc[bucket] += (h >> 63) ? -1.0 : 1.0;
  }
  double norm_sq = 0.0;
  for (double v : acc) norm_sq += v * v;
  if (norm_sq == 0.0) {
    // Signs cancelled everywhere; fall back to a deterministic basis vector.
    acc[util::fnv1a64(padded) % kEmbeddingDim] = 1.0;
    norm_sq = 1.0;
  }
  const double inv = 1.0 / std::sqrt(norm_sq);
  std::vector<float> out(kEmbeddingDim);
  for (int i = 0; i < kEmbeddingDim; ++i) out[i] = static_cast<float>(acc[i] * inv);
  return out;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size())
    throw Error(Errc::bad_dimension, "cosine over mismatched dimensions");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<float> HashingEmbedder::embed(std::string_view text) {
  return fallback_embed(text);
}

std::vector<PromptOption> parse_prompt_options(std::string_view prompt) {
  std::vector<PromptOption> options;
  std::size_t pos = 0;
  bool open = false;
  while (pos <= prompt.size()) {
    const std::size_t eol = prompt.find('\n', pos);
    const std::string_view line =
        prompt.substr(pos, eol == std::string_view::npos ? std::string_view::npos
                                                         : eol - pos);
    if (line.size() >= 3 && line[0] >= 'A' && line[0] <= 'F' && line[1] == '.' &&
        line[2] == ' ') {
      options.push_back({line[0], std::string(line.substr(3))});
      open = true;
    } else if (util::trim(line).empty()) {
      open = false;
    } else if (open) {
      options.back().text += "\n";
      options.back().text += std::string(line);
    }
    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }
  for (auto& o : options) o.text = std::string(util::trim(o.text));
  return options;
}

namespace {

GenerationResponse answer_with(const GenerationRequest& request, std::string text) {
  GenerationResponse resp;
  resp.prompt_token_estimate =
      token_estimate(request.system_prompt) + token_estimate(request.user_prompt);
  resp.completion_token_estimate = token_estimate(text);
  resp.text = std::move(text);
  resp.latency_ms = 0;
  return resp;
}

std::vector<PromptOption> require_options(const GenerationRequest& request) {
  auto options = parse_prompt_options(request.user_prompt);
  if (options.empty())
    throw Error(Errc::malformed_request, "prompt carries no multiple-choice options");
  return options;
}

}  // namespace

UniformGuesser::UniformGuesser(std::uint64_t seed) : seed_(seed) {}

GenerationResponse UniformGuesser::generate(const GenerationRequest& request) {
  request.validate();
  const auto options = require_options(request);
  const std::uint64_t h = util::splitmix64(seed_ ^ util::fnv1a64(request.user_prompt));
  const auto& pick = options[h % options.size()];
  return answer_with(request, std::string(1, pick.label));
}

ScriptedMemorizer::ScriptedMemorizer(double p_mem, std::uint64_t seed)
    : p_mem_(p_mem), seed_(seed) {
  if (!(p_mem >= 0.0 && p_mem <= 1.0))
    throw Error(Errc::bad_args, "p_mem must be in [0, 1]");
}

void ScriptedMemorizer::memorize(std::string passage_id, std::string verbatim_text) {
  std::lock_guard lock(mutex_);
  ids_.insert(std::move(passage_id));
  texts_.insert(util::normalize_whitespace(verbatim_text));
}

GenerationResponse ScriptedMemorizer::generate(const GenerationRequest& request) {
  request.validate();
  const auto options = require_options(request);
  int verbatim = -1;
  {
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < options.size(); ++i) {
      if (texts_.count(util::normalize_whitespace(options[i].text))) {
        verbatim = static_cast<int>(i);
        break;
      }
    }
  }
  const std::uint64_t h = seed_ ^ util::fnv1a64(request.user_prompt);
  std::size_t pick;
  if (verbatim >= 0 && options.size() > 1) {
    if (util::unit_double(util::splitmix64(h)) < p_mem_) {
      pick = static_cast<std::size_t>(verbatim);
    } else {
      const std::size_t j = util::splitmix64(h + 1) % (options.size() - 1);
      pick = j >= static_cast<std::size_t>(verbatim) ? j + 1 : j;
    }
  } else if (verbatim >= 0) {
    pick = static_cast<std::size_t>(verbatim);
  } else {
    pick = util::splitmix64(h) % options.size();
  }
  return answer_with(request, std::string(1, options[pick].label));
}

namespace {

std::string_view between(std::string_view text, std::string_view open,
                         std::string_view close) {
  const std::size_t b = text.find(open);
  if (b == std::string_view::npos) return {};
  const std::size_t from = b + open.size();
  const std::size_t e = text.find(close, from);
  if (e == std::string_view::npos) return {};
  return text.substr(from, e - from);
}

// Reverses the alphanumeric core of a word, leaving surrounding
// punctuation in place. "word," -> "drow,"
std::string mangle_word(std::string_view word) {
  std::size_t b = 0, e = word.size();
  while (b < e && !util::is_ascii_alnum(word[b])) ++b;
  while (e > b && !util::is_ascii_alnum(word[e - 1])) --e;
  std::string out(word);
  std::size_t lo = b, hi = e;
  while (lo + 1 < hi) std::swap(out[lo++], out[--hi]);
  return out;
}

bool ends_like_sentence(std::string_view text) {
  const auto t = util::trim(text);
  if (t.empty()) return false;
  const char last = t.back();
  return last == '.' || last == '!' || last == '?' || last == '"' || last == '\'' ||
         last == ')';
}

std::string transform_variant(std::string_view passage, paraphrase::Strategy strategy,
                              int variant) {
  static constexpr const char* kPrefixes[] = {
      "It is recorded that ",  // passive_voice
      "One might ask: ",       // question_restructure
      "Put plainly: ",         // simplify
  };
  const std::string normalized = util::normalize_whitespace(passage);
  const auto spans = util::word_spans(normalized);
  std::string body;
  body.reserve(normalized.size() + 8);
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (i > 0) body.push_back(' ');
    const std::string_view word(normalized.data() + spans[i].first,
                                spans[i].second - spans[i].first);
    if (static_cast<int>(i % 5) == variant % 5) {
      body += mangle_word(word);
    } else {
      body += std::string(word);
    }
  }
  std::string out = kPrefixes[static_cast<int>(strategy)];
  out += body;
  if (!ends_like_sentence(out)) out.push_back('.');
  return out;
}

std::string first_words(std::string_view text, int count) {
  const std::string normalized = util::normalize_whitespace(text);
  const auto spans = util::word_spans(normalized);
  const std::size_t take = std::min<std::size_t>(spans.size(), count);
  if (take == 0) return {};
  return normalized.substr(0, spans[take - 1].second);
}

}  // namespace

GenerationResponse MockParaphraser::generate(const GenerationRequest& request) {
  request.validate();
  const std::string_view prompt = request.user_prompt;

  if (prompt.find("uses_exact_text") != std::string_view::npos) {
    const auto passage = util::trim(between(prompt, "<passage>", "</passage>"));
    if (passage.empty())
      throw Error(Errc::malformed_request, "stem request carries no passage");
    nlohmann::json j{
        {"stem", "Which option reproduces, word for word, the source that begins \"" +
                     first_words(passage, 6) + "\"?"},
        {"uses_exact_text", true},
    };
    return answer_with(request, j.dump());
  }

  const auto passage = util::trim(between(prompt, "<passage>", "</passage>"));
  if (passage.empty())
    throw Error(Errc::malformed_request, "paraphrase request carries no passage");

  auto strategy = paraphrase::Strategy::passive_voice;
  if (const auto named = between(prompt, "strategy=\"", "\""); !named.empty()) {
    if (const auto parsed = paraphrase::strategy_from_string(named)) strategy = *parsed;
  }
  int count = 1;
  static const std::regex count_re(R"(exactly (\d+) <paraphrase>)");
  std::cmatch m;
  if (std::regex_search(prompt.data(), prompt.data() + prompt.size(), m, count_re)) {
    count = std::clamp(std::atoi(m[1].first), 1, 16);
  }

  std::vector<std::pair<paraphrase::Strategy, std::string>> items;
  items.reserve(static_cast<std::size_t>(count));
  for (int j = 0; j < count; ++j) {
    items.emplace_back(strategy, transform_variant(passage, strategy, j));
  }
  return answer_with(request,
                     "Here are the rewrites.\n" + paraphrase::render_paraphrase_xml(items));
}

struct PolicyBoundProvider::Impl {
  std::shared_ptr<GenerationProvider> inner;
  ProviderPolicy policy;
  std::mutex mutex;
  std::condition_variable slot_free;
  int in_flight = 0;

  Impl(std::shared_ptr<GenerationProvider> p, ProviderPolicy pol)
      : inner(std::move(p)), policy(pol) {}
};

PolicyBoundProvider::PolicyBoundProvider(std::shared_ptr<GenerationProvider> inner,
                                         ProviderPolicy policy)
    : impl_(std::make_unique<Impl>(std::move(inner), policy)) {
  impl_->policy.validate();
  if (!impl_->inner) throw Error(Errc::bad_args, "policy wrapper needs a provider");
}

PolicyBoundProvider::~PolicyBoundProvider() = default;

GenerationResponse PolicyBoundProvider::generate(const GenerationRequest& request) {
  {
    std::unique_lock lock(impl_->mutex);
    impl_->slot_free.wait(lock,
                          [&] { return impl_->in_flight < impl_->policy.max_in_flight; });
    ++impl_->in_flight;
  }
  struct SlotGuard {
    Impl* impl;
    ~SlotGuard() {
      std::lock_guard lock(impl->mutex);
      --impl->in_flight;
      impl->slot_free.notify_one();
    }
  } guard{impl_.get()};

  int backoff = impl_->policy.backoff_base_ms;
  for (int attempt = 0;; ++attempt) {
    try {
      return impl_->inner->generate(request);
    } catch (const Error& e) {
      const bool transient =
          e.code() == Errc::provider_unavailable || e.code() == Errc::timeout;
      if (!transient || attempt >= impl_->policy.max_retries) throw;
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
  }
}

namespace {

struct ParsedEndpoint {
  std::string scheme_host_port;  // e.g. "http://127.0.0.1:8080"
  std::string path;
};

ParsedEndpoint parse_endpoint(const std::string& endpoint) {
  const std::string_view sv(endpoint);
  std::size_t scheme_end = sv.find("://");
  if (scheme_end == std::string_view::npos)
    throw Error(Errc::config_error, "provider endpoint must be a full URL: " + endpoint);
  const std::size_t path_start = sv.find('/', scheme_end + 3);
  ParsedEndpoint out;
  if (path_start == std::string_view::npos) {
    out.scheme_host_port = endpoint;
    out.path = "/";
  } else {
    out.scheme_host_port = std::string(sv.substr(0, path_start));
    out.path = std::string(sv.substr(path_start));
  }
  return out;
}

}  // namespace

HttpChatProvider::HttpChatProvider(Options options) : options_(std::move(options)) {
  options_.policy.validate();
  parse_endpoint(options_.endpoint);  // fail fast on malformed config
}

GenerationResponse HttpChatProvider::generate(const GenerationRequest& request) {
  request.validate();
  return attempt(request);
}

GenerationResponse HttpChatProvider::attempt(const GenerationRequest& request) {
  const auto ep = parse_endpoint(options_.endpoint);
  httplib::Client client(ep.scheme_host_port);
  const auto timeout = std::chrono::milliseconds(options_.policy.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  httplib::Headers headers;
  if (!options_.api_key_env.empty()) {
    if (const char* key = std::getenv(options_.api_key_env.c_str());
        key != nullptr && key[0] != '\0') {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  nlohmann::json body{
      {"messages",
       {{{"role", "system"}, {"content", request.system_prompt}},
        {{"role", "user"}, {"content", request.user_prompt}}}},
      {"temperature", request.temperature},
      {"max_tokens", request.max_tokens},
  };
  if (!options_.model.empty()) body["model"] = options_.model;
  if (request.seed) body["seed"] = *request.seed;

  const auto started = std::chrono::steady_clock::now();
  auto result = client.Post(ep.path, headers, body.dump(), "application/json");
  const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - started)
                           .count();

  if (!result) {
    const auto err = result.error();
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
        err == httplib::Error::Write) {
      throw Error(Errc::timeout, "no response from " + options_.endpoint);
    }
    throw Error(Errc::provider_unavailable,
                "cannot reach " + options_.endpoint + ": " + httplib::to_string(err));
  }
  if (result->status == 408) {
    throw Error(Errc::timeout, "provider returned 408");
  }
  if (result->status == 429 || result->status >= 500) {
    throw Error(Errc::provider_unavailable,
                "provider returned status " + std::to_string(result->status));
  }
  if (result->status >= 400) {
    throw Error(Errc::malformed_request,
                "provider rejected the request with status " +
                    std::to_string(result->status) + ": " + result->body);
  }

  std::string text;
  const auto parsed = nlohmann::json::parse(result->body, nullptr, false);
  if (parsed.is_discarded()) {
    throw Error(Errc::parse_error, "provider response is not JSON");
  }
  if (parsed.contains("choices") && parsed["choices"].is_array() &&
      !parsed["choices"].empty()) {
    const auto& choice = parsed["choices"][0];
    if (choice.contains("message") && choice["message"].contains("content")) {
      text = choice["message"]["content"].get<std::string>();
    } else if (choice.contains("text")) {
      text = choice["text"].get<std::string>();
    }
  } else if (parsed.contains("text")) {
    text = parsed["text"].get<std::string>();
  }
  if (text.empty()) {
    throw Error(Errc::parse_error, "provider response carries no completion text");
  }

  GenerationResponse resp = answer_with(request, std::move(text));
  resp.latency_ms = latency;
  return resp;
}

}  // namespace audit::providers

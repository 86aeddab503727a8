#include "audit/paraphrase.hpp"

#include <algorithm>

#include "audit/error.hpp"
#include "audit/util.hpp"

namespace audit::paraphrase {

const char* to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::passive_voice: return "passive_voice";
    case Strategy::question_restructure: return "question_restructure";
    case Strategy::simplify: return "simplify";
  }
  return "passive_voice";
}

std::optional<Strategy> strategy_from_string(std::string_view name) {
  if (name == "passive_voice") return Strategy::passive_voice;
  if (name == "question_restructure") return Strategy::question_restructure;
  if (name == "simplify") return Strategy::simplify;
  return std::nullopt;
}

const char* to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::artifact: return "artifact";
    case RejectReason::too_short: return "too_short";
    case RejectReason::too_long: return "too_long";
    case RejectReason::low_similarity: return "low_similarity";
    case RejectReason::near_copy: return "near_copy";
    case RejectReason::parse_error: return "parse_error";
  }
  return "artifact";
}

std::vector<std::string> ParaphraseSet::accepted_texts() const {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(accepted_count));
  for (const auto& p : paraphrases) {
    if (p.accepted) out.push_back(p.text);
  }
  return out;
}

void ValidationConfig::validate() const {
  if (!(min_similarity > 0.0 && min_similarity < max_similarity && max_similarity <= 1.0))
    throw Error(Errc::config_error,
                "validation similarity window needs 0 < min < max <= 1");
  if (!(min_length_ratio > 0.0 && min_length_ratio < 1.0 && max_length_ratio > 1.0))
    throw Error(Errc::config_error,
                "validation length window needs 0 < min < 1 < max");
  if (generation_budget < 1)
    throw Error(Errc::config_error, "validation.generation_budget must be >= 1");
  if (required_paraphrases < 1)
    throw Error(Errc::config_error, "validation.required_paraphrases must be >= 1");
}

namespace {

const char* strategy_instruction(Strategy strategy) {
  switch (strategy) {
    case Strategy::passive_voice:
      return "Rewrite it in the passive voice wherever the grammar allows.";
    case Strategy::question_restructure:
      return "Restructure it around a question that the original answers.";
    case Strategy::simplify:
      return "Simplify the wording while keeping every factual detail.";
  }
  return "";
}

}  // namespace

providers::GenerationRequest build_paraphrase_prompt(const extraction::Passage& passage,
                                                     Strategy strategy, int count) {
  if (count < 1) throw Error(Errc::bad_args, "paraphrase count must be >= 1");
  const char* name = to_string(strategy);
  std::string user =
      "Paraphrase the passage below. " + std::string(strategy_instruction(strategy)) +
      " Preserve the meaning and the approximate length.\n"
      "Return exactly " + std::to_string(count) +
      " <paraphrase> elements inside a single <paraphrases> envelope, each written as "
      "<paraphrase strategy=\"" + name + "\">rewritten text</paraphrase>. "
      "Escape literal &, < and > as &amp;, &lt; and &gt;.\n"
      "<passage>\n" + passage.text + "\n</passage>";

  providers::GenerationRequest req;
  req.system_prompt = "You rewrite passages faithfully and answer in the exact "
                      "format requested.";
  req.user_prompt = std::move(user);
  req.temperature = 0.7;
  req.max_tokens =
      std::max(256, 2 * count * providers::token_estimate(passage.text) + 128);
  return req;
}

namespace {

std::string unescape_xml(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.compare(i, 4, "&lt;") == 0) {
      out.push_back('<');
      i += 4;
    } else if (text.compare(i, 4, "&gt;") == 0) {
      out.push_back('>');
      i += 4;
    } else if (text.compare(i, 5, "&amp;") == 0) {
      out.push_back('&');
      i += 5;
    } else {
      out.push_back(text[i]);
      ++i;
    }
  }
  return out;
}

std::string escape_xml(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::vector<std::pair<Strategy, std::string>> parse_paraphrase_xml(
    std::string_view response_text) {
  const std::size_t env_open = response_text.find("<paraphrases>");
  if (env_open == std::string_view::npos)
    throw Error(Errc::parse_error, "response carries no <paraphrases> envelope");
  const std::size_t body_begin = env_open + std::string_view("<paraphrases>").size();
  const std::size_t env_close = response_text.find("</paraphrases>", body_begin);
  if (env_close == std::string_view::npos)
    throw Error(Errc::parse_error, "<paraphrases> envelope is never closed");
  const std::string_view body = response_text.substr(body_begin, env_close - body_begin);

  std::vector<std::pair<Strategy, std::string>> items;
  std::size_t pos = 0;
  while (true) {
    const std::size_t open = body.find("<paraphrase ", pos);
    if (open == std::string_view::npos) break;
    const std::size_t attr = body.find("strategy=\"", open);
    const std::size_t tag_end = body.find('>', open);
    if (tag_end == std::string_view::npos) break;
    std::optional<Strategy> strategy;
    if (attr != std::string_view::npos && attr < tag_end) {
      const std::size_t name_begin = attr + std::string_view("strategy=\"").size();
      const std::size_t name_end = body.find('"', name_begin);
      if (name_end != std::string_view::npos && name_end < tag_end) {
        strategy = strategy_from_string(body.substr(name_begin, name_end - name_begin));
      }
    }
    const std::size_t close = body.find("</paraphrase>", tag_end);
    if (close == std::string_view::npos) break;
    if (strategy) {
      items.emplace_back(*strategy,
                         unescape_xml(body.substr(tag_end + 1, close - tag_end - 1)));
    }
    pos = close + std::string_view("</paraphrase>").size();
  }
  return items;
}

std::string render_paraphrase_xml(
    std::span<const std::pair<Strategy, std::string>> items) {
  std::string out = "<paraphrases>";
  for (const auto& [strategy, text] : items) {
    out += "<paraphrase strategy=\"";
    out += to_string(strategy);
    out += "\">";
    out += escape_xml(text);
    out += "</paraphrase>";
  }
  out += "</paraphrases>";
  return out;
}

double semantic_similarity(std::string_view a, std::string_view b,
                           providers::Embedder& embedder) {
  const auto va = embedder.embed(a);
  const auto vb = embedder.embed(b);
  return providers::cosine(va, vb);
}

namespace {

bool ends_complete_sentence(std::string_view text) {
  // UTF-8 right single quote U+2019 also counts as a closing mark.
  if (text.size() >= 3 && text.compare(text.size() - 3, 3, "\xe2\x80\x99") == 0)
    return true;
  const char last = text.back();
  return last == '.' || last == '!' || last == '?' || last == '"' || last == '\'' ||
         last == ')';
}

bool is_artifact(std::string_view text, const ValidationConfig& cfg) {
  if (text.empty()) return true;
  for (const auto& literal : cfg.artifact_literals) {
    if (text == literal) return true;
  }
  for (const auto& prefix : cfg.artifact_prefixes) {
    if (text.substr(0, prefix.size()) == prefix) return true;
  }
  return !ends_complete_sentence(text);
}

}  // namespace

Paraphrase validate_paraphrase(std::string_view original, std::string_view candidate,
                               const ValidationConfig& cfg,
                               providers::Embedder& embedder) {
  const int original_words = util::word_count(original);
  if (original_words == 0)
    throw Error(Errc::empty_text, "cannot validate against an empty original");

  Paraphrase p;
  p.text = std::string(util::trim(candidate));

  const auto reject = [&](RejectReason reason) {
    p.accepted = false;
    p.reject_reason = reason;
    return p;
  };

  if (is_artifact(p.text, cfg)) return reject(RejectReason::artifact);

  p.length_ratio = static_cast<double>(util::word_count(p.text)) /
                   static_cast<double>(original_words);
  if (p.length_ratio < cfg.min_length_ratio) return reject(RejectReason::too_short);
  if (p.length_ratio > cfg.max_length_ratio) return reject(RejectReason::too_long);

  p.similarity = semantic_similarity(original, p.text, embedder);
  if (p.similarity < cfg.min_similarity) return reject(RejectReason::low_similarity);
  if (p.similarity > cfg.max_similarity) return reject(RejectReason::near_copy);

  p.accepted = true;
  return p;
}

ParaphraseSet generate_paraphrase_set(const extraction::Passage& passage,
                                      providers::GenerationProvider& provider,
                                      providers::Embedder& embedder,
                                      const ValidationConfig& cfg) {
  cfg.validate();
  if (util::word_count(passage.text) == 0)
    throw Error(Errc::empty_text, "cannot paraphrase an empty passage");

  ParaphraseSet set;
  set.passage_id = extraction::passage_key(passage);
  set.original_text = passage.text;

  int calls = 0;
  while (set.accepted_count < cfg.required_paraphrases &&
         calls < cfg.generation_budget) {
    const Strategy strategy = kAllStrategies[calls % kAllStrategies.size()];
    const int want = cfg.required_paraphrases - set.accepted_count;
    const auto request = build_paraphrase_prompt(passage, strategy, want);
    const auto response = provider.generate(request);
    ++calls;

    std::vector<std::pair<Strategy, std::string>> items;
    try {
      items = parse_paraphrase_xml(response.text);
    } catch (const Error& e) {
      if (e.code() != Errc::parse_error) throw;
      Paraphrase failed;
      failed.passage_id = set.passage_id;
      failed.strategy = strategy;
      failed.text = std::string(util::trim(response.text));
      failed.accepted = false;
      failed.reject_reason = RejectReason::parse_error;
      set.paraphrases.push_back(std::move(failed));
      continue;
    }

    for (auto& [item_strategy, text] : items) {
      if (set.accepted_count >= cfg.required_paraphrases) break;
      Paraphrase p = validate_paraphrase(set.original_text, text, cfg, embedder);
      p.passage_id = set.passage_id;
      p.strategy = item_strategy;
      if (p.accepted) {
        for (const auto& prior : set.paraphrases) {
          if (!prior.accepted) continue;
          if (semantic_similarity(prior.text, p.text, embedder) > cfg.max_similarity) {
            p.accepted = false;
            p.reject_reason = RejectReason::near_copy;
            break;
          }
        }
      }
      if (p.accepted) ++set.accepted_count;
      set.paraphrases.push_back(std::move(p));
    }
  }
  return set;
}

}  // namespace audit::paraphrase

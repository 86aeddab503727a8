#include "json_codec.hpp"

#include "audit/error.hpp"

namespace audit::service {

namespace {

nlohmann::json optional_string(const std::optional<std::string>& value) {
  if (value) return *value;
  return nullptr;
}

std::optional<std::string> string_or_null(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<std::string>();
}

}  // namespace

nlohmann::json verdict_to_json(const stats::DocumentVerdict& verdict) {
  return nlohmann::json{
      {"doc_id", verdict.doc_id},
      {"n_trials", verdict.n_trials},
      {"n_correct", verdict.n_correct},
      {"detection_rate", verdict.detection_rate},
      {"chance_p0", verdict.chance_p0},
      {"p_value", verdict.p_value},
      {"verdict", stats::to_string(verdict.verdict)},
      {"config",
       {{"alpha", verdict.config.alpha},
        {"chance_p0", verdict.config.chance_p0},
        {"power_target", verdict.config.power_target},
        {"effect_p1", verdict.config.effect_p1}}},
  };
}

stats::DocumentVerdict verdict_from_json(const nlohmann::json& j) {
  stats::DocumentVerdict v;
  v.doc_id = j.at("doc_id").get<std::string>();
  v.n_trials = j.at("n_trials").get<int>();
  v.n_correct = j.at("n_correct").get<int>();
  v.detection_rate = j.at("detection_rate").get<double>();
  v.chance_p0 = j.at("chance_p0").get<double>();
  v.p_value = j.at("p_value").get<double>();
  const auto name = j.at("verdict").get<std::string>();
  v.verdict = name == "likely_in_training" ? stats::Verdict::likely_in_training
                                           : stats::Verdict::inconclusive;
  if (j.contains("config")) {
    const auto& c = j["config"];
    v.config.alpha = c.value("alpha", v.config.alpha);
    v.config.chance_p0 = c.value("chance_p0", v.config.chance_p0);
    v.config.power_target = c.value("power_target", v.config.power_target);
    v.config.effect_p1 = c.value("effect_p1", v.config.effect_p1);
  }
  return v;
}

nlohmann::json job_to_json(const EvaluationJob& job) {
  nlohmann::json j{
      {"job_id", job.job_id},
      {"doc_id", job.doc_id},
      {"title", job.title},
      {"owner", job.owner},
      {"content_type", extraction::to_string(job.content_type)},
      {"state", to_string(job.state)},
      {"created_at", job.created_at},
      {"finished_at", job.finished_at},
      {"error", optional_string(job.error)},
      {"label", optional_string(job.label)},
      {"provider_call_count", job.provider_call_count},
      {"token_total", job.token_total},
  };
  j["verdict"] = job.verdict ? verdict_to_json(*job.verdict) : nlohmann::json(nullptr);
  return j;
}

EvaluationJob job_from_json(const nlohmann::json& j) {
  EvaluationJob job;
  job.job_id = j.at("job_id").get<std::string>();
  job.doc_id = j.at("doc_id").get<std::string>();
  job.title = j.value("title", std::string());
  job.owner = j.value("owner", std::string());
  if (const auto type = extraction::content_type_from_string(
          j.value("content_type", std::string("other")))) {
    job.content_type = *type;
  }
  const auto state = job_state_from_string(j.at("state").get<std::string>());
  if (!state) throw Error(Errc::parse_error, "unknown job state in record");
  job.state = *state;
  job.created_at = j.value("created_at", static_cast<std::int64_t>(0));
  job.finished_at = j.value("finished_at", static_cast<std::int64_t>(0));
  job.error = string_or_null(j, "error");
  job.label = string_or_null(j, "label");
  job.provider_call_count = j.value("provider_call_count", 0);
  job.token_total = j.value("token_total", static_cast<long long>(0));
  if (j.contains("verdict") && !j["verdict"].is_null()) {
    job.verdict = verdict_from_json(j["verdict"]);
  }
  return job;
}

nlohmann::json analytics_to_json(const Analytics& analytics) {
  nlohmann::json j;
  j["jobs_per_state"] = analytics.jobs_per_state;
  j["total_jobs"] = analytics.total_jobs;
  j["mean_detection_rate"] = analytics.mean_detection_rate
                                 ? nlohmann::json(*analytics.mean_detection_rate)
                                 : nlohmann::json(nullptr);
  j["auc"] = analytics.auc ? nlohmann::json(*analytics.auc) : nlohmann::json(nullptr);
  j["labeled_member"] = analytics.labeled_member;
  j["labeled_clean"] = analytics.labeled_clean;
  j["token_total"] = analytics.token_total;
  return j;
}

nlohmann::json match_to_json(const vectorlog::QueryMatch& match) {
  return nlohmann::json{
      {"id", match.id},
      {"similarity", match.similarity},
      {"metadata", match.metadata},
  };
}

std::string to_json_string(const EvaluationJob& job, bool pretty) {
  return pretty ? job_to_json(job).dump(2) : job_to_json(job).dump();
}

EvaluationJob job_from_json_string(std::string_view text) {
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(Errc::parse_error, "job record is not a JSON object");
  try {
    return job_from_json(j);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(Errc::parse_error, e.what());
  }
}

std::string to_json_string(const stats::DocumentVerdict& verdict, bool pretty) {
  return pretty ? verdict_to_json(verdict).dump(2) : verdict_to_json(verdict).dump();
}

}  // namespace audit::service

#pragma once

// Internal JSON conversions. nlohmann/json stays out of the public headers;
// everything here is shared by the codec, the HTTP layer and the store.

#include <json.hpp>

#include "audit/pipeline.hpp"
#include "audit/stats.hpp"
#include "audit/vectorlog.hpp"

namespace audit::service {

nlohmann::json verdict_to_json(const stats::DocumentVerdict& verdict);
stats::DocumentVerdict verdict_from_json(const nlohmann::json& j);

nlohmann::json job_to_json(const EvaluationJob& job);
EvaluationJob job_from_json(const nlohmann::json& j);

nlohmann::json analytics_to_json(const Analytics& analytics);
nlohmann::json match_to_json(const vectorlog::QueryMatch& match);

}  // namespace audit::service

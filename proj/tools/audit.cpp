// audit: command line front end for the evaluation pipeline.
//
// Subcommands: submit, status, report, search, plan, serve. All state lives
// in the history file and store snapshot named by the config, so separate
// invocations see the same jobs.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "audit/config.hpp"
#include "audit/error.hpp"
#include "audit/http_api.hpp"
#include "audit/pipeline.hpp"
#include "audit/stats.hpp"
#include "audit/util.hpp"

namespace {

constexpr const char* kDefaultConfigName = "audit.ini";

std::atomic<bool> g_stop{false};

void handle_signal(int) { g_stop.store(true); }

// Explicit --config must exist; the implicit audit.ini is optional. The
// implicit default also turns on snapshot persistence so dedup survives
// separate invocations.
audit::config::PipelineConfig resolve_config(const std::string& path,
                                             bool explicit_path) {
  if (explicit_path || std::filesystem::exists(path)) {
    return audit::config::load_config(path);
  }
  audit::config::PipelineConfig cfg;
  cfg.store.snapshot_path = "audit_store.jsonl";
  cfg.finalize();
  return cfg;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw audit::Error(audit::Errc::bad_args, "cannot open file: " + path);
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string file_stem(const std::string& path) {
  auto stem = std::filesystem::path(path).stem().string();
  return stem.empty() ? std::string("untitled") : stem;
}

void print_job_text(const audit::service::EvaluationJob& job) {
  std::printf("job        %s\n", job.job_id.c_str());
  std::printf("document   %s \"%s\" (%s), owner %s\n", job.doc_id.c_str(),
              job.title.c_str(), audit::extraction::to_string(job.content_type),
              job.owner.c_str());
  std::printf("state      %s\n", audit::service::to_string(job.state));
  std::printf("created    %s\n",
              audit::util::format_iso8601(job.created_at).c_str());
  if (job.finished_at > 0) {
    std::printf("finished   %s\n",
                audit::util::format_iso8601(job.finished_at).c_str());
  }
  if (job.verdict) {
    const auto& v = *job.verdict;
    std::printf("n_trials   %d (%d correct)\n", v.n_trials, v.n_correct);
    std::printf("detection_rate %.4f\n", v.detection_rate);
    std::printf("chance_p0      %.4f\n", v.chance_p0);
    std::printf("p_value        %.6g\n", v.p_value);
    std::printf("verdict        %s\n", audit::stats::to_string(v.verdict));
  }
  if (job.error) {
    std::printf("error      %s\n", job.error->c_str());
  }
  std::printf("provider_calls %d, tokens %lld\n", job.provider_call_count,
              job.token_total);
}

int exit_code_for(audit::service::JobState state) {
  return state == audit::service::JobState::failed ? 2 : 0;
}

int cmd_submit(const audit::config::PipelineConfig& cfg,
               const std::string& file, const std::string& owner,
               const std::string& title, const std::string& type,
               const std::string& label) {
  auto content_type = audit::extraction::content_type_from_string(type);
  if (!content_type) {
    std::cerr << "unknown content type: " << type << "\n";
    return 1;
  }
  audit::service::Submission submission;
  submission.text = read_file(file);
  submission.title = title.empty() ? file_stem(file) : title;
  submission.owner = owner;
  submission.content_type = *content_type;
  if (!label.empty()) submission.label = label;

  audit::service::JobManager manager(cfg);
  auto job = manager.run_blocking(std::move(submission));
  manager.persist();
  std::cout << audit::service::to_json_string(job, true) << "\n";
  return exit_code_for(job.state);
}

int cmd_status(const audit::config::PipelineConfig& cfg,
               const std::string& job_id) {
  audit::service::JobManager manager(cfg);
  auto job = manager.get(job_id);
  if (!job) {
    std::cerr << "unknown job: " << job_id << "\n";
    return 1;
  }
  std::cout << job->job_id << " " << audit::service::to_string(job->state);
  if (job->error) std::cout << " (" << *job->error << ")";
  std::cout << "\n";
  return 0;
}

int cmd_report(const audit::config::PipelineConfig& cfg,
               const std::string& job_id, const std::string& format) {
  audit::service::JobManager manager(cfg);
  auto job = manager.get(job_id);
  if (!job) {
    std::cerr << "unknown job: " << job_id << "\n";
    return 1;
  }
  if (format == "json") {
    std::cout << audit::service::to_json_string(*job, true) << "\n";
  } else {
    print_job_text(*job);
  }
  return 0;
}

int cmd_search(const audit::config::PipelineConfig& cfg,
               const std::string& query, int k) {
  audit::service::JobManager manager(cfg);
  auto matches = manager.search(query, k);
  nlohmann::json out = nlohmann::json::array();
  for (const auto& match : matches) {
    nlohmann::json meta = nlohmann::json::object();
    for (const auto& [key, value] : match.metadata) meta[key] = value;
    out.push_back({{"id", match.id},
                   {"similarity", match.similarity},
                   {"metadata", std::move(meta)}});
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_plan(const audit::config::PipelineConfig& cfg, int paraphrases) {
  const auto& st = cfg.stats;
  double p0 = audit::stats::chance_probability(paraphrases);
  auto size = audit::stats::required_sample_size(p0, st.effect_p1, st.alpha,
                                                 st.power_target);
  std::printf("plan: %d paraphrases per passage (%d options per question)\n",
              paraphrases, paraphrases + 1);
  std::printf("  chance_p0   %.4f\n", p0);
  std::printf("  required_n  %d trials\n", size.n);
  std::printf("  critical_c  %d correct\n", size.critical_c);

  auto cmp = audit::stats::compare_plans(st.effect_p1, st.alpha,
                                         st.power_target,
                                         cfg.quiz.budget_per_question);
  std::printf("\ncost comparison (alpha=%.2f, power=%.2f, p1=%.2f, "
              "%d trials/question):\n",
              st.alpha, st.power_target, st.effect_p1,
              cfg.quiz.budget_per_question);
  std::printf("  %-12s %-10s %-12s %-12s %s\n", "paraphrases", "chance_p0",
              "required_n", "critical_c", "est_tokens");
  std::printf("  %-12d %-10.4f %-12d %-12d %lld\n", 3, 0.25, cmp.size3.n,
              cmp.size3.critical_c, cmp.cost3.total);
  std::printf("  %-12d %-10.4f %-12d %-12d %lld\n", 4, 0.20, cmp.size4.n,
              cmp.size4.critical_c, cmp.cost4.total);
  std::printf("  relative savings with 4 paraphrases: %.2f%%\n",
              cmp.relative_savings * 100.0);
  return 0;
}

int cmd_serve(audit::config::PipelineConfig cfg, const std::string& host,
              int port) {
  if (!host.empty()) cfg.service.host = host;
  if (port >= 0) cfg.service.port = port;

  audit::service::JobManager manager(cfg);
  audit::service::ApiServer server(manager, cfg.service.host,
                                   cfg.service.port);
  server.start();
  std::printf("listening on %s:%d\n", cfg.service.host.c_str(), server.port());
  std::fflush(stdout);

  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  while (!g_stop.load()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  std::printf("shutting down\n");
  server.stop();
  manager.wait_idle();
  manager.persist();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LLM training-data membership auditor"};
  app.require_subcommand(1);

  std::string config_path = kDefaultConfigName;
  auto* config_opt =
      app.add_option("--config", config_path, "config file (key = value)");

  std::string file, owner, title, label;
  std::string type = "book";
  auto* submit = app.add_subcommand("submit", "evaluate a document");
  submit->add_option("file", file, "path to the document text")->required();
  submit->add_option("--owner", owner, "content owner")->required();
  submit->add_option("--title", title, "title (defaults to the file name)");
  submit->add_option("--type", type, "book|article|code|other");
  submit->add_option("--label", label, "calibration label: member|clean");

  std::string job_id;
  auto* status = app.add_subcommand("status", "show a job's state");
  status->add_option("job_id", job_id, "job id")->required();

  std::string report_id, format = "text";
  auto* report = app.add_subcommand("report", "print a job's full report");
  report->add_option("job_id", report_id, "job id")->required();
  report->add_option("--format", format, "json|text")
      ->check(CLI::IsMember({"json", "text"}));

  std::string query;
  int k = 5;
  auto* search = app.add_subcommand("search", "similarity search past jobs");
  search->add_option("text", query, "query text")->required();
  search->add_option("-k,--k", k, "number of matches")
      ->check(CLI::PositiveNumber);

  int paraphrases = 4;
  auto* plan = app.add_subcommand("plan", "sample size and cost planning");
  plan->add_option("--paraphrases", paraphrases, "3 or 4")
      ->check(CLI::IsMember({3, 4}));

  std::string host;
  int port = -1;
  auto* serve = app.add_subcommand("serve", "run the HTTP JSON API");
  serve->add_option("--host", host, "bind host (overrides config)");
  serve->add_option("--port", port, "bind port (overrides config)");

  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = resolve_config(config_path, !config_opt->empty());
    if (*submit) return cmd_submit(cfg, file, owner, title, type, label);
    if (*status) return cmd_status(cfg, job_id);
    if (*report) return cmd_report(cfg, report_id, format);
    if (*search) return cmd_search(cfg, query, k);
    if (*plan) return cmd_plan(cfg, paraphrases);
    if (*serve) return cmd_serve(cfg, host, port);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

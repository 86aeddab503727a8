#pragma once

#include <span>
#include <string>
#include <vector>

#include "audit/quiz.hpp"

namespace audit::stats {

struct StatsConfig {
  double alpha = 0.05;
  double chance_p0 = 0.20;  // 1 / (paraphrases + 1)
  double power_target = 0.80;
  double effect_p1 = 0.50;  // assumed memorized-model accuracy for planning

  void validate() const;
};

enum class Verdict { likely_in_training, inconclusive };

const char* to_string(Verdict verdict);

struct DocumentVerdict {
  std::string doc_id;
  int n_trials = 0;
  int n_correct = 0;
  double detection_rate = 0.0;
  double chance_p0 = 0.0;
  double p_value = 1.0;
  Verdict verdict = Verdict::inconclusive;
  StatsConfig config;  // snapshot
};

struct RocPoint {
  double threshold = 0.0;
  double false_positive_rate = 0.0;
  double true_positive_rate = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // threshold descending, (0,0) -> (1,1)
  double auc = 0.0;              // trapezoidal area
};

struct SampleSizeResult {
  int n = 0;
  int critical_c = 0;
};

/// Per-call character sizes feeding the fixed ceil(chars/4) token rule.
struct TokenModel {
  int passage_chars = 768;  // ~128 words
  int paraphrase_prompt_overhead_chars = 400;
  int paraphrase_completion_chars = 828;  // one paraphrase incl. envelope
  int stem_chars = 90;
  int instruction_chars = 60;
  int answer_chars = 4;
};

struct CostPlan {
  int passages = 1;
  int paraphrase_calls = 1;      // per passage
  int paraphrases_per_call = 4;  // options = this + 1
  int trials_per_question = 5;
  TokenModel tokens;
};

struct CostBreakdown {
  long long paraphrase_tokens = 0;
  long long trial_tokens = 0;
  long long total = 0;
};

struct PlanComparison {
  SampleSizeResult size3, size4;
  CostBreakdown cost3, cost4;
  double relative_savings = 0.0;  // 1 - cost4/cost3
};

/// 1 / (num_paraphrases + 1). Throws bad_args when num_paraphrases < 1.
double chance_probability(int num_paraphrases);

/// Exact one-sided upper tail P(X >= c | X ~ Binomial(n, p0)), summed
/// term by term in log space. No normal approximation.
double binomial_pvalue(int n, int c, double p0);

/// Mann-Whitney pair statistic: fraction of (pos, neg) pairs with
/// pos > neg, ties credited 0.5. Throws empty_class.
double roc_auc(std::span<const double> positive_scores,
               std::span<const double> negative_scores);

/// ROC points at every distinct score threshold (classify positive when
/// score >= threshold); trapezoidal area equals roc_auc.
RocCurve roc_curve(std::span<const double> positive_scores,
                   std::span<const double> negative_scores);

/// Smallest n whose critical value c* = min{c : P(X>=c | p0) <= alpha}
/// exists and satisfies P(X >= c* | p1) >= power. Exact binomial
/// throughout. Throws bad_args when p0 >= p1 or no n <= 10000 works.
SampleSizeResult required_sample_size(double p0, double p1, double alpha, double power);

long long cost_estimate(const CostPlan& plan);

/// Required sample sizes and costs of a 3-paraphrase plan vs a
/// 4-paraphrase plan, each run at its own required n.
PlanComparison compare_plans(double effect_p1, double alpha, double power,
                             int trials_per_question, const TokenModel& tokens = {});

/// Aggregates pooled trial outcomes into a DocumentVerdict.
/// Throws no_trials when n_trials < 1.
DocumentVerdict make_verdict(std::string doc_id, int n_trials, int n_correct,
                             const StatsConfig& cfg);
DocumentVerdict make_verdict(std::string doc_id, std::span<const quiz::QuizTrial> trials,
                             const StatsConfig& cfg);

}  // namespace audit::stats
